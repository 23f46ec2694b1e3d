"""Sparse-recovery baselines on the stacked multi-antenna observations:
ISTA, FISTA (row-sparse group LASSO), and AMP with a row soft-threshold
denoiser, plus the colocated-array scenario transform.

The uplink model is rewritten as Y = S X + W where S is the pilot book
scaled by sqrt(tx_power), Y stacks every antenna of the participating APs
column-wise, and row k of X collects device k's composite channel gains.
Activity is then read off the recovered row energies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .rng import substream
from .scenario import (
    Geometry,
    ScenarioArtifacts,
    ScenarioConfig,
    large_scale_fading,
    with_overrides,
)


class SolverDivergenceError(RuntimeError):
    """Raised when an iterative solve blows up (bad step size or an AMP
    run outside its stability regime)."""


@dataclass(frozen=True)
class MmvProblem:
    """Joint-sparsity recovery instance.

    dictionary:   (L, K) complex, every column of norm sqrt(rho)
    observations: (L, C) complex, C = total antennas stacked column-wise
    column_ap:    (C,) AP index that produced each observation column
    rho:          common squared column norm (transmit power scale)
    """

    dictionary: np.ndarray
    observations: np.ndarray
    column_ap: np.ndarray
    rho: float

    def __post_init__(self) -> None:
        norms = np.linalg.norm(self.dictionary, axis=0)
        if not np.allclose(norms, np.sqrt(self.rho), atol=1e-9 * max(1.0, np.sqrt(self.rho))):
            raise ValueError("dictionary columns must have norm sqrt(rho)")
        if self.observations.shape[0] != self.dictionary.shape[0]:
            raise ValueError("observation rows must match dictionary rows")
        if self.column_ap.shape[0] != self.observations.shape[1]:
            raise ValueError("column_ap must label every observation column")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the iterative solvers.

    lam: row-group regularization weight (ISTA/FISTA); None means the
        runner fills in the universal-threshold default.
    step_size: None selects 1 / ||S||_2^2.
    amp_alpha: threshold multiplier; None derives it from the activity
        prior via the minimax soft-threshold tuning curve.
    """

    lam: float | None = None
    max_iters: int = 200
    tol: float = 1e-8
    step_size: float | None = None
    amp_iters: int = 25
    amp_alpha: float | None = 1.5

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.lam is not None and self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.amp_iters < 0:
            raise ValueError(f"amp_iters must be >= 0, got {self.amp_iters}")
        if self.amp_alpha is not None and self.amp_alpha < 0:
            raise ValueError(f"amp_alpha must be >= 0, got {self.amp_alpha}")


@dataclass(frozen=True)
class SparseEstimate:
    """Solver output: row-sparse estimate, per-device row-energy statistic,
    iterations actually run, and the per-iteration objective/residual trace."""

    x_hat: np.ndarray
    activity_stat: np.ndarray
    iterations_used: int
    objective_trace: np.ndarray


def build_mmv_problem(
    received: np.ndarray, pilots: np.ndarray, tx_power: float
) -> MmvProblem:
    """Stack the (M, L, N) received tensor into the centralized problem."""
    m, _, n = received.shape
    observations = np.concatenate([received[i] for i in range(m)], axis=1)
    column_ap = np.repeat(np.arange(m), n)
    return MmvProblem(
        dictionary=np.sqrt(tx_power) * pilots,
        observations=observations,
        column_ap=column_ap,
        rho=tx_power,
    )


def default_lambda(config: ScenarioConfig, n_total: int, scale: float = 1.0) -> float:
    """Universal-threshold default, scaled to the dictionary's column norm:
    scale * sigma * sqrt(2 ln K) * sqrt(N_total) * sqrt(rho)."""
    sigma = np.sqrt(config.noise_var)
    return float(
        scale
        * sigma
        * np.sqrt(2.0 * np.log(config.num_devices))
        * np.sqrt(n_total)
        * np.sqrt(config.tx_power)
    )


def row_soft_threshold(rows: np.ndarray, tau: float) -> np.ndarray:
    """Shrink each row toward zero: row * max(1 - tau/||row||, 0).

    Accepts a single row (1-D) or a stack of rows (2-D); zero rows map to
    zero even at tau = 0.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    x = np.atleast_2d(rows)
    norms = np.linalg.norm(x, axis=1)
    scale = np.where(norms > tau, 1.0 - tau / np.maximum(norms, 1e-300), 0.0)
    out = x * scale[:, None]
    return out[0] if np.ndim(rows) == 1 else out


def lasso_objective(problem: MmvProblem, x: np.ndarray, lam: float) -> float:
    """0.5 * ||Y - S X||_F^2 + lam * sum_k ||row k of X||_2."""
    residual = problem.observations - problem.dictionary @ x
    data_term = 0.5 * float(np.linalg.norm(residual) ** 2)
    return data_term + lam * float(np.sum(np.linalg.norm(np.atleast_2d(x), axis=1)))


def _row_energies(x_hat: np.ndarray) -> np.ndarray:
    c = x_hat.shape[1]
    return np.sum(np.abs(x_hat) ** 2, axis=1) / c


def _resolve_step(problem: MmvProblem, solver: SolverConfig) -> float:
    if solver.step_size is not None:
        return solver.step_size
    return 1.0 / float(np.linalg.norm(problem.dictionary, 2) ** 2)


def _require_lam(solver: SolverConfig) -> float:
    if solver.lam is None:
        raise ValueError("solver.lam is unset; resolve it (e.g. default_lambda) first")
    return solver.lam


def _check_divergence(trace: list[float], increases: int, f0: float) -> int:
    """Count consecutive objective increases; five in a row above the
    starting objective signals a bad step size."""
    if len(trace) < 2:
        return increases
    if trace[-1] > trace[-2] * (1.0 + 1e-12) + 1e-300:
        increases += 1
    else:
        increases = 0
    if increases >= 5 and trace[-1] > f0:
        raise SolverDivergenceError(
            "objective increased for 5 consecutive iterations; "
            "step size is too large for this instance"
        )
    return increases


def ista(problem: MmvProblem, solver: SolverConfig) -> SparseEstimate:
    """Proximal-gradient iteration for the row-sparse LASSO.

    X <- rowprox(X + mu * S^H (Y - S X), mu * lam), with mu = step_size.
    Stops at max_iters or when the relative objective change drops below
    tol. The objective trace (including the X = 0 start) is nonincreasing
    for any step below the 1/||S||_2^2 default.
    """
    s = problem.dictionary
    y = problem.observations
    lam = _require_lam(solver)
    mu = _resolve_step(problem, solver)
    x = np.zeros((s.shape[1], y.shape[1]), dtype=complex)
    trace = [lasso_objective(problem, x, lam)]
    increases = 0
    iterations = 0
    for _ in range(solver.max_iters):
        grad_step = x + mu * (s.conj().T @ (y - s @ x))
        x = row_soft_threshold(grad_step, mu * lam)
        trace.append(lasso_objective(problem, x, lam))
        iterations += 1
        increases = _check_divergence(trace, increases, trace[0])
        rel = abs(trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
        if rel < solver.tol:
            break
    return SparseEstimate(
        x_hat=x,
        activity_stat=_row_energies(x),
        iterations_used=iterations,
        objective_trace=np.asarray(trace),
    )


def fista(problem: MmvProblem, solver: SolverConfig) -> SparseEstimate:
    """Accelerated proximal gradient with the Nesterov momentum sequence
    t_{j+1} = (1 + sqrt(1 + 4 t_j^2)) / 2.

    The objective trace need not be monotone, but on these convex
    instances the final objective matches ISTA's at equal iteration
    budgets to high accuracy.
    """
    s = problem.dictionary
    y = problem.observations
    lam = _require_lam(solver)
    mu = _resolve_step(problem, solver)
    x = np.zeros((s.shape[1], y.shape[1]), dtype=complex)
    z = x.copy()
    t = 1.0
    trace = [lasso_objective(problem, x, lam)]
    increases = 0
    iterations = 0
    for _ in range(solver.max_iters):
        grad_step = z + mu * (s.conj().T @ (y - s @ z))
        x_new = row_soft_threshold(grad_step, mu * lam)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        trace.append(lasso_objective(problem, x, lam))
        iterations += 1
        increases = _check_divergence(trace, increases, trace[0])
        rel = abs(trace[-2] - trace[-1]) / max(abs(trace[-2]), 1e-300)
        if rel < solver.tol:
            break
    return SparseEstimate(
        x_hat=x,
        activity_stat=_row_energies(x),
        iterations_used=iterations,
        objective_trace=np.asarray(trace),
    )


def momentum_sequence(n: int) -> np.ndarray:
    """First n values of the Nesterov t-sequence, starting at t_1 = 1."""
    out = np.empty(n)
    t = 1.0
    for i in range(n):
        out[i] = t
        t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
    return out


def minimax_threshold_scale(epsilon: float) -> float:
    """Minimax-optimal soft-threshold multiplier for a given active
    fraction, from the standard state-evolution risk expression."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")

    def risk(alpha: float) -> float:
        gauss_tail = (1.0 + alpha**2) * norm.cdf(-alpha) - alpha * norm.pdf(alpha)
        return epsilon * (1.0 + alpha**2) + (1.0 - epsilon) * 2.0 * gauss_tail

    res = minimize_scalar(risk, bounds=(0.0, 6.0), method="bounded")
    return float(res.x)


def amp(
    problem: MmvProblem, solver: SolverConfig, epsilon_prior: float | None = None
) -> SparseEstimate:
    """Approximate message passing with a row soft-threshold denoiser and
    the Onsager residual correction.

    Internally the dictionary is rescaled to unit columns (AMP's natural
    normalization); the returned x_hat is on the original problem scale.
    The per-iteration threshold is alpha * sqrt(||R||_F^2 / L), the rms
    row norm of the residual, which reduces to the classic scalar rule
    for a single observation column. The trace records residual norms.
    """
    a = problem.dictionary / np.sqrt(problem.rho)
    y = problem.observations
    ell = a.shape[0]
    alpha = solver.amp_alpha
    if alpha is None:
        if epsilon_prior is None:
            raise ValueError("amp_alpha unset: an epsilon_prior is required")
        alpha = minimax_threshold_scale(epsilon_prior)

    x = np.zeros((a.shape[1], y.shape[1]), dtype=complex)
    residual = y.copy()
    trace = []
    for _ in range(solver.amp_iters):
        tau = alpha * np.sqrt(np.linalg.norm(residual) ** 2 / ell)
        x = row_soft_threshold(x + a.conj().T @ residual, tau)
        support = int(np.sum(np.linalg.norm(x, axis=1) > 0))
        residual = y - a @ x + (support / ell) * residual
        if not np.all(np.isfinite(residual)) or not np.all(np.isfinite(x)):
            raise SolverDivergenceError("AMP produced non-finite values")
        trace.append(float(np.linalg.norm(residual)))
    x_hat = x / np.sqrt(problem.rho)
    return SparseEstimate(
        x_hat=x_hat,
        activity_stat=_row_energies(x_hat),
        iterations_used=solver.amp_iters,
        objective_trace=np.asarray(trace),
    )


def colocate(artifacts: ScenarioArtifacts) -> ScenarioArtifacts:
    """Equivalent colocated (cellular) scenario: one AP at the square
    center carrying all M*N antennas, large-scale gains recomputed from
    center distances, pilots and devices unchanged."""
    cfg = artifacts.config
    center = 0.5 * cfg.area_side_km
    colocated_cfg = with_overrides(
        cfg,
        num_aps=1,
        antennas_per_ap=cfg.num_aps * cfg.antennas_per_ap,
        cluster_size=1,
    )
    geometry = Geometry(
        ap_positions=np.array([[center, center]]),
        device_positions=artifacts.geometry.device_positions,
    )
    shadow_stream = (
        substream(cfg.master_seed, "shadowing-colocated")
        if cfg.shadow_std_db > 0
        else None
    )
    beta = large_scale_fading(geometry, colocated_cfg, shadow_stream)
    return ScenarioArtifacts(
        config=colocated_cfg,
        geometry=geometry,
        beta=beta,
        pilots=artifacts.pilots,
    )
