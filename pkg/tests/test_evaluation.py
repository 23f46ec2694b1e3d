import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedad.evaluation import (
    MacCount,
    ScoredTrials,
    auc_rank_oracle,
    confusion,
    mac_count_amp,
    mac_count_slp,
    roc_curve,
)
from fedad.scenario import ScenarioConfig


def trials(scores, truths, tag="t"):
    return ScoredTrials(
        scores=np.asarray(scores, dtype=float),
        truths=np.asarray(truths, dtype=np.int8),
        detector_tag=tag,
    )


class TestConfusion:
    def test_perfect(self):
        t = np.array([1, 0, 1, 1, 0])
        assert confusion(t, t) == (3, 0, 2, 0)

    def test_complement(self):
        t = np.array([1, 0, 1, 0])
        tp, fp, tn, fn = confusion(1 - t, t)
        assert tp == 0 and tn == 0 and fp == 2 and fn == 2

    def test_enumerated_case(self):
        truth = np.array([1, 0, 1, 0])
        est = np.array([1, 1, 0, 0])
        assert confusion(est, truth) == (1, 1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion(np.zeros(3), np.zeros(4))


class TestRocCurve:
    def test_perfect_scores(self):
        t = trials([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert roc_curve(t).auc == 1.0

    def test_constant_scores(self):
        t = trials([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0])
        assert roc_curve(t).auc == 0.5

    def test_single_positive_outranks(self):
        # AUC equals P(score_pos > score_neg) = 1 when the positive tops both.
        t = trials([0.9, 0.8, 0.3], [1, 0, 0])
        assert roc_curve(t).auc == pytest.approx(1.0, abs=1e-15)

    def test_endpoints_present(self):
        t = trials([0.6, 0.2, 0.8], [1, 0, 1])
        roc = roc_curve(t)
        pts = [(f, tp) for _, f, tp in roc.points]
        assert (1.0, 1.0) in pts
        assert (0.0, 0.0) in pts

    def test_monotone_staircase(self):
        rng = np.random.default_rng(0)
        t = trials(rng.random(200), rng.integers(0, 2, 200))
        roc = roc_curve(t)
        # Thresholds ascend; both rates must be nonincreasing.
        assert np.all(np.diff(roc.fpr) <= 0)
        assert np.all(np.diff(roc.tpr) <= 0)
        order = np.lexsort((roc.tpr, roc.fpr))
        assert np.all(np.diff(roc.tpr[order]) >= 0)

    def test_threshold_cap(self):
        rng = np.random.default_rng(1)
        t = trials(rng.random(500), rng.integers(0, 2, 500))
        roc = roc_curve(t, n_thresholds=16)
        assert len(roc.thresholds) <= 16

    def test_degenerate_truths_rejected(self):
        with pytest.raises(ValueError):
            roc_curve(trials([0.1, 0.2], [1, 1]))
        with pytest.raises(ValueError):
            roc_curve(trials([0.1, 0.2], [0, 0]))


class TestAucRankOracle:
    def test_perfect_ordering(self):
        assert auc_rank_oracle(trials([0.9, 0.7, 0.1], [1, 1, 0])) == 1.0

    def test_all_tied(self):
        assert auc_rank_oracle(trials([0.5, 0.5, 0.5], [1, 0, 1])) == 0.5

    def test_matches_trapezoid_seeded(self):
        rng = np.random.default_rng(2024)
        scores = rng.normal(size=1000)
        truths = (rng.random(1000) < 0.3).astype(np.int8)
        t = trials(scores, truths)
        assert abs(auc_rank_oracle(t) - roc_curve(t).auc) < 1e-9

    def test_matches_trapezoid_with_ties(self):
        rng = np.random.default_rng(7)
        scores = rng.integers(0, 5, size=400).astype(float)  # heavy ties
        truths = (rng.random(400) < 0.4).astype(np.int8)
        t = trials(scores, truths)
        assert abs(auc_rank_oracle(t) - roc_curve(t).auc) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(4, 120))
    def test_equivalence_property(self, seed, n):
        rng = np.random.default_rng(seed)
        truths = rng.integers(0, 2, n)
        if truths.min() == truths.max():
            truths[0] = 1 - truths[0]
        scores = np.round(rng.random(n), 2)  # induce occasional ties
        t = trials(scores, truths)
        auc = roc_curve(t).auc
        assert 0.0 <= auc <= 1.0
        assert abs(auc - auc_rank_oracle(t)) < 1e-9


class TestPoolingInvariance:
    def test_confusion_pools_additively(self):
        rng = np.random.default_rng(3)
        s1, t1 = rng.random(50), rng.integers(0, 2, 50)
        s2, t2 = rng.random(70), rng.integers(0, 2, 70)
        theta = 0.5
        c1 = confusion(s1 >= theta, t1)
        c2 = confusion(s2 >= theta, t2)
        pooled = confusion(np.concatenate([s1, s2]) >= theta, np.concatenate([t1, t2]))
        assert pooled == tuple(a + b for a, b in zip(c1, c2))


class TestMacCounts:
    def test_slp_default_config(self):
        cfg = ScenarioConfig()  # M=20, N=2, K=100, L=40, V=512
        count = mac_count_slp(cfg)
        assert count.knobs["per_ap_macs"] == 133_120
        assert count.macs == 2_662_400
        assert count.macs == sum(count.breakdown.values())

    def test_slp_minimal_dims(self):
        cfg = ScenarioConfig(
            num_aps=1, antennas_per_ap=1, num_devices=1, pilot_len=1,
            hidden_units=1, cluster_size=1,
        )
        assert mac_count_slp(cfg).knobs["per_ap_macs"] == 3

    def test_amp_default_config(self):
        cfg = ScenarioConfig()
        count = mac_count_amp(cfg, iters=25, complex_mac_real_ops=4)
        assert count.macs == 32_000_000
        assert count.macs == sum(count.breakdown.values())
        count1 = mac_count_amp(cfg, iters=25, complex_mac_real_ops=1)
        assert count1.macs == 8_000_000

    def test_amp_zero_iters(self):
        assert mac_count_amp(ScenarioConfig(), iters=0).macs == 0

    def test_ratio_conventions(self):
        cfg = ScenarioConfig()
        slp = mac_count_slp(cfg).macs
        r4 = mac_count_amp(cfg, 25, complex_mac_real_ops=4).macs / slp
        r1 = mac_count_amp(cfg, 25, complex_mac_real_ops=1).macs / slp
        assert r1 == pytest.approx(3.0, rel=5e-3)
        assert r4 == pytest.approx(12.0, rel=5e-3)
        assert r1 < 6.0 < r4

    def test_linearity_in_dims(self):
        cfg = ScenarioConfig()
        double_iters = mac_count_amp(cfg, 50).macs
        assert double_iters == 2 * mac_count_amp(cfg, 25).macs

    def test_breakdown_sum_enforced(self):
        with pytest.raises(ValueError):
            MacCount(macs=10, breakdown={"a": 3, "b": 3})
