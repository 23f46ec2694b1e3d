#!/usr/bin/env python3
"""Full paper-scale experiment: M=20 APs x 2 antennas, K=100 devices,
L=40 pilots, 100 federated rounds, 2000 evaluation events.

Expect a long run (tens of minutes single-threaded). Results land under
results/paper_full/.
"""

import sys
import time
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from fedad.cli import emit_results, parse_config, run_experiment


def main() -> None:
    config = parse_config(REPO / "configs" / "paper_full.json")
    t0 = time.time()
    bundle = run_experiment(config)
    paths = emit_results(bundle, config)
    print(f"finished in {(time.time() - t0) / 60:.1f} min")
    for path in paths:
        print(f"wrote {path}")
    for name, res in bundle.results.items():
        print(f"{name}: auc={res.roc.auc:.4f}")


if __name__ == "__main__":
    main()
