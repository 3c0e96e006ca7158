"""Sweep the synthetic noise level for the PRM-vs-last-step surrogate and record the outcome.

The chosen level is frozen in results/surrogate_prereg.json before the
acceptance test enforces the BAC thresholds against it.

    python scripts/preregister_surrogate.py --noise 25 30 35
"""

import argparse
import json
import time
from pathlib import Path

from p300prm.experiments import surrogate_table1

RESULTS = Path(__file__).resolve().parent.parent / "results"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--noise", type=float, nargs="+", default=[25.0, 30.0, 35.0])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--out", type=Path, default=RESULTS / "surrogate_sweep.json")
    args = ap.parse_args()

    runs = []
    for noise in args.noise:
        t0 = time.time()
        res = surrogate_table1(noise, epochs=args.epochs)
        res["runtime_s"] = round(time.time() - t0, 1)
        print(f"noise {noise}: PRM {res['mean_bac_prm']:.4f} last {res['mean_bac_last']:.4f} "
              f"delta {res['delta']:+.4f} ({res['runtime_s']}s)", flush=True)
        runs.append(res)
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(runs, indent=1) + "\n")


if __name__ == "__main__":
    main()
