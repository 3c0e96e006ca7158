"""Run the seeded property experiments (localization, spatial fidelity, L1 sparsity, LDA)
and write their per-seed numbers to results/experiments.json.

    python scripts/run_experiments.py
    python scripts/run_experiments.py --only lda --seeds 3
"""

import argparse
import json
import time
from pathlib import Path

from p300prm import experiments as X

RESULTS = Path(__file__).resolve().parent.parent / "results"

EXPERIMENTS = {
    "localization": (X.prm_localization, 10, lambda r: r["ratio"] >= 2, 8),
    "spatial": (X.spatial_fidelity, 10, lambda r: r["hits"] >= 2, 8),
    "sparsity": (X.l1_sparsity, 5, lambda r: r["sparse_fraction_0.1"] > r["sparse_fraction_0.0"], 4),
    "lda": (X.lda_comparison, 10, lambda r: r["fisher_concat"] >= r["fisher_last"], 9),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", choices=sorted(EXPERIMENTS), nargs="+")
    ap.add_argument("--seeds", type=int, help="override the number of seeds")
    ap.add_argument("--out", type=Path, default=RESULTS / "experiments.json")
    args = ap.parse_args()

    out = json.loads(args.out.read_text()) if args.out.exists() else {}
    for name in args.only or sorted(EXPERIMENTS):
        fn, n, hit, need = EXPERIMENTS[name]
        n = args.seeds or n
        t0 = time.time()
        runs = [fn(seed) for seed in range(n)]
        hits = sum(bool(hit(r)) for r in runs)
        out[name] = {"runs": runs, "hits": hits, "seeds": n, "required": need, "runtime_s": round(time.time() - t0, 1)}
        print(f"{name}: {hits}/{n} seeds meet the property (need {need}) in {out[name]['runtime_s']}s", flush=True)
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
