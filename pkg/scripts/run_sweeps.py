"""One-parameter sweeps around the central scenario (sigma_eps, n, rho, h).

Each sweep writes its own directory under ``--out``; values default to the
grids of the simulation study.

    python3 scripts/run_sweeps.py --params sigma_eps n --seeds 100 --workers 4
"""
import argparse
import logging
from pathlib import Path

from deltafwer.experiment import REFERENCE_GRIDS, ExperimentSpec, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--params", nargs="+", default=list(REFERENCE_GRIDS), choices=list(REFERENCE_GRIDS))
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--clusters", type=int, nargs="+", default=[100, 200, 300, 400])
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    for name in args.params:
        spec = ExperimentSpec(methods=("cludl", "dlasso-full", "encludl"), C_grid=tuple(args.clusters),
                              n_seeds=args.seeds, sweep=(name, REFERENCE_GRIDS[name]),
                              output_dir=str(args.out / f"sweep_{name}"))
        rows = run_sweep(spec, workers=args.workers)
        print(f"{name}: {len(rows)} rows -> {spec.output_dir}/summary.csv")


if __name__ == "__main__":
    main()
