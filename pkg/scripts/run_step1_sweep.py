"""Step 1 (mixture absorption) rows for Case (1a) at several excitation noise levels.

    python scripts/run_step1_sweep.py --deltas 0.01 0.001 --out-dir runs/step1
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from tdfdot.config import case_from_mapping, load_config
from tdfdot.experiment import SUMMARY_HEADER, run_case

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", default=str(ROOT / "configs" / "case1a.cfg"))
    p.add_argument("--deltas", type=float, nargs="+", default=[0.01, 0.001, 0.0])
    p.add_argument("--n", type=int, default=65, help="grid nodes per side")
    p.add_argument("--out-dir", default="runs/step1")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    rows = []
    for delta in args.deltas:
        m = load_config(args.config)
        m.update({"noise.delta_e": str(delta), "grid.nx": str(args.n), "grid.ny": str(args.n), "run.steps": "1"})
        out = Path(args.out_dir) / f"delta_e_{delta:g}"
        outcome = run_case(case_from_mapping(m), out, write_images=True)
        rows.extend(outcome.summary)
        print(outcome.summary[0], flush=True)
    print(SUMMARY_HEADER)
    print("\n".join(rows))


if __name__ == "__main__":
    main()
