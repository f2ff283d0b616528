"""Step 2 rows: fixed excitation noise, decreasing emission noise, both steps per row.

    python scripts/run_step2_sweep.py --delta-e 0.001 --deltas-em 0.05 0.01 0.001 --out-dir runs/step2
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
    p.add_argument("--delta-e", type=float, default=0.001)
    p.add_argument("--deltas-em", type=float, nargs="+", default=[0.05, 0.01, 0.001])
    p.add_argument("--n", type=int, default=65, help="grid nodes per side")
    p.add_argument("--out-dir", default="runs/step2")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    rows = []
    for delta_em in args.deltas_em:
        m = load_config(args.config)
        m.update({"noise.delta_e": str(args.delta_e), "noise.delta_em": str(delta_em),
                  "grid.nx": str(args.n), "grid.ny": str(args.n), "run.steps": "both"})
        out = Path(args.out_dir) / f"delta_em_{delta_em:g}"
        outcome = run_case(case_from_mapping(m), out, write_images=True)
        rows.extend(outcome.summary)
        print("\n".join(outcome.summary), flush=True)
    print(SUMMARY_HEADER)
    print("\n".join(rows))


if __name__ == "__main__":
    main()
