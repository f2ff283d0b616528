"""Command-line entry point: ``tdfdot <subcommand> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import CaseConfig, case_from_mapping, load_config, parse_overrides
from .diagnostics import DIAGNOSTICS, run_diagnostic
from .errors import ConfigurationError, DiagnosticFailure, NumericalError
from .experiment import (
    SUMMARY_HEADER,
    case_grid,
    case_input,
    run_case,
    summary_row,
    synthesize_data,
    truth_fields,
    write_json,
    write_pgm,
)
from .grid import GammaSpec, read_field_csv, read_trace_csv, write_field_csv, write_trace_csv, write_trajectory_csv
from .inversion import tpg_solve
from .observation import ObservationKind, forward

log = logging.getLogger("tdfdot")


def _case(args) -> CaseConfig:
    mapping = load_config(args.config) if args.config else {}
    mapping.update(parse_overrides(args.set))
    case = case_from_mapping(mapping)
    if args.seed is not None:
        case = replace(case, noise=replace(case.noise, seed=args.seed))
    return case


def _out_dir(args, case: CaseConfig) -> Path:
    out = Path(args.out_dir or case.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _coefficient(spec: str, case: CaseConfig, grid, kind: ObservationKind) -> np.ndarray:
    if spec == "truth":
        t = truth_fields(case, grid)
        return t["mu_af"] if kind is ObservationKind.EXCITATION else t["mu_a"]
    q, (nx, ny, _, _) = read_field_csv(spec)
    if (nx, ny) != grid.shape:
        raise ConfigurationError(f"{spec}: field is {nx}x{ny}, grid is {grid.nx}x{grid.ny}")
    return q


def cmd_forward(args) -> int:
    case = _case(args)
    grid = case_grid(case)
    kind = ObservationKind(args.kind)
    cache = forward(kind, _coefficient(args.coefficient, case, grid, kind), case_input(case, grid),
                    GammaSpec.parse(case.gamma), c_plus=None, diffusion=case.diffusion)
    out = _out_dir(args, case)
    write_trace_csv(out / f"trace_{kind.value}.csv", cache.trace)
    if args.trajectory:
        write_trajectory_csv(out / f"trajectory_{kind.value}.csv", cache.trajectory, grid)
    print(f"wrote {out / f'trace_{kind.value}.csv'} (norm {cache.trace.norm():.6e})")
    return 0


def cmd_synthesize(args) -> int:
    case = _case(args)
    grid = case_grid(case)
    data = synthesize_data(case, grid=grid)
    out = _out_dir(args, case)
    write_trace_csv(out / "data_e.csv", data.psi_e)
    write_trace_csv(out / "data_em.csv", data.psi_em)
    for name, q in data.truth.items():
        write_field_csv(out / f"truth_{name}.csv", q, grid)
    write_json(out / "thresholds.json", {"delta_abs_e": data.delta_abs_e, "delta_abs_em": data.delta_abs_em,
                                         "seed": case.noise.seed})
    print(f"delta_abs_e={data.delta_abs_e:.6e} delta_abs_em={data.delta_abs_em:.6e} -> {out}")
    return 0


def cmd_invert(args) -> int:
    case = _case(args)
    grid = case_grid(case)
    gamma = GammaSpec.parse(case.gamma)
    kind = ObservationKind.EXCITATION if args.step == "1" else ObservationKind.COMBINED
    cfg = case.step1 if args.step == "1" else case.step2
    truth = truth_fields(case, grid)["mu_af" if args.step == "1" else "mu_a"]
    if args.data:
        data = read_trace_csv(args.data, grid)
        if args.delta_abs is None:
            raise ConfigurationError("--delta-abs is required with --data")
        delta_abs = args.delta_abs
    else:
        syn = synthesize_data(case, grid=grid)
        data = syn.psi_e if args.step == "1" else syn.psi_em
        delta_abs = syn.delta_abs_e if args.step == "1" else syn.delta_abs_em
    cfg = replace(cfg, delta_abs=delta_abs)
    res = tpg_solve(kind, data, cfg, case_input(case, grid), gamma, truth, diffusion=case.diffusion)
    out = _out_dir(args, case)
    name = "recon_mu_af" if args.step == "1" else "recon_mu_a"
    write_field_csv(out / f"{name}.csv", res.q_final, grid)
    write_pgm(out / f"{name}.pgm", res.q_final)
    write_json(out / f"report_step{args.step}.json", res.report(case.name, kind.value, cfg))
    delta = case.noise.delta_e if args.step == "1" else case.noise.delta_em
    print(SUMMARY_HEADER)
    print(summary_row(case.name, args.step, delta, res))
    return 0


def cmd_pipeline(args) -> int:
    case = _case(args)
    outcome = run_case(case, _out_dir(args, case), write_images=not args.no_images)
    print(SUMMARY_HEADER)
    print("\n".join(outcome.summary))
    return 0


def cmd_diagnose(args) -> int:
    names = DIAGNOSTICS if args.name == "all" else (args.name,)
    failed = []
    for n in names:
        rep = run_diagnostic(n)
        print(rep.line(), flush=True)
        if not rep.passed:
            failed.append(n)
    if failed:
        raise DiagnosticFailure(f"failed: {', '.join(failed)}")
    return 0


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    if not run.is_dir():
        raise ConfigurationError(f"not a run directory: {run}")
    print(SUMMARY_HEADER)
    for step in ("1", "2"):
        p = run / f"report_step{step}.json"
        if not p.is_file():
            continue
        rep = json.loads(p.read_text())
        err = rep.get("relative_error")
        ef = rep.get("relative_error_mu_f")
        delta_key = "delta_e" if step == "1" else "delta_em"
        delta = _config_delta(run, delta_key)
        print(f"{rep['case']:<6}{step:<6}{_pct(delta):>10}{rep['final_residual']:>14.6e}{rep['threshold']:>14.6e}"
              f"{_num(err):>10}{_num(ef):>10}{rep['N']:>7d}  {rep['stopped_reason']}")
    return 0


def _config_delta(run: Path, key: str):
    cfg = run / "config.txt"
    if not cfg.is_file():
        return None
    v = load_config(cfg).get(f"noise.{key}")
    return None if v is None else float(v)


def _pct(v):
    return "?" if v is None else f"{100 * v:.3g}%"


def _num(v):
    return "nan" if v is None else f"{v:.4f}"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a configuration key")
    common.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    common.add_argument("--out-dir", help="output directory (overrides out_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tdfdot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forward", parents=[common], help="evaluate an observation map")
    f.add_argument("--kind", choices=[k.value for k in ObservationKind], default="excitation")
    f.add_argument("--coefficient", default="truth", help="'truth' or a field CSV")
    f.add_argument("--trajectory", action="store_true", help="also write the full space-time solution")
    f.set_defaults(func=cmd_forward)

    s = sub.add_parser("synthesize", parents=[common], help="generate noisy synthetic data")
    s.set_defaults(func=cmd_synthesize)

    i = sub.add_parser("invert", parents=[common], help="run one inversion step")
    i.add_argument("--step", choices=["1", "2"], default="1")
    i.add_argument("--data", help="trace CSV (default: synthesize from the case)")
    i.add_argument("--delta-abs", type=float, help="absolute noise level for --data")
    i.set_defaults(func=cmd_invert)

    pl = sub.add_parser("pipeline", parents=[common], help="synthesize, run both steps, write artifacts")
    pl.add_argument("--no-images", action="store_true")
    pl.set_defaults(func=cmd_pipeline)

    d = sub.add_parser("diagnose", parents=[common], help="run numerical self-checks")
    d.add_argument("name", choices=DIAGNOSTICS + ("all",))
    d.set_defaults(func=cmd_diagnose)

    r = sub.add_parser("report", parents=[common], help="print the summary table of a run directory")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, NumericalError, DiagnosticFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        # malformed values and unreadable input files are configuration problems
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
