"""Synthetic data, case runs and their artifacts."""

from __future__ import annotations

import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import CaseConfig, NoiseSpec, case_to_mapping
from .errors import ConfigurationError
from .grid import (
    BoundaryTrace,
    Edge,
    GammaSpec,
    Grid2D,
    build_grid,
    write_field_csv,
    write_trace_csv,
)
from .inversion import InversionResult, TpgConfig, relative_error, tpg_solve
from .observation import (
    BoundaryInput,
    ObservationKind,
    forward,
    load_input,
    make_exponential_input,
    make_ramp_input,
)
from .phantoms import make_phantom

log = logging.getLogger(__name__)

DEFAULT_RAMP_KNOTS = (0.0, 0.1, 0.3, 0.4, 0.6)


def case_grid(case: CaseConfig) -> Grid2D:
    g = case.grid
    return build_grid(g.nx, g.ny, g.T, g.dt)


def case_input(case: CaseConfig, grid: Grid2D) -> BoundaryInput:
    if case.input == "exponential":
        return make_exponential_input(grid)
    if case.input == "ramp":
        return make_ramp_input(grid, DEFAULT_RAMP_KNOTS)
    return load_input(case.input, grid)


def truth_fields(case: CaseConfig, grid: Grid2D) -> dict[str, np.ndarray]:
    mu_a = make_phantom(case.mu_a, grid)
    mu_f = make_phantom(case.mu_f, grid)
    return {"mu_a": mu_a, "mu_f": mu_f, "mu_af": mu_a + mu_f}


def refine_gamma(gamma: GammaSpec, coarse: Grid2D, factor: int) -> GammaSpec:
    """The sub-boundary on the refined mesh spanning the same arcs."""
    edges = []
    for e in gamma.edges:
        a, b = e.bounds(coarse)
        edges.append(Edge(e.side, a * factor, (b - 1) * factor + 1))
    return GammaSpec(tuple(edges))


def inject_trace(fine: BoundaryTrace, coarse_grid: Grid2D, gamma: GammaSpec, factor: int) -> BoundaryTrace:
    """Restrict a trace on ``refine_gamma(gamma)`` to coincident coarse nodes and time levels."""
    if fine.grid != coarse_grid.refine(factor) or fine.gamma != refine_gamma(gamma, coarse_grid, factor):
        raise ConfigurationError("data mesh is not nested in the inversion mesh")
    cols, offset = [], 0
    for e in fine.gamma.edges:
        a, b = e.bounds(fine.grid)
        cols.append(np.arange(offset, offset + b - a, factor))
        offset += b - a
    return BoundaryTrace(coarse_grid, gamma, fine.values[::factor][:, np.concatenate(cols)].copy())


def clean_data(case: CaseConfig, grid: Grid2D | None = None) -> tuple[BoundaryTrace, BoundaryTrace]:
    """Noise-free excitation and combined traces on the inversion mesh.

    With ``data_multiplier > 1`` the truth is solved on a mesh refined in space
    and time and injected back.
    """
    grid = grid or case_grid(case)
    gamma = GammaSpec.parse(case.gamma)
    m = case.data_multiplier
    if m > 1 and case.input not in ("exponential", "ramp"):
        raise ConfigurationError("a custom input file cannot be used with data.multiplier > 1")
    gen = grid.refine(m) if m > 1 else grid
    gen_gamma = refine_gamma(gamma, grid, m) if m > 1 else gamma
    truth = truth_fields(case, gen)
    bc = case_input(case, gen)
    e = forward(ObservationKind.EXCITATION, truth["mu_af"], bc, gen_gamma, c_plus=None, diffusion=case.diffusion).trace
    em = forward(ObservationKind.COMBINED, truth["mu_a"], bc, gen_gamma, c_plus=None, diffusion=case.diffusion).trace
    if m > 1:
        e, em = inject_trace(e, grid, gamma, m), inject_trace(em, grid, gamma, m)
    return e, em


def add_noise(clean: BoundaryTrace, delta: float, n_realizations: int, rng: np.random.Generator) -> BoundaryTrace:
    """Pointwise mean of ``n_realizations`` copies of ``clean * (1 + delta * zeta)``."""
    if delta == 0.0:
        return clean.with_values(clean.values.copy())
    zeta = rng.standard_normal((n_realizations,) + clean.values.shape).mean(axis=0)
    return clean.with_values(clean.values * (1.0 + delta * zeta))


def effective_delta(delta: float, noise: NoiseSpec) -> float:
    return delta / math.sqrt(noise.n_realizations) if noise.delta_mode == "averaged" else delta


@dataclass
class SyntheticData:
    psi_e: BoundaryTrace
    psi_em: BoundaryTrace
    delta_abs_e: float
    delta_abs_em: float
    clean_e: BoundaryTrace
    clean_em: BoundaryTrace
    truth: dict


def synthesize_data(case: CaseConfig, seed: int | None = None, grid: Grid2D | None = None) -> SyntheticData:
    """Truth solves plus averaged multiplicative noise; thresholds are ``delta * ||psi_delta||``."""
    grid = grid or case_grid(case)
    noise = case.noise
    seed = noise.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    e, em = clean_data(case, grid)
    psi_e = add_noise(e, noise.delta_e, noise.n_realizations, rng)
    psi_em = add_noise(em, noise.delta_em, noise.n_realizations, rng)
    return SyntheticData(
        psi_e=psi_e,
        psi_em=psi_em,
        delta_abs_e=effective_delta(noise.delta_e, noise) * psi_e.norm(),
        delta_abs_em=effective_delta(noise.delta_em, noise) * psi_em.norm(),
        clean_e=e,
        clean_em=em,
        truth=truth_fields(case, grid),
    )


# ---------------------------------------------------------------------------
# artifacts


def write_pgm(path, q: np.ndarray) -> None:
    """8-bit binary PGM with a linear min/max mapping recorded in a comment."""
    q = np.asarray(q, dtype=float)
    lo, hi = float(q.min()), float(q.max())
    span = hi - lo
    img = np.zeros_like(q) if span == 0 else (q - lo) / span
    # rows from top (largest x2) down, columns along x1
    pix = np.round(255 * img.T[::-1]).astype(np.uint8)
    header = f"P5\n# linear map: 0 -> {lo!r}, 255 -> {hi!r}\n{q.shape[0]} {q.shape[1]}\n255\n"
    Path(path).write_bytes(header.encode("ascii") + pix.tobytes())


def read_pgm(path) -> tuple[np.ndarray, float, float]:
    """Inverse of :func:`write_pgm` up to quantization; returns ``(field, lo, hi)``."""
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n", 4)
    if lines[0] != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM")
    lo, hi = (float(v.split(b"->")[1].strip()) for v in lines[1].split(b":", 1)[1].split(b","))
    w, h = (int(v) for v in lines[2].split())
    pix = np.frombuffer(lines[4], dtype=np.uint8).reshape(h, w)
    return lo + (hi - lo) * pix[::-1].T / 255.0, lo, hi


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


SUMMARY_HEADER = f"{'case':<6}{'step':<6}{'delta':>10}{'residual':>14}{'threshold':>14}{'err':>10}{'err_f':>10}{'N':>7}  stop"


def summary_row(case: str, step: str, delta: float, res: InversionResult, err_f: float | None = None) -> str:
    err = float("nan") if res.relative_error is None else res.relative_error
    ef = float("nan") if err_f is None else err_f
    return (f"{case:<6}{step:<6}{100 * delta:>9.3g}%{res.final_residual:>14.6e}{res.tau * res.delta_abs:>14.6e}"
            f"{err:>10.4f}{ef:>10.4f}{res.N:>7d}  {res.stopped_reason}")


@dataclass
class CaseOutcome:
    out_dir: Path
    step1: InversionResult | None = None
    step2: InversionResult | None = None
    mu_f: np.ndarray | None = None
    errors: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)


def _with_delta(cfg: TpgConfig, delta_abs: float) -> TpgConfig:
    return replace(cfg, delta_abs=delta_abs)


def run_case(case: CaseConfig, out_dir=None, seed: int | None = None, write_images: bool = True) -> CaseOutcome:
    """Synthesize data, invert (step 1 and/or 2) and write all artifacts to ``out_dir``.

    On failure a ``manifest.json`` with the error is written before re-raising.
    Wall-clock times go to ``timing.json`` so the other artifacts are reproducible.
    """
    out = Path(out_dir or case.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"case": case.name, "status": "running", "artifacts": []}
    outcome = CaseOutcome(out)

    def save_field(name, q, grid):
        write_field_csv(out / f"{name}.csv", q, grid)
        manifest["artifacts"].append(f"{name}.csv")
        if write_images:
            write_pgm(out / f"{name}.pgm", q)
            manifest["artifacts"].append(f"{name}.pgm")

    t0 = time.perf_counter()
    try:
        (out / "config.txt").write_text(
            "".join(f"{k} = {v}\n" for k, v in sorted(case_to_mapping(case).items()))
        )
        grid = case_grid(case)
        gamma = GammaSpec.parse(case.gamma)
        bc = case_input(case, grid)
        data = synthesize_data(case, seed, grid)
        for name, q in data.truth.items():
            save_field(f"truth_{name}", q, grid)
        write_trace_csv(out / "data_e.csv", data.psi_e)
        write_trace_csv(out / "data_em.csv", data.psi_em)
        manifest["artifacts"] += ["data_e.csv", "data_em.csv"]

        if case.steps in ("both", "1"):
            cfg = _with_delta(case.step1, data.delta_abs_e)
            r1 = tpg_solve(ObservationKind.EXCITATION, data.psi_e, cfg, bc, gamma, data.truth["mu_af"],
                           diffusion=case.diffusion)
            outcome.step1 = r1
            save_field("recon_mu_af", r1.q_final, grid)
            write_json(out / "report_step1.json", r1.report(case.name, "excitation", cfg))
            manifest["artifacts"].append("report_step1.json")
            outcome.errors["mu_af"] = r1.relative_error
            outcome.summary.append(summary_row(case.name, "1", case.noise.delta_e, r1))
            if not r1.converged_by_discrepancy:
                log.warning("step 1 stopped by %s", r1.stopped_reason)
        if case.steps in ("both", "2"):
            cfg = _with_delta(case.step2, data.delta_abs_em)
            r2 = tpg_solve(ObservationKind.COMBINED, data.psi_em, cfg, bc, gamma, data.truth["mu_a"],
                           diffusion=case.diffusion)
            outcome.step2 = r2
            save_field("recon_mu_a", r2.q_final, grid)
            rep = r2.report(case.name, "combined", cfg)
            err_f = None
            if outcome.step1 is not None:
                mu_f_raw = outcome.step1.q_final - r2.q_final
                outcome.mu_f = np.maximum(mu_f_raw, 0.0)
                save_field("recon_mu_f", outcome.mu_f, grid)
                write_field_csv(out / "recon_mu_f_unclamped.csv", mu_f_raw, grid)
                if np.any(data.truth["mu_f"] != 0):
                    err_f = relative_error(outcome.mu_f, data.truth["mu_f"], grid)
                    outcome.errors["mu_f"] = err_f
                rep["relative_error_mu_f"] = err_f
            write_json(out / "report_step2.json", rep)
            manifest["artifacts"].append("report_step2.json")
            outcome.errors["mu_a"] = r2.relative_error
            outcome.summary.append(summary_row(case.name, "2", case.noise.delta_em, r2, err_f))
        (out / "summary.txt").write_text("\n".join([SUMMARY_HEADER] + outcome.summary) + "\n")
        manifest["artifacts"].append("summary.txt")
        manifest["status"] = "ok"
        return outcome
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        raise
    finally:
        manifest["errors"] = outcome.errors
        write_json(out / "manifest.json", manifest)
        timing = {"total_seconds": time.perf_counter() - t0}
        for name, r in (("step1", outcome.step1), ("step2", outcome.step2)):
            if r is not None:
                timing[name] = {"seconds": r.wall_time_seconds, "N": r.N}
        write_json(out / "timing.json", timing)
