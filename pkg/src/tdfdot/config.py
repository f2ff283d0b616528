"""Flat ``dotted.key = value`` configuration files and case settings."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .inversion import TpgConfig
from .phantoms import CASE_1A, CASE_1B, PhantomSpec
from .regularizer import PdhgSettings, PenaltyParams


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass(frozen=True)
class GridSettings:
    nx: int = 65
    ny: int = 65
    T: float = 1.0
    dt: float = 0.01


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative Gaussian noise, averaged over ``n_realizations`` copies.

    ``delta_mode`` picks the discrepancy level: ``nominal`` uses ``delta``,
    ``averaged`` uses ``delta / sqrt(n_realizations)``.
    """

    delta_e: float = 0.0
    delta_em: float = 0.0
    n_realizations: int = 10
    seed: int = 0
    delta_mode: str = "nominal"

    def __post_init__(self):
        if self.delta_e < 0 or self.delta_em < 0:
            raise ConfigurationError("noise levels must be non-negative")
        if self.n_realizations < 1:
            raise ConfigurationError("need at least one noise realization")
        if self.delta_mode not in ("nominal", "averaged"):
            raise ConfigurationError(f"unknown delta_mode {self.delta_mode!r}")


@dataclass(frozen=True)
class CaseConfig:
    name: str = "1a"
    grid: GridSettings = field(default_factory=GridSettings)
    mu_a: PhantomSpec = CASE_1A["mu_a"]
    mu_f: PhantomSpec = CASE_1A["mu_f"]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    step1: TpgConfig = field(default_factory=TpgConfig)
    step2: TpgConfig = field(default_factory=TpgConfig)
    input: str = "exponential"
    gamma: str = "all"
    out_dir: str = "runs/case"
    data_multiplier: int = 1
    steps: str = "both"
    diffusion: float = 1.0
    note: str = ""

    def __post_init__(self):
        if self.steps not in ("both", "1", "2"):
            raise ConfigurationError("run.steps must be 'both', '1' or '2'")
        if self.data_multiplier < 1:
            raise ConfigurationError("data.multiplier must be a positive integer")
        if self.input not in ("exponential", "ramp") and not Path(self.input).is_file():
            raise ConfigurationError(f"boundary input file not found: {self.input}")


PRESETS = {"1a": CASE_1A, "1b": CASE_1B}


def _tpg_from(m: dict[str, str], prefix: str, base: TpgConfig) -> TpgConfig:
    def get(key, cast, default):
        full = f"{prefix}.{key}"
        return cast(m[full]) if full in m else default

    pd = base.penalty.pdhg
    pdhg = PdhgSettings(
        max_iters=get("pdhg.max_iters", int, pd.max_iters),
        tol=get("pdhg.tol", float, pd.tol),
        sigma=get("pdhg.sigma", float, pd.sigma),
        tau_step=get("pdhg.tau_step", float, pd.tau_step),
        theta=get("pdhg.theta", float, pd.theta),
        accelerate=get("pdhg.accelerate", _bool, pd.accelerate),
        step_ratio=get("pdhg.step_ratio", float, pd.step_ratio),
        check_every=get("pdhg.check_every", int, pd.check_every),
    )
    penalty = PenaltyParams(
        beta1=get("beta1", float, base.penalty.beta1),
        beta2=get("beta2", float, base.penalty.beta2),
        pdhg=pdhg,
    )
    return TpgConfig(
        alpha_bar0=get("alpha_bar0", float, base.alpha_bar0),
        alpha_bar1=get("alpha_bar1", float, base.alpha_bar1),
        tau=get("tau", float, base.tau),
        lambda_rule=get("lambda", str, base.lambda_rule),
        max_outer=get("max_outer", int, base.max_outer),
        penalty=penalty,
        c_plus=get("c_plus", float, base.c_plus),
        log_every=get("log_every", int, base.log_every),
    )


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {v!r}")


KNOWN_PREFIXES = ("case.", "grid.", "mu_a.", "mu_f.", "noise.", "step1.", "step2.", "steps.", "data.", "run.")
KNOWN_KEYS = ("input", "gamma", "out_dir", "diffusion", "note")


def case_from_mapping(m: dict[str, str], base: CaseConfig | None = None) -> CaseConfig:
    """Build a case from flat keys; ``case.preset`` selects the phantoms (1a/1b).

    ``steps.*`` keys apply to both inversion steps before ``step1.*``/``step2.*``.
    """
    for k in m:
        if not (k.startswith(KNOWN_PREFIXES) or k in KNOWN_KEYS):
            raise ConfigurationError(f"unknown configuration key {k!r}")
    base = base or CaseConfig()
    preset = m.get("case.preset")
    mu_a, mu_f = base.mu_a, base.mu_f
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        mu_a, mu_f = PRESETS[preset]["mu_a"], PRESETS[preset]["mu_f"]

    def phantom(prefix, cur: PhantomSpec) -> PhantomSpec:
        if not any(k.startswith(prefix + ".") for k in m):
            return cur
        return PhantomSpec.parse(
            float(m.get(f"{prefix}.background", cur.background)),
            m.get(f"{prefix}.discs", cur.to_text()),
            float(m.get(f"{prefix}.d1", cur.d1)),
            float(m.get(f"{prefix}.d2", cur.d2)),
        )

    g = base.grid
    grid = GridSettings(
        nx=int(m.get("grid.nx", g.nx)),
        ny=int(m.get("grid.ny", m.get("grid.nx", g.ny))),
        T=float(m.get("grid.T", g.T)),
        dt=float(m.get("grid.dt", g.dt)),
    )
    n = base.noise
    noise = NoiseSpec(
        delta_e=float(m.get("noise.delta_e", n.delta_e)),
        delta_em=float(m.get("noise.delta_em", n.delta_em)),
        n_realizations=int(m.get("noise.realizations", n.n_realizations)),
        seed=int(m.get("noise.seed", n.seed)),
        delta_mode=m.get("noise.delta_mode", n.delta_mode),
    )
    shared1 = _tpg_from(m, "steps", base.step1)
    shared2 = _tpg_from(m, "steps", base.step2)
    return CaseConfig(
        name=m.get("case.name", preset or base.name),
        grid=grid,
        mu_a=phantom("mu_a", mu_a),
        mu_f=phantom("mu_f", mu_f),
        noise=noise,
        step1=_tpg_from(m, "step1", shared1),
        step2=_tpg_from(m, "step2", shared2),
        input=m.get("input", base.input),
        gamma=m.get("gamma", base.gamma),
        out_dir=m.get("out_dir", base.out_dir),
        data_multiplier=int(m.get("data.multiplier", base.data_multiplier)),
        steps=m.get("run.steps", base.steps),
        diffusion=float(m.get("diffusion", base.diffusion)),
        note=m.get("note", base.note),
    )


def case_to_mapping(case: CaseConfig) -> dict[str, str]:
    """Inverse of :func:`case_from_mapping` (for echoing a run's settings)."""
    m = {
        "case.name": case.name,
        "grid.nx": str(case.grid.nx),
        "grid.ny": str(case.grid.ny),
        "grid.T": repr(case.grid.T),
        "grid.dt": repr(case.grid.dt),
        "mu_a.background": repr(case.mu_a.background),
        "mu_a.discs": case.mu_a.to_text(),
        "mu_f.background": repr(case.mu_f.background),
        "mu_f.discs": case.mu_f.to_text(),
        "noise.delta_e": repr(case.noise.delta_e),
        "noise.delta_em": repr(case.noise.delta_em),
        "noise.realizations": str(case.noise.n_realizations),
        "noise.seed": str(case.noise.seed),
        "noise.delta_mode": case.noise.delta_mode,
        "input": case.input,
        "gamma": case.gamma,
        "out_dir": case.out_dir,
        "data.multiplier": str(case.data_multiplier),
        "run.steps": case.steps,
        "diffusion": repr(case.diffusion),
    }
    for name, cfg in (("step1", case.step1), ("step2", case.step2)):
        m.update({
            f"{name}.alpha_bar0": repr(cfg.alpha_bar0),
            f"{name}.alpha_bar1": repr(cfg.alpha_bar1),
            f"{name}.tau": repr(cfg.tau),
            f"{name}.lambda": cfg.lambda_rule,
            f"{name}.max_outer": str(cfg.max_outer),
            f"{name}.c_plus": repr(cfg.c_plus),
            f"{name}.beta1": repr(cfg.penalty.beta1),
            f"{name}.beta2": repr(cfg.penalty.beta2),
        })
        for f in dataclasses.fields(PdhgSettings):
            v = getattr(cfg.penalty.pdhg, f.name)
            if v is not None:
                m[f"{name}.pdhg.{f.name}"] = str(v)
    return m
