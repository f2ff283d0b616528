"""Two-point gradient (Nesterov-accelerated Landweber) iteration with L2+TV penalty.

For ``G(q) = data`` the iteration keeps a dual variable ``xi`` and maps it to
the primal through ``argmin R(z) - <eta, z>``:

    eta_n   = xi_n + lambda_n (xi_n - xi_{n-1})
    z_n     = argmin R(z) - <eta_n, z>            (then clipped to [0, c_plus])
    xi_{n+1} = xi_n + alpha_n G'(z_n)^* (data - G(z_n))
    q_{n+1} = argmin R(q) - <xi_{n+1}, q>

and stops at the first ``n`` with ``||G(z_n) - data|| <= tau * delta_abs``.
"""

from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericalError
from .grid import BoundaryTrace, GammaSpec, Grid2D, l2_norm
from .observation import BoundaryInput, ObservationKind, adjoint_apply, forward
from .regularizer import PenaltyParams, bregman_argmin

log = logging.getLogger(__name__)

_LAMBDA_RE = re.compile(r"^n/\(n\+([0-9.eE+-]+)\)$")


def lambda_from_spec(spec: str) -> Callable[[int], float]:
    """``"n/(n+10)"``, ``"zero"`` or ``"const:0.5"`` (``lambda_0`` is always 0)."""
    spec = spec.replace(" ", "")
    if spec in ("zero", "0", "landweber"):
        return lambda n: 0.0
    m = _LAMBDA_RE.match(spec)
    if m:
        a = float(m.group(1))
        if a <= 0:
            raise ConfigurationError("lambda offset must be positive")
        return lambda n: n / (n + a)
    if spec.startswith("const:"):
        c = float(spec.split(":", 1)[1])
        if not 0.0 <= c <= 1.0:
            raise ConfigurationError("lambda must lie in [0, 1]")
        return lambda n: 0.0 if n == 0 else c
    raise ConfigurationError(f"unknown lambda rule {spec!r}")


@dataclass(frozen=True)
class TpgConfig:
    alpha_bar0: float = 0.1
    alpha_bar1: float = 1000.0
    tau: float = 1.05
    lambda_rule: str = "n/(n+10)"
    max_outer: int = 20000
    delta_abs: float = 0.0
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    c_plus: float = 10.0
    log_every: int = 100

    def __post_init__(self):
        if not self.tau > 1.0:
            raise ConfigurationError("discrepancy constant tau must exceed 1")
        if not (self.alpha_bar0 > 0 and self.alpha_bar1 > 0):
            raise ConfigurationError("step-size constants must be positive")
        if self.max_outer < 0:
            raise ConfigurationError("max_outer must be non-negative")
        if self.delta_abs < 0:
            raise ConfigurationError("delta_abs must be non-negative")
        rule = lambda_from_spec(self.lambda_rule)
        if rule(0) != 0.0:
            raise ConfigurationError("lambda_0 must be 0")

    def lam(self, n: int) -> float:
        return lambda_from_spec(self.lambda_rule)(n)


def step_size(residual_norm: float, adjoint_grad_norm: float, cfg: TpgConfig) -> float:
    """Step length; 0 once the residual is within ``tau * delta_abs``."""
    if residual_norm <= cfg.tau * cfg.delta_abs:
        return 0.0
    if adjoint_grad_norm == 0.0:
        log.warning("zero adjoint gradient with residual %.3e above threshold; using the cap", residual_norm)
        return cfg.alpha_bar1
    return min(cfg.alpha_bar0 * residual_norm**2 / adjoint_grad_norm**2, cfg.alpha_bar1)


def relative_error(q: np.ndarray, q_truth: np.ndarray, grid: Grid2D) -> float:
    ref = l2_norm(q_truth, grid)
    if ref == 0.0:
        raise ConfigurationError("reference field has zero norm")
    return l2_norm(np.asarray(q) - q_truth, grid) / ref


@dataclass
class TpgState:
    q: np.ndarray
    xi: np.ndarray
    xi_prev: np.ndarray
    n: int = 0
    residual_history: list = field(default_factory=list)
    stopped_reason: str | None = None


@dataclass
class InversionResult:
    q_final: np.ndarray
    z_final: np.ndarray
    N: int
    residual_history: list
    stopped_reason: str
    converged_by_discrepancy: bool
    delta_abs: float
    tau: float
    step_sizes: list
    wall_time_seconds: float
    clamp_fraction: float
    inner_nonconverged: int
    relative_error: float | None = None
    relative_error_z: float | None = None
    iterates: list | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def report(self, case: str, kind: str, config: TpgConfig) -> dict:
        """JSON-ready run report (timing is kept out so reruns are byte-identical)."""
        return {
            "case": case,
            "kind": kind,
            "N": self.N,
            "stopped_reason": self.stopped_reason,
            "converged_by_discrepancy": self.converged_by_discrepancy,
            "residual_history": [float(r) for r in self.residual_history],
            "final_residual": float(self.final_residual),
            "delta_abs": self.delta_abs,
            "threshold": self.tau * self.delta_abs,
            "relative_error": self.relative_error,
            "relative_error_z": self.relative_error_z,
            "clamp_fraction": self.clamp_fraction,
            "inner_nonconverged": self.inner_nonconverged,
            "config": config_echo(config),
        }


def config_echo(cfg: TpgConfig) -> dict:
    d = asdict(cfg)
    return d


def tpg_solve(kind, data: BoundaryTrace, cfg: TpgConfig, bc: BoundaryInput,
              gamma: GammaSpec | None = None, truth: np.ndarray | None = None,
              record_iterates: bool = False, diffusion: float = 1.0,
              callback: Callable[[int, TpgState, float], None] | None = None) -> InversionResult:
    """Run the two-point gradient iteration from ``xi_{-1} = xi_0 = 0``."""
    kind = ObservationKind(kind)
    grid = bc.grid
    gamma = gamma or data.gamma
    if data.gamma != gamma or data.grid != grid:
        raise ConfigurationError("data must live on the input's grid and on gamma")
    pen = cfg.penalty
    t_start = time.perf_counter()

    xi = grid.zeros()
    state = TpgState(q=bregman_argmin(xi, grid, pen).z, xi=xi, xi_prev=xi.copy())
    threshold = cfg.tau * cfg.delta_abs
    dual_z = None
    steps: list[float] = []
    iterates = [] if record_iterates else None
    clamp_hits = 0
    inner_bad = 0
    z = None

    n = 0
    while True:
        lam = cfg.lam(n)
        eta = state.xi + lam * (state.xi - state.xi_prev)
        zr = bregman_argmin(eta, grid, pen, dual0=dual_z)
        dual_z = zr.dual
        inner_bad += not zr.converged
        try:
            cache = forward(kind, zr.z, bc, gamma, c_plus=cfg.c_plus, diffusion=diffusion)
        except NumericalError as exc:
            raise NumericalError(f"forward solve failed at outer iteration {n}: {exc}") from exc
        z = cache.q
        clamp_hits += cache.clamped_nodes
        if iterates is not None:
            iterates.append(z.copy())
        residual = data - cache.trace
        rnorm = residual.norm()
        if not math.isfinite(rnorm):
            raise NumericalError(f"non-finite residual at outer iteration {n}")
        state.residual_history.append(rnorm)
        state.n = n
        if rnorm <= threshold:
            state.stopped_reason = "discrepancy"
            break
        if n >= cfg.max_outer:
            state.stopped_reason = "max_outer"
            break
        grad = adjoint_apply(cache, residual)
        alpha = step_size(rnorm, l2_norm(grad, grid), cfg)
        steps.append(alpha)
        if alpha == 0.0:
            state.stopped_reason = "zero_step"
            break
        state.xi_prev, state.xi = state.xi, state.xi + alpha * grad
        if not np.all(np.isfinite(state.xi)):
            raise NumericalError(f"non-finite iterate at outer iteration {n}")
        if callback is not None:
            callback(n, state, alpha)
        if cfg.log_every and n % cfg.log_every == 0:
            log.info("%s n=%d residual=%.4e threshold=%.4e alpha=%.3g", kind.value, n, rnorm, threshold, alpha)
        n += 1

    state.q = bregman_argmin(state.xi, grid, pen, dual0=dual_z).z
    result = InversionResult(
        q_final=state.q,
        z_final=z,
        N=state.n,
        residual_history=list(state.residual_history),
        stopped_reason=state.stopped_reason,
        converged_by_discrepancy=state.stopped_reason == "discrepancy",
        delta_abs=cfg.delta_abs,
        tau=cfg.tau,
        step_sizes=steps,
        wall_time_seconds=time.perf_counter() - t_start,
        clamp_fraction=clamp_hits / ((state.n + 1) * grid.nx * grid.ny),
        inner_nonconverged=inner_bad,
        iterates=iterates,
    )
    if truth is not None:
        result.relative_error = relative_error(result.q_final, truth, grid)
        result.relative_error_z = relative_error(result.z_final, truth, grid)
    return result


@dataclass
class PipelineResult:
    mu_af: np.ndarray
    mu_a: np.ndarray
    mu_f: np.ndarray
    mu_f_unclamped: np.ndarray
    step1: InversionResult
    step2: InversionResult
    errors: dict = field(default_factory=dict)


def pipeline(data_e: BoundaryTrace, data_em: BoundaryTrace, cfg_e: TpgConfig, cfg_em: TpgConfig,
             bc: BoundaryInput, gamma: GammaSpec | None = None, truth: dict | None = None,
             diffusion: float = 1.0) -> PipelineResult:
    """Recover the mixture absorption, then the background, then ``mu_f`` by subtraction.

    ``truth`` may hold ``mu_a``, ``mu_f`` and ``mu_af`` for error reporting.
    """
    truth = truth or {}
    grid = bc.grid
    r1 = tpg_solve(ObservationKind.EXCITATION, data_e, cfg_e, bc, gamma, truth.get("mu_af"), diffusion=diffusion)
    if not r1.converged_by_discrepancy:
        log.warning("step 1 stopped by %s; continuing with step 2", r1.stopped_reason)
    r2 = tpg_solve(ObservationKind.COMBINED, data_em, cfg_em, bc, gamma, truth.get("mu_a"), diffusion=diffusion)
    mu_f_raw = r1.q_final - r2.q_final
    mu_f = np.maximum(mu_f_raw, 0.0)
    errors = {}
    if "mu_af" in truth:
        errors["mu_af"] = relative_error(r1.q_final, truth["mu_af"], grid)
    if "mu_a" in truth:
        errors["mu_a"] = relative_error(r2.q_final, truth["mu_a"], grid)
    if "mu_f" in truth and l2_norm(truth["mu_f"], grid) > 0:
        errors["mu_f"] = relative_error(mu_f, truth["mu_f"], grid)
    return PipelineResult(r1.q_final, r2.q_final, mu_f, mu_f_raw, r1, r2, errors)
