"""Numerical self-checks: adjoint identity, Taylor remainder, convergence order, PDHG oracle."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import BoundaryTrace, GammaSpec, Grid2D, build_grid, l2_inner, trace_from_function
from .observation import (
    BoundaryInput,
    ObservationKind,
    adjoint_apply,
    forward,
    frechet_apply,
    make_exponential_input,
    solve_emission,
)
from .parabolic import ParabolicSolver
from .regularizer import PdhgSettings, PenaltyParams, argmin_projected_gradient, bregman_argmin


@dataclass
class DiagnosticReport:
    name: str
    passed: bool
    measurements: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measurements.items())
        return f"[{flag}] {self.name}: {vals} ({self.seconds:.1f}s)"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def smooth_random_field(grid: Grid2D, rng: np.random.Generator, modes: int = 3) -> np.ndarray:
    X, Y = grid.mesh()
    out = grid.zeros()
    for a in range(1, modes + 1):
        for b in range(1, modes + 1):
            out += (rng.normal() / (a * b) * np.cos(a * math.pi * X + rng.uniform(0, 2 * math.pi))
                    * np.cos(b * math.pi * Y + rng.uniform(0, 2 * math.pi)))
    return out


def smooth_random_trace(grid: Grid2D, gamma: GammaSpec, rng: np.random.Generator, modes: int = 3) -> BoundaryTrace:
    i, j = gamma.nodes(grid)
    x1, x2, t = grid.x1[i], grid.x2[j], grid.t[:, None]
    v = np.zeros((grid.nt, i.size))
    for a in range(modes):
        for c in range(modes):
            v += (rng.normal() * np.cos(a * math.pi * x1 + rng.uniform(0, 2 * math.pi))
                  * np.cos(a * math.pi * x2 + rng.uniform(0, 2 * math.pi))
                  * np.cos(c * math.pi * t + rng.uniform(0, 2 * math.pi)))
    return BoundaryTrace(grid, gamma, v)


def disc_coefficient(grid: Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    return 1.0 + 2.0 * ((X - 0.4) ** 2 + (Y - 0.4) ** 2 <= 0.04)


def adjoint_identity_errors(n: int, dt: float, draws: int = 10, seed: int = 0,
                            kind: ObservationKind = ObservationKind.EXCITATION) -> list[float]:
    """``|<G'd, r> - <d, G'* r>| / (||G'd|| ||r||)`` over random smooth pairs."""
    g = build_grid(n, n, 1.0, dt)
    gamma = GammaSpec.full()
    cache = forward(kind, disc_coefficient(g), make_exponential_input(g), gamma)
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(draws):
        d = smooth_random_field(g, rng)
        r = smooth_random_trace(g, gamma, rng)
        gd = frechet_apply(cache, d)
        lhs = l2_inner(gd, r)
        rhs = l2_inner(d, adjoint_apply(cache, r), g)
        errs.append(abs(lhs - rhs) / (gd.norm() * r.norm()))
    return errs


def taylor_ratio(kind, n: int = 33, dt: float = 0.02, eps: float = 0.1) -> float:
    """Ratio of the first-order Taylor remainders at ``eps`` and ``eps/2`` (4 for a correct derivative)."""
    g = build_grid(n, n, 1.0, dt)
    bc = make_exponential_input(g)
    X, Y = g.mesh()
    q = 1.0 + 0.5 * np.sin(math.pi * X) * np.sin(math.pi * Y)
    d = np.cos(math.pi * X) * np.exp(Y)
    base = forward(kind, q, bc, c_plus=None)
    gd = frechet_apply(base, d)

    def rem(e):
        return (forward(kind, q + e * d, bc, c_plus=None).trace - base.trace - e * gd).norm()

    return rem(eps) / rem(eps / 2)


def mms_exact(x1, x2, t):
    return np.exp((x1 + x2) / 2.0 - t)


MMS_MU = 1.5


def mms_error(n: int, dt: float, scheme: str = "backward_euler") -> float:
    """Max-norm error at ``T = 1`` for ``mu = 1.5`` and exact solution ``exp((x1+x2)/2 - t)``."""
    g = build_grid(n + 1, n + 1, 1.0, dt)
    bc = BoundaryInput(trace_from_function(g, GammaSpec.full(), mms_exact), "manufactured")
    X, Y = g.mesh()
    solver = ParabolicSolver(g, np.full(g.shape, MMS_MU), scheme=scheme)
    u = solver.run(mms_exact(X, Y, 0.0), bc.as_array())
    return float(np.abs(u[-1] - mms_exact(X, Y, g.T)).max())


def observed_orders(errors) -> list[float]:
    return [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]


def mms_spatial_study(ns=(16, 32, 64), dt: float = 1e-3, scheme: str = "crank_nicolson") -> dict:
    """Spatial order with the time error pushed below the spatial one.

    Backward Euler at ``dt = 1e-3`` leaves a time error of about 2e-5, larger
    than the spatial error at these meshes, so the spatial component is
    isolated with the second-order time scheme on the same step.
    """
    errs = [mms_error(n, dt, scheme) for n in ns]
    return {"h": [1.0 / n for n in ns], "errors": errs, "orders": observed_orders(errs)}


def mms_temporal_study(n: int = 128, dts=(0.04, 0.02, 0.01), scheme: str = "backward_euler") -> dict:
    errs = [mms_error(n, dt, scheme) for dt in dts]
    return {"dt": list(dts), "errors": errs, "orders": observed_orders(errs)}


def pdhg_closed_form_error(n: int = 17, seed: int = 0) -> float:
    """With ``beta2 = 0`` the minimizer is ``eta / (2 beta1)``; max deviation."""
    g = build_grid(n, n, 1.0, 0.5)
    eta = smooth_random_field(g, np.random.default_rng(seed))
    params = PenaltyParams(beta1=0.1, beta2=0.0)
    z = bregman_argmin(eta, g, params).z
    return float(np.abs(z - eta / (2 * params.beta1)).max())


def pdhg_step_case(n: int = 9):
    g = build_grid(n, n, 1.0, 0.5)
    X, Y = g.mesh()
    eta = 0.5 * (X < 0.5) + 0.3 * ((X - 0.4) ** 2 + (Y - 0.4) ** 2 < 0.04)
    return g, eta


def pdhg_oracle_error(n: int = 9) -> float:
    """Max deviation of PDHG from the projected-gradient dual oracle on a step function."""
    g, eta = pdhg_step_case(n)
    params = PenaltyParams(beta1=0.1, beta2=1.0, pdhg=PdhgSettings(max_iters=100_000, tol=1e-15))
    z = bregman_argmin(eta, g, params).z
    z_ref = argmin_projected_gradient(eta, g, PenaltyParams(beta1=0.1, beta2=1.0))
    return float(np.abs(z - z_ref).max())


def emission_consistency(n: int = 33, dt: float = 0.02) -> float:
    """Relative max difference between ``u_e + u_m`` and the direct combined solve."""
    from .phantoms import CASE_1B, make_phantom

    g = build_grid(n, n, 1.0, dt)
    bc = make_exponential_input(g)
    mu_a = make_phantom(CASE_1B["mu_a"], g)
    mu_f = make_phantom(CASE_1B["mu_f"], g)
    u_e = forward(ObservationKind.EXCITATION, mu_a + mu_f, bc).trajectory
    u_m = solve_emission(mu_a, mu_f, u_e, g)
    big_u = forward(ObservationKind.COMBINED, mu_a, bc).trajectory
    return float(np.abs(u_e + u_m - big_u).max() / np.abs(big_u).max())


def run_diagnostic(name: str) -> DiagnosticReport:
    t0 = time.perf_counter()
    if name == "adjoint-test":
        coarse = adjoint_identity_errors(33, 0.02)
        fine = adjoint_identity_errors(65, 0.01)
        m = {"max_error": max(coarse), "median": float(np.median(coarse)),
             "median_refined": float(np.median(fine))}
        m["reduction"] = m["median"] / m["median_refined"]
        ok = m["max_error"] <= 0.02 and m["reduction"] >= 1.5
    elif name == "taylor-test":
        m = {k.value: taylor_ratio(k) for k in ObservationKind}
        ok = all(3.5 <= v <= 4.5 for v in m.values())
    elif name == "mms-convergence":
        sp = mms_spatial_study()
        tm = mms_temporal_study()
        m = {"spatial_orders": sp["orders"], "temporal_orders": tm["orders"]}
        ok = all(1.7 <= o <= 2.3 for o in sp["orders"]) and all(0.8 <= o <= 1.2 for o in tm["orders"])
    elif name == "pdhg-oracle":
        m = {"closed_form": pdhg_closed_form_error(), "oracle": pdhg_oracle_error()}
        ok = m["closed_form"] <= 1e-10 and m["oracle"] <= 1e-6
    elif name == "emission-consistency":
        m = {"relative_difference": emission_consistency()}
        ok = m["relative_difference"] <= 1e-10
    else:
        raise ConfigurationError(f"unknown diagnostic {name!r}; choose from {DIAGNOSTICS}")
    return DiagnosticReport(name, bool(ok), m, time.perf_counter() - t0)


DIAGNOSTICS = ("adjoint-test", "taylor-test", "mms-convergence", "pdhg-oracle", "emission-consistency")
