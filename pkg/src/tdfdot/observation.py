"""Coefficient-to-flux observation maps, their derivatives and adjoints.

Both maps send an absorption coefficient ``q`` to the outward flux on ``gamma``
of the solution of ``(d/dt - Lap + q) u = 0`` with zero initial state and a
Dirichlet input ``g``:

* ``EXCITATION``: ``q`` is the mixture absorption ``mu_a + mu_f`` and ``u`` the
  excitation field;
* ``COMBINED``: ``q`` is the background absorption ``mu_a`` and ``u`` the sum of
  excitation and emission fields, which satisfies the same equation.

The derivative in direction ``d`` is the flux of ``w`` solving
``(d/dt - Lap + q) w = -d u`` with zero data. The adjoint applied to a trace
``gamma`` solves ``(-d/dt - Lap + q) phi = 0`` backward from ``phi(T) = 0`` with
``phi = gamma`` on the observed boundary (zero elsewhere) and returns
``ADJOINT_SIGN * int_0^T u phi dt``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import (
    BoundaryTrace,
    GammaSpec,
    Grid2D,
    boundary_flux,
    read_trace_csv,
    restrict_trace,
    scatter_boundary,
    time_weights,
    trace_from_function,
)
from .parabolic import ParabolicSolver

log = logging.getLogger(__name__)

# Green's formula gives <G'(q)d, gamma> = +int d * int u phi dt; checked numerically in
# tests/test_observation.py. With the opposite sign the identity fails.
ADJOINT_SIGN = 1.0


class ObservationKind(enum.Enum):
    EXCITATION = "excitation"
    COMBINED = "combined"


@dataclass(frozen=True)
class BoundaryInput:
    """Dirichlet input on the whole boundary at every time level."""

    trace: BoundaryTrace
    provenance: str = "custom"

    @property
    def grid(self) -> Grid2D:
        return self.trace.grid

    def as_array(self) -> np.ndarray:
        return scatter_boundary(self.trace)


def make_exponential_input(grid: Grid2D) -> BoundaryInput:
    """``g(x, t) = exp((x1 + x2)/2 - t)`` on all four sides."""
    tr = trace_from_function(grid, GammaSpec.full(), lambda x1, x2, t: np.exp((x1 + x2) / 2.0 - t))
    return BoundaryInput(tr, "exponential")


def smooth_ramp(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``, built from ``exp(-1/s)``."""
    s = np.asarray(s, dtype=float)

    def bump(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    a = bump(s)
    b = bump(1.0 - s)
    return a / (a + b)


def ramp_profile(t: np.ndarray, start: float, end: float) -> np.ndarray:
    """Time profile that is 0 on ``[0, start]`` and 1 on ``[end, inf)``."""
    return smooth_ramp((np.asarray(t, dtype=float) - start) / (end - start))


def smootherstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (s * (6.0 * s - 15.0) + 10.0)


def default_edge_profile(k: int, perimeter: float) -> Callable:
    """Trigonometric profile along the boundary arc length, ``|eta_k| <= 1``."""
    m = k // 2

    def eta(ell):
        if k % 2 == 1:
            return np.cos(2.0 * math.pi * m * ell / perimeter)
        return np.sin(2.0 * math.pi * m * ell / perimeter)

    return eta


def boundary_arclength(grid: Grid2D, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Counter-clockwise arc length from the origin for boundary points."""
    lx, ly = grid.lx, grid.ly
    tol = 1e-12
    ell = np.empty_like(x1, dtype=float)
    bottom = np.abs(x2) < tol
    right = (np.abs(x1 - lx) < tol) & ~bottom
    top = (np.abs(x2 - ly) < tol) & ~right & ~bottom
    left = ~(bottom | right | top)
    ell[bottom] = x1[bottom]
    ell[right] = lx + x2[right]
    ell[top] = lx + ly + (lx - x1[top])
    ell[left] = 2 * lx + ly + (ly - x2[left])
    return ell


def cutoff_on(grid: Grid2D, gamma_in: GammaSpec, taper: float) -> np.ndarray:
    """Cutoff ``chi`` on the whole boundary as an ``(nx, ny)`` array.

    ``chi`` is 1 on ``gamma_in`` away from its free ends, 0 off ``gamma_in``, with
    a polynomial taper of arc length ``taper`` at each free edge end.
    """
    chi = grid.zeros()
    full_sides = {e.side for e in gamma_in.edges if e.bounds(grid) == (0, grid.ny if e.side in ("left", "right") else grid.nx)}
    for e in gamma_in.edges:
        a, b = e.bounds(grid)
        n_side = grid.ny if e.side in ("left", "right") else grid.nx
        h = grid.hy if e.side in ("left", "right") else grid.hx
        pos = np.arange(a, b)
        w = np.ones(b - a)
        if taper > 0:
            # a range end is free unless it sits on a corner continued by another full side
            if not (a == 0 and _continues(e.side, 0, full_sides)):
                w = np.minimum(w, smootherstep((pos - a) * h / taper))
            if not (b == n_side and _continues(e.side, 1, full_sides)):
                w = np.minimum(w, smootherstep((b - 1 - pos) * h / taper))
        if e.side == "left":
            chi[0, a:b] = np.maximum(chi[0, a:b], w)
        elif e.side == "right":
            chi[-1, a:b] = np.maximum(chi[-1, a:b], w)
        elif e.side == "bottom":
            chi[a:b, 0] = np.maximum(chi[a:b, 0], w)
        else:
            chi[a:b, -1] = np.maximum(chi[a:b, -1], w)
    return chi


def _continues(side: str, end: int, full_sides: set) -> bool:
    # which sides meet `side` at its low (0) / high (1) end
    meets = {
        "left": ("bottom", "top"),
        "right": ("bottom", "top"),
        "bottom": ("left", "right"),
        "top": ("left", "right"),
    }
    return meets[side][end] in full_sides


def make_ramp_input(
    grid: Grid2D,
    knots: Sequence[float],
    coefficients: Sequence[float] | None = None,
    profiles: Sequence[Callable] | None = None,
    gamma_in: GammaSpec | None = None,
    taper: float = 0.1,
) -> BoundaryInput:
    """Finite sum ``chi(x) * sum_k c_k psi_k(t) eta_k(x)`` over ``k = 1..K``.

    ``knots`` are ``t_0 = 0 < t_1 < ... < t_{2K}`` (length ``2K + 1``); ``psi_k``
    ramps smoothly from 0 at ``t_{2k-2}`` to 1 at ``t_{2k-1}``. Default
    coefficients are ``exp(-k**2)``. ``profiles[k-1]`` maps boundary arc length
    to ``eta_k``.
    """
    knots = np.asarray(knots, dtype=float)
    if knots.size < 3 or knots.size % 2 == 0:
        raise ConfigurationError("need 2K+1 knots with K >= 1")
    if knots[0] != 0.0 or np.any(np.diff(knots) <= 0):
        raise ConfigurationError("knots must start at 0 and increase strictly")
    K = (knots.size - 1) // 2
    if coefficients is None:
        coefficients = [math.exp(-(k**2)) for k in range(1, K + 1)]
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.size != K or np.any(coefficients <= 0):
        raise ConfigurationError(f"need {K} positive coefficients")
    perimeter = 2 * (grid.lx + grid.ly)
    if profiles is None:
        profiles = [default_edge_profile(k, perimeter) for k in range(1, K + 1)]
    if len(profiles) != K:
        raise ConfigurationError(f"need {K} edge profiles")
    gamma_in = gamma_in or GammaSpec.full()

    full = GammaSpec.full()
    i, j = full.nodes(grid)
    x1, x2 = grid.x1[i], grid.x2[j]
    ell = boundary_arclength(grid, x1, x2)
    chi = cutoff_on(grid, gamma_in, taper)[i, j]
    values = np.zeros((grid.nt, i.size))
    for k in range(1, K + 1):
        psi = ramp_profile(grid.t, knots[2 * k - 2], knots[2 * k - 1])
        eta = np.broadcast_to(np.asarray(profiles[k - 1](ell), dtype=float), ell.shape)
        values += coefficients[k - 1] * psi[:, None] * eta[None, :]
    values *= chi[None, :]
    return BoundaryInput(BoundaryTrace(grid, full, values), "ramp-series")


def load_input(path, grid: Grid2D) -> BoundaryInput:
    """Read a custom full-boundary Dirichlet trace from CSV."""
    tr = read_trace_csv(path, grid)
    if tr.gamma != GammaSpec.full():
        tr = BoundaryTrace(grid, GammaSpec.full(), restrict_trace(tr, GammaSpec.full()).values)
    return BoundaryInput(tr, "custom")


@dataclass
class ForwardCache:
    """Primal solve at a coefficient, reused by derivative and adjoint."""

    kind: ObservationKind
    q: np.ndarray
    trajectory: np.ndarray = field(repr=False)
    trace: BoundaryTrace = field(repr=False)
    solver: ParabolicSolver = field(repr=False)
    gamma: GammaSpec
    clamped_nodes: int = 0

    @property
    def grid(self) -> Grid2D:
        return self.trace.grid


def clamp_admissible(q: np.ndarray, c_plus: float | None) -> tuple[np.ndarray, int]:
    """Clip into ``[0, c_plus]``; returns the clipped field and the number of changed nodes."""
    q = np.asarray(q, dtype=float)
    upper = np.inf if c_plus is None else c_plus
    out = np.clip(q, 0.0, upper)
    return out, int(np.count_nonzero(out != q))


def forward(kind: ObservationKind, q: np.ndarray, bc: BoundaryInput, gamma: GammaSpec | None = None,
            c_plus: float | None = 10.0, diffusion: float = 1.0,
            scheme: str = "backward_euler", initial: np.ndarray | None = None) -> ForwardCache:
    """Evaluate the observation map at ``q`` (clipped to the admissible box).

    ``initial`` replaces the zero initial state (used by manufactured-solution checks).
    """
    kind = ObservationKind(kind)
    grid = bc.grid
    gamma = gamma or GammaSpec.full()
    gamma.validate(grid)
    qc, hits = clamp_admissible(q, c_plus)
    if hits:
        log.debug("forward: clipped %d nodes into [0, %s]", hits, c_plus)
    solver = ParabolicSolver(grid, qc, diffusion, scheme)
    u = solver.run(initial, bc.as_array())
    return ForwardCache(kind, qc, u, boundary_flux(u, grid, gamma), solver, gamma, hits)


def solve_emission(mu_a: np.ndarray, mu_f: np.ndarray, u_e: np.ndarray, grid: Grid2D,
                   diffusion: float = 1.0, scheme: str = "backward_euler") -> np.ndarray:
    """Emission field: ``(d/dt - Lap + mu_a) u_m = mu_f u_e`` with zero data."""
    solver = ParabolicSolver(grid, mu_a, diffusion, scheme)
    return solver.run(None, None, np.asarray(mu_f)[None] * u_e)


def frechet_apply(cache: ForwardCache, direction: np.ndarray) -> BoundaryTrace:
    """Derivative of the observation map at ``cache.q`` applied to ``direction``."""
    d = np.asarray(direction, dtype=float)
    if d.shape != cache.grid.shape:
        raise ConfigurationError("direction does not match grid")
    w = cache.solver.run(None, None, -d[None] * cache.trajectory)
    return boundary_flux(w, cache.grid, cache.gamma)


def adjoint_state(cache: ForwardCache, residual: BoundaryTrace) -> np.ndarray:
    """Backward solution with the residual as Dirichlet data on ``gamma``."""
    if residual.gamma != cache.gamma or residual.grid != cache.grid:
        raise ConfigurationError("residual must live on the cache's grid and gamma")
    return cache.solver.run_backward(None, scatter_boundary(residual))


def adjoint_apply(cache: ForwardCache, residual: BoundaryTrace) -> np.ndarray:
    """Adjoint of the derivative at ``cache.q`` applied to a boundary trace."""
    phi = adjoint_state(cache, residual)
    tw = time_weights(cache.grid)
    return ADJOINT_SIGN * np.tensordot(tw, cache.trajectory * phi, axes=1)
