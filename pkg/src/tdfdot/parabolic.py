"""Implicit finite-difference solver for ``(d/dt - D*Lap + mu) u = f`` with Dirichlet data.

One sparse LU factorization per coefficient is reused for every time step
(``mu`` does not depend on time). Backward-in-time problems
``(-d/dt - D*Lap + mu) phi = f`` with terminal data are solved by running the
same kernel on the time-reversed data.

Level 0 of a forward solve is the initial field taken as-is (including its
boundary nodes); Dirichlet data are imposed from level 1 on. This tolerates a
mismatch between the initial field and the boundary data at ``t = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError
from .grid import BoundaryTrace, Grid2D, laplacian_apply, scatter_boundary

log = logging.getLogger(__name__)

SCHEMES = {"backward_euler": 1.0, "crank_nicolson": 0.5}


@dataclass(frozen=True)
class ParabolicProblem:
    """Data for one linear parabolic solve.

    ``initial`` is the field at ``t=0`` for ``direction="forward"`` and at
    ``t=T`` for ``direction="backward"``. ``dirichlet`` may be a
    :class:`BoundaryTrace` (zero off its ``gamma``) or an ``(nt, nx, ny)``
    array whose boundary entries are read. Missing pieces are zero.
    """

    grid: Grid2D
    mu: np.ndarray
    initial: np.ndarray | None = None
    dirichlet: BoundaryTrace | np.ndarray | None = None
    source: np.ndarray | None = None
    direction: str = "forward"
    diffusion: float = 1.0
    scheme: str = "backward_euler"


def _interior_operator(grid: Grid2D, mu: np.ndarray, diffusion: float) -> sp.csc_matrix:
    """``-D*Lap_h + diag(mu)`` on interior nodes with homogeneous Dirichlet closure."""
    mx, my = grid.nx - 2, grid.ny - 2

    def second_diff(n, h):
        return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2

    lap = sp.kron(second_diff(mx, grid.hx), sp.identity(my)) + sp.kron(sp.identity(mx), second_diff(my, grid.hy))
    return (diffusion * lap + sp.diags(mu[1:-1, 1:-1].ravel())).tocsc()


class ParabolicSolver:
    """Factorized time stepper for a fixed grid, coefficient and scheme."""

    def __init__(self, grid: Grid2D, mu: np.ndarray, diffusion: float = 1.0,
                 scheme: str = "backward_euler"):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != grid.shape:
            raise ConfigurationError(f"coefficient shape {mu.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(mu)):
            raise NumericalError("coefficient contains non-finite values")
        if mu.min() < -1e-12:
            log.warning("negative reaction coefficient (min %.3g); admissible values are >= 0", mu.min())
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown time scheme {scheme!r}")
        if not diffusion > 0:
            raise ConfigurationError("diffusion constant must be positive")
        self.grid = grid
        self.mu = mu
        self.diffusion = float(diffusion)
        self.scheme = scheme
        self.theta = SCHEMES[scheme]
        self._A = _interior_operator(grid, mu, self.diffusion)
        n = self._A.shape[0]
        system = (sp.identity(n, format="csc") / grid.dt + self.theta * self._A).tocsc()
        try:
            self._lu = spla.splu(system)
        except RuntimeError as exc:  # singular factor
            raise NumericalError(f"factorization failed: {exc}") from exc
        self._system = system

    def _boundary_coupling(self, bnd: np.ndarray) -> np.ndarray:
        # Laplacian of a boundary-only field: neighbour contributions at interior nodes.
        return self.diffusion * laplacian_apply(bnd, self.grid)[..., 1:-1, 1:-1].reshape(bnd.shape[0], -1)

    def run(self, initial: np.ndarray | None = None, boundary: np.ndarray | None = None,
            source: np.ndarray | None = None) -> np.ndarray:
        """Step forward from level 0; arrays are ``(nt, nx, ny)`` (boundary entries of ``boundary`` used)."""
        g = self.grid
        nt, (nx, ny) = g.nt, g.shape
        u = np.zeros((nt, nx, ny))
        if initial is not None:
            u[0] = initial
        if boundary is not None:
            bnd = np.array(boundary, dtype=float, copy=True)
            if bnd.shape != u.shape:
                raise ConfigurationError(f"boundary data shape {bnd.shape} != {u.shape}")
            bnd[:, 1:-1, 1:-1] = 0.0
            u[1:, 0, :] = bnd[1:, 0, :]
            u[1:, -1, :] = bnd[1:, -1, :]
            u[1:, :, 0] = bnd[1:, :, 0]
            u[1:, :, -1] = bnd[1:, :, -1]
            coupling = self._boundary_coupling(bnd)
        else:
            coupling = None
        if source is not None:
            f = np.asarray(source, dtype=float)
            if f.shape != u.shape:
                raise ConfigurationError(f"source shape {f.shape} != {u.shape}")
            f = f[:, 1:-1, 1:-1].reshape(nt, -1)
        else:
            f = None

        theta = self.theta
        inv_dt = 1.0 / g.dt
        prev = u[0, 1:-1, 1:-1].ravel().copy()
        explicit = theta < 1.0
        for k in range(1, nt):
            rhs = prev * inv_dt
            if explicit:
                # (1 - theta) * (D*Lap - mu) u^{k-1} using the full previous level incl. boundary
                rhs = rhs - (1.0 - theta) * (self._A @ prev)
                if coupling is not None and k > 1:
                    rhs += (1.0 - theta) * coupling[k - 1]
                elif k == 1:
                    rhs += (1.0 - theta) * self._boundary_coupling(_boundary_only(u[0])[None])[0]
            if coupling is not None:
                rhs += theta * coupling[k]
            if f is not None:
                rhs += theta * f[k]
                if explicit:
                    rhs += (1.0 - theta) * f[k - 1]
            nxt = self._lu.solve(rhs)
            u[k, 1:-1, 1:-1] = nxt.reshape(nx - 2, ny - 2)
            prev = nxt
        if not np.all(np.isfinite(u)):
            raise NumericalError("parabolic solve produced non-finite values")
        return u

    def run_backward(self, terminal: np.ndarray | None = None, boundary: np.ndarray | None = None,
                     source: np.ndarray | None = None) -> np.ndarray:
        """Solve the adjoint-in-time problem with data at ``t=T`` via ``tau = T - t``."""
        rev = (lambda a: None if a is None else np.asarray(a)[::-1])
        return self.run(terminal, rev(boundary), rev(source))[::-1].copy()

    def residual_check(self, rhs: np.ndarray, x: np.ndarray) -> float:
        """Relative residual of one step's linear solve (diagnostic)."""
        r = self._system @ x - rhs
        return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))


def _boundary_only(field: np.ndarray) -> np.ndarray:
    out = np.array(field, dtype=float, copy=True)
    out[1:-1, 1:-1] = 0.0
    return out


def _as_boundary_array(grid: Grid2D, dirichlet) -> np.ndarray | None:
    if dirichlet is None:
        return None
    if isinstance(dirichlet, BoundaryTrace):
        if dirichlet.grid != grid:
            raise ConfigurationError("Dirichlet trace lives on a different grid")
        return scatter_boundary(dirichlet)
    return np.asarray(dirichlet, dtype=float)


def solve(problem: ParabolicProblem, solver: ParabolicSolver | None = None) -> np.ndarray:
    """Solve ``problem`` and return the ``(nt, nx, ny)`` trajectory.

    A prebuilt ``solver`` for the same grid/coefficient may be passed to skip
    the factorization.
    """
    grid = problem.grid
    if solver is None:
        solver = ParabolicSolver(grid, problem.mu, problem.diffusion, problem.scheme)
    elif solver.grid != grid:
        raise ConfigurationError("solver was built for a different grid")
    if problem.initial is not None and np.shape(problem.initial) != grid.shape:
        raise ConfigurationError("initial/terminal field does not match grid")
    bnd = _as_boundary_array(grid, problem.dirichlet)
    if problem.direction == "forward":
        return solver.run(problem.initial, bnd, problem.source)
    if problem.direction == "backward":
        return solver.run_backward(problem.initial, bnd, problem.source)
    raise ConfigurationError(f"unknown direction {problem.direction!r}")


def solve_backward_direct(solver: ParabolicSolver, terminal=None, boundary=None) -> np.ndarray:
    """Backward Euler stepping downward from ``t=T`` without reversing arrays."""
    if solver.theta != 1.0:
        raise ConfigurationError("direct backward stepping is implemented for backward Euler only")
    g = solver.grid
    nx, ny = g.shape
    phi = np.zeros((g.nt, nx, ny))
    if terminal is not None:
        phi[-1] = terminal
    coupling = None
    if boundary is not None:
        bnd = np.array(boundary, dtype=float, copy=True)
        bnd[:, 1:-1, 1:-1] = 0.0
        phi[:-1] += bnd[:-1]
        coupling = solver._boundary_coupling(bnd)
    nxt = phi[-1, 1:-1, 1:-1].ravel()
    for k in range(g.nt - 2, -1, -1):
        rhs = nxt / g.dt
        if coupling is not None:
            rhs = rhs + coupling[k]
        cur = solver._lu.solve(rhs)
        phi[k, 1:-1, 1:-1] = cur.reshape(nx - 2, ny - 2)
        nxt = cur
    return phi


def solve_backward_equivalence_check(grid: Grid2D, mu: np.ndarray, terminal=None, dirichlet=None,
                                     rtol: float = 1e-12) -> np.ndarray:
    """Backward solution computed by direct downward stepping and by time reversal.

    Raises ``NumericalError`` if the two disagree by more than ``rtol`` relative.
    """
    solver = ParabolicSolver(grid, mu)
    bnd = _as_boundary_array(grid, dirichlet)
    a = solver.run_backward(terminal, bnd)
    b = solve_backward_direct(solver, terminal, bnd)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    err = np.abs(a - b).max() / scale
    if err > rtol:
        raise NumericalError(f"backward solves disagree: relative difference {err:.3e}")
    return a
