"""Quadratic-plus-TV penalty and its linearly perturbed minimization.

``R(q) = beta1 * ||q||^2 + beta2 * TV(q)`` with the quadrature norm and the
isotropic forward-difference TV of :mod:`tdfdot.grid`. The subproblem

    z(eta) = argmin_z  R(z) - <eta, z>

is solved by a primal-dual hybrid gradient method. Everything below is
written for the objective divided by ``hx * hy``, so the quadratic part has
node weights ``omega`` in ``{1, 1/2, 1/4}`` and the dual variable lives in the
pointwise ball of radius ``beta2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import Grid2D, field_weights, forward_gradient, forward_gradient_adjoint, l2_inner, tv_seminorm


@dataclass(frozen=True)
class PdhgSettings:
    """Inner solver settings.

    ``sigma``/``tau_step`` default to ``1/(L*s)`` and ``s/L`` with
    ``L = sqrt(4/hx**2 + 4/hy**2)`` and ``s = step_ratio``; their product
    always satisfies ``sigma * tau * L**2 <= 1``. With ``accelerate`` the
    primal step shrinks and the extrapolation ``theta`` adapts to the strong
    convexity of the quadratic term; otherwise ``theta`` is fixed. The
    accelerated variant can stall when the optimal dual field lies on the
    ball boundary almost everywhere, so it is off by default.
    """

    max_iters: int = 500
    tol: float = 1e-8
    sigma: float | None = None
    tau_step: float | None = None
    theta: float = 1.0
    accelerate: bool = False
    step_ratio: float = 20.0
    check_every: int = 10


@dataclass(frozen=True)
class PenaltyParams:
    beta1: float = 0.1
    beta2: float = 1.0
    pdhg: PdhgSettings = field(default_factory=PdhgSettings)

    def __post_init__(self):
        if not self.beta1 > 0:
            raise ConfigurationError("beta1 must be positive (the subproblem needs strong convexity)")
        if self.beta2 < 0:
            raise ConfigurationError("beta2 must be non-negative")


@dataclass
class ArgminResult:
    z: np.ndarray
    dual: np.ndarray = field(repr=False)
    iterations: int
    gap: float
    converged: bool


def eval_penalty(q: np.ndarray, grid: Grid2D, params: PenaltyParams) -> float:
    return params.beta1 * l2_inner(q, q, grid) + params.beta2 * tv_seminorm(q, grid)


def gradient_norm_bound(grid: Grid2D) -> float:
    """Upper bound ``sqrt(8)/h`` on the norm of the forward-difference gradient."""
    return math.sqrt(4.0 / grid.hx**2 + 4.0 / grid.hy**2)


def _node_weights(grid: Grid2D) -> np.ndarray:
    return field_weights(grid) / (grid.hx * grid.hy)


def _project_ball(p: np.ndarray, radius: float) -> np.ndarray:
    if radius == 0.0:
        return np.zeros_like(p)
    mag = np.sqrt(p[0] ** 2 + p[1] ** 2)
    return p / np.maximum(1.0, mag / radius)[None]


def primal_objective(z, eta, grid, params) -> float:
    """Scaled objective ``(R(z) - <eta, z>) / (hx*hy)``."""
    w = _node_weights(grid)
    g = forward_gradient(z, grid)
    return float(np.sum(w * (params.beta1 * z * z - eta * z)) + params.beta2 * np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


def dual_objective(p, eta, grid, params) -> float:
    w = _node_weights(grid)
    r = w * eta - forward_gradient_adjoint(p, grid)
    return float(-np.sum(r * r / (4.0 * w * params.beta1)))


def primal_from_dual(p, eta, grid, params) -> np.ndarray:
    w = _node_weights(grid)
    return (w * eta - forward_gradient_adjoint(p, grid)) / (2.0 * w * params.beta1)


def bregman_argmin(eta: np.ndarray, grid: Grid2D, params: PenaltyParams,
                   z0: np.ndarray | None = None, dual0: np.ndarray | None = None) -> ArgminResult:
    """Minimize ``R(z) - <eta, z>`` by PDHG, optionally warm-started.

    Stops when the relative primal-dual gap drops below ``params.pdhg.tol`` or
    after ``max_iters``; the returned ``converged`` flag tells which.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != grid.shape:
        raise ConfigurationError("eta does not match grid")
    s = params.pdhg
    b1, b2 = params.beta1, params.beta2
    w = _node_weights(grid)
    L = gradient_norm_bound(grid)
    tau = s.tau_step if s.tau_step is not None else s.step_ratio / L
    sigma = s.sigma if s.sigma is not None else 1.0 / (L * L * tau)
    if sigma * tau * L * L > 1.0 + 1e-12:
        raise ConfigurationError("PDHG steps violate sigma*tau*||K||^2 <= 1")
    gamma = 2.0 * b1 * w.min()

    p = np.zeros((2,) + grid.shape) if dual0 is None else _project_ball(np.array(dual0, dtype=float), b2)
    # primal start consistent with the dual unless given
    z = primal_from_dual(p, eta, grid, params) if z0 is None else np.array(z0, dtype=float)
    z_bar = z.copy()

    def gap_of(z, p):
        P = primal_objective(z, eta, grid, params)
        D = dual_objective(p, eta, grid, params)
        return (P - D) / max(abs(P), abs(D), 1e-300), P - D

    rel, _ = gap_of(z, p)
    if rel <= s.tol:
        return ArgminResult(z, p, 0, rel, True)
    it = 0
    for it in range(1, s.max_iters + 1):
        p = _project_ball(p + sigma * forward_gradient(z_bar, grid), b2)
        v = z - tau * forward_gradient_adjoint(p, grid)
        z_new = (v + tau * w * eta) / (1.0 + 2.0 * tau * w * b1)
        if s.accelerate:
            theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
            tau *= theta
            sigma /= theta
        else:
            theta = s.theta
        z_bar = z_new + theta * (z_new - z)
        z = z_new
        if it % s.check_every == 0 or it == s.max_iters:
            rel, _ = gap_of(z, p)
            if rel <= s.tol:
                return ArgminResult(z, p, it, rel, True)
    return ArgminResult(z, p, it, rel, False)


def argmin_projected_gradient(eta: np.ndarray, grid: Grid2D, params: PenaltyParams,
                              max_iters: int = 200_000, tol: float = 1e-15) -> np.ndarray:
    """Slow reference solver: projected gradient ascent on the dual problem.

    The dual of ``min R(z) - <eta, z>`` is a smooth concave maximization over
    pointwise balls; plain projected steps of size ``1/Lipschitz`` are run until
    the primal recovery stops moving. Used to check :func:`bregman_argmin`.
    """
    w = _node_weights(grid)
    L = gradient_norm_bound(grid)
    step = 2.0 * params.beta1 * w.min() / (L * L)
    p = np.zeros((2,) + grid.shape)
    z = primal_from_dual(p, eta, grid, params)
    for _ in range(max_iters):
        p = _project_ball(p + step * forward_gradient(z, grid), params.beta2)
        z_new = primal_from_dual(p, eta, grid, params)
        if np.abs(z_new - z).max() <= tol * max(1.0, np.abs(z_new).max()):
            return z_new
        z = z_new
    return z


def subgradient_select(q: np.ndarray | None, grid: Grid2D, params: PenaltyParams,
                       rule: str = "zero") -> np.ndarray:
    """A subgradient of ``R`` at ``q`` as an L2 representative.

    ``rule="zero"`` returns the zero field, the subgradient at the minimizer
    ``q = 0`` of ``R``. ``rule="explicit"`` returns
    ``2*beta1*q + beta2 * K^T(grad q / |grad q|) / omega`` with the unit vector
    replaced by 0 where the gradient vanishes; ``bregman_argmin`` of it gives
    back ``q``.
    """
    if rule == "zero":
        return grid.zeros()
    if rule != "explicit":
        raise ConfigurationError(f"unknown subgradient rule {rule!r}")
    w = _node_weights(grid)
    q = np.asarray(q, dtype=float)
    g = forward_gradient(q, grid)
    mag = np.sqrt(g[0] ** 2 + g[1] ** 2)
    p = np.where(mag > 0, params.beta2 * g / np.where(mag > 0, mag, 1.0), 0.0)
    return 2.0 * params.beta1 * q + forward_gradient_adjoint(p, grid) / w
