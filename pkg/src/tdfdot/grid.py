"""Uniform space-time grid on a rectangle, discrete operators and quadrature.

Node values are stored as arrays of shape ``(nx, ny)`` indexed ``[i, j]`` with
``x1 = i * hx`` and ``x2 = j * hy``; flattening in C order gives the row-major
node order. Trajectories are ``(nt, nx, ny)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    nt: int
    dt: float
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(f"need at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if self.nt < 2:
            raise ConfigurationError(f"need at least 2 time levels, got {self.nt}")
        if not (self.dt > 0 and self.lx > 0 and self.ly > 0):
            raise ConfigurationError("dt, lx, ly must be positive")

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def T(self) -> float:
        return (self.nt - 1) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(nx, ny)`` arrays."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zeros_st(self) -> np.ndarray:
        return np.zeros((self.nt,) + self.shape)

    def refine(self, factor: int) -> "Grid2D":
        """Grid whose nodes contain this grid's nodes (space and time)."""
        if factor < 1 or int(factor) != factor:
            raise ConfigurationError(f"refinement factor must be a positive integer, got {factor}")
        factor = int(factor)
        return Grid2D(
            nx=(self.nx - 1) * factor + 1,
            ny=(self.ny - 1) * factor + 1,
            nt=(self.nt - 1) * factor + 1,
            dt=self.dt / factor,
            lx=self.lx,
            ly=self.ly,
        )


def build_grid(nx: int = 65, ny: int = 65, T: float = 1.0, dt: float = 0.01,
               lx: float = 1.0, ly: float = 1.0) -> Grid2D:
    """Build a grid on ``[0, lx] x [0, ly] x [0, T]``; ``dt`` must divide ``T``."""
    if nx < 3 or ny < 3:
        raise ConfigurationError(f"need at least 3 nodes per axis, got {nx}x{ny}")
    if not (T > 0 and dt > 0):
        raise ConfigurationError("T and dt must be positive")
    steps = round(T / dt)
    if steps < 1 or abs(steps * dt - T) > 1e-12 * T:
        raise ConfigurationError(f"dt={dt} does not divide T={T}")
    return Grid2D(nx=int(nx), ny=int(ny), nt=steps + 1, dt=T / steps, lx=lx, ly=ly)


# ---------------------------------------------------------------------------
# Boundary subsets


@dataclass(frozen=True)
class Edge:
    """Contiguous node range ``[start, stop)`` along one side.

    Left/right sides are indexed by ``j``, bottom/top by ``i``. ``stop=None``
    means the full side.
    """

    side: str
    start: int = 0
    stop: int | None = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigurationError(f"unknown side {self.side!r}")

    def bounds(self, grid: Grid2D) -> tuple[int, int]:
        n = grid.ny if self.side in ("left", "right") else grid.nx
        stop = n if self.stop is None else self.stop
        if not (0 <= self.start < stop <= n):
            raise ConfigurationError(f"edge range [{self.start}, {stop}) outside side of {n} nodes")
        return self.start, stop


@dataclass(frozen=True)
class GammaSpec:
    """A subset of the boundary as a union of edges.

    Corner nodes shared by two included sides appear once per side, each with
    that side's outward normal.
    """

    edges: tuple[Edge, ...]

    def __post_init__(self):
        if not self.edges:
            raise ConfigurationError("GammaSpec needs at least one edge")

    @classmethod
    def full(cls) -> "GammaSpec":
        return cls(tuple(Edge(s) for s in SIDES))

    @classmethod
    def parse(cls, text: str) -> "GammaSpec":
        """Parse ``"all"`` or ``"left"``, ``"top:3:10"``, comma-separated."""
        text = text.strip()
        if text in ("all", "full", ""):
            return cls.full()
        edges = []
        for part in text.split(","):
            bits = part.strip().split(":")
            start = int(bits[1]) if len(bits) > 1 else 0
            stop = int(bits[2]) if len(bits) > 2 else None
            edges.append(Edge(bits[0], start, stop))
        return cls(tuple(edges))

    def to_text(self) -> str:
        return ",".join(
            e.side if (e.start == 0 and e.stop is None) else f"{e.side}:{e.start}:{e.stop}"
            for e in self.edges
        )

    def validate(self, grid: Grid2D) -> None:
        for e in self.edges:
            e.bounds(grid)

    def size(self, grid: Grid2D) -> int:
        return sum(b - a for a, b in (e.bounds(grid) for e in self.edges))

    def nodes(self, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
        """``(i, j)`` index arrays of the boundary nodes, edge by edge."""
        ii, jj = [], []
        for e in self.edges:
            a, b = e.bounds(grid)
            r = np.arange(a, b)
            if e.side == "left":
                ii.append(np.zeros_like(r)); jj.append(r)
            elif e.side == "right":
                ii.append(np.full_like(r, grid.nx - 1)); jj.append(r)
            elif e.side == "bottom":
                ii.append(r); jj.append(np.zeros_like(r))
            else:
                ii.append(r); jj.append(np.full_like(r, grid.ny - 1))
        return np.concatenate(ii), np.concatenate(jj)

    def weights(self, grid: Grid2D) -> np.ndarray:
        """Trapezoidal arc-length weights, halved at each edge's end nodes."""
        out = []
        for e in self.edges:
            a, b = e.bounds(grid)
            h = grid.hy if e.side in ("left", "right") else grid.hx
            w = np.full(b - a, h)
            w[0] *= 0.5
            w[-1] *= 0.5
            if b - a == 1:
                w[:] = 0.0
            out.append(w)
        return np.concatenate(out)


@dataclass(frozen=True)
class BoundaryTrace:
    """Values on ``gamma`` at every time level, shape ``(nt, n_gamma)``."""

    grid: Grid2D
    gamma: GammaSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.grid.nt, self.gamma.size(self.grid))
        if self.values.shape != expected:
            raise ConfigurationError(f"trace shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trace contains non-finite values")

    def with_values(self, values: np.ndarray) -> "BoundaryTrace":
        return BoundaryTrace(self.grid, self.gamma, np.asarray(values, dtype=float))

    def __add__(self, other: "BoundaryTrace") -> "BoundaryTrace":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "BoundaryTrace") -> "BoundaryTrace":
        return self.with_values(self.values - other.values)

    def __mul__(self, s: float) -> "BoundaryTrace":
        return self.with_values(self.values * s)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.sqrt(max(l2_inner(self, self), 0.0))


def restrict_trace(trace: BoundaryTrace, gamma: GammaSpec) -> BoundaryTrace:
    """Re-sample a full-boundary trace on a sub-boundary (by node lookup)."""
    grid = trace.grid
    full = scatter_boundary(trace)
    i, j = gamma.nodes(grid)
    return BoundaryTrace(grid, gamma, full[:, i, j])


def trace_from_function(grid: Grid2D, gamma: GammaSpec, fn) -> BoundaryTrace:
    """Sample ``fn(x1, x2, t)`` at the ``gamma`` nodes on every time level."""
    i, j = gamma.nodes(grid)
    x1 = grid.x1[i][None, :]
    x2 = grid.x2[j][None, :]
    t = grid.t[:, None]
    return BoundaryTrace(grid, gamma, np.broadcast_to(fn(x1, x2, t), (grid.nt, i.size)).astype(float))


def scatter_boundary(trace: BoundaryTrace) -> np.ndarray:
    """Embed a trace into an ``(nt, nx, ny)`` array, zero off ``gamma``.

    Duplicate corner entries are resolved by the later edge in ``gamma``.
    """
    grid = trace.grid
    out = grid.zeros_st()
    i, j = trace.gamma.nodes(grid)
    out[:, i, j] = trace.values
    return out


# ---------------------------------------------------------------------------
# Discrete operators


def laplacian_apply(u: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Five-point Laplacian at interior nodes, zero on the boundary rows.

    Works on a single field ``(nx, ny)`` or a stack ``(..., nx, ny)``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-2:] != grid.shape:
        raise ConfigurationError(f"field shape {u.shape} does not match grid {grid.shape}")
    out = np.zeros_like(u)
    c = u[..., 1:-1, 1:-1]
    out[..., 1:-1, 1:-1] = (
        (u[..., 2:, 1:-1] - 2.0 * c + u[..., :-2, 1:-1]) / grid.hx**2
        + (u[..., 1:-1, 2:] - 2.0 * c + u[..., 1:-1, :-2]) / grid.hy**2
    )
    return out


def _normal_stencil(grid: Grid2D, gamma: GammaSpec):
    """Per-node (inward offsets, spacing) used by the one-sided flux."""
    di, dj, hs = [], [], []
    for e in gamma.edges:
        a, b = e.bounds(grid)
        n = b - a
        if e.side in ("left", "right"):
            if grid.nx < 3:
                raise ConfigurationError("flux stencil needs 3 nodes along the normal")
            di.append(np.full(n, 1 if e.side == "left" else -1)); dj.append(np.zeros(n, int))
            hs.append(np.full(n, grid.hx))
        else:
            if grid.ny < 3:
                raise ConfigurationError("flux stencil needs 3 nodes along the normal")
            di.append(np.zeros(n, int)); dj.append(np.full(n, 1 if e.side == "bottom" else -1))
            hs.append(np.full(n, grid.hy))
    return np.concatenate(di), np.concatenate(dj), np.concatenate(hs)


def boundary_flux(u: np.ndarray, grid: Grid2D, gamma: GammaSpec) -> BoundaryTrace:
    """Outward normal derivative on ``gamma``: ``(3u0 - 4u1 + u2) / (2h)``.

    ``u`` is a trajectory ``(nt, nx, ny)``; ``u1``/``u2`` are the first and
    second nodes inward along the normal.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.nt,) + grid.shape:
        raise ConfigurationError(f"trajectory shape {u.shape} does not match grid")
    i, j = gamma.nodes(grid)
    di, dj, h = _normal_stencil(grid, gamma)
    vals = (3.0 * u[:, i, j] - 4.0 * u[:, i + di, j + dj] + u[:, i + 2 * di, j + 2 * dj]) / (2.0 * h)
    return BoundaryTrace(grid, gamma, vals)


def forward_gradient(q: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Forward differences with zero difference on the last row/column.

    Returns shape ``(2, nx, ny)``.
    """
    g = np.zeros((2,) + q.shape)
    g[0, :-1, :] = (q[1:, :] - q[:-1, :]) / grid.hx
    g[1, :, :-1] = (q[:, 1:] - q[:, :-1]) / grid.hy
    return g


def forward_gradient_adjoint(p: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Euclidean transpose of :func:`forward_gradient` (minus a divergence)."""
    out = np.zeros(p.shape[1:])
    px = p[0, :-1, :] / grid.hx
    out[:-1, :] -= px
    out[1:, :] += px
    py = p[1, :, :-1] / grid.hy
    out[:, :-1] -= py
    out[:, 1:] += py
    return out


def tv_seminorm(q: np.ndarray, grid: Grid2D) -> float:
    """Isotropic discrete total variation ``sum hx*hy*|grad q|``."""
    g = forward_gradient(np.asarray(q, dtype=float), grid)
    return float(grid.hx * grid.hy * np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


# ---------------------------------------------------------------------------
# Quadrature


def trapezoid_weights_1d(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def field_weights(grid: Grid2D) -> np.ndarray:
    """Tensor trapezoidal weights, summing to the domain area."""
    return np.outer(trapezoid_weights_1d(grid.nx, grid.hx), trapezoid_weights_1d(grid.ny, grid.hy))


def time_weights(grid: Grid2D) -> np.ndarray:
    return trapezoid_weights_1d(grid.nt, grid.dt)


def trace_weights(grid: Grid2D, gamma: GammaSpec) -> np.ndarray:
    return np.outer(time_weights(grid), gamma.weights(grid))


def l2_inner(a, b, grid: Grid2D | None = None) -> float:
    """Quadrature inner product of two fields or two boundary traces."""
    if isinstance(a, BoundaryTrace) or isinstance(b, BoundaryTrace):
        if not (isinstance(a, BoundaryTrace) and isinstance(b, BoundaryTrace)):
            raise ConfigurationError("cannot pair a trace with a field")
        if a.values.shape != b.values.shape or a.gamma != b.gamma:
            raise ConfigurationError("trace shapes differ")
        return float(np.sum(trace_weights(a.grid, a.gamma) * a.values * b.values))
    if grid is None:
        raise ConfigurationError("l2_inner on fields needs the grid")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise ConfigurationError(f"field shapes {a.shape}, {b.shape} do not match grid {grid.shape}")
    return float(np.sum(field_weights(grid) * a * b))


def l2_norm(a: np.ndarray, grid: Grid2D) -> float:
    return math.sqrt(max(l2_inner(a, a, grid), 0.0))


# ---------------------------------------------------------------------------
# CSV serialization


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_header(line: str) -> list[float]:
    if not line.startswith("#"):
        raise ConfigurationError("missing '# nx,ny,...' header line")
    return [float(v) for v in line[1:].split(",")]


def write_field_csv(path, q: np.ndarray, grid: Grid2D) -> None:
    q = np.asarray(q, dtype=float)
    if q.shape != grid.shape:
        raise ConfigurationError("field does not match grid")
    lines = [f"# {grid.nx},{grid.ny},{_fmt(grid.hx)},{_fmt(grid.hy)}"]
    lines += [",".join(_fmt(v) for v in row) for row in q]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> tuple[np.ndarray, tuple[int, int, float, float]]:
    """Return the field and its header ``(nx, ny, hx, hy)``."""
    text = Path(path).read_text().splitlines()
    nx, ny, hx, hy = _parse_header(text[0])
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line.strip()])
    if data.shape != (int(nx), int(ny)):
        raise ConfigurationError(f"{path}: expected {int(nx)}x{int(ny)} values, got {data.shape}")
    return data, (int(nx), int(ny), hx, hy)


def write_trace_csv(path, trace: BoundaryTrace) -> None:
    g = trace.grid
    lines = [
        f"# {g.nx},{g.ny},{g.nt},{_fmt(g.hx)},{_fmt(g.hy)},{_fmt(g.dt)}",
        f"# gamma={trace.gamma.to_text()}",
    ]
    lines += [",".join(_fmt(v) for v in row) for row in trace.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path, grid: Grid2D | None = None) -> BoundaryTrace:
    text = Path(path).read_text().splitlines()
    nx, ny, nt, hx, hy, dt = _parse_header(text[0])
    gamma = GammaSpec.full()
    body = text[1:]
    if body and body[0].startswith("# gamma="):
        gamma = GammaSpec.parse(body[0].split("=", 1)[1])
        body = body[1:]
    file_grid = Grid2D(nx=int(nx), ny=int(ny), nt=int(nt), dt=dt,
                       lx=hx * (int(nx) - 1), ly=hy * (int(ny) - 1))
    if grid is not None:
        if (grid.nx, grid.ny, grid.nt) != (file_grid.nx, file_grid.ny, file_grid.nt) or not (
            math.isclose(grid.dt, dt, rel_tol=1e-9)
        ):
            raise ConfigurationError(f"{path}: trace grid does not match the configured grid")
        file_grid = grid
    data = np.array([[float(v) for v in line.split(",")] for line in body if line.strip()])
    return BoundaryTrace(file_grid, gamma, data.reshape(file_grid.nt, -1))


def write_trajectory_csv(path, u: np.ndarray, grid: Grid2D, per_level: bool = False) -> list[Path]:
    """Write a trajectory either as one CSV with a time-index column or one CSV per level.

    In single-file mode each line is ``k,v_0,...,v_{ny-1}`` (the ``nx`` rows
    of level ``k`` in order). In per-level mode ``path`` is a directory.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.nt,) + grid.shape:
        raise ConfigurationError("trajectory does not match grid")
    path = Path(path)
    if per_level:
        path.mkdir(parents=True, exist_ok=True)
        out = []
        for k in range(grid.nt):
            p = path / f"level_{k:05d}.csv"
            write_field_csv(p, u[k], grid)
            out.append(p)
        return out
    lines = [f"# {grid.nx},{grid.ny},{grid.nt},{_fmt(grid.hx)},{_fmt(grid.hy)},{_fmt(grid.dt)}"]
    for k in range(grid.nt):
        lines += [f"{k}," + ",".join(_fmt(v) for v in row) for row in u[k]]
    path.write_text("\n".join(lines) + "\n")
    return [path]


def read_trajectory_csv(path) -> np.ndarray:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("level_*.csv"))
        return np.stack([read_field_csv(f)[0] for f in files])
    text = path.read_text().splitlines()
    nx, ny, nt, *_ = _parse_header(text[0])
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line.strip()]
    data = np.array(rows)
    return data[:, 1:].reshape(int(nt), int(nx), int(ny))

