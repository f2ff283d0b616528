"""Piecewise-constant disc phantoms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import Grid2D


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    radius: float
    value: float

    def mirrored_x(self, lx: float = 1.0) -> "Disc":
        return Disc(lx - self.cx, self.cy, self.radius, self.value)


@dataclass(frozen=True)
class PhantomSpec:
    """Background value plus disc inclusions with clearance constraints.

    ``d1`` is the minimum distance from any disc to the boundary, ``d2`` the
    minimum distance between two discs.
    """

    background: float = 0.0
    discs: tuple[Disc, ...] = field(default_factory=tuple)
    d1: float = 0.0
    d2: float = 0.0

    def validate(self, lx: float = 1.0, ly: float = 1.0) -> None:
        for d in self.discs:
            if not d.radius > 0:
                raise ConfigurationError(f"disc radius must be positive: {d}")
            gap = min(d.cx - d.radius, lx - d.cx - d.radius, d.cy - d.radius, ly - d.cy - d.radius)
            if not gap > self.d1:
                raise ConfigurationError(f"disc {d} is within {self.d1} of the boundary")
        for a_i, a in enumerate(self.discs):
            for b in self.discs[a_i + 1:]:
                dist = math.hypot(a.cx - b.cx, a.cy - b.cy) - a.radius - b.radius
                if not dist > self.d2:
                    raise ConfigurationError(f"discs {a} and {b} are closer than {self.d2}")

    def mirrored_x(self, lx: float = 1.0) -> "PhantomSpec":
        return PhantomSpec(self.background, tuple(d.mirrored_x(lx) for d in self.discs), self.d1, self.d2)

    @classmethod
    def parse(cls, background: float, discs: str, d1: float = 0.0, d2: float = 0.0) -> "PhantomSpec":
        """Discs as ``"cx,cy,r,value; cx,cy,r,value"`` (empty for none)."""
        out = []
        for part in discs.split(";"):
            part = part.strip()
            if not part:
                continue
            vals = [float(v) for v in part.split(",")]
            if len(vals) != 4:
                raise ConfigurationError(f"disc needs cx,cy,r,value: {part!r}")
            out.append(Disc(*vals))
        return cls(float(background), tuple(out), d1, d2)

    def to_text(self) -> str:
        return "; ".join(f"{d.cx},{d.cy},{d.radius},{d.value}" for d in self.discs)


def make_phantom(spec: PhantomSpec, grid: Grid2D) -> np.ndarray:
    """Nodewise evaluation: disc value at nodes inside a disc (boundary included), background elsewhere."""
    spec.validate(grid.lx, grid.ly)
    X, Y = grid.mesh()
    q = np.full(grid.shape, float(spec.background))
    for d in spec.discs:
        # relative slack keeps nodes lying exactly on a circle inside despite rounding
        inside = (X - d.cx) ** 2 + (Y - d.cy) ** 2 <= d.radius**2 * (1.0 + 1e-12)
        q[inside] = d.value
    return q


CASE_1A = {
    "mu_a": PhantomSpec(1.0),
    "mu_f": PhantomSpec(0.0, (Disc(0.4, 0.4, 0.2, 2.0),)),
}
CASE_1B = {
    "mu_a": PhantomSpec(1.0, (Disc(0.3, 0.3, 0.15, 2.0),)),
    "mu_f": PhantomSpec(0.0, (Disc(0.7, 0.7, 0.15, 2.0),)),
}
