"""Flat geometry on the two-torus T^2 = R^2/Z^2 and on the cylinder.

Points are plain float64 arrays of shape (2,) or batches of shape (n, 2).
Torus points are kept canonical: both coordinates in [0, 1).  The cylinder
(used by the forced pendulum) wraps the first coordinate only.
"""

from __future__ import annotations

import numpy as np

TORUS_DIAMETER = np.sqrt(2.0) / 2.0


def as_point(p) -> np.ndarray:
    """Coerce to a float64 array of shape (2,) or (n, 2)."""
    a = np.asarray(p, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError(f"expected 2d point(s), got shape {a.shape}")
    return a


def wrap(p) -> np.ndarray:
    """Canonical torus representative, both coordinates in [0, 1)."""
    return np.mod(as_point(p), 1.0)


def wrap_cylinder(p) -> np.ndarray:
    """Canonical cylinder representative: first coordinate in [0, 1)."""
    a = as_point(p).copy()
    a[..., 0] = np.mod(a[..., 0], 1.0)
    return a


def displacement(p, q) -> np.ndarray:
    """Shortest representative of q - p on the torus, in [-1/2, 1/2)^2.

    Minimizes the Euclidean norm over integer translates coordinate-wise,
    which is exact because the squared distance separates.
    """
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return np.mod(d + 0.5, 1.0) - 0.5


def torus_distance(p, q) -> float | np.ndarray:
    """Distance on the flat torus: min over integer translates of |q - p|."""
    d = displacement(p, q)
    return np.sqrt(np.sum(d * d, axis=-1))


def cylinder_displacement(p, q) -> np.ndarray:
    """Shortest representative of q - p on the cylinder (wrap x only)."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    d = np.array(d, dtype=float, copy=True)
    d[..., 0] = np.mod(d[..., 0] + 0.5, 1.0) - 0.5
    return d


def cylinder_distance(p, q) -> float | np.ndarray:
    d = cylinder_displacement(p, q)
    return np.sqrt(np.sum(d * d, axis=-1))


class ChartDomainError(ValueError):
    """Point outside the domain of a local chart."""


class Chart:
    """Affine chart around a torus base point: u = shortest displacement.

    Valid on the open metric ball of the given radius around the base
    point; the radius must stay below 1/4 so the inverse is single valued.
    Round trips are exact up to one wrap.
    """

    def __init__(self, base, radius: float, surface: str = "torus"):
        if not radius < 0.25:
            raise ChartDomainError(f"chart radius {radius} must be < 1/4")
        if radius <= 0:
            raise ChartDomainError("chart radius must be positive")
        self.base = wrap(base) if surface == "torus" else wrap_cylinder(base)
        self.radius = float(radius)
        self.surface = surface

    def _disp(self, p):
        if self.surface == "torus":
            return displacement(self.base, p)
        return cylinder_displacement(self.base, p)

    def contains(self, p) -> bool | np.ndarray:
        d = self._disp(p)
        return np.sum(d * d, axis=-1) <= self.radius * self.radius

    def to_chart(self, p) -> np.ndarray:
        """Chart coordinates of a surface point; raises outside the domain."""
        u = self._disp(p)
        if not np.all(np.sum(u * u, axis=-1) <= self.radius * self.radius):
            raise ChartDomainError("point outside chart domain")
        return u

    def from_chart(self, u) -> np.ndarray:
        p = self.base + np.asarray(u, dtype=float)
        return wrap(p) if self.surface == "torus" else wrap_cylinder(p)

    # world-space geometry of chart-space disks, used by support audits
    def world_center(self, u) -> np.ndarray:
        return self.from_chart(u)

    def world_radius(self, r: float) -> float:
        return float(r)

    def to_json(self) -> dict:
        return {
            "kind": "translation",
            "base": [float(self.base[0]), float(self.base[1])],
            "radius": self.radius,
            "surface": self.surface,
        }


def chart_at(z, radius: float, surface: str = "torus") -> Chart:
    """Affine chart centered at z; the base point maps to the origin."""
    return Chart(z, radius, surface=surface)


def mat2(a, b, c, d) -> np.ndarray:
    return np.array([[a, b], [c, d]], dtype=float)


def det2(m) -> float | np.ndarray:
    m = np.asarray(m, dtype=float)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def spectral_norm2(m) -> float:
    """Largest singular value of a 2x2 matrix, closed form."""
    m = np.asarray(m, dtype=float)
    f = float(np.sum(m * m))
    d = float(det2(m))
    disc = max(f * f - 4.0 * d * d, 0.0)
    return float(np.sqrt(0.5 * (f + np.sqrt(disc))))


def rot90() -> np.ndarray:
    """The symplectic rotation J (counterclockwise quarter turn)."""
    return np.array([[0.0, -1.0], [1.0, 0.0]])
