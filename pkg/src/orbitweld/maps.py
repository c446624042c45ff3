"""Catalog of conservative surface maps.

Every map implements the same contract:

    apply(p)    -> image point, canonically wrapped
    tangent(p)  -> 2x2 Jacobian with determinant 1 (up to roundoff)
    inverse(p)  -> preimage, when the map is invertible in closed form
    lift(u)     -> continuous lift to the plane, used by Newton solves

`apply` and `tangent` accept batches of shape (n, 2) and map them
componentwise.  All maps are immutable and side-effect free.
"""

from __future__ import annotations

import numpy as np

from .geometry import wrap, wrap_cylinder, displacement, cylinder_displacement

TWO_PI = 2.0 * np.pi


class SurfaceMap:
    """Base class for conservative maps of the torus or cylinder."""

    surface = "torus"

    def apply(self, p) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, p) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, p) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no inverse")

    def lift(self, u) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no lift")

    @property
    def has_inverse(self) -> bool:
        try:
            self.inverse
        except NotImplementedError:
            return False
        return type(self).inverse is not SurfaceMap.inverse

    def displacement(self, p, q) -> np.ndarray:
        if self.surface == "torus":
            return displacement(p, q)
        return cylinder_displacement(p, q)

    def distance(self, p, q):
        d = self.displacement(p, q)
        return np.sqrt(np.sum(d * d, axis=-1))

    def iterate(self, p, n: int) -> np.ndarray:
        q = np.asarray(p, dtype=float)
        for _ in range(n):
            q = self.apply(q)
        return q

    def orbit(self, p, n: int) -> np.ndarray:
        """Points p, f(p), ..., f^n(p), shape (n+1, 2)."""
        out = np.empty((n + 1, 2))
        q = np.asarray(p, dtype=float)
        out[0] = q
        for k in range(n):
            q = self.apply(q)
            out[k + 1] = q
        return out

    def tangent_along(self, p, n: int) -> np.ndarray:
        """Product D f^n(p) = Df(f^{n-1} p) ... Df(p)."""
        a = np.eye(2)
        q = np.asarray(p, dtype=float)
        for _ in range(n):
            a = self.tangent(q) @ a
            q = self.apply(q)
        return a

    def to_spec(self) -> dict:
        raise NotImplementedError


class StandardMap(SurfaceMap):
    """Chirikov standard map (x, y) -> (x + y, y + a sin(2 pi (x + y)))."""

    def __init__(self, a: float):
        self.a = float(a)
        if not np.isfinite(self.a):
            raise ValueError("coupling strength must be finite")

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        x = p[..., 0] + p[..., 1]
        y = p[..., 1] + self.a * np.sin(TWO_PI * x)
        return wrap(np.stack([x, y], axis=-1))

    def lift(self, u):
        u = np.asarray(u, dtype=float)
        x = u[..., 0] + u[..., 1]
        y = u[..., 1] + self.a * np.sin(TWO_PI * x)
        return np.stack([x, y], axis=-1)

    def tangent(self, p):
        p = np.asarray(p, dtype=float)
        c = TWO_PI * self.a * np.cos(TWO_PI * (p[..., 0] + p[..., 1]))
        one = np.ones_like(c)
        row0 = np.stack([one, one], axis=-1)
        row1 = np.stack([c, 1.0 + c], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        s = p[..., 0]                      # s = x + y of the preimage
        y = p[..., 1] - self.a * np.sin(TWO_PI * s)
        x = s - y
        return wrap(np.stack([x, y], axis=-1))

    def to_spec(self):
        return {"map": "standard", "a": self.a}


class LinearAutomorphism(SurfaceMap):
    """Action of an SL(2, Z) matrix on the torus; tangent is constant."""

    def __init__(self, matrix):
        m = np.asarray(matrix)
        if m.shape != (2, 2):
            raise ValueError("matrix must be 2x2")
        mi = np.rint(m).astype(np.int64)
        if not np.allclose(m, mi):
            raise ValueError("matrix entries must be integers")
        det = int(mi[0, 0] * mi[1, 1] - mi[0, 1] * mi[1, 0])
        if det != 1:
            raise ValueError(f"matrix determinant must be 1, got {det}")
        self.matrix = mi
        self._m = mi.astype(float)
        # integer inverse: [[d, -b], [-c, a]] for det 1
        self._minv = np.array(
            [[mi[1, 1], -mi[0, 1]], [-mi[1, 0], mi[0, 0]]], dtype=float
        )

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        return wrap(p @ self._m.T)

    def lift(self, u):
        return np.asarray(u, dtype=float) @ self._m.T

    def tangent(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            return self._m.copy()
        return np.broadcast_to(self._m, p.shape[:-1] + (2, 2)).copy()

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        return wrap(p @ self._minv.T)

    def to_spec(self):
        return {"map": "linear", "matrix": self.matrix.tolist()}


def cat_map() -> LinearAutomorphism:
    """Arnold's cat map [[2, 1], [1, 1]]."""
    return LinearAutomorphism([[2, 1], [1, 1]])


class PendulumMap(SurfaceMap):
    """Time-T map of the forced pendulum on the cylinder R/Z x R.

    theta'' = -sin(2 pi theta) + h(t) with T-periodic forcing
    h(t) = sum_j c_j cos(2 pi j t / T) + s_j sin(2 pi j t / T).

    Integrated as `steps` kick-drift shear pairs.  Each shear has unit
    Jacobian determinant exactly, so area preservation is structural
    rather than a property of the step size.
    """

    surface = "cylinder"

    def __init__(self, period: float, steps: int, h_cos=(), h_sin=()):
        if not period > 0:
            raise ValueError("period must be positive")
        if steps < 1:
            raise ValueError("steps must be >= 1")
        self.period = float(period)
        self.steps = int(steps)
        self.h_cos = np.asarray(h_cos, dtype=float)
        self.h_sin = np.asarray(h_sin, dtype=float)

    def forcing(self, t):
        t = np.asarray(t, dtype=float)
        val = np.zeros_like(t)
        for j, c in enumerate(self.h_cos, start=1):
            val = val + c * np.cos(TWO_PI * j * t / self.period)
        for j, s in enumerate(self.h_sin, start=1):
            val = val + s * np.sin(TWO_PI * j * t / self.period)
        return val

    def _accel(self, theta, t):
        return -np.sin(TWO_PI * theta) + self.forcing(t)

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        theta = p[..., 0].copy()
        v = p[..., 1].copy()
        dt = self.period / self.steps
        for k in range(self.steps):
            t = k * dt
            v = v + dt * self._accel(theta, t)      # kick
            theta = theta + dt * v                  # drift
        return wrap_cylinder(np.stack([theta, v], axis=-1))

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        theta = p[..., 0].copy()
        v = p[..., 1].copy()
        dt = self.period / self.steps
        for k in reversed(range(self.steps)):
            t = k * dt
            theta = theta - dt * v                  # undo drift
            v = v - dt * self._accel(theta, t)      # undo kick
        return wrap_cylinder(np.stack([theta, v], axis=-1))

    def tangent(self, p):
        p = np.asarray(p, dtype=float)
        theta = p[..., 0].copy()
        v = p[..., 1].copy()
        dt = self.period / self.steps
        shape = p.shape[:-1]
        m = np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        for k in range(self.steps):
            t = k * dt
            g = -TWO_PI * np.cos(TWO_PI * theta)    # d(accel)/d(theta)
            # kick then drift: [[1, dt], [0, 1]] @ [[1, 0], [dt*g, 1]]
            a = 1.0 + dt * dt * g
            step = np.empty(shape + (2, 2))
            step[..., 0, 0] = a
            step[..., 0, 1] = dt
            step[..., 1, 0] = dt * g
            step[..., 1, 1] = 1.0
            m = step @ m
            v = v + dt * self._accel(theta, t)
            theta = theta + dt * v
        return m

    def lift(self, u):
        # cylinder coordinates are already a lift in v; unwrap theta only
        u = np.asarray(u, dtype=float)
        theta = u[..., 0].copy()
        v = u[..., 1].copy()
        dt = self.period / self.steps
        for k in range(self.steps):
            t = k * dt
            v = v + dt * self._accel(theta, t)
            theta = theta + dt * v
        return np.stack([theta, v], axis=-1)

    def to_spec(self):
        return {
            "map": "pendulum",
            "T": self.period,
            "steps": self.steps,
            "h_cos": self.h_cos.tolist(),
            "h_sin": self.h_sin.tolist(),
        }


def map_from_spec(spec: dict) -> SurfaceMap:
    """Build a catalog map from its JSON description.

    Recognized forms:
        {"map": "standard", "a": 0.8}
        {"map": "linear", "matrix": [[2, 1], [1, 1]]}
        {"map": "pendulum", "T": 1.0, "steps": 64, "h_cos": [...], "h_sin": [...]}
    """
    if not isinstance(spec, dict) or "map" not in spec:
        raise ValueError("map spec must be a dict with a 'map' key")
    kind = spec["map"]
    if kind == "standard":
        return StandardMap(spec["a"])
    if kind == "linear":
        return LinearAutomorphism(spec["matrix"])
    if kind == "pendulum":
        return PendulumMap(
            spec["T"], spec["steps"],
            spec.get("h_cos", ()), spec.get("h_sin", ()),
        )
    raise ValueError(f"unknown map kind {kind!r}")
