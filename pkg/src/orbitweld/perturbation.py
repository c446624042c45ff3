"""Compactly supported area-preserving perturbations.

The atom is a time-1 Hamiltonian flow whose stream function is a cutoff
profile times either a linear form (translation bump: moves x exactly onto
y) or a quadratic form (tangent edit: realizes a prescribed SL(2) tangent
map at its center while fixing the center).

Both bumps vanish identically outside a disk of radius r in their chart
and are exact closed-form maps on an inner plateau.  The cutoff annulus is
integrated with the implicit midpoint rule: its step map is the Cayley
transform of a traceless matrix, so the integrated flow has Jacobian
determinant exactly 1 in exact arithmetic, at any step count.  The
determinant drift is still measured by the test suite, never assumed.

Perturbed maps compose bumps after the base map:  g = Phi o f,  where Phi
applies every bump whose support contains the incoming point.  Supports
must be pairwise disjoint, so at most one bump acts on any point and the
composition is order-independent.

All flow code accepts complex coordinates so derivatives of the numerical
map can be measured by complex-step differentiation, which is immune to
the subtractive cancellation that defeats real-step differencing in the
strongly sheared outer ring of a bump.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Chart, rot90, torus_distance, wrap
from .maps import SurfaceMap

_J = rot90()
_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# cutoff profile: quintic smoothstep, C^2 at both ends of the annulus
# ---------------------------------------------------------------------------

def _ramp(s, plateau):
    """t in [0, 1] parameterizing the annulus; complex-safe, real branches."""
    t = (s - plateau) / (1.0 - plateau)
    lo = np.real(t) <= 0.0
    hi = np.real(t) >= 1.0
    t = np.where(lo, 0.0, np.where(hi, 1.0, t))
    return t, lo, hi


def _profile(s, plateau):
    """rho(s): 1 on [0, plateau], 0 on [1, inf), quintic ramp between."""
    t, lo, hi = _ramp(s, plateau)
    val = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    return np.where(lo, 1.0, np.where(hi, 0.0, val))


def _profile_d1(s, plateau):
    t, lo, hi = _ramp(s, plateau)
    val = -30.0 * t * t * (1.0 - t) ** 2 / (1.0 - plateau)
    return np.where(lo | hi, 0.0, val)


def _profile_d2(s, plateau):
    t, lo, hi = _ramp(s, plateau)
    val = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (1.0 - plateau) ** 2
    return np.where(lo | hi, 0.0, val)


# ---------------------------------------------------------------------------
# 2x2 helpers on the traceless slice
# ---------------------------------------------------------------------------

def expm_traceless(L):
    """exp of a traceless 2x2 matrix, closed form via L^2 = -det(L) I."""
    L = np.asarray(L, dtype=float)
    d = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    eye = np.eye(2)
    if d > 0:
        w = np.sqrt(d)
        return np.cos(w) * eye + (np.sin(w) / w) * L
    if d < 0:
        w = np.sqrt(-d)
        return np.cosh(w) * eye + (np.sinh(w) / w) * L
    return eye + L


class LogRangeError(ValueError):
    """Matrix has no real logarithm in the principal branch."""


def sl2_log(M, tol: float = 1e-8):
    """Principal logarithm of M in SL(2, R), returned traceless.

    Requires det(M) = 1 within tol and trace(M) > -2: matrices with
    trace <= -2 are outside the image of exp on sl(2).
    """
    M = np.asarray(M, dtype=float)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det - 1.0) > tol:
        raise LogRangeError(f"determinant {det} is not 1 within {tol}")
    tau = 0.5 * (M[0, 0] + M[1, 1])
    dev = M - tau * np.eye(2)
    if tau >= 1.0:
        if tau == 1.0:
            return dev
        mu = np.arccosh(tau)
        return (mu / np.sinh(mu)) * dev
    if tau > -1.0 + tol:
        theta = np.arccos(np.clip(tau, -1.0, 1.0))
        if theta < 1e-150:
            return dev
        return (theta / np.sin(theta)) * dev
    raise LogRangeError(f"trace {2 * tau} <= -2: outside the exp neighborhood")


def _cayley(A, h):
    """(I - h/2 A)^{-1} (I + h/2 A); unimodular whenever trace A = 0."""
    eye = np.eye(2)
    return np.linalg.solve(eye - 0.5 * h * A, eye + 0.5 * h * A)


def _solve2(a, b):
    """Batched 2x2 linear solve a @ x = b for b of shape (..., 2)."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    x0 = (b[..., 0] * a[..., 1, 1] - b[..., 1] * a[..., 0, 1]) / det
    x1 = (a[..., 0, 0] * b[..., 1] - a[..., 1, 0] * b[..., 0]) / det
    return np.stack([x0, x1], axis=-1)


def _cayley_apply(a, h, m):
    """m <- (I - h/2 a)^{-1} (I + h/2 a) m, batched closed form."""
    b00 = 0.5 * h * a[..., 0, 0]
    b01 = 0.5 * h * a[..., 0, 1]
    b10 = 0.5 * h * a[..., 1, 0]
    b11 = 0.5 * h * a[..., 1, 1]
    # n = (I + B) m
    n00 = (1.0 + b00) * m[..., 0, 0] + b01 * m[..., 1, 0]
    n01 = (1.0 + b00) * m[..., 0, 1] + b01 * m[..., 1, 1]
    n10 = b10 * m[..., 0, 0] + (1.0 + b11) * m[..., 1, 0]
    n11 = b10 * m[..., 0, 1] + (1.0 + b11) * m[..., 1, 1]
    # solve (I - B) x = n
    det = (1.0 - b00) * (1.0 - b11) - b01 * b10
    out = np.empty_like(m)
    out[..., 0, 0] = ((1.0 - b11) * n00 + b01 * n10) / det
    out[..., 0, 1] = ((1.0 - b11) * n01 + b01 * n11) / det
    out[..., 1, 0] = (b10 * n00 + (1.0 - b00) * n10) / det
    out[..., 1, 1] = (b10 * n01 + (1.0 - b00) * n11) / det
    return out


def _implicit_midpoint(field, field_jac, w0, steps, sign, with_tangent, tol):
    """Integrate dw/dt = field(w) for time `sign` with the midpoint rule.

    Each step solves w' = w + h field((w + w')/2) by Newton iteration,
    polished to the roundoff floor so complex-step probes stay accurate.
    The step Jacobian (I - h/2 A)^{-1} (I + h/2 A), with A the field
    Jacobian at the midpoint, is the exact derivative of the solved step
    and has determinant 1 whenever A is traceless.
    """
    w = w0.copy()
    n = w.shape[0]
    m = None
    if with_tangent:
        m = np.zeros((n, 2, 2), dtype=w.dtype)
        m[:, 0, 0] = 1.0
        m[:, 1, 1] = 1.0
    h = sign / steps
    eye = np.eye(2)
    delta = h * field(w)   # Euler predictor for the first step
    prev_delta = None
    for _ in range(steps):
        guess = delta if prev_delta is None else 2.0 * delta - prev_delta
        wp = w + guess
        # modified Newton: Jacobian frozen at the predicted midpoint; the
        # converged solution does not depend on the Jacobian used
        jac = eye - 0.5 * h * field_jac(w + 0.5 * guess)
        converged = False
        for _ in range(50):
            mid = 0.5 * (w + wp)
            g = wp - w - h * field(mid)
            dx = _solve2(jac, g)
            wp = wp - dx
            if np.max(np.abs(dx)) <= tol:
                converged = True
                break
        if not converged:
            raise RuntimeError("implicit midpoint Newton failed to converge")
        if with_tangent:
            m = _cayley_apply(field_jac(0.5 * (w + wp)), h, m)
        prev_delta = delta
        delta = wp - w  # warm start for the next step
        w = wp
    return w, m


# ---------------------------------------------------------------------------
# bumps
# ---------------------------------------------------------------------------

def plateau_ratio(eta: float) -> float:
    """Plateau fraction of the support radius for an elementary bump.

    Any ratio above 1/(1 + eta) keeps the segment [x, y] strictly inside
    the plateau; staying close to that floor widens the cutoff annulus,
    which divides the field's stiffness (hence the integrator step count)
    by an order of magnitude compared to ratios near 1.
    """
    return (1.0 + eta / 16.0) / (1.0 + eta)


def _auto_steps(eta: float) -> int:
    """Step count for the midpoint solve of an elementary bump.

    The Newton iteration stops contracting below roughly 3.3/eta^2 steps
    (measured over the eta range the suite exercises); a 3x margin keeps
    it safely quadratic.
    """
    return int(min(8192, max(16, int(np.ceil(10.0 / (eta * eta))))))


@dataclass(frozen=True)
class BumpPerturbation:
    """Translation bump: time-1 flow of H(z) = -<J u, z - c> rho(|z - c|/r).

    Inside the plateau the Hamiltonian field is the constant u, so the flow
    is the exact translation z -> z + u there; it is identically zero at and
    beyond radius r.  Sends c - u/2 onto c + u/2 exactly.
    """

    center: np.ndarray
    displacement: np.ndarray
    radius: float
    plateau_radius: float
    eta: float = 0.0
    flow_steps: int = 256

    @property
    def is_identity(self):
        return self.radius == 0.0 or float(np.linalg.norm(self.displacement)) == 0.0

    def _plateau_ratio(self):
        return self.plateau_radius / self.radius

    def _s(self, w):
        return np.sqrt(w[..., 0] ** 2 + w[..., 1] ** 2) / self.radius

    def _field(self, w):
        """Hamiltonian field in centered coordinates w = z - c."""
        u0, u1 = self.displacement
        r = self.radius
        p = self._plateau_ratio()
        wx = w[..., 0]
        wy = w[..., 1]
        s = np.sqrt(wx * wx + wy * wy) * (1.0 / r)
        rho = _profile(s, p)
        rho1 = _profile_d1(s, p)
        live = np.real(rho1) != 0.0
        q = np.where(live, rho1 / (r * r * np.where(live, s, 1.0)), 0.0)
        coef = q * (u0 * wy - u1 * wx)                   # q <J u, w>
        out = np.empty_like(w)
        out[..., 0] = rho * u0 + coef * wy               # rho u - coef J w
        out[..., 1] = rho * u1 - coef * wx
        return out

    def _field_jacobian(self, w):
        """d(field)/dw, shape (..., 2, 2); zero on plateau and outside."""
        u0, u1 = self.displacement
        r = self.radius
        p = self._plateau_ratio()
        wx = w[..., 0]
        wy = w[..., 1]
        s = np.sqrt(wx * wx + wy * wy) * (1.0 / r)
        rho1 = _profile_d1(s, p)
        rho2 = _profile_d2(s, p)
        live = (np.real(rho1) != 0.0) | (np.real(rho2) != 0.0)
        safe = np.where(live, s, 1.0)
        r2s = r * r * safe
        a = u0 * wy - u1 * wx                            # <J u, w>
        c1 = np.where(live, rho1 / r2s, 0.0)             # q(s)
        qp = np.where(live, (rho2 * safe - rho1) / (r * r * safe * safe), 0.0)
        c2 = a * np.where(live, qp / r2s, 0.0)
        # DF = u (c1 w)^T - Jw (c2 w + c1 Ju)^T - c1 a J
        g0 = c2 * wx - c1 * u1                           # grad(q a) components
        g1 = c2 * wy + c1 * u0
        ca = c1 * a
        out = np.empty(w.shape[:-1] + (2, 2), dtype=w.dtype)
        out[..., 0, 0] = u0 * c1 * wx + wy * g0
        out[..., 0, 1] = u0 * c1 * wy + wy * g1 + ca
        out[..., 1, 0] = u1 * c1 * wx - wx * g0 - ca
        out[..., 1, 1] = u1 * c1 * wy - wx * g1
        return out

    def _exact_masks(self, w, sign):
        """(outside, plateau_safe) from the real parts of the coordinates."""
        r = self.radius
        rp = self.plateau_radius
        wr = np.real(w)
        n0 = np.sum(wr * wr, axis=-1)
        outside = n0 >= r * r
        shifted = wr + sign * self.displacement
        n1 = np.sum(shifted * shifted, axis=-1)
        plateau = (n0 <= rp * rp) & (n1 <= rp * rp)
        return outside, plateau & ~outside

    def _newton_tol(self):
        scale = self.radius + float(np.linalg.norm(self.displacement))
        return 64.0 * _EPS * scale

    def flow(self, z, sign: float = 1.0, with_tangent: bool = False):
        """Time-(sign) flow in chart coordinates; z has shape (..., 2).

        Points outside the support come back bit-identical; points whose
        segment to their translate stays on the (convex) plateau use the
        exact translation.  The rest is integrated implicitly.
        """
        z = np.asarray(z)
        if not np.iscomplexobj(z):
            z = z.astype(float)
        scalar = z.ndim == 1
        pts = np.atleast_2d(z).copy()
        tangents = None
        if with_tangent:
            tangents = np.zeros(pts.shape[:-1] + (2, 2), dtype=pts.dtype)
            tangents[..., 0, 0] = 1.0
            tangents[..., 1, 1] = 1.0
        if self.is_identity:
            out = pts[0] if scalar else pts
            return (out, tangents[0] if scalar else tangents) if with_tangent else out
        w = pts - self.center
        outside, plateau = self._exact_masks(w, sign)
        w[plateau] += sign * self.displacement
        rest = ~(outside | plateau)
        if np.any(rest):
            wr, mr = _implicit_midpoint(
                self._field,
                self._field_jacobian,
                w[rest],
                self.flow_steps,
                sign,
                with_tangent,
                self._newton_tol(),
            )
            w[rest] = wr
            if with_tangent:
                tangents[rest] = mr
        pts = w + self.center
        pts[outside] = np.atleast_2d(z)[outside]  # bit-exact outside
        out = pts[0] if scalar else pts
        if with_tangent:
            return out, (tangents[0] if scalar else tangents)
        return out

    def to_json(self):
        return {
            "type": "translation",
            "center": [float(v) for v in self.center],
            "displacement": [float(v) for v in self.displacement],
            "radius": float(self.radius),
            "plateau_radius": float(self.plateau_radius),
            "eta": float(self.eta),
            "flow_steps": int(self.flow_steps),
        }


@dataclass(frozen=True)
class QuadraticBump:
    """Tangent-edit bump: time-1 flow of H(z) = (1/2) w^T S w rho(|w|/r).

    On the plateau the field is the linear map J S w, where the midpoint
    integrator is the exact Cayley power; the bump therefore fixes its
    center and has the unimodular tangent cayley(J S / n)^n there, with no
    branch mismatch against the integrated annulus.  Every near-identity
    unit-determinant tangent is reachable: {J S : S symmetric} = sl(2, R).
    """

    center: np.ndarray
    generator: np.ndarray            # symmetric 2x2
    radius: float
    plateau_ratio: float = 0.5
    flow_steps: int = 256

    @property
    def is_identity(self):
        return self.radius == 0.0 or float(np.max(np.abs(self.generator))) == 0.0

    @property
    def plateau_radius(self):
        return self.radius * self.plateau_ratio

    @property
    def displacement(self):
        return np.zeros(2)

    def step_matrix(self, sign: float = 1.0):
        """Exact plateau step: Cayley transform of h J S."""
        return _cayley(_J @ self.generator, sign / self.flow_steps)

    def tangent_at_center(self, sign: float = 1.0):
        return np.linalg.matrix_power(self.step_matrix(sign), self.flow_steps)

    def _s(self, w):
        return np.sqrt(w[..., 0] ** 2 + w[..., 1] ** 2) / self.radius

    def _field(self, w):
        S = self.generator
        r = self.radius
        p = self.plateau_ratio
        s = self._s(w)
        rho = _profile(s, p)
        rho1 = _profile_d1(s, p)
        sw = w @ S.T
        b = np.sum(w * sw, axis=-1)
        jsw = np.stack([-sw[..., 1], sw[..., 0]], axis=-1)
        jw = np.stack([-w[..., 1], w[..., 0]], axis=-1)
        live = np.real(rho1) != 0.0
        m = np.where(live, rho1 / (2.0 * r * r * np.where(live, s, 1.0)), 0.0)
        return rho[..., None] * jsw + (b * m)[..., None] * jw

    def _field_jacobian(self, w):
        S = self.generator
        r = self.radius
        p = self.plateau_ratio
        s = self._s(w)
        rho = _profile(s, p)
        rho1 = _profile_d1(s, p)
        rho2 = _profile_d2(s, p)
        hess = rho[..., None, None] * S
        mask = np.real(rho1) != 0.0
        if np.any(mask):
            wm = w[mask]
            sm = s[mask]
            swm = wm @ S.T
            bm = np.sum(wm * swm, axis=-1)
            r2s = r * r * sm
            m = rho1[mask] / (2.0 * r2s)
            mp = (rho2[mask] * sm - rho1[mask]) / (2.0 * r * r * sm * sm)
            extra = (
                (rho1[mask] / r2s)[:, None, None] * swm[:, :, None] * wm[:, None, :]
                + 2.0 * m[:, None, None] * wm[:, :, None] * swm[:, None, :]
                + (bm * mp / r2s)[:, None, None] * wm[:, :, None] * wm[:, None, :]
                + (bm * m)[:, None, None] * np.eye(2)
            )
            hess = np.array(hess)
            hess[mask] = hess[mask] + extra
        return _J @ hess

    def _exact_masks(self, w):
        r = self.radius
        rp = self.plateau_radius
        wr = np.real(w)
        n0 = np.sqrt(np.sum(wr * wr, axis=-1))
        outside = n0 >= r
        # conservative: sup_t |exp(t J S) w| <= e^{|S|} |w|
        growth = np.exp(float(np.linalg.norm(self.generator, 2)))
        plateau = n0 * growth <= rp
        return outside, plateau & ~outside

    def _newton_tol(self):
        scale = self.radius * (1.0 + float(np.linalg.norm(self.generator, 2)))
        return 16.0 * _EPS * scale

    def flow(self, z, sign: float = 1.0, with_tangent: bool = False):
        z = np.asarray(z)
        if not np.iscomplexobj(z):
            z = z.astype(float)
        scalar = z.ndim == 1
        pts = np.atleast_2d(z).copy()
        tangents = None
        if with_tangent:
            tangents = np.zeros(pts.shape[:-1] + (2, 2), dtype=pts.dtype)
            tangents[..., 0, 0] = 1.0
            tangents[..., 1, 1] = 1.0
        if self.is_identity:
            out = pts[0] if scalar else pts
            return (out, tangents[0] if scalar else tangents) if with_tangent else out
        w = pts - self.center
        outside, plateau = self._exact_masks(w)
        if np.any(plateau):
            power = self.tangent_at_center(sign)
            w[plateau] = w[plateau] @ power.T
            if with_tangent:
                tangents[plateau] = power
        rest = ~(outside | plateau)
        if np.any(rest):
            wr, mr = _implicit_midpoint(
                self._field,
                self._field_jacobian,
                w[rest],
                self.flow_steps,
                sign,
                with_tangent,
                self._newton_tol(),
            )
            w[rest] = wr
            if with_tangent:
                tangents[rest] = mr
        pts = w + self.center
        pts[outside] = np.atleast_2d(z)[outside]
        out = pts[0] if scalar else pts
        if with_tangent:
            return out, (tangents[0] if scalar else tangents)
        return out

    def to_json(self):
        return {
            "type": "quadratic",
            "center": [float(v) for v in self.center],
            "generator": [[float(v) for v in row] for row in self.generator],
            "radius": float(self.radius),
            "plateau_ratio": float(self.plateau_ratio),
            "flow_steps": int(self.flow_steps),
        }


def bump_from_json(obj: dict):
    if obj["type"] == "translation":
        return BumpPerturbation(
            center=np.array(obj["center"], dtype=float),
            displacement=np.array(obj["displacement"], dtype=float),
            radius=obj["radius"],
            plateau_radius=obj["plateau_radius"],
            eta=obj.get("eta", 0.0),
            flow_steps=obj["flow_steps"],
        )
    if obj["type"] == "quadratic":
        return QuadraticBump(
            center=np.array(obj["center"], dtype=float),
            generator=np.array(obj["generator"], dtype=float),
            radius=obj["radius"],
            plateau_ratio=obj["plateau_ratio"],
            flow_steps=obj["flow_steps"],
        )
    raise ValueError(f"unknown bump type {obj.get('type')!r}")


def elementary_perturbation(
    x, y, eta: float, flow_steps: int | None = None
) -> BumpPerturbation:
    """Bump sending x exactly onto y, identity outside the ball of radius
    (1 + eta)/2 times |y - x| around the midpoint.

    The plateau contains the whole segment [x, y] strictly, so the mapping
    x -> y is the exact translation flow.  Coordinates are chart
    coordinates.  Small eta makes the cutoff annulus thin and the field
    stiff; the default step count scales accordingly.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = y - x
    d = float(np.linalg.norm(u))
    r = 0.5 * (1.0 + eta) * d
    rp = r * plateau_ratio(eta)
    if flow_steps is None:
        flow_steps = _auto_steps(eta)
    return BumpPerturbation(
        center=0.5 * (x + y),
        displacement=u,
        radius=r,
        plateau_radius=rp,
        eta=float(eta),
        flow_steps=int(flow_steps),
    )


# ---------------------------------------------------------------------------
# placement on the surface and composition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlacedBump:
    """A bump living in a local chart, applied after the base map.

    `iterate` records at which forward iterate of the construction the
    support lives; it is bookkeeping for audits and reports, the applied
    composition is the same for every value.
    """

    chart: Chart
    bump: BumpPerturbation | QuadraticBump
    iterate: int = 0

    def world_center(self):
        return self.chart.from_chart(self.bump.center)

    def world_bound_radius(self):
        """Radius of a world-space disk certainly containing the support."""
        scale = getattr(self.chart, "max_stretch", lambda: 1.0)()
        return float(self.bump.radius) * scale

    def contains(self, p):
        """Support membership for surface points (batched)."""
        p = np.asarray(p, dtype=float)
        if self.bump.is_identity:
            return np.zeros(p.shape[:-1], dtype=bool)
        w = self.chart.coords_unchecked(p) - self.bump.center
        return np.sum(w * w, axis=-1) < self.bump.radius ** 2

    def boundary_world(self, n: int = 256):
        theta = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        circle = self.bump.center + self.bump.radius * np.stack(
            [np.cos(theta), np.sin(theta)], axis=-1
        )
        return self.chart.from_chart(circle)

    def to_json(self):
        return {
            "chart": self.chart.to_json(),
            "bump": self.bump.to_json(),
            "iterate": int(self.iterate),
        }


def _chart_coords_unchecked(chart: Chart, p):
    return chart._disp(p)


# Chart gains an unchecked accessor used for membership tests: the support
# is strictly inside the chart, so no domain error can trigger on real hits.
Chart.coords_unchecked = _chart_coords_unchecked


class SupportOverlapError(ValueError):
    def __init__(self, i, j, msg=""):
        self.pair = (i, j)
        super().__init__(
            f"bump supports {i} and {j} overlap{': ' + msg if msg else ''}"
        )


def check_disjoint_supports(placed: list[PlacedBump], samples: int = 512):
    """Verify pairwise disjointness of transported supports.

    Disks from translation charts are compared exactly; anything with a
    nontrivial chart stretch falls back to a dense boundary-sampling audit
    after the conservative bounding-disk test fires.
    """
    live = [(i, pb) for i, pb in enumerate(placed) if not pb.bump.is_identity]
    for a in range(len(live)):
        i, pi = live[a]
        for b in range(a + 1, len(live)):
            j, pj = live[b]
            d = torus_distance(pi.world_center(), pj.world_center())
            if d > pi.world_bound_radius() + pj.world_bound_radius():
                continue
            exact_i = type(pi.chart) is Chart
            exact_j = type(pj.chart) is Chart
            if exact_i and exact_j:
                raise SupportOverlapError(i, j, f"center distance {d:.3g}")
            bi = pi.boundary_world(samples)
            bj = pj.boundary_world(samples)
            hit = (
                np.any(pi.contains(bj))
                or np.any(pj.contains(bi))
                or bool(pi.contains(pj.world_center()))
                or bool(pj.contains(pi.world_center()))
            )
            if hit:
                raise SupportOverlapError(i, j, "sampled boundary intersects")


class PerturbedMap(SurfaceMap):
    """g = Phi o f with Phi a union of disjointly supported bumps."""

    surface = "torus"

    def __init__(self, base: SurfaceMap, placed: list[PlacedBump], check: bool = True):
        if base.surface != "torus":
            raise ValueError("perturbations are implemented on torus maps")
        self.base = base
        self.placed = list(placed)
        if check:
            check_disjoint_supports(self.placed)

    def apply_bumps(self, p, sign: float = 1.0):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 1
        pts = np.atleast_2d(p).astype(float, copy=True)
        for pb in self.placed:
            if pb.bump.is_identity:
                continue
            mask = pb.contains(pts)
            if not np.any(mask):
                continue
            w = pb.chart.coords_unchecked(pts[mask])
            w = pb.bump.flow(w, sign=sign)
            pts[mask] = pb.chart.from_chart(w)
        return pts[0] if scalar else pts

    def apply(self, p):
        return self.apply_bumps(self.base.apply(p))

    def inverse(self, p):
        return self.base.inverse(self.apply_bumps(p, sign=-1.0))

    def tangent(self, p):
        p = np.asarray(p, dtype=float)
        scalar = p.ndim == 1
        pts = np.atleast_2d(p)
        m = self.base.tangent(pts)
        y = np.atleast_2d(self.base.apply(pts))
        for pb in self.placed:
            if pb.bump.is_identity:
                continue
            mask = pb.contains(y)
            if not np.any(mask):
                continue
            w = pb.chart.coords_unchecked(y[mask])
            _, dphi = pb.bump.flow(w, with_tangent=True)
            lin = getattr(pb.chart, "matrix", None)
            if lin is not None:
                dphi = lin @ dphi @ np.linalg.inv(lin)
            m[mask] = dphi @ m[mask]
        return m[0] if scalar else m

    @property
    def has_inverse(self):
        return self.base.has_inverse

    def to_json(self):
        return {
            "base": self.base.to_spec(),
            "bumps": [pb.to_json() for pb in self.placed],
        }

    def to_spec(self):
        return self.to_json()


def compose_disjoint(base: SurfaceMap, placed: list[PlacedBump]) -> PerturbedMap:
    """Compose bumps with the base map; rejects any support overlap."""
    return PerturbedMap(base, placed, check=True)


def placed_bump_from_json(obj: dict) -> PlacedBump:
    cj = obj["chart"]
    if cj["kind"] == "translation":
        chart = Chart(
            np.array(cj["base"]), cj["radius"], surface=cj.get("surface", "torus")
        )
    elif cj["kind"] == "linear":
        from .closing import LinearChart  # local import, avoids a cycle

        chart = LinearChart(np.array(cj["base"]), np.array(cj["matrix"]), cj["radius"])
    else:
        raise ValueError(f"unknown chart kind {cj['kind']!r}")
    return PlacedBump(
        chart=chart, bump=bump_from_json(obj["bump"]), iterate=obj.get("iterate", 0)
    )


def perturbed_map_from_json(obj: dict) -> PerturbedMap:
    from .maps import map_from_spec

    base = map_from_spec(obj["base"])
    placed = [placed_bump_from_json(b) for b in obj["bumps"]]
    return PerturbedMap(base, placed, check=True)


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def c0_distance(map_a: SurfaceMap, map_b: SurfaceMap, points) -> float:
    """sup over the sample of the torus distance between the two images."""
    pa = map_a.apply(points)
    pb = map_b.apply(points)
    d = torus_distance(pa, pb)
    return float(np.max(d)) if np.size(d) else 0.0


def support_samples(bump, rng, n: int) -> np.ndarray:
    """Uniform sample of the open support disk, in chart coordinates."""
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    rad = bump.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    return bump.center + rad[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def bump_c0_size(bump, n: int = 2048, seed: int = 0) -> float:
    """Measured sup |phi(z) - z| over the support (chart coordinates)."""
    if bump.is_identity:
        return 0.0
    rng = np.random.default_rng(seed)
    pts = support_samples(bump, rng, n)
    moved = bump.flow(pts)
    return float(np.max(np.linalg.norm(moved - pts, axis=-1)))


def fd_jacobian(bump, pts, h: float) -> np.ndarray:
    """Central finite-difference Jacobian of the integrated flow."""
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    col_x = (bump.flow(pts + ex) - bump.flow(pts - ex)) / (2.0 * h)
    col_y = (bump.flow(pts + ey) - bump.flow(pts - ey)) / (2.0 * h)
    return np.stack([col_x, col_y], axis=-1)


def complex_step_jacobian(bump, pts, h: float) -> np.ndarray:
    """Jacobian of the integrated flow by complex-step differentiation.

    Im phi(z + i h e_k) / h has no subtractive cancellation, so it resolves
    the determinant of strongly sheared flows to near machine precision
    where real-step differencing cannot.
    """
    pts = np.asarray(pts, dtype=complex)
    cols = []
    for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        cols.append(np.imag(bump.flow(pts + 1j * h * e)) / h)
    return np.stack(cols, axis=-1)


def c1_size(bump, grid_divisor: int = 200) -> float:
    """Measured C^1 size: max over a dense grid of max(|Dphi - I|, |phi(z) - z|).

    |Dphi - I| is estimated by differencing on a polar grid of step
    r/grid_divisor covering the annulus where the cutoff varies; on the
    plateau the flow is an exact translation (Dphi = I, displacement |u|)
    and outside it is the identity, so only the annulus needs probing.
    """
    if bump.is_identity:
        return 0.0
    r = bump.radius
    p = bump.plateau_radius / r
    n_rad = max(4, int(np.ceil((1.0 - p) * grid_divisor)) + 2)
    n_ang = max(16, int(np.ceil(2.0 * np.pi * grid_divisor / 4)))
    ss = np.linspace(max(p - 2.0 / grid_divisor, 0.0), 1.0 + 1.0 / grid_divisor, n_rad)
    th = np.linspace(0.0, 2.0 * np.pi, n_ang, endpoint=False)
    rad, ang = np.meshgrid(ss * r, th, indexing="ij")
    pts = bump.center + np.stack(
        [rad * np.cos(ang), rad * np.sin(ang)], axis=-1
    ).reshape(-1, 2)
    moved = bump.flow(pts)
    disp = float(np.max(np.linalg.norm(moved - pts, axis=-1)))
    disp = max(disp, float(np.linalg.norm(bump.displacement)))  # plateau value
    jac = complex_step_jacobian(bump, pts, r / grid_divisor * 1e-4)
    dev = jac - np.eye(2)
    f2 = np.sum(dev * dev, axis=(-2, -1))
    det = dev[..., 0, 0] * dev[..., 1, 1] - dev[..., 0, 1] * dev[..., 1, 0]
    disc = np.maximum(f2 * f2 - 4.0 * det * det, 0.0)
    opnorm = np.sqrt(0.5 * (f2 + np.sqrt(disc)))
    return max(disp, float(np.max(opnorm)))


# ---------------------------------------------------------------------------
# Franks-style tangent edit along a periodic orbit
# ---------------------------------------------------------------------------

class FranksEditError(ValueError):
    pass


def generator_for_target(correction, flow_steps: int) -> np.ndarray:
    """Symmetric S whose plateau Cayley power equals the given correction.

    Solves cayley(J S / n)^n = C by taking the n-th root of C through the
    principal log, then inverting the Cayley transform.  The resulting
    quadratic bump realizes C at its center exactly, not just to the
    integrator's order.
    """
    C = np.asarray(correction, dtype=float)
    L = sl2_log(C)
    root = expm_traceless(L / flow_steps)       # C^{1/n}
    X = np.linalg.solve(root + np.eye(2), root - np.eye(2))
    L_cay = 2.0 * flow_steps * X                # cayley(L_cay / n) = C^{1/n}
    S = -(_J @ L_cay)
    return 0.5 * (S + S.T)


def franks_edit(
    base: SurfaceMap,
    orbit_points,
    targets,
    radius: float,
    flow_steps: int = 128,
    orbit_tol: float = 1e-9,
) -> PerturbedMap:
    """Perturb so the orbit is preserved pointwise and the tangent map at
    each orbit point becomes the prescribed unit-determinant target.

    The bump centered at f(q_i) fixes its center, so the orbit never
    moves, and its center tangent is target_i Df(q_i)^{-1}; hence
    D g(q_i) = target_i.
    """
    pts = [wrap(np.asarray(q, dtype=float)) for q in orbit_points]
    tgts = [np.asarray(t, dtype=float) for t in targets]
    if len(pts) != len(tgts) or not pts:
        raise FranksEditError("need one target per orbit point")
    tau = len(pts)
    for i, q in enumerate(pts):
        nxt = pts[(i + 1) % tau]
        if torus_distance(base.apply(q), nxt) > orbit_tol:
            raise FranksEditError(f"points are not a periodic orbit at index {i}")
    for i in range(tau):
        for j in range(i + 1, tau):
            if torus_distance(pts[i], pts[j]) <= 2.0 * radius:
                raise FranksEditError(
                    f"support balls at orbit points {i} and {j} overlap"
                )
    placed = []
    for i, q in enumerate(pts):
        dfi = base.tangent(q)
        corr = tgts[i] @ np.linalg.inv(dfi)
        if float(np.max(np.abs(corr - np.eye(2)))) < 1e-14:
            continue
        try:
            S = generator_for_target(corr, flow_steps)
        except LogRangeError as e:
            raise FranksEditError(f"target correction at index {i}: {e}") from e
        center = pts[(i + 1) % tau]
        chart = Chart(center, min(0.24, max(4.0 * radius, 1e-3)))
        bump = QuadraticBump(
            center=np.zeros(2),
            generator=S,
            radius=float(radius),
            flow_steps=int(flow_steps),
        )
        placed.append(PlacedBump(chart=chart, bump=bump, iterate=i))
    return PerturbedMap(base, placed, check=True)
