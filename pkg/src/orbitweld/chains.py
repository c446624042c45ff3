"""Epsilon-pseudo-orbit machinery over grid discretizations of the torus.

A transition graph records, on an m x m grid of cells, which cells can be
reached from which in one map step followed by a jump of size < epsilon.
The edge rule dilates by the cell radius (center distance < epsilon +
cell radius), an over-approximation chosen so grid reachability never
misses true pseudo-orbits at the grid scale; anything the planner emits
is then validated against the exact definition, jump by jump.

Chain classes are the strongly connected components of the edge relation.
Realized pseudo-orbits follow genuine orbit segments between jump sites,
with jumps planned along a minimum-jump-count path through the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .geometry import torus_distance, wrap
from .maps import SurfaceMap

JUMP_THRESHOLD = 1e-12


class PseudoOrbitError(ValueError):
    pass


@dataclass
class PseudoOrbit:
    """A finite point sequence with every step within epsilon of the image.

    `jumps` lists exactly the indices k where d(f(z_k), z_{k+1}) exceeds
    1e-12; genuine orbit steps do not count as jumps.
    """

    points: np.ndarray
    epsilon: float
    jumps: list = field(default_factory=list)

    @classmethod
    def from_points(cls, f: SurfaceMap, points, epsilon: float) -> "PseudoOrbit":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) < 1:
            raise PseudoOrbitError("empty pseudo-orbit")
        jumps = []
        if len(pts) > 1:
            residuals = torus_distance(f.apply(pts[:-1]), pts[1:])
            bad = np.nonzero(residuals >= epsilon)[0]
            if bad.size:
                k = int(bad[0])
                raise PseudoOrbitError(
                    f"step {k} has residual {residuals[k]:.3g} >= epsilon {epsilon}"
                )
            jumps = [int(k) for k in np.nonzero(residuals > JUMP_THRESHOLD)[0]]
        return cls(points=pts, epsilon=float(epsilon), jumps=jumps)

    def __len__(self):
        return len(self.points)

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    def validate(self, f: SurfaceMap) -> bool:
        """Independent re-check of the jump residual invariant."""
        other = PseudoOrbit.from_points(f, self.points, self.epsilon)
        if other.jumps != self.jumps:
            raise PseudoOrbitError(
                f"jump list mismatch: recorded {self.jumps}, recomputed {other.jumps}"
            )
        return True

    def residuals(self, f: SurfaceMap) -> np.ndarray:
        return torus_distance(f.apply(self.points[:-1]), self.points[1:])

    def to_json(self):
        return {
            "epsilon": self.epsilon,
            "points": [[float(a), float(b)] for a, b in self.points],
            "jumps": list(self.jumps),
        }

    @classmethod
    def from_json(cls, obj, f: SurfaceMap | None = None):
        po = cls(
            points=np.array(obj["points"], dtype=float),
            epsilon=float(obj["epsilon"]),
            jumps=[int(k) for k in obj["jumps"]],
        )
        if f is not None:
            po.validate(f)
        return po

    def csv_rows(self):
        """(step, x, y, jump_flag) rows; the flag marks z_{k+1} != f(z_k)."""
        jumpset = set(self.jumps)
        return [
            (k, float(p[0]), float(p[1]), int(k - 1 in jumpset))
            for k, p in enumerate(self.points)
        ]


@dataclass
class TransitionGraph:
    """Grid-discretized reachability structure of one map at one epsilon."""

    m: int
    epsilon: float
    samples_per_cell: int
    seed: int
    edges: sparse.csr_matrix          # dilated edge rule
    orbit_edges: sparse.csr_matrix    # exact image-cell edges (no dilation)

    @property
    def n_cells(self):
        return self.m * self.m

    def cell_of(self, p):
        p = wrap(p)
        i = np.minimum((p[..., 0] * self.m).astype(int), self.m - 1)
        j = np.minimum((p[..., 1] * self.m).astype(int), self.m - 1)
        return i * self.m + j

    def cell_center(self, c):
        c = np.asarray(c)
        i, j = c // self.m, c % self.m
        return np.stack([(i + 0.5) / self.m, (j + 0.5) / self.m], axis=-1)

    def cell_bounds(self, c):
        i, j = int(c) // self.m, int(c) % self.m
        return (i / self.m, j / self.m, (i + 1) / self.m, (j + 1) / self.m)

    def successors(self, c):
        return self.edges.indices[self.edges.indptr[c] : self.edges.indptr[c + 1]]

    @property
    def n_edges(self):
        return int(self.edges.nnz)


def _stratified_samples(m: int, per_cell: int, seed: int) -> np.ndarray:
    """per_cell seeded points in every grid cell; shape (m*m*per_cell, 2).

    Independent of epsilon, so enlarging epsilon with the same seed can
    only add edges (dilation monotonicity).
    """
    rng = np.random.default_rng(seed)
    offsets = rng.random((m * m, per_cell, 2))
    i, j = np.divmod(np.arange(m * m), m)
    base = np.stack([i, j], axis=-1)[:, None, :]
    return ((base + offsets) / m).reshape(-1, 2)


def build_graph(
    f: SurfaceMap, m: int, epsilon: float, samples: int = 2, seed: int = 0
) -> TransitionGraph:
    """Deterministic transition graph of f on the m x m grid.

    Edge (A, B) is present iff some stratified sample x in A has f(x)
    within epsilon + cell_radius of B's center; orbit edges record the
    cell of f(x) itself.
    """
    if m < 2:
        raise ValueError("grid resolution m must be >= 2")
    if samples < 1:
        raise ValueError("need at least one sample per cell")
    pts = _stratified_samples(m, samples, seed)
    src = np.repeat(np.arange(m * m), samples)
    img = f.apply(pts)

    cell_radius = np.sqrt(2.0) / (2.0 * m)
    reach = epsilon + cell_radius
    w = int(np.ceil(reach * m + 0.5))
    offs = np.arange(-w, w + 1)
    oi, oj = np.meshgrid(offs, offs, indexing="ij")
    oi = oi.ravel()
    oj = oj.ravel()

    ci = np.floor(img[:, 0] * m).astype(np.int64)
    cj = np.floor(img[:, 1] * m).astype(np.int64)
    fi = img[:, 0] * m - ci  # position within the cell, in cell units
    fj = img[:, 1] * m - cj

    n = m * m
    edge_codes = []
    chunk = max(1, 4_000_000 // len(oi))
    for lo in range(0, len(img), chunk):
        hi = min(len(img), lo + chunk)
        # distance from image to candidate cell centers, in cell units
        dx = (oi[None, :] + 0.5) - fi[lo:hi, None]
        dy = (oj[None, :] + 0.5) - fj[lo:hi, None]
        ok = dx * dx + dy * dy < (reach * m) ** 2
        rows, cols = np.nonzero(ok)
        ti = np.mod(ci[lo + rows] + oi[cols], m)
        tj = np.mod(cj[lo + rows] + oj[cols], m)
        edge_codes.append(src[lo + rows] * n + ti * m + tj)
    codes = np.unique(np.concatenate(edge_codes)) if edge_codes else np.empty(0, np.int64)
    rows, cols = np.divmod(codes, n)
    edges = sparse.csr_matrix(
        (np.ones(len(codes), dtype=bool), (rows, cols)), shape=(n, n)
    )

    orbit_codes = np.unique(src * n + np.mod(ci, m) * m + np.mod(cj, m))
    orows, ocols = np.divmod(orbit_codes, n)
    orbit_edges = sparse.csr_matrix(
        (np.ones(len(orbit_codes), dtype=bool), (orows, ocols)), shape=(n, n)
    )

    return TransitionGraph(
        m=m,
        epsilon=float(epsilon),
        samples_per_cell=int(samples),
        seed=int(seed),
        edges=edges,
        orbit_edges=orbit_edges,
    )


def chain_classes(graph: TransitionGraph) -> np.ndarray:
    """Strongly connected component label per cell."""
    _, labels = csgraph.connected_components(
        graph.edges, directed=True, connection="strong"
    )
    return labels


ORBIT_STEP_COST = 2e-3  # orbit steps are cheap but not free: 500 steps ~ 1 jump


def jump_distance_field(
    graph: TransitionGraph, target_cells, orbit_cost: float = ORBIT_STEP_COST
) -> np.ndarray:
    """Cost-to-reach-target field: jumps cost one, orbit steps orbit_cost.

    Dijkstra on the reversed combined graph, from one target cell or the
    minimum over several.  The positive orbit cost keeps a usable
    gradient: sampled orbit chains only predict real orbits for a few
    steps, so a plan that rides them for free would stall the
    point-level walk.
    """
    n = graph.n_cells
    er, ec = graph.edges.nonzero()
    orr, oc = graph.orbit_edges.nonzero()
    codes = np.concatenate([orr.astype(np.int64) * n + oc, er.astype(np.int64) * n + ec])
    weights = np.concatenate(
        [np.full(len(orr), orbit_cost), np.ones(len(er), dtype=float)]
    )
    order = np.lexsort((weights, codes))
    codes = codes[order]
    weights = weights[order]
    uniq, first = np.unique(codes, return_index=True)
    rows, cols = np.divmod(uniq, n)
    combined = sparse.csr_matrix((weights[first], (rows, cols)), shape=(n, n))
    targets = np.atleast_1d(np.asarray(target_cells, dtype=int))
    if len(targets) == 1:
        return csgraph.dijkstra(combined.T, indices=int(targets[0]))
    return csgraph.dijkstra(combined.T, indices=targets, min_only=True)


class RecurrenceError(RuntimeError):
    def __init__(self, msg, best_point=None, best_distance=None, best_time=None):
        super().__init__(msg)
        self.best_point = best_point
        self.best_distance = best_distance
        self.best_time = best_time


def find_recurrent_near(
    f: SurfaceMap,
    x,
    radius: float,
    max_iter: int,
    attempts: int = 4,
    seed: int = 0,
):
    """A point x' within radius of x whose orbit returns within radius of
    x' in at most max_iter steps; returns (x', return_time).

    Tries x itself first, then seeded jitters, all scanned in one batched
    orbit sweep.  Raises RecurrenceError carrying the best near-return
    seen when nothing qualifies.
    """
    x = wrap(np.asarray(x, dtype=float))
    rng = np.random.default_rng(seed)
    cands = [x]
    for _ in range(attempts - 1):
        cands.append(wrap(x + rng.uniform(-radius / 2, radius / 2, 2)))
    cands = np.array(cands)
    pos = cands.copy()
    alive = np.ones(len(cands), dtype=bool)
    best = (None, np.inf, None)
    for step in range(1, max_iter + 1):
        pos[alive] = f.apply(pos[alive])
        d = torus_distance(pos[alive], cands[alive])
        idx = np.nonzero(alive)[0]
        hit = d < radius
        if np.any(hit):
            k = idx[np.argmax(hit)]
            return cands[k].copy(), step
        jbest = np.argmin(d)
        if d[jbest] < best[1]:
            best = (cands[idx[jbest]].copy(), float(d[jbest]), step)
    raise RecurrenceError(
        f"no return within {radius} in {max_iter} iterations "
        f"(best miss {best[1]:.3g} at step {best[2]})",
        best_point=best[0],
        best_distance=best[1],
        best_time=best[2],
    )


class RealizationError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def _cells_within_reach(graph: TransitionGraph, p, eps: float):
    """Cells whose closed square lies within eps of the point p (exact).

    Returned as (flat torus cell index, unwrapped (i, j)); eps << 1/2
    keeps the local window torus-unambiguous.
    """
    m = graph.m
    w = int(np.ceil(eps * m + 1.0))
    ci = int(np.floor(p[0] * m))
    cj = int(np.floor(p[1] * m))
    offs = np.arange(-w, w + 1)
    ii, jj = np.meshgrid(ci + offs, cj + offs, indexing="ij")
    x0 = ii / m
    y0 = jj / m
    dx = np.maximum(np.maximum(x0 - p[0], p[0] - (x0 + 1.0 / m)), 0.0)
    dy = np.maximum(np.maximum(y0 - p[1], p[1] - (y0 + 1.0 / m)), 0.0)
    ok = dx * dx + dy * dy < eps * eps
    cells = np.mod(ii[ok], m) * m + np.mod(jj[ok], m)
    return cells, np.stack([ii[ok], jj[ok]], axis=-1)


def _project_into_cell(graph: TransitionGraph, p, cell_ij, margin: float):
    """Nearest point of the cell to p, pulled inside by the margin."""
    m = graph.m
    i, j = cell_ij
    x0, y0 = i / m, j / m
    x = np.clip(p[0], x0 + margin, x0 + 1.0 / m - margin)
    y = np.clip(p[1], y0 + margin, y0 + 1.0 / m - margin)
    return wrap(np.array([x, y]))


def _backward_orbit(f: SurfaceMap, q, max_back: int) -> np.ndarray:
    """[q, f^-1(q), ..., f^-k(q)], truncated where the inverse residual
    would register as a jump on the forward pass."""
    back = [q]
    if f.has_inverse:
        z = q
        for _ in range(max_back):
            znew = f.inverse(z)
            if torus_distance(f.apply(znew), z) > JUMP_THRESHOLD:
                break
            back.append(znew)
            z = znew
    return np.array(back)


def realize_pseudo_orbit(
    f: SurfaceMap,
    p,
    q,
    epsilon: float,
    graph: TransitionGraph,
    max_len: int | None = None,
    orbit_patience: int | None = None,
    max_back: int | None = None,
    seed: int = 0,
) -> PseudoOrbit:
    """Explicit pseudo-orbit from p to q with every jump below epsilon.

    Jumps are planned greedily against a cost field (orbit steps cheap,
    jumps cost one) targeting the backward orbit of q; the walk follows
    genuine orbit segments between jump sites and finishes by jumping
    onto some f^-k(q), whose forward orbit then lands on q exactly.
    When the field value stops improving for a long stretch (the sampled
    plan is not realizable from the current point) the walk takes a
    seeded exploratory jump to break out.  Every emitted step is
    validated against the exact residual definition at the end.
    """
    p = wrap(np.asarray(p, dtype=float))
    q = wrap(np.asarray(q, dtype=float))
    m = graph.m
    eps_eff = epsilon * (1.0 - 1e-9)
    margin = min(1.0 / (20.0 * m), epsilon / 10.0)
    if max_len is None:
        max_len = 400 * m
    if orbit_patience is None:
        orbit_patience = max(2000, int(8.0 / (np.pi * epsilon * epsilon)))
    if max_back is None:
        max_back = 8 * m

    back = _backward_orbit(f, q, max_back)
    target_cells = np.unique(graph.cell_of(back))
    dist = jump_distance_field(graph, target_cells)
    cp = int(graph.cell_of(p))
    if not np.isfinite(dist[cp]):
        labels = chain_classes(graph)
        cq = int(graph.cell_of(q))
        raise RealizationError(
            f"cell of q not reachable from cell of p: chain class {labels[cp]} "
            f"vs {labels[cq]}",
            diagnostics={"class_p": int(labels[cp]), "class_q": int(labels[cq])},
        )

    rng = np.random.default_rng(seed)
    pts = [p]
    z = p
    best_capture = np.inf
    stall = 0
    explore_after = max(200, orbit_patience // 8)
    while len(pts) <= max_len:
        fz = f.apply(z)
        d_back = torus_distance(fz, back)
        kbest = int(np.argmin(d_back))
        if d_back[kbest] < eps_eff:
            if kbest == 0:
                pts.append(q)
            else:
                pts.append(back[kbest])
                pts.extend(back[kbest - 1 :: -1])
            return PseudoOrbit.from_points(f, np.array(pts), epsilon)
        if d_back[kbest] < 0.9 * best_capture:
            best_capture = d_back[kbest]
            stall = 0
        else:
            stall += 1
        cells, raw_ij = _cells_within_reach(graph, fz, eps_eff - margin * np.sqrt(2.0))
        if stall > 0 and stall % explore_after == 0 and len(cells):
            # capture distance stopped shrinking: the sampled plan is not
            # realizable from here, hop to a seeded promising cell instead
            finite = np.isfinite(dist[cells])
            if np.any(finite):
                order = np.argsort(np.where(finite, dist[cells], np.inf))
                pick = order[int(rng.integers(0, min(8, int(np.sum(finite)))))]
                target = _project_into_cell(graph, fz, raw_ij[pick], margin)
                if torus_distance(fz, target) < eps_eff:
                    z = target
                    pts.append(z)
                    continue
        v_orbit = ORBIT_STEP_COST + dist[int(graph.cell_of(fz))]
        v_jump = np.inf
        jump_at = None
        if len(cells):
            dvals = dist[cells]
            k = int(np.argmin(dvals))
            if np.isfinite(dvals[k]):
                v_jump = 1.0 + float(dvals[k])
                jump_at = raw_ij[k]
        if jump_at is not None and v_jump < v_orbit:
            target = _project_into_cell(graph, fz, jump_at, margin)
            if torus_distance(fz, target) < eps_eff:
                z = target
            else:
                z = fz
        else:
            z = fz
        pts.append(z)
    raise RealizationError(
        f"pseudo-orbit exceeded the length budget {max_len}",
        diagnostics={
            "steps": len(pts),
            "last": pts[-1].tolist(),
            "best_capture": float(best_capture),
        },
    )
