"""Dyadic square tilings of bounded open planar sets.

An open set (a finite union of open axis-aligned rectangles) is tiled by
squares drawn from the standard dyadic grids T_n of size 2^-n, by the
inductive rule: a candidate square of T_n joins the tiling iff it and all
eight of its T_n neighbors are contained in the open set and it is not
already covered by a coarser chosen tile.

The construction guarantees, and the test corpus re-verifies:
  (T1) every tile is an axis-aligned dyadic square;
  (T2) if two tiles' 1.2-enlargements intersect, the tiles are adjacent;
  (T3) each tile has at most 12 adjacent tiles.

Tiles come with three enlargement ratios: 1.1 ("jump", the tolerance for
pseudo-orbit jumps that respect the tiling), 1.2 ("t2", the separation
scale of (T2)), and 1.5 ("support", the room a perturbation supported
near a tile's pair of points may occupy).

Geometry on tiles is exact: tile comparisons are integer arithmetic after
scaling to the finest level, and cell-in-open-set tests decide coverage
of a closed square by a union of open rectangles via exact rectangle
subtraction (degenerate slivers included, so jointly-covered-but-
boundary-exposed cells are classified correctly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENLARGE_RATIOS = {"jump": 1.1, "t2": 1.2, "support": 1.5}

# exact rational forms of the ratios, as (numerator, denominator)
_RATIO_FRACTIONS = {"jump": (11, 10), "t2": (6, 5), "support": (3, 2)}


@dataclass(frozen=True, order=True)
class Tile:
    """Closed square [i 2^-n, (i+1) 2^-n] x [j 2^-n, (j+1) 2^-n]."""

    level: int
    i: int
    j: int

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def x0(self) -> float:
        return self.i * self.side

    @property
    def y0(self) -> float:
        return self.j * self.side

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.i + 0.5) * self.side, (self.j + 0.5) * self.side])

    def bounds(self):
        s = self.side
        return (self.i * s, self.j * s, (self.i + 1) * s, (self.j + 1) * s)

    def enlarged_bounds(self, ratio_kind: str):
        """Closed square with the same center, scaled by the named ratio."""
        ratio = ENLARGE_RATIOS[ratio_kind]
        half = 0.5 * ratio * self.side
        cx = (self.i + 0.5) * self.side
        cy = (self.j + 0.5) * self.side
        return (cx - half, cy - half, cx + half, cy + half)

    def contains(self, p) -> bool:
        """Half-open membership: [x0, x0 + side) x [y0, y0 + side)."""
        x, y = float(p[0]), float(p[1])
        s = self.side
        return (
            self.i * s <= x < (self.i + 1) * s and self.j * s <= y < (self.j + 1) * s
        )

    def enlarged_contains(self, p, ratio_kind: str) -> bool:
        x0, y0, x1, y1 = self.enlarged_bounds(ratio_kind)
        x, y = float(p[0]), float(p[1])
        return x0 <= x <= x1 and y0 <= y <= y1


def tiles_adjacent(a: Tile, b: Tile) -> bool:
    """Closures intersect (edge or corner), decided in integer arithmetic."""
    lmax = max(a.level, b.level)
    fa = 1 << (lmax - a.level)
    fb = 1 << (lmax - b.level)
    ax0, ax1 = a.i * fa, (a.i + 1) * fa
    ay0, ay1 = a.j * fa, (a.j + 1) * fa
    bx0, bx1 = b.i * fb, (b.i + 1) * fb
    by0, by1 = b.j * fb, (b.j + 1) * fb
    return ax0 <= bx1 and bx0 <= ax1 and ay0 <= by1 and by0 <= ay1


def _subtract_open_rect(piece, rect):
    """Closed piece minus an open rectangle, as a list of closed pieces.

    Degenerate pieces (zero width or height) are kept: they are boundary
    slivers that open rectangles cannot cover.
    """
    a, c, b, d = piece     # [a, b] x [c, d], a <= b, c <= d
    p, r, q, s = rect      # (p, q) x (r, s)
    if not (p < b and a < q and r < d and c < s):
        return [piece]
    out = []
    if a <= p <= b:
        out.append((a, c, p, d))
    if a <= q <= b:
        out.append((q, c, b, d))
    mx0, mx1 = max(a, p), min(b, q)
    if mx0 <= mx1:
        if c <= r <= d:
            out.append((mx0, c, mx1, r))
        if c <= s <= d:
            out.append((mx0, s, mx1, d))
    return out


def closed_rect_in_open_union(piece, rects) -> bool:
    """Exact test: is the closed rectangle covered by the union of open ones?"""
    pieces = [piece]
    for rect in rects:
        nxt = []
        for pc in pieces:
            nxt.extend(_subtract_open_rect(pc, rect))
        pieces = nxt
        if not pieces:
            return True
    return not pieces


def _erode8(mask: np.ndarray) -> np.ndarray:
    """Cell survives iff it and its eight grid neighbors are set."""
    if mask.size == 0:
        return mask
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    out = np.ones_like(mask)
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            out &= padded[di : di + mask.shape[0], dj : dj + mask.shape[1]]
    return out


@dataclass
class TiledDomain:
    """A tiled open set: rectangles of U plus the chosen dyadic tiles."""

    rects: list
    n_min: int
    n_max: int
    tiles: list = field(default_factory=list)
    ratios: dict = field(default_factory=lambda: dict(ENLARGE_RATIOS))

    def __post_init__(self):
        self._index = {}
        for idx, t in enumerate(self.tiles):
            self._index[(t.level, t.i, t.j)] = idx
        self._levels = sorted({t.level for t in self.tiles})

    @property
    def levels(self):
        return list(self._levels)

    def tile_containing(self, p):
        """The unique tile whose half-open square contains p, or None."""
        x, y = float(p[0]), float(p[1])
        for n in self._levels:
            scale = 2.0 ** n
            key = (n, int(np.floor(x * scale)), int(np.floor(y * scale)))
            idx = self._index.get(key)
            if idx is not None:
                return self.tiles[idx]
        return None

    def tiles_near(self, p, reach_cells: int = 1):
        """Tiles whose grid cell is within reach_cells of p, per level."""
        x, y = float(p[0]), float(p[1])
        found = []
        for n in self._levels:
            scale = 2.0 ** n
            ci = int(np.floor(x * scale))
            cj = int(np.floor(y * scale))
            for di in range(-reach_cells, reach_cells + 1):
                for dj in range(-reach_cells, reach_cells + 1):
                    idx = self._index.get((n, ci + di, cj + dj))
                    if idx is not None:
                        found.append(self.tiles[idx])
        return found

    def same_enlarged_tile(self, p, q, ratio_kind: str):
        """The first tile whose enlargement contains both points, or None."""
        if ratio_kind not in ENLARGE_RATIOS:
            raise ValueError(f"unknown ratio kind {ratio_kind!r}")
        for t in self.tiles_near(p, reach_cells=1):
            if t.enlarged_contains(p, ratio_kind) and t.enlarged_contains(q, ratio_kind):
                return t
        return None

    def adjacency(self, tile: Tile):
        """All domain tiles whose closures intersect the tile's closure."""
        if (tile.level, tile.i, tile.j) not in self._index:
            raise ValueError("tile not in domain")
        out = []
        for t in self.tiles:
            if t is tile or t == tile:
                continue
            if tiles_adjacent(t, tile):
                out.append(t)
        return out

    # -- invariants ------------------------------------------------------

    def check_t1(self):
        """Axis-aligned dyadic squares by construction; re-check types."""
        for t in self.tiles:
            if not (isinstance(t.level, int) and t.level >= 0):
                raise ValueError(f"bad tile level {t}")
        return True

    def _integer_geometry(self):
        """Centers and half-sides in exact integer units of 2^-(L+1)/5."""
        L = max(self._levels) if self._levels else 0
        n = len(self.tiles)
        cx = np.empty(n, dtype=np.int64)
        cy = np.empty(n, dtype=np.int64)
        half = np.empty(n, dtype=np.int64)
        for k, t in enumerate(self.tiles):
            f = 1 << (L - t.level)
            cx[k] = (2 * t.i + 1) * f * 5
            cy[k] = (2 * t.j + 1) * f * 5
            half[k] = f * 5
        return cx, cy, half

    def check_t2(self):
        """Exhaustive: 1.2-enlarged intersection implies adjacency (exact)."""
        num, den = _RATIO_FRACTIONS["t2"]
        cx, cy, half = self._integer_geometry()
        ehalf = half * num // den  # half is 5f, enlarged is 6f, both exact
        n = len(self.tiles)
        step = max(1, 2_000_000 // max(n, 1))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            ix = np.abs(cx[lo:hi, None] - cx[None, :]) <= ehalf[lo:hi, None] + ehalf[None, :]
            iy = np.abs(cy[lo:hi, None] - cy[None, :]) <= ehalf[lo:hi, None] + ehalf[None, :]
            touch_x = np.abs(cx[lo:hi, None] - cx[None, :]) <= half[lo:hi, None] + half[None, :]
            touch_y = np.abs(cy[lo:hi, None] - cy[None, :]) <= half[lo:hi, None] + half[None, :]
            bad = (ix & iy) & ~(touch_x & touch_y)
            if np.any(bad):
                a, b = np.argwhere(bad)[0]
                raise AssertionError(f"(T2) violated by tiles {lo + a} and {b}")
        return True

    def max_adjacency(self) -> int:
        """Largest neighbor count over all tiles (exact integer checks)."""
        cx, cy, half = self._integer_geometry()
        worst = 0
        n = len(self.tiles)
        for k in range(n):
            tx = np.abs(cx - cx[k]) <= half + half[k]
            ty = np.abs(cy - cy[k]) <= half + half[k]
            worst = max(worst, int(np.sum(tx & ty)) - 1)
        return worst

    def check_t3(self, bound: int = 12):
        worst = self.max_adjacency()
        if worst > bound:
            raise AssertionError(f"(T3) violated: {worst} > {bound}")
        return True

    def check_tiles_inside(self):
        """Every closed tile is contained in the open union."""
        for t in self.tiles:
            x0, y0, x1, y1 = t.bounds()
            if not closed_rect_in_open_union(
                (x0, y0, x1, y1), [(r[0], r[1], r[2], r[3]) for r in self.rects]
            ):
                raise AssertionError(f"tile {t} not inside the open set")
        return True

    def check_disjoint_interiors(self):
        """Pairwise disjoint interiors (dyadic nesting makes this integral)."""
        seen = set()
        L = max(self._levels) if self._levels else 0
        for t in self.tiles:
            f = 1 << (L - t.level)
            for a in range(t.i * f, (t.i + 1) * f):
                for b in range(t.j * f, (t.j + 1) * f):
                    if (a, b) in seen:
                        raise AssertionError(f"tile {t} overlaps a prior tile")
                    seen.add((a, b))
        return True

    def check_all(self):
        self.check_t1()
        self.check_tiles_inside()
        self.check_t2()
        self.check_t3()
        return True

    # -- serialization ----------------------------------------------------

    def to_json(self):
        return {
            "rects": [[float(v) for v in r] for r in self.rects],
            "n_min": int(self.n_min),
            "n_max": int(self.n_max),
            "ratios": {k: float(v) for k, v in self.ratios.items()},
            "tiles": [[t.level, t.i, t.j] for t in self.tiles],
        }

    @classmethod
    def from_json(cls, obj):
        dom = cls(
            rects=[tuple(r) for r in obj["rects"]],
            n_min=int(obj["n_min"]),
            n_max=int(obj["n_max"]),
            tiles=[Tile(int(n), int(i), int(j)) for n, i, j in obj["tiles"]],
            ratios={k: float(v) for k, v in obj.get("ratios", ENLARGE_RATIOS).items()},
        )
        dom.check_t1()
        return dom

    def squares_csv_rows(self):
        """Rows (level, x0, y0, side) ready for an SVG-style renderer."""
        return [(t.level, t.x0, t.y0, t.side) for t in self.tiles]


def tile_open_set(rects, n_min: int, n_max: int) -> TiledDomain:
    """Tile a finite union of open rectangles by the inductive dyadic rule.

    A square of T_n is chosen iff it and its eight T_n-neighbors lie in
    the open set and no coarser chosen square already covers it.  Tiles
    are emitted coarsest level first, row-major within a level, so equal
    inputs produce identical tilings.
    """
    if n_max < n_min:
        raise ValueError("n_max must be >= n_min")
    rects = [tuple(float(v) for v in r) for r in rects]
    for x0, y0, x1, y1 in rects:
        if not (x0 < x1 and y0 < y1):
            raise ValueError("rectangles must be nonempty open boxes")
    if not rects:
        return TiledDomain(rects=[], n_min=n_min, n_max=n_max, tiles=[])

    gx0 = min(r[0] for r in rects)
    gy0 = min(r[1] for r in rects)
    gx1 = max(r[2] for r in rects)
    gy1 = max(r[3] for r in rects)

    tiles = []
    covered = None        # boolean grid at the current level
    cov_off = (0, 0)      # index offset of covered[0, 0]

    for n in range(n_min, n_max + 1):
        scale = 2.0 ** n
        i0 = int(np.floor(gx0 * scale)) - 1
        i1 = int(np.ceil(gx1 * scale)) + 1
        j0 = int(np.floor(gy0 * scale)) - 1
        j1 = int(np.ceil(gy1 * scale)) + 1
        ni, nj = i1 - i0, j1 - j0
        inside = np.zeros((ni, nj), dtype=bool)

        # cells strictly inside a single open rectangle (vectorized, exact)
        for x0, y0, x1, y1 in rects:
            lo_i = int(np.floor(x0 * scale)) + 1
            hi_i = int(np.ceil(x1 * scale)) - 1   # cells [i, i+1] with i+1 <= ceil-1
            lo_j = int(np.floor(y0 * scale)) + 1
            hi_j = int(np.ceil(y1 * scale)) - 1
            # tighten: require i/scale > x0 and (i+1)/scale < x1 exactly
            while lo_i / scale <= x0:
                lo_i += 1
            while hi_i / scale >= x1:
                hi_i -= 1
            while lo_j / scale <= y0:
                lo_j += 1
            while hi_j / scale >= y1:
                hi_j -= 1
            if lo_i <= hi_i - 1 and lo_j <= hi_j - 1:
                inside[
                    max(lo_i - i0, 0) : max(hi_i - i0, 0),
                    max(lo_j - j0, 0) : max(hi_j - j0, 0),
                ] = True

        # cells touching the union but not single-rect certified: exact test
        candidates = np.zeros((ni, nj), dtype=bool)
        for x0, y0, x1, y1 in rects:
            a0 = max(int(np.floor(x0 * scale)) - i0, 0)
            a1 = min(int(np.ceil(x1 * scale)) - i0, ni)
            b0 = max(int(np.floor(y0 * scale)) - j0, 0)
            b1 = min(int(np.ceil(y1 * scale)) - j0, nj)
            candidates[a0:a1, b0:b1] = True
        pending = np.argwhere(candidates & ~inside)
        for a, b in pending:
            i = i0 + int(a)
            j = j0 + int(b)
            piece = (i / scale, j / scale, (i + 1) / scale, (j + 1) / scale)
            if closed_rect_in_open_union(piece, rects):
                inside[a, b] = True

        eligible = _erode8(inside)

        # project coarser coverage onto this grid
        if covered is None:
            cov_here = np.zeros((ni, nj), dtype=bool)
        else:
            prev_i0, prev_j0 = cov_off
            cov_here = np.zeros((ni, nj), dtype=bool)
            up = np.repeat(np.repeat(covered, 2, axis=0), 2, axis=1)
            ui0, uj0 = 2 * prev_i0, 2 * prev_j0
            src_i0 = max(i0, ui0)
            src_i1 = min(i1, ui0 + up.shape[0])
            src_j0 = max(j0, uj0)
            src_j1 = min(j1, uj0 + up.shape[1])
            if src_i0 < src_i1 and src_j0 < src_j1:
                cov_here[
                    src_i0 - i0 : src_i1 - i0, src_j0 - j0 : src_j1 - j0
                ] = up[src_i0 - ui0 : src_i1 - ui0, src_j0 - uj0 : src_j1 - uj0]

        new = eligible & ~cov_here
        for a, b in np.argwhere(new):
            tiles.append(Tile(n, i0 + int(a), j0 + int(b)))

        covered = cov_here | new
        cov_off = (i0, j0)

    return TiledDomain(rects=rects, n_min=n_min, n_max=n_max, tiles=tiles)
