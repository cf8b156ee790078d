"""Planar geometry for graph element networks: grids, nearest-site lookup, Delaunay."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EPS = 1e-12
INF = -1  # the symbolic super-vertex; triangles holding it are "ghosts"


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -0.1
    x_max: float = 0.1
    y_min: float = -0.1
    y_max: float = 0.1
    rows: int = 5
    cols: int = 5

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError("grid bounds must satisfy min < max")
        if self.rows < 1 or self.cols < 1:
            raise GeometryError("grid needs at least one row and one column")

    def scaled(self, sx: float, sy: float) -> "GridSpec":
        return GridSpec(self.x_min * sx, self.x_max * sx, self.y_min * sy, self.y_max * sy, self.rows, self.cols)


@dataclass(frozen=True)
class Triangulation:
    points: np.ndarray  # (n, 2)
    triangles: tuple[tuple[int, int, int], ...]  # counter-clockwise
    edges: tuple[tuple[int, int], ...]  # i < j, sorted


def nearest_node(points, query) -> int:
    """Index of the closest point; the lowest index wins ties."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise GeometryError("nearest_node needs at least one point")
    d2 = ((pts - np.asarray(query, dtype=np.float64)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def _axis(lo, hi, n):
    if n == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, n)


def grid_topology(spec: GridSpec) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Evenly spaced lattice (corners included), row-major, 4-neighbour undirected edges."""
    xs = _axis(spec.x_min, spec.x_max, spec.cols)
    ys = _axis(spec.y_min, spec.y_max, spec.rows)
    points = np.array([(x, y) for y in ys for x in xs])
    edges = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            i = r * spec.cols + c
            if c + 1 < spec.cols:
                edges.append((i, i + 1))
            if r + 1 < spec.rows:
                edges.append((i, i + spec.cols))
    return points, sorted(edges)


def orient(a, b, c) -> float:
    """Twice the signed area of (a, b, c); positive when counter-clockwise."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def incircle(a, b, c, d) -> float:
    """Positive when d lies inside the circumcircle of the counter-clockwise triangle abc."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )


def _on_open_segment(a, b, p) -> bool:
    return min(a[0], b[0]) - EPS <= p[0] <= max(a[0], b[0]) + EPS and \
        min(a[1], b[1]) - EPS <= p[1] <= max(a[1], b[1]) + EPS and \
        not (np.allclose(p, a, atol=EPS) or np.allclose(p, b, atol=EPS))


def delaunay(points: Sequence) -> Triangulation:
    """Bowyer-Watson insertion.

    The enclosing super-triangle is taken to infinity: hull edges carry a
    ghost triangle (a, b, INF) whose "circumcircle" is the open half-plane
    to the left of a->b plus the open segment itself. This keeps hull
    edges exact, which a finite super-triangle does not guarantee.
    """
    raw = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(raw)
    if n < 3:
        raise GeometryError(f"delaunay needs at least 3 points, got {n}")
    if not np.all(np.isfinite(raw)):
        raise GeometryError("non-finite coordinates")
    # predicates run in a unit-scaled frame so EPS is meaningful
    lo = raw.min(axis=0)
    span = float((raw.max(axis=0) - lo).max())
    if span == 0.0:
        raise GeometryError("all points coincide")
    pts = (raw - lo) / span
    if len({tuple(p) for p in pts.tolist()}) != n:
        raise GeometryError("duplicate points")

    first = None
    for k in range(2, n):
        if abs(orient(pts[0], pts[1], pts[k])) > EPS:
            first = k
            break
    if first is None:
        # pts[0] and pts[1] may coincide in direction with everything else
        raise GeometryError("all points are collinear")

    a, b, c = 0, 1, first
    if orient(pts[a], pts[b], pts[c]) < 0:
        b, c = c, b
    tris: set[tuple[int, int, int]] = {(a, b, c), (b, a, INF), (c, b, INF), (a, c, INF)}

    def conflicts(t, p) -> bool:
        i, j, k = t
        if k == INF:
            o = orient(pts[i], pts[j], p)
            if o > EPS:
                return True
            return abs(o) <= EPS and _on_open_segment(pts[i], pts[j], p)
        return incircle(pts[i], pts[j], pts[k], p) > EPS

    for q in range(n):
        if q in (a, b, c):
            continue
        p = pts[q]
        bad = [t for t in tris if conflicts(t, p)]
        bad_edges = set()
        for i, j, k in bad:
            bad_edges.update([(i, j), (j, k), (k, i)])
        for t in bad:
            tris.discard(t)
        for i, j, k in bad:
            for u, v in ((i, j), (j, k), (k, i)):
                if (v, u) in bad_edges:
                    continue
                # canonical rotation keeps INF last
                if u == INF:
                    tris.add((v, q, INF))
                elif v == INF:
                    tris.add((q, u, INF))
                else:
                    tris.add((u, v, q))

    real = sorted(_canonical(t) for t in tris if INF not in t)
    edges = sorted({tuple(sorted(e)) for i, j, k in real for e in ((i, j), (j, k), (k, i))})
    return Triangulation(raw.copy(), tuple(real), tuple(edges))


def _canonical(t):
    # rotate so the smallest index leads, preserving orientation
    k = t.index(min(t))
    return t[k:] + t[:k]


def convex_hull_area(points) -> float:
    """Monotone-chain hull area."""
    pts = sorted(map(tuple, np.asarray(points, dtype=np.float64).tolist()))
    if len(pts) < 3:
        return 0.0

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and orient(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    hull = chain(pts)[:-1] + chain(pts[::-1])[:-1]
    area = 0.0
    for i in range(len(hull)):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % len(hull)]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0


def triangulation_area(tri: Triangulation) -> float:
    p = tri.points
    return sum(abs(orient(p[i], p[j], p[k])) / 2.0 for i, j, k in tri.triangles)
