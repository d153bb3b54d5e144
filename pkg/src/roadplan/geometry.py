"""Planar convex-polygon primitives.

Everything the reachable-set recursion and the collision checks need:
separating-axis intersection tests, halfplane clipping, affine maps,
Minkowski sums with a centered segment, convex hulls and point containment.
Degenerate polygons (a single point, a segment) are first-class citizens
because the recursion starts from a point set.
"""

from __future__ import annotations

import numpy as np

_MERGE_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometric construction (non-convex input, singular map, ...)."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts.reshape(1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"expected (n, 2) points, got shape {pts.shape}")
    return pts


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    acc = float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))
    acc += float(x[-1] * y[0] - x[0] * y[-1])
    return 0.5 * acc


def _merge_duplicates(pts: np.ndarray, tol: float = _MERGE_TOL) -> np.ndarray:
    if len(pts) <= 1:
        return pts
    gaps = np.max(np.abs(np.diff(pts, axis=0)), axis=1)
    keep = np.concatenate([[True], gaps > tol])
    pts = pts[keep]
    # wrap-around duplicate
    if len(pts) > 1 and np.max(np.abs(pts[-1] - pts[0])) <= tol:
        pts = pts[:-1]
    return pts


def _drop_collinear(pts: np.ndarray, tol: float = _MERGE_TOL) -> np.ndarray:
    # removes vertices whose adjacent edges are collinear; loops until stable
    while len(pts) >= 3:
        prv = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        v1 = pts - prv
        v2 = nxt - pts
        cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
        scale = np.maximum(1.0, np.hypot(v1[:, 0], v1[:, 1]) * np.hypot(v2[:, 0], v2[:, 1]))
        collinear = np.abs(cross) <= tol * scale
        if not collinear.any():
            break
        # drop alternating collinear vertices to keep neighbors of dropped ones
        drop = np.zeros(len(pts), dtype=bool)
        skip_next = False
        for i in range(len(pts)):
            if collinear[i] and not skip_next:
                drop[i] = True
                skip_next = True
            else:
                skip_next = False
        pts = pts[~drop]
    return pts


class ConvexPolygon:
    """Convex region bounded by CCW-ordered vertices.

    One vertex encodes a point, two a segment; these show up naturally when
    reachable sets collapse under clipping.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        pts = _merge_duplicates(_as_points(vertices))
        if len(pts) == 0:
            raise GeometryError("polygon needs at least one vertex")
        if len(pts) >= 3:
            area = _signed_area(pts)
            if area < 0.0:
                pts = pts[::-1]
            pts = _drop_collinear(pts)
        if len(pts) >= 3:
            self._check_convex(pts)
        self.vertices = np.ascontiguousarray(pts)
        self.vertices.setflags(write=False)

    @staticmethod
    def _check_convex(pts: np.ndarray) -> None:
        v1 = pts - np.concatenate([pts[-1:], pts[:-1]], axis=0)
        v2 = np.concatenate([pts[1:], pts[:1]], axis=0) - pts
        cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
        scale = np.maximum(1.0, np.hypot(v1[:, 0], v1[:, 1]) * np.hypot(v2[:, 0], v2[:, 1]))
        if np.any(cross < -1e-9 * scale):
            raise GeometryError("vertices do not describe a convex polygon")

    @classmethod
    def _wrap(cls, pts: np.ndarray) -> "ConvexPolygon":
        # internal fast path for arrays that are already clean
        poly = object.__new__(cls)
        pts = np.ascontiguousarray(pts, dtype=float)
        pts.setflags(write=False)
        poly.vertices = pts
        return poly

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()})"

    @property
    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        return _signed_area(self.vertices)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        if len(v) < 3:
            return v.mean(axis=0)
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        if abs(a) < 1e-14:
            return v.mean(axis=0)
        cx = np.sum((x + xn) * cross) / (6.0 * a)
        cy = np.sum((y + yn) * cross) / (6.0 * a)
        return np.array([cx, cy])

    def translate(self, offset) -> "ConvexPolygon":
        return ConvexPolygon._wrap(self.vertices + np.asarray(offset, dtype=float))

    def project_onto(self, axis) -> tuple[float, float]:
        dots = self.vertices @ np.asarray(axis, dtype=float)
        return float(dots.min()), float(dots.max())

    def contains_point(self, p, tol: float = 1e-9) -> bool:
        v = self.vertices
        p = np.asarray(p, dtype=float)
        if len(v) == 1:
            return bool(np.hypot(*(p - v[0])) <= tol)
        if len(v) == 2:
            return point_segment_distance(p, v[0], v[1]) <= tol
        nxt = np.roll(v, -1, axis=0)
        edges = nxt - v
        rel = p[None, :] - v
        cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        return bool(np.all(cross >= -tol * np.maximum(lengths, 1e-12)))

    def contains_points(self, pts, tol: float = 1e-9) -> np.ndarray:
        """Vectorized containment for an (m, 2) array of points."""
        v = self.vertices
        pts = np.asarray(pts, dtype=float)
        if len(v) == 1:
            return np.hypot(pts[:, 0] - v[0, 0], pts[:, 1] - v[0, 1]) <= tol
        if len(v) == 2:
            return np.array([point_segment_distance(p, v[0], v[1]) <= tol for p in pts])
        nxt = np.roll(v, -1, axis=0)
        edges = nxt - v
        lengths = np.maximum(np.hypot(edges[:, 0], edges[:, 1]), 1e-12)
        rel = pts[:, None, :] - v[None, :, :]
        cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
        return np.all(cross >= -tol * lengths[None, :], axis=1)

    def closest_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.contains_point(p):
            return p.copy()
        v = self.vertices
        if len(v) == 1:
            return v[0].copy()
        best, best_d = v[0], np.inf
        m = len(v) if len(v) >= 3 else 1
        for i in range(m):
            a, b = v[i], v[(i + 1) % len(v)]
            cand = _project_to_segment(p, a, b)
            d = float(np.hypot(*(p - cand)))
            if d < best_d:
                best, best_d = cand, d
        return best


def _project_to_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-30:
        return a.copy()
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return a + t * ab


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(*(p - _project_to_segment(p, a, b))))


def convex_hull(points) -> ConvexPolygon:
    """Convex hull via the monotone chain; collinear hull points are dropped."""
    pts = _as_points(points)
    pts = np.unique(pts, axis=0)
    if len(pts) == 1:
        return ConvexPolygon._wrap(pts)
    # np.unique sorts lexicographically already

    def half(seq):
        chain = []
        for q in seq:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                cross = (a[0] - o[0]) * (q[1] - o[1]) - (a[1] - o[1]) * (q[0] - o[0])
                if cross <= 1e-12:
                    chain.pop()
                else:
                    break
            chain.append(q)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 2:
        hull = np.array([pts[0], pts[-1]])
    # the monotone chain emits a CCW, strictly convex ring
    return ConvexPolygon._wrap(hull)


def _sat_axes(a: ConvexPolygon, b: ConvexPolygon) -> np.ndarray:
    axes = []
    degenerate = len(a) < 3 or len(b) < 3
    for poly in (a, b):
        v = poly.vertices
        if len(v) < 2:
            continue
        edges = np.roll(v, -1, axis=0) - v
        if len(v) == 2:
            edges = edges[:1]
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        axes.append(normals)
        if degenerate:
            axes.append(edges)
    if not axes:
        return np.zeros((0, 2))
    ax = np.concatenate(axes, axis=0)
    norms = np.hypot(ax[:, 0], ax[:, 1])
    ok = norms > 1e-12
    return ax[ok] / norms[ok, None]


def polygons_intersect(a: ConvexPolygon, b: ConvexPolygon) -> bool:
    """Separating-axis test for closed convex regions; touching counts."""
    if len(a) == 1 and len(b) == 1:
        return bool(np.max(np.abs(a.vertices[0] - b.vertices[0])) <= 1e-12)
    for axis in _sat_axes(a, b):
        lo_a, hi_a = a.project_onto(axis)
        lo_b, hi_b = b.project_onto(axis)
        if hi_a < lo_b or hi_b < lo_a:
            return False
    return True


def affine_transform(a: ConvexPolygon, matrix) -> ConvexPolygon:
    """Image of the polygon under an invertible linear map, re-oriented CCW."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (2, 2):
        raise GeometryError(f"expected a 2x2 matrix, got {m.shape}")
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-12:
        raise GeometryError("singular transform matrix")
    pts = a.vertices @ m.T
    if det < 0:
        pts = pts[::-1]
    # invertible linear maps preserve convexity and (after the flip) order
    return ConvexPolygon._wrap(pts)


def minkowski_segment(a: ConvexPolygon, direction, r: float) -> ConvexPolygon:
    """Minkowski sum of the polygon with the segment {t * direction : |t| <= r}."""
    if r < 0:
        raise GeometryError("segment half-extent must be nonnegative")
    offset = r * np.asarray(direction, dtype=float)
    if np.max(np.abs(offset)) <= 1e-15:
        return a
    shifted = np.concatenate([a.vertices + offset, a.vertices - offset], axis=0)
    return convex_hull(shifted)


def clip_halfplane(a: ConvexPolygon, normal, offset: float) -> ConvexPolygon | None:
    """Intersection with the halfplane {x : normal . x <= offset}; None if empty."""
    n = np.asarray(normal, dtype=float)
    v = a.vertices
    d = v @ n - offset
    if np.all(d <= 1e-12):
        return a
    inside = d <= 0.0
    if not inside.any():
        return None
    if len(v) == 1:
        return a if inside[0] else None
    if len(v) == 2:
        out = [v[i] for i in range(2) if inside[i]]
        if d[0] * d[1] < 0.0:
            t = d[0] / (d[0] - d[1])
            out.append(v[0] + t * (v[1] - v[0]))
        return ConvexPolygon(np.array(out)) if out else None
    m = len(v)
    nxt = np.concatenate([np.arange(1, m), [0]])
    crossing = inside != inside[nxt]
    cross_idx = np.nonzero(crossing)[0]
    if len(cross_idx) == 2:
        # convex region: the inside vertices form one contiguous cyclic run
        i_exit = cross_idx[0] if inside[cross_idx[0]] else cross_idx[1]
        i_entry = cross_idx[1] if inside[cross_idx[0]] else cross_idx[0]
        t_exit = d[i_exit] / (d[i_exit] - d[nxt[i_exit]])
        p_exit = v[i_exit] + t_exit * (v[nxt[i_exit]] - v[i_exit])
        t_entry = d[i_entry] / (d[i_entry] - d[nxt[i_entry]])
        p_entry = v[i_entry] + t_entry * (v[nxt[i_entry]] - v[i_entry])
        run_start = (i_entry + 1) % m
        run_len = (i_exit - run_start) % m + 1
        run = v[(run_start + np.arange(run_len)) % m]
        out = np.concatenate([run, [p_exit, p_entry]], axis=0)
    else:
        # tangency or numerical ties: fall back to the plain scan
        pieces = []
        for i in range(m):
            j = (i + 1) % m
            if inside[i]:
                pieces.append(v[i])
            if (d[i] < 0.0 < d[j]) or (d[j] < 0.0 < d[i]):
                t = d[i] / (d[i] - d[j])
                pieces.append(v[i] + t * (v[j] - v[i]))
        if not pieces:
            return None
        out = np.array(pieces)
    pts = _drop_collinear(_merge_duplicates(out))
    if len(pts) == 0:
        return None
    # clipping a CCW convex region leaves a CCW convex region
    return ConvexPolygon._wrap(pts)


def oriented_box(cx: float, cy: float, psi: float, length: float, width: float) -> ConvexPolygon:
    """Rectangle of the given extents centered at (cx, cy), rotated by psi."""
    c, s = np.cos(psi), np.sin(psi)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return ConvexPolygon._wrap(local @ rot.T + np.array([cx, cy]))


def points_in_ring(ring, pts, tol: float = 1e-9) -> np.ndarray:
    """Closed membership of points in a simple (possibly non-convex) polygon.

    `ring` is the boundary vertex list without a repeated closing vertex.
    Points on the boundary count as inside.
    """
    ring = _as_points(ring)
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts.reshape(1, 2)
    a = ring
    b = np.roll(ring, -1, axis=0)
    ab = b - a
    # boundary test: distance from each point to each edge
    ap = pts[:, None, :] - a[None, :, :]
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-30)
    t = np.clip(np.einsum("pij,ij->pi", ap, ab) / denom[None, :], 0.0, 1.0)
    foot = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    dist = np.hypot(pts[:, None, 0] - foot[:, :, 0], pts[:, None, 1] - foot[:, :, 1])
    on_edge = np.any(dist <= tol, axis=1)
    # crossing-number parity for the rest
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    ya, yb = a[None, :, 1], b[None, :, 1]
    xa, xb = a[None, :, 0], b[None, :, 0]
    cond = (ya <= y) != (yb <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = xa + (y - ya) * (xb - xa) / (yb - ya)
    crossings = np.sum(cond & (x < x_cross), axis=1)
    inside = (crossings % 2 == 1) | on_edge
    return inside[0] if single else inside


def point_in_ring(ring, p, tol: float = 1e-9) -> bool:
    return bool(points_in_ring(ring, p, tol))
