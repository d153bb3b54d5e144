"""Curvilinear (arc length / lateral offset) frames over reference polylines."""

from __future__ import annotations

import numpy as np

from .geometry import GeometryError, _merge_duplicates


class ProjectionError(ValueError):
    """A point could not be mapped uniquely into the frame's coordinates."""


class CurvilinearFrame:
    """Arc-length parametrized polyline with tangents, left normals and curvature.

    Coordinates are (s, d): s is the arc length of the closest-point projection
    onto the reference, d the signed lateral offset, positive to the left of
    the direction of travel.
    """

    def __init__(self, reference):
        pts = _merge_duplicates(np.asarray(reference, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError("reference polyline needs at least 2 distinct vertices")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 1e-12):
            raise GeometryError("reference polyline has duplicate consecutive vertices")
        self.reference = pts
        self.seg_len = seg_len
        self.cum_len = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.tangents = seg / seg_len[:, None]
        self.normals = np.stack([-self.tangents[:, 1], self.tangents[:, 0]], axis=1)
        self.curvature = self._vertex_curvature(pts)

    @staticmethod
    def _vertex_curvature(pts: np.ndarray) -> np.ndarray:
        # signed curvature from the circumscribed circle of vertex triples
        n = len(pts)
        kappa = np.zeros(n)
        if n < 3:
            return kappa
        v1 = pts[1:-1] - pts[:-2]
        v2 = pts[2:] - pts[1:-1]
        chord = pts[2:] - pts[:-2]
        cross = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
        denom = (
            np.hypot(v1[:, 0], v1[:, 1])
            * np.hypot(v2[:, 0], v2[:, 1])
            * np.hypot(chord[:, 0], chord[:, 1])
        )
        good = denom > 1e-30
        kappa[1:-1][good] = 2.0 * cross[good] / denom[good]
        kappa[0] = kappa[1]
        kappa[-1] = kappa[-2]
        return kappa

    @property
    def length(self) -> float:
        return float(self.cum_len[-1])

    def _segment_index(self, s: float | np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cum_len, s, side="right") - 1
        return np.clip(idx, 0, len(self.seg_len) - 1)

    def curvature_at(self, s: float) -> float:
        i = int(self._segment_index(s))
        mid = 0.5 * (self.cum_len[i] + self.cum_len[i + 1])
        return float(self.curvature[i] if s < mid else self.curvature[i + 1])

    def heading_at(self, s: float) -> float:
        i = int(self._segment_index(s))
        t = self.tangents[i]
        return float(np.arctan2(t[1], t[0]))

    def to_cartesian(self, s: float, d: float):
        """Embed (s, d); exact inverse of `to_curvilinear` on its domain."""
        if s < -1e-9 or s > self.length + 1e-9:
            raise ProjectionError(f"arc length {s} outside [0, {self.length}]")
        i = int(self._segment_index(s))
        local = s - self.cum_len[i]
        return self.reference[i] + self.tangents[i] * local + self.normals[i] * d

    def to_cartesian_many(self, s: np.ndarray, d: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        d = np.asarray(d, dtype=float)
        if np.any(s < -1e-9) or np.any(s > self.length + 1e-9):
            bad = float(s[np.argmax((s < -1e-9) | (s > self.length + 1e-9))])
            raise ProjectionError(f"arc length {bad} outside [0, {self.length}]")
        idx = self._segment_index(s)
        local = s - self.cum_len[idx]
        return (
            self.reference[idx]
            + self.tangents[idx] * local[:, None]
            + self.normals[idx] * d[:, None]
        )

    def to_curvilinear(self, p) -> tuple[float, float]:
        """Project a point to (s, d); raises ProjectionError when ambiguous."""
        p = np.asarray(p, dtype=float)
        a = self.reference[:-1]
        ap = p[None, :] - a
        t = np.einsum("ij,ij->i", ap, self.tangents) / self.seg_len
        t = np.clip(t, 0.0, 1.0)
        foot = a + (t * self.seg_len)[:, None] * self.tangents
        dist = np.hypot(p[0] - foot[:, 0], p[1] - foot[:, 1])
        i = int(np.argmin(dist))
        # ambiguity: another, non-adjacent segment is equally close
        close = np.where(dist <= dist[i] + 1e-9)[0]
        if np.any(np.abs(close - i) > 1):
            raise ProjectionError(
                f"point ({p[0]:.3f}, {p[1]:.3f}) projects ambiguously onto the frame"
            )
        # prefer the start of the next segment over the end of this one so that
        # s -> segment lookup in to_cartesian matches the projection
        if t[i] >= 1.0 - 1e-12 and i + 1 < len(self.seg_len) and dist[i + 1] <= dist[i] + 1e-12:
            i = i + 1
            t_i = 0.0
            foot_i = self.reference[i]
        else:
            t_i = float(t[i])
            foot_i = foot[i]
        s = float(self.cum_len[i] + t_i * self.seg_len[i])
        rel = p - foot_i
        cross = self.tangents[i, 0] * rel[1] - self.tangents[i, 1] * rel[0]
        d = float(np.sign(cross) * np.hypot(rel[0], rel[1])) if abs(cross) > 0 else float(
            np.hypot(rel[0], rel[1]) * 0.0
        )
        return s, d

    def project_many(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.empty(len(pts))
        d = np.empty(len(pts))
        for k, p in enumerate(np.asarray(pts, dtype=float)):
            s[k], d[k] = self.to_curvilinear(p)
        return s, d


def build_frame(path) -> CurvilinearFrame:
    return CurvilinearFrame(path)


def to_curvilinear(frame: CurvilinearFrame, p) -> tuple[float, float]:
    return frame.to_curvilinear(p)


def to_cartesian(frame: CurvilinearFrame, s: float, d: float):
    return frame.to_cartesian(s, d)
