"""Contour ingestion, arc-length resampling, canonicalization and raster IoU."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

logger = logging.getLogger(__name__)

DEFAULT_N = 14
DEFAULT_RESOLUTION = 512

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)
_BISECT_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate or malformed polygons."""


@dataclass(frozen=True)
class Frame:
    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        tx, ty = self.translation
        if not (np.isfinite(tx) and np.isfinite(ty)):
            raise GeometryError("frame translation must be finite")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise GeometryError(f"frame scale must be positive, got {self.scale}")
        object.__setattr__(self, "translation", (float(tx), float(ty)))
        object.__setattr__(self, "scale", float(self.scale))

    def to_dict(self) -> dict:
        return {"translation": list(self.translation), "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "Frame":
        return cls(tuple(d["translation"]), d["scale"])


IDENTITY_FRAME = Frame()


@dataclass(frozen=True, eq=False)
class Contour:
    """An ordered, fixed-length vertex list. ``points`` has shape (N, 2)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise GeometryError(f"contour points must have shape (N, 2), got {pts.shape}")
        if pts.shape[0] < 3:
            raise GeometryError("contour needs at least 3 vertices")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("contour coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def flat(self) -> np.ndarray:
        """Flattened [x1, y1, ..., xN, yN] copy."""
        return self.points.reshape(-1).copy()

    @classmethod
    def from_flat(cls, p) -> "Contour":
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or p.size % 2:
            raise GeometryError(f"flattened contour must have even length, got {p.shape}")
        return cls(p.reshape(-1, 2))

    def __eq__(self, other):
        if not isinstance(other, Contour):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash(self.points.tobytes())


def clean_polygon(vertices) -> np.ndarray:
    """Validate a raw polygon and drop consecutive duplicate vertices.

    The closing pair (last, first) counts as consecutive. Raises
    GeometryError for fewer than 3 distinct vertices, non-finite values or
    zero perimeter.
    """
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"polygon must be a list of (x, y) pairs, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("polygon coordinates must be finite")
    keep = [0]
    for i in range(1, len(pts)):
        if not np.array_equal(pts[i], pts[keep[-1]]):
            keep.append(i)
    while len(keep) > 1 and np.array_equal(pts[keep[-1]], pts[keep[0]]):
        keep.pop()
    pts = pts[keep]
    if len(pts) < 3:
        raise GeometryError(f"polygon has {len(pts)} distinct vertices, need at least 3")
    if polygon_perimeter(pts) <= 0:
        raise GeometryError("polygon has zero perimeter")
    return pts


def _as_points(x) -> np.ndarray:
    return x.points if isinstance(x, Contour) else np.asarray(x, dtype=float)


def polygon_perimeter(pts) -> float:
    pts = _as_points(pts)
    return float(np.sum(np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)))


def polygon_area(pts) -> float:
    """Signed shoelace area (positive for counter-clockwise in x-right, y-up axes)."""
    x, y = _as_points(pts).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def periodic_spline(pts: np.ndarray) -> tuple[CubicSpline, np.ndarray]:
    """Closed cubic spline through ``pts`` against cumulative chord length.

    Returns the spline (vector valued, period = total chord length) and the
    knot parameters including the closing knot.
    """
    closed = np.vstack([pts, pts[:1]])
    chords = np.hypot(*np.diff(closed, axis=0).T)
    knots = np.concatenate([[0.0], np.cumsum(chords)])
    return CubicSpline(knots, closed, bc_type="periodic", axis=0), knots


def _speed(spline: CubicSpline, t: np.ndarray) -> np.ndarray:
    d = spline(t, 1)
    return np.hypot(d[..., 0], d[..., 1])


def _arc_length(spline, a, b) -> np.ndarray:
    """Gauss-Legendre arc length of the spline over [a, b], elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[..., None] + half[..., None] * _GL_NODES
    return half * np.sum(_GL_WEIGHTS * _speed(spline, t), axis=-1)


def spline_arc_lengths(spline, knots) -> np.ndarray:
    """Per-segment arc lengths of a periodic spline."""
    return _arc_length(spline, knots[:-1], knots[1:])


def resample_contour(poly, n: int = DEFAULT_N) -> Contour:
    """Resample a closed polygon to ``n`` vertices at uniform spline arc length.

    Sampling starts at the polygon's first vertex and keeps its traversal
    direction.
    """
    if int(n) != n or n < 4:
        raise GeometryError(f"n must be an integer >= 4, got {n}")
    n = int(n)
    pts = clean_polygon(poly)
    spline, knots = periodic_spline(pts)
    seg_len = spline_arc_lengths(spline, knots)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if not total > 0:
        raise GeometryError("polygon has zero spline length")

    targets = total * np.arange(n) / n
    seg = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg_len) - 1)
    remaining = targets - cum[seg]
    lo = knots[seg].copy()
    hi = knots[seg + 1].copy()
    start = knots[seg]
    while np.max(hi - lo) > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        below = _arc_length(spline, start, mid) < remaining
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    t[0] = 0.0
    out = spline(t)
    out[0] = pts[0]
    return Contour(out)


def canonicalize(c: Contour, center: bool = True, normalize_scale: bool = False) -> tuple[Contour, Frame]:
    pts = c.points
    shift = pts.mean(axis=0) if center else np.zeros(2)
    moved = pts - shift
    scale = 1.0
    if normalize_scale:
        scale = float(np.linalg.norm(moved))
        if not scale > 0:
            raise GeometryError("cannot scale-normalize a zero-norm contour")
        moved = moved / scale
    return Contour(moved), Frame((shift[0], shift[1]), scale)


def restore(c: Contour, f: Frame) -> Contour:
    return Contour(c.points * f.scale + np.asarray(f.translation))


# ---------------------------------------------------------------------------
# Raster IoU
# ---------------------------------------------------------------------------

def _joint_grid(a: np.ndarray, b: np.ndarray, resolution: int):
    """Per-pair grid origin and cell size over the joint bbox with 5% margin.

    ``a`` and ``b`` have shape (B, N, 2).
    """
    lo = np.minimum(a.min(axis=1), b.min(axis=1))
    hi = np.maximum(a.max(axis=1), b.max(axis=1))
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    lo = lo - 0.05 * span
    span = span * 1.1
    return lo, span / resolution


def _crossings(polys: np.ndarray, origin: np.ndarray, cell: np.ndarray, resolution: int) -> np.ndarray:
    """Column thresholds where each row's scanline crosses each polygon edge.

    Returns an int array (B, R, E). Cell ``j`` of row ``r`` is inside the
    polygon iff an odd number of thresholds are <= j. Non-crossing edges get
    threshold ``resolution``.
    """
    p0 = polys
    p1 = np.roll(polys, -1, axis=1)
    yc = origin[:, 1, None] + (np.arange(resolution) + 0.5) * cell[:, 1, None]  # (B, R)
    y = yc[:, :, None]
    x0, y0 = p0[:, None, :, 0], p0[:, None, :, 1]
    x1, y1 = p1[:, None, :, 0], p1[:, None, :, 1]
    crosses = (y0 <= y) != (y1 <= y)
    dy = np.where(crosses, y1 - y0, 1.0)
    xc = x0 + (y - y0) * (x1 - x0) / dy
    t = (xc - origin[:, 0, None, None]) / cell[:, 0, None, None] - 0.5
    col = np.clip(np.ceil(t), 0, resolution).astype(np.int64)
    return np.where(crosses, col, resolution)


def raster_counts(a, b, resolution: int = DEFAULT_RESOLUTION):
    """Filled-cell counts (|A|, |B|, |A and B|) for batches of polygon pairs.

    ``a`` and ``b`` are arrays of shape (B, Na, 2) and (B, Nb, 2). Both
    polygons of a pair are even-odd filled on the same resolution x
    resolution grid of cell centers spanning their joint bounding box.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    origin, cell = _joint_grid(a, b, resolution)
    ca = _crossings(a, origin, cell, resolution)
    cb = _crossings(b, origin, cell, resolution)
    cols = np.concatenate([ca, cb], axis=-1)
    is_a = np.concatenate([np.ones(ca.shape[-1], dtype=np.int64), np.zeros(cb.shape[-1], dtype=np.int64)])
    order = np.argsort(cols, axis=-1, kind="stable")
    cols = np.take_along_axis(cols, order, axis=-1)
    lab = is_a[order]
    par_a = np.cumsum(lab, axis=-1) & 1
    par_b = np.cumsum(1 - lab, axis=-1) & 1
    seg = np.diff(cols, axis=-1, append=resolution)
    area_a = np.sum(seg * par_a, axis=(-1, -2))
    area_b = np.sum(seg * par_b, axis=(-1, -2))
    inter = np.sum(seg * (par_a & par_b), axis=(-1, -2))
    return area_a, area_b, inter


def batch_polygon_iou(a, b, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Raster IoU for each pair in two stacks of polygons."""
    if resolution < 64:
        raise GeometryError(f"resolution must be >= 64, got {resolution}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]:
        raise GeometryError(f"expected matching (B, N, 2) stacks, got {a.shape} and {b.shape}")
    area_a, area_b, inter = raster_counts(a, b, resolution)
    union = area_a + area_b - inter
    iou = np.divide(inter, union, out=np.zeros(len(union)), where=union > 0)
    empty = union == 0
    if np.any(empty):
        same = np.array([a[i].shape == b[i].shape and np.array_equal(a[i], b[i]) for i in np.flatnonzero(empty)])
        iou[np.flatnonzero(empty)] = np.where(same, 1.0, 0.0)
    degenerate = (area_a == 0) | (area_b == 0)
    if np.any(degenerate):
        logger.warning("%d polygon pair(s) rasterized to zero area", int(np.sum(degenerate)))
    return iou


def polygon_iou(a, b, resolution: int = DEFAULT_RESOLUTION) -> float:
    """IoU of two closed polygons under even-odd raster fill.

    Accepts Contour objects or (N, 2) arrays.
    """
    return float(batch_polygon_iou(_as_points(a)[None], _as_points(b)[None], resolution)[0])


def rasterize(poly, origin, cell, resolution: int) -> np.ndarray:
    """Boolean (resolution, resolution) even-odd mask, rows along y."""
    poly = np.asarray(poly, dtype=float)[None]
    cols = _crossings(poly, np.asarray(origin, float)[None], np.asarray(cell, float)[None], resolution)[0]
    mask = np.zeros((resolution, resolution + 1), dtype=np.int64)
    rows = np.repeat(np.arange(resolution), cols.shape[1])
    np.add.at(mask, (rows, cols.ravel()), 1)
    return (np.cumsum(mask, axis=1)[:, :resolution] & 1).astype(bool)


def segments_intersect(p, q, r, s) -> bool:
    """Proper or touching intersection test between segments pq and rs."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p, q, r), orient(p, q, s), orient(r, s, p), orient(r, s, q)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p, q, r):
        return True
    if o2 == 0 and on_seg(p, q, s):
        return True
    if o3 == 0 and on_seg(r, s, p):
        return True
    return o4 == 0 and on_seg(r, s, q)


def is_simple(pts) -> bool:
    """True when no two non-adjacent edges of the closed polygon intersect."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    for i in range(n):
        p, q = pts[i], pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if segments_intersect(p, q, pts[j], pts[(j + 1) % n]):
                return False
    return True


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd containment of each (x, y) in ``points``."""
    pts = np.asarray(points, dtype=float)
    poly = np.asarray(poly, dtype=float)
    x, y = pts[:, None, 0], pts[:, None, 1]
    x0, y0 = poly[None, :, 0], poly[None, :, 1]
    nxt = np.roll(poly, -1, axis=0)
    x1, y1 = nxt[None, :, 0], nxt[None, :, 1]
    crosses = (y0 <= y) != (y1 <= y)
    dy = np.where(crosses, y1 - y0, 1.0)
    xc = x0 + (y - y0) * (x1 - x0) / dy
    return (np.sum(crosses & (xc > x), axis=1) % 2).astype(bool)
