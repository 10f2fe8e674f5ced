"""Sparse positive sampling as a bipartite matching problem.

Each grid cell i and ground-truth instance j get a matching cost

    s_ij = FL'(b_i) + lambda * sum_n ||pred_i[n] - gt_j[n]||   (cell i in text region)
    s_ij = SENTINEL                                           (otherwise)

Each instance column is repeated K times and a minimum-cost matching then
hands every instance K distinct cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DEFAULT_N, Contour, batch_polygon_iou, clean_polygon, points_in_polygon, resample_contour

SENTINEL = 1e18
SCORE_EPS = 1e-7
ALPHA = 0.25
GAMMA = 2.0


class AssignmentError(ValueError):
    pass


def focal_cost(b, alpha: float = ALPHA, gamma: float = GAMMA, eps: float = SCORE_EPS):
    """FL'(b) = -a (1-b)^g log b + (1-a) b^g log(1-b), scores clamped to [eps, 1-eps].

    Works elementwise on arrays; strictly decreasing in b.
    """
    b = np.asarray(b, dtype=float)
    if np.any(np.isnan(b)):
        raise AssignmentError("classification score is NaN")
    b = np.clip(b, eps, 1 - eps)
    out = -alpha * (1 - b) ** gamma * np.log(b) + (1 - alpha) * b**gamma * np.log1p(-b)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PredictionGrid:
    """Per-cell scores (H, W), predicted contours (H, W, N, 2) and text-region mask (H, W)."""

    scores: np.ndarray
    contours: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        c = np.asarray(self.contours, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if s.ndim != 2:
            raise AssignmentError(f"scores must be H x W, got {s.shape}")
        if m.shape != s.shape:
            raise AssignmentError(f"mask shape {m.shape} differs from scores {s.shape}")
        if c.ndim != 4 or c.shape[:2] != s.shape or c.shape[3] != 2:
            raise AssignmentError(f"contours must be H x W x N x 2, got {c.shape}")
        if np.any(np.isnan(s)) or np.any((s < 0) | (s > 1)):
            raise AssignmentError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "contours", c)
        object.__setattr__(self, "mask", m)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.contours.shape[2]

    def cell(self, row: int) -> tuple[int, int]:
        return divmod(int(row), self.width)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    entries: np.ndarray
    k: int = 1

    @property
    def t(self) -> int:
        return self.entries.shape[1] // self.k

    def instance_of(self, col: int) -> int:
        return int(col) // self.k


@dataclass
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    total_cost: float = 0.0
    unmatched: dict[int, int] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return not self.unmatched

    def rows_for(self, instance: int) -> list[int]:
        return [r for r, j in self.pairs if j == instance]

    def to_dict(self, grid: PredictionGrid | None = None) -> dict:
        pairs = []
        for r, j in self.pairs:
            item = {"row": r, "instance": j}
            if grid is not None:
                item["cell"] = list(grid.cell(r))
            pairs.append(item)
        return {
            "pairs": pairs,
            "total_cost": self.total_cost,
            "feasible": self.feasible,
            "unmatched": {str(j): c for j, c in sorted(self.unmatched.items())},
        }


def regression_distance(pred: np.ndarray, gts: np.ndarray, norm: str = "l2") -> np.ndarray:
    """Summed per-vertex distance between every prediction and every GT.

    ``pred`` is (R, N, 2), ``gts`` is (T, N, 2); returns (R, T). ``norm='l2'``
    sums per-vertex Euclidean distances, ``'l1'`` sums absolute coordinate
    differences.
    """
    diff = pred[:, None, :, :] - gts[None, :, :, :]
    if norm == "l2":
        return np.sum(np.hypot(diff[..., 0], diff[..., 1]), axis=-1)
    if norm == "l1":
        return np.sum(np.abs(diff), axis=(-1, -2))
    raise AssignmentError(f"unknown regression norm {norm!r}; expected 'l2' or 'l1'")


def cost_matrix(grid: PredictionGrid, gts, k: int = 3, lam: float = 2.0, norm: str = "l2") -> CostMatrix:
    gts = [g.points if isinstance(g, Contour) else np.asarray(g, dtype=float) for g in gts]
    if not gts:
        raise AssignmentError("need at least one ground-truth instance")
    if int(k) != k or k < 1:
        raise AssignmentError(f"k must be a positive integer, got {k}")
    gt = np.stack(gts)
    if gt.shape[1:] != (grid.n_vertices, 2):
        raise AssignmentError(f"ground truths have shape {gt.shape[1:]}, grid contours have {(grid.n_vertices, 2)}")
    pred = grid.contours.reshape(-1, grid.n_vertices, 2)
    cls = focal_cost(grid.scores.reshape(-1))
    s = cls[:, None] + lam * regression_distance(pred, gt, norm)
    s[~grid.mask.reshape(-1)] = SENTINEL
    return CostMatrix(np.repeat(s, int(k), axis=1), int(k))


def _solve(a: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path Hungarian on an n x m matrix with n <= m.

    Returns, for each of the n left vertices, its matched right vertex.
    Right vertices are scanned in ascending order with strict comparisons,
    so ties resolve toward lower indices.
    """
    n, m = a.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    match = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            match[p[j] - 1] = j - 1
    return match


def hungarian(cost) -> Assignment:
    """Minimum-cost matching that gives every column its own row.

    Accepts a CostMatrix or a plain (rows x cols) array (instances = columns).
    With fewer rows than columns the surplus columns are reported unmatched.
    Any column forced onto a SENTINEL entry is reported unmatched too.
    """
    cm = cost if isinstance(cost, CostMatrix) else CostMatrix(np.asarray(cost, dtype=float), 1)
    s = np.asarray(cm.entries, dtype=float)
    if s.ndim != 2 or s.shape[1] == 0:
        raise AssignmentError(f"cost matrix must be 2-D with at least one column, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise AssignmentError("cost matrix entries must be finite (use SENTINEL for forbidden cells)")
    rows, cols = s.shape
    if rows < cols:
        s = np.vstack([s, np.full((cols - rows, cols), SENTINEL)])
    match = _solve(s.T)
    pairs, unmatched, costs = [], {}, []
    for col, row in enumerate(match):
        inst = cm.instance_of(col)
        if row >= rows or s[row, col] >= SENTINEL:
            unmatched[inst] = unmatched.get(inst, 0) + 1
            continue
        pairs.append((int(row), inst))
        costs.append(float(s[row, col]))
    pairs.sort(key=lambda rc: (rc[1], rc[0]))
    return Assignment(pairs, math.fsum(costs), unmatched)


def sparse_assign(grid: PredictionGrid, gts, k: int = 3, lam: float = 2.0, norm: str = "l2") -> Assignment:
    return hungarian(cost_matrix(grid, gts, k, lam, norm))


def greedy_assign(cost) -> Assignment:
    """Column-by-column cheapest free row; an upper bound on the optimal total."""
    cm = cost if isinstance(cost, CostMatrix) else CostMatrix(np.asarray(cost, dtype=float), 1)
    s = cm.entries
    taken = np.zeros(s.shape[0], dtype=bool)
    pairs, costs, unmatched = [], [], {}
    for col in range(s.shape[1]):
        inst = cm.instance_of(col)
        avail = np.where(taken, np.inf, s[:, col])
        row = int(np.argmin(avail))
        if not np.isfinite(avail[row]) or avail[row] >= SENTINEL:
            unmatched[inst] = unmatched.get(inst, 0) + 1
            continue
        taken[row] = True
        pairs.append((row, inst))
        costs.append(float(s[row, col]))
    pairs.sort(key=lambda rc: (rc[1], rc[0]))
    return Assignment(pairs, math.fsum(costs), unmatched)


# ---------------------------------------------------------------------------
# Synthetic grid simulator
# ---------------------------------------------------------------------------

SCENARIO_KEYS = {"grid", "gts", "score_noise", "contour_noise", "k", "lambda", "seed", "n_vertices", "norm"}


@dataclass(frozen=True)
class Scenario:
    height: int
    width: int
    gts: tuple
    score_noise: float = 0.0
    contour_noise: float = 0.0
    k: int = 3
    lam: float = 2.0
    seed: int = 0
    n_vertices: int = DEFAULT_N
    norm: str = "l2"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        unknown = set(d) - SCENARIO_KEYS
        if unknown:
            raise AssignmentError(f"unknown scenario keys {sorted(unknown)}")
        try:
            grid = d["grid"]
            return cls(
                height=int(grid["h"]),
                width=int(grid["w"]),
                gts=tuple(tuple(map(tuple, g)) for g in d["gts"]),
                score_noise=float(d.get("score_noise", 0.0)),
                contour_noise=float(d.get("contour_noise", 0.0)),
                k=int(d.get("k", 3)),
                lam=float(d.get("lambda", 2.0)),
                seed=int(d.get("seed", 0)),
                n_vertices=int(d.get("n_vertices", DEFAULT_N)),
                norm=str(d.get("norm", "l2")),
            )
        except (KeyError, TypeError) as exc:
            raise AssignmentError(f"malformed scenario: {exc!r}") from None

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "grid": {"h": self.height, "w": self.width},
            "gts": [list(map(list, g)) for g in self.gts],
            "score_noise": self.score_noise,
            "contour_noise": self.contour_noise,
            "k": self.k,
            "lambda": self.lam,
            "seed": self.seed,
            "n_vertices": self.n_vertices,
            "norm": self.norm,
        }


def gt_contours(scn: Scenario) -> list[Contour]:
    out = []
    for g in scn.gts:
        pts = clean_polygon(g)
        out.append(Contour(pts) if len(pts) == scn.n_vertices else resample_contour(pts, scn.n_vertices))
    return out


def simulate_grid(scn: Scenario) -> tuple[PredictionGrid, list[Contour]]:
    """Build a synthetic prediction grid around the scenario's ground truths.

    Cell (r, c) has center (c + 0.5, r + 0.5) in the GT coordinate frame. A
    cell belongs to the text region when its center lies inside some GT
    polygon. Each cell predicts the contour of the GT containing it (or the
    nearest GT by centroid) plus Gaussian vertex noise, with score equal to
    the IoU of that prediction against its GT plus Gaussian noise, clipped
    to [0, 1].
    """
    if scn.height < 1 or scn.width < 1:
        raise AssignmentError("grid must be at least 1 x 1")
    gts = gt_contours(scn)
    rng = np.random.default_rng(scn.seed)
    rr, cc = np.mgrid[0 : scn.height, 0 : scn.width]
    centers = np.stack([cc.ravel() + 0.5, rr.ravel() + 0.5], axis=1)
    inside = np.stack([points_in_polygon(centers, clean_polygon(g)) for g in scn.gts], axis=1)
    mask = inside.any(axis=1)
    cents = np.stack([g.points.mean(axis=0) for g in gts])
    nearest = np.argmin(np.linalg.norm(centers[:, None] - cents[None], axis=2), axis=1)
    owner = np.where(mask, np.argmax(inside, axis=1), nearest)
    gt_pts = np.stack([g.points for g in gts])
    pred = gt_pts[owner] + rng.normal(0.0, scn.contour_noise, size=(len(centers), scn.n_vertices, 2))
    proxy = batch_polygon_iou(pred, gt_pts[owner], 64)
    scores = np.clip(proxy + rng.normal(0.0, scn.score_noise, size=len(centers)), 0.0, 1.0)
    grid = PredictionGrid(
        scores.reshape(scn.height, scn.width),
        pred.reshape(scn.height, scn.width, scn.n_vertices, 2),
        mask.reshape(scn.height, scn.width),
    )
    return grid, gts


def run_scenario(scn: Scenario) -> tuple[PredictionGrid, Assignment]:
    grid, gts = simulate_grid(scn)
    return grid, sparse_assign(grid, gts, scn.k, scn.lam, scn.norm)
