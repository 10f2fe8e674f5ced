"""Experiment harness: spike noise, dimension sweeps, importance, generalization.

Every function returns a Report whose rows are fully determined by the
corpus specs, seeds and parameters recorded with them. Wall-clock timings
go to ``Report.timings`` only, which is kept out of the report payloads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import OrthanchorBasis, fourier_reconstruction_ious, reconstruction_ious
from .corpus import CorpusSpec
from .geometry import DEFAULT_RESOLUTION, Contour
from .subspace import (
    Basis,
    FmsParams,
    NumericalError,
    build_matrix,
    explained_variance,
    fit_subspace,
    l12_objective,
    subspace_distance,
    svd_subspace,
)

REPORT_COLUMNS = [
    "experiment",
    "condition",
    "method",
    "dim",
    "noise",
    "n_contours",
    "mean_iou",
    "iou_q05",
    "iou_q25",
    "iou_q50",
    "iou_q75",
    "iou_q95",
    "iou_drop",
    "mean_sq_error",
    "objective",
    "subspace_distance",
    "variance",
    "corpus_hash",
    "eval_corpus_hash",
    "seeds",
    "config_hash",
]


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    corrupt_fraction: float = 0.2
    vertices_min: int = 1
    vertices_max: int = 5
    magnitude: tuple[float, float] = (0.5, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.corrupt_fraction <= 1:
            raise HarnessError(f"corrupt_fraction must be in [0, 1], got {self.corrupt_fraction}")
        if not 0 <= self.vertices_min <= self.vertices_max:
            raise HarnessError("need 0 <= vertices_min <= vertices_max")
        lo, hi = self.magnitude
        if not 0 <= lo <= hi or not math.isfinite(hi):
            raise HarnessError(f"magnitude range must satisfy 0 <= lo <= hi, got {self.magnitude}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["magnitude"] = list(self.magnitude)
        return d


@dataclass
class Report:
    experiment: str
    params: dict
    rows: list[dict] = field(default_factory=list)
    per_contour: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add(self, **row) -> dict:
        unknown = set(row) - set(REPORT_COLUMNS)
        if unknown:
            raise HarnessError(f"unknown report columns {sorted(unknown)}")
        full = {k: row.get(k) for k in REPORT_COLUMNS}
        full["experiment"] = self.experiment
        self.rows.append(full)
        return full

    def row(self, **match) -> dict:
        hits = [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def to_json(self) -> str:
        doc = {"experiment": self.experiment, "params": self.params, "columns": REPORT_COLUMNS, "rows": self.rows}
        if self.per_contour:
            doc["per_contour"] = self.per_contour
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: _csv_cell(r[k]) for k in REPORT_COLUMNS})
        return buf.getvalue()

    def per_contour_csv(self) -> str:
        if not self.per_contour:
            return ""
        keys = list(self.per_contour[0])
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.per_contour)
        return buf.getvalue()

    def summary(self) -> str:
        head = f"{'condition':<14}{'method':<9}{'dim':>4}{'noise':>7}{'mean IoU':>10}{'drop':>8}"
        lines = [f"[{self.experiment}]", head]
        for r in self.rows:
            lines.append(
                f"{str(r['condition'] or ''):<14}{str(r['method'] or ''):<9}{_fmt(r['dim'], 'd'):>4}"
                f"{_fmt(r['noise'], '.2f'):>7}{_fmt(r['mean_iou'], '.3f'):>10}{_fmt(r['iou_drop'], '.3f'):>8}"
            )
        return "\n".join(lines)


def _fmt(v, spec):
    return "" if v is None else format(v, spec)


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def iou_stats(ious) -> dict:
    ious = np.asarray(ious, dtype=float)
    q = np.quantile(ious, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "n_contours": int(ious.size),
        "mean_iou": float(math.fsum(ious.tolist()) / ious.size),
        "iou_q05": float(q[0]),
        "iou_q25": float(q[1]),
        "iou_q50": float(q[2]),
        "iou_q75": float(q[3]),
        "iou_q95": float(q[4]),
    }


# ---------------------------------------------------------------------------
# Spike noise
# ---------------------------------------------------------------------------

def inject_spike_noise(contours, spec: NoiseSpec) -> list[Contour]:
    """Displace 1..k random vertices of a random subset of contours.

    ``floor(corrupt_fraction * L)`` contours are chosen, but at least one
    whenever the fraction is positive. Each displacement has length drawn
    uniformly from ``magnitude`` times the contour's bounding-box diagonal
    and a uniform random direction. The input list is not modified.
    """
    contours = list(contours)
    L = len(contours)
    out = list(contours)
    if spec.corrupt_fraction == 0 or L == 0:
        return out
    count = min(L, max(1, math.floor(spec.corrupt_fraction * L)))
    rng = np.random.default_rng(spec.seed)
    chosen = np.sort(rng.choice(L, size=count, replace=False))
    lo, hi = spec.magnitude
    for i in chosen:
        pts = contours[i].points.copy()
        n = len(pts)
        if spec.vertices_max > n:
            raise HarnessError(f"vertices_max={spec.vertices_max} exceeds contour size {n}")
        k = int(rng.integers(spec.vertices_min, spec.vertices_max + 1))
        which = rng.choice(n, size=k, replace=False)
        diag = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
        mag = rng.uniform(lo, hi, size=k) * diag
        ang = rng.uniform(0.0, 2 * np.pi, size=k)
        pts[which] += np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)
        out[i] = Contour(pts)
    return out


def _fit(contours, spec: CorpusSpec, m, method, params, provenance=None) -> tuple[OrthanchorBasis, float]:
    a = build_matrix(contours, spec.canon)
    if a.n_samples < m:
        raise HarnessError(f"corpus has {a.n_samples} contours, need at least m={m}")
    basis = fit_subspace(a, m, method, params)
    prov = {"corpus": spec.to_dict(), "corpus_hash": spec.spec_hash(), "params": params.to_dict() if method == "fms" else {}}
    prov.update(provenance or {})
    return OrthanchorBasis(basis, prov), l12_objective(a, basis)


def noise_benchmark(
    corpus: CorpusSpec,
    noise: NoiseSpec,
    m: int = 14,
    params: FmsParams = FmsParams(),
    resolution: int = DEFAULT_RESOLUTION,
) -> Report:
    """Clean-corpus IoU of SVD and FMS bases fit on clean vs corrupted data.

    A single corruption draw is shared by both methods. ``iou_drop`` on the
    noisy rows is clean-fit IoU minus noisy-fit IoU.
    """
    report = Report("noise", {"corpus": corpus.to_dict(), "noise": noise.to_dict(), "m": m, "fms": params.to_dict(), "resolution": resolution})
    clean = corpus.load().contours
    noisy = inject_spike_noise(clean, noise)
    seeds = {"corpus": corpus.seed, "noise": noise.seed}
    for method in ("svd", "fms"):
        t0 = time.perf_counter()
        base, base_obj = _fit(clean, corpus, m, method, params)
        bent, bent_obj = _fit(noisy, corpus, m, method, params)
        report.timings[f"fit_{method}"] = time.perf_counter() - t0
        s_clean = iou_stats(reconstruction_ious(base, clean, resolution))
        s_noisy = iou_stats(reconstruction_ious(bent, clean, resolution))
        common = dict(method=method, dim=m, corpus_hash=corpus.spec_hash(), eval_corpus_hash=corpus.spec_hash(), seeds=seeds)
        report.add(condition="clean_fit", noise=0.0, objective=base_obj, subspace_distance=0.0, iou_drop=0.0, **s_clean, **common)
        report.add(
            condition="noisy_fit",
            noise=noise.corrupt_fraction,
            objective=bent_obj,
            subspace_distance=subspace_distance(base.basis, bent.basis),
            iou_drop=s_clean["mean_iou"] - s_noisy["mean_iou"],
            **s_noisy,
            **common,
        )
    return report


def dim_sweep(
    corpus: CorpusSpec,
    dims,
    method: str = "svd",
    params: FmsParams = FmsParams(),
    resolution: int = DEFAULT_RESOLUTION,
) -> Report:
    """Mean IoU and mean squared reconstruction error per basis dimension."""
    dims = [int(d) for d in dims]
    report = Report("sweep", {"corpus": corpus.to_dict(), "dims": dims, "method": method, "fms": params.to_dict(), "resolution": resolution})
    contours = corpus.load().contours
    a = build_matrix(contours, corpus.canon)
    full = 2 * corpus.n_vertices
    for d in dims:
        if not 1 <= d <= full:
            raise HarnessError(f"dimension {d} outside [1, {full}]")
    if method == "svd":
        # one decomposition so the bases are nested
        top = svd_subspace(a, min(max(dims), *a.data.shape)).u
    prev_err = None
    for d in sorted(dims):
        basis = Basis(top[:, :d], "svd", corpus.canon) if method == "svd" else fit_subspace(a, d, method, params)
        ob = OrthanchorBasis(basis)
        resid = a.data - basis.u @ (basis.u.T @ a.data)
        sq = np.sum(resid**2, axis=0)
        err = float(math.fsum(sq.tolist()) / sq.size)
        if method == "svd" and prev_err is not None and err > prev_err * (1 + 1e-9) + 1e-9:
            raise NumericalError(f"SVD squared error increased from {prev_err} to {err} at dim {d}")
        prev_err = err
        stats = iou_stats(reconstruction_ious(ob, contours, resolution))
        report.add(
            condition="in_sample",
            method=method,
            dim=d,
            noise=0.0,
            mean_sq_error=err,
            objective=l12_objective(a, basis),
            corpus_hash=corpus.spec_hash(),
            eval_corpus_hash=corpus.spec_hash(),
            seeds={"corpus": corpus.seed},
            **stats,
        )
    return report


def fourier_comparison(corpus: CorpusSpec, dims: int = 14, method: str = "fms", params: FmsParams = FmsParams(), resolution: int = DEFAULT_RESOLUTION) -> Report:
    """LRA and truncated-Fourier reconstruction IoU at the same real dimension."""
    report = Report("fourier", {"corpus": corpus.to_dict(), "dims": dims, "method": method, "fms": params.to_dict(), "resolution": resolution})
    contours = corpus.load().contours
    basis, obj = _fit(contours, corpus, dims, method, params)
    common = dict(dim=dims, noise=0.0, corpus_hash=corpus.spec_hash(), eval_corpus_hash=corpus.spec_hash(), seeds={"corpus": corpus.seed})
    report.add(condition="lra", method=method, objective=obj, **iou_stats(reconstruction_ious(basis, contours, resolution)), **common)
    report.add(condition="fourier", method="fourier", **iou_stats(fourier_reconstruction_ious(contours, dims, resolution)), **common)
    return report


def importance_profile(corpus: CorpusSpec, basis: OrthanchorBasis | Basis) -> Report:
    """Explained variance per orthanchor, ranked, with the head-decrease flag."""
    b = basis.basis if isinstance(basis, OrthanchorBasis) else basis
    contours = corpus.load().contours
    a = build_matrix(contours, corpus.canon)
    var = explained_variance(a, b)
    head_ok = bool(len(var) < 2 or var[0] >= var[1])
    report = Report("importance", {"corpus": corpus.to_dict(), "m": b.m, "fit_method": b.fit_method, "decreasing_head": head_ok})
    for rank, i in enumerate(np.argsort(-var, kind="stable")):
        report.add(
            condition=f"orthanchor_{i + 1}",
            method=b.fit_method,
            dim=int(i + 1),
            variance=float(var[i]),
            n_contours=len(contours),
            corpus_hash=corpus.spec_hash(),
            seeds={"corpus": corpus.seed, "rank": rank + 1},
        )
    return report


def generalization_check(
    fit_corpus: CorpusSpec,
    eval_corpus: CorpusSpec,
    m: int = 14,
    method: str = "fms",
    params: FmsParams = FmsParams(),
    resolution: int = DEFAULT_RESOLUTION,
) -> Report:
    """Fit on one corpus, evaluate on another; iou_drop on the held-out row is the gap."""
    if fit_corpus.n_vertices != eval_corpus.n_vertices or fit_corpus.canon != eval_corpus.canon:
        raise HarnessError("fit and eval corpora must share vertex count and canonicalization")
    report = Report("generalize", {"fit_corpus": fit_corpus.to_dict(), "eval_corpus": eval_corpus.to_dict(), "m": m, "method": method, "fms": params.to_dict(), "resolution": resolution})
    fit_contours = fit_corpus.load().contours
    eval_contours = fit_contours if eval_corpus == fit_corpus else eval_corpus.load().contours
    basis, obj = _fit(fit_contours, fit_corpus, m, method, params)
    s_in = iou_stats(reconstruction_ious(basis, fit_contours, resolution))
    s_out = iou_stats(reconstruction_ious(basis, eval_contours, resolution))
    seeds = {"fit": fit_corpus.seed, "eval": eval_corpus.seed}
    report.add(condition="in_sample", method=method, dim=m, noise=0.0, objective=obj, iou_drop=0.0, corpus_hash=fit_corpus.spec_hash(), eval_corpus_hash=fit_corpus.spec_hash(), seeds=seeds, **s_in)
    report.add(
        condition="held_out",
        method=method,
        dim=m,
        noise=0.0,
        iou_drop=s_in["mean_iou"] - s_out["mean_iou"],
        corpus_hash=fit_corpus.spec_hash(),
        eval_corpus_hash=eval_corpus.spec_hash(),
        seeds=seeds,
        **s_out,
    )
    return report


def evaluate_basis(basis: OrthanchorBasis, ids, contours, corpus_hash: str, resolution: int = DEFAULT_RESOLUTION) -> Report:
    """Per-contour and aggregate reconstruction IoU of a stored basis."""
    report = Report("eval", {"basis": basis.provenance, "m": basis.m, "fit_method": basis.fit_method, "resolution": resolution})
    ious = reconstruction_ious(basis, contours, resolution)
    report.per_contour = [{"id": i, "iou": float(v)} for i, v in zip(ids, ious)]
    report.add(condition="aggregate", method=basis.fit_method, dim=basis.m, corpus_hash=corpus_hash, eval_corpus_hash=corpus_hash, **iou_stats(ious))
    return report
