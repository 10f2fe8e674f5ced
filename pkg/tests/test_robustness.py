import numpy as np
import pytest

from contourlra.codec import OrthanchorBasis
from contourlra.corpus import CorpusSpec
from contourlra.geometry import Contour
from contourlra.robustness import (
    REPORT_COLUMNS,
    HarnessError,
    NoiseSpec,
    dim_sweep,
    fourier_comparison,
    generalization_check,
    importance_profile,
    inject_spike_noise,
    iou_stats,
    noise_benchmark,
)
from contourlra.subspace import build_matrix, svd_subspace

from conftest import square

SMALL = CorpusSpec(count=200, seed=3)


# --- inject_spike_noise -----------------------------------------------------

def test_zero_fraction_identity(ribbons):
    out = inject_spike_noise(ribbons, NoiseSpec(corrupt_fraction=0.0, seed=1))
    assert all(a is b for a, b in zip(out, ribbons))


def test_zero_magnitude_identity(ribbons):
    out = inject_spike_noise(ribbons, NoiseSpec(magnitude=(0.0, 0.0), seed=1))
    assert all(a == b for a, b in zip(out, ribbons))


def test_spike_counts(ribbons):
    before = [c.points.copy() for c in ribbons]
    out = inject_spike_noise(ribbons, NoiseSpec(corrupt_fraction=0.2, seed=4))
    moved = [int(np.sum(np.any(o.points != c.points, axis=1))) for o, c in zip(out, ribbons)]
    changed = [k for k in moved if k]
    assert len(changed) == 100
    assert min(changed) >= 1 and max(changed) <= 5
    assert all(np.array_equal(b, c.points) for b, c in zip(before, ribbons))


def test_spike_magnitude_range(ribbons):
    out = inject_spike_noise(ribbons[:50], NoiseSpec(corrupt_fraction=1.0, seed=2))
    for o, c in zip(out, ribbons[:50]):
        diag = np.hypot(*np.ptp(c.points, axis=0))
        d = np.linalg.norm(o.points - c.points, axis=1)
        d = d[d > 0] / diag
        assert np.all((d >= 0.5 - 1e-12) & (d <= 1.0 + 1e-12))


def test_small_fraction_corrupts_at_least_one():
    contours = [square(i, 0) for i in range(3)]
    out = inject_spike_noise(contours, NoiseSpec(corrupt_fraction=0.1, vertices_max=2, seed=0))
    assert sum(o != c for o, c in zip(out, contours)) == 1


def test_noise_spec_validation():
    with pytest.raises(HarnessError):
        NoiseSpec(corrupt_fraction=1.5)
    with pytest.raises(HarnessError):
        NoiseSpec(vertices_min=3, vertices_max=2)
    with pytest.raises(HarnessError):
        inject_spike_noise([square()], NoiseSpec(corrupt_fraction=1.0, vertices_max=5))


def test_spike_noise_seeded(ribbons):
    a = inject_spike_noise(ribbons, NoiseSpec(seed=9))
    b = inject_spike_noise(ribbons, NoiseSpec(seed=9))
    assert all(x == y for x, y in zip(a, b))


# --- noise_benchmark --------------------------------------------------------

def test_no_noise_means_no_drop():
    r = noise_benchmark(SMALL, NoiseSpec(corrupt_fraction=0.0), m=10)
    for method in ("svd", "fms"):
        clean = r.row(method=method, condition="clean_fit")
        noisy = r.row(method=method, condition="noisy_fit")
        assert noisy["iou_drop"] == 0.0
        assert noisy["subspace_distance"] == 0.0
        assert clean["mean_iou"] == noisy["mean_iou"]


def test_fms_drops_less_than_svd():
    r = noise_benchmark(CorpusSpec(count=500, seed=21), NoiseSpec(seed=22))
    svd = r.row(method="svd", condition="noisy_fit")["iou_drop"]
    fms = r.row(method="fms", condition="noisy_fit")["iou_drop"]
    assert fms < svd


def test_report_deterministic_and_complete():
    r1 = noise_benchmark(SMALL, NoiseSpec(seed=1), m=6)
    r2 = noise_benchmark(SMALL, NoiseSpec(seed=1), m=6)
    assert r1.to_json() == r2.to_json()
    assert r1.to_csv() == r2.to_csv()
    assert r1.to_csv().splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(r1.rows) == 4


# --- dim_sweep --------------------------------------------------------------

def test_full_dimension_sweep():
    r = dim_sweep(SMALL, [28])
    assert r.rows[0]["mean_iou"] >= 0.999


def test_sweep_error_ordering():
    r = dim_sweep(SMALL, [18, 10, 14])
    assert [row["dim"] for row in r.rows] == [10, 14, 18]
    errs = [row["mean_sq_error"] for row in r.rows]
    assert errs[0] >= errs[1] >= errs[2]


def test_sweep_rejects_bad_dim():
    with pytest.raises(HarnessError):
        dim_sweep(SMALL, [29])


# --- fourier_comparison -----------------------------------------------------

def test_fourier_report_rows():
    r = fourier_comparison(CorpusSpec(count=100, seed=2, family="curved"), 14, method="svd")
    assert {row["condition"] for row in r.rows} == {"lra", "fourier"}
    assert r.row(condition="lra")["mean_iou"] >= r.row(condition="fourier")["mean_iou"]


# --- importance_profile -----------------------------------------------------

def _jsonl_corpus(tmp_path, contours):
    import json

    p = tmp_path / "c.jsonl"
    p.write_text("".join(json.dumps({"id": str(i), "polygons": [c.points.tolist()]}) + "\n" for i, c in enumerate(contours)))
    return CorpusSpec(path=str(p))


def test_importance_identical_contours(tmp_path, ribbons):
    spec = _jsonl_corpus(tmp_path, [ribbons[0]] * 10)
    b = svd_subspace(build_matrix(ribbons), 6)
    r = importance_profile(spec, b)
    assert all(row["variance"] == 0 for row in r.rows)


def test_importance_symmetric_corpus(tmp_path, ribbons):
    # {p, -p} has zero-mean columns, so variances are s^2 / (L - 1)
    cs = []
    for c in ribbons[:20]:
        p = c.points - c.points.mean(axis=0)
        cs += [Contour(p), Contour(-p)]
    spec = _jsonl_corpus(tmp_path, cs)
    a = build_matrix(cs)
    b = svd_subspace(a, 6)
    s = np.linalg.svd(a.data, compute_uv=False)[:6]
    r = importance_profile(spec, b)
    got = sorted((row["dim"], row["variance"]) for row in r.rows)
    np.testing.assert_allclose([v for _, v in got], s**2 / (len(cs) - 1), rtol=1e-8)
    assert r.params["decreasing_head"]


def test_importance_tail_small(ribbons):
    spec = CorpusSpec(count=500, seed=11)
    b = OrthanchorBasis(svd_subspace(build_matrix(ribbons), 14))
    r = importance_profile(spec, b)
    var = {row["dim"]: row["variance"] for row in r.rows}
    assert [row["dim"] for row in r.rows][0] == 1
    assert all(var[k] < 0.05 * var[1] for k in range(7, 15))


# --- generalization_check ---------------------------------------------------

def test_same_corpus_zero_gap():
    r = generalization_check(SMALL, SMALL, m=10, method="svd")
    assert r.row(condition="held_out")["iou_drop"] == 0.0


def test_disjoint_seed_small_gap():
    r = generalization_check(CorpusSpec(count=500, seed=1), CorpusSpec(count=500, seed=2), m=14)
    assert abs(r.row(condition="held_out")["iou_drop"]) < 0.01


def test_family_shift_reported():
    r = generalization_check(CorpusSpec(count=200, seed=1, family="gentle"), CorpusSpec(count=200, seed=2, family="extreme"), m=6, method="svd")
    row = r.row(condition="held_out")
    assert row["eval_corpus_hash"] != row["corpus_hash"]
    assert np.isfinite(row["iou_drop"])


def test_generalize_requires_matching_n():
    with pytest.raises(HarnessError):
        generalization_check(SMALL, CorpusSpec(count=10, n_vertices=12), m=6)


def test_iou_stats():
    s = iou_stats([0.0, 0.5, 1.0])
    assert s["mean_iou"] == 0.5 and s["iou_q50"] == 0.5 and s["n_contours"] == 3
