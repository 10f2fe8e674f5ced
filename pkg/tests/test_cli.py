import json

import numpy as np
import pytest

from contourlra.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, config_hash, derive_seeds, main
from contourlra.codec import load_basis
from contourlra.corpus import generate_ribbons
from contourlra.subspace import subspace_distance

from conftest import exact_rank_contours, write_jsonl


@pytest.fixture(scope="module")
def rank6(tmp_path_factory):
    d = tmp_path_factory.mktemp("rank6")
    contours, u = exact_rank_contours(seed=5)
    return write_jsonl(d / "rank6.jsonl", contours), u


def run(*args):
    return main([str(a) for a in args])


def test_fit_exact_rank(rank6, tmp_path, capsys):
    path, u = rank6
    assert run("fit", "--corpus", path, "--m", 6, "--out", tmp_path / "b.json") == EXIT_OK
    out = capsys.readouterr().out
    objective = float(out.split("objective=")[1].split()[0])
    iterations = int(out.split("iterations=")[1].split()[0])
    assert objective < 1e-6 and iterations <= 2 and "wall_time=" in out
    assert subspace_distance(load_basis(tmp_path / "b.json").u, u) < 1e-6


def test_fit_byte_identical(rank6, tmp_path):
    path, _ = rank6
    payloads = []
    for _ in range(2):
        assert run("fit", "--corpus", path, "--m", 6, "--out", tmp_path / "b.json") == EXIT_OK
        payloads.append((tmp_path / "b.json").read_bytes())
    assert payloads[0] == payloads[1]


def test_svd_and_fms_agree_on_clean_data(rank6, tmp_path):
    path, _ = rank6
    for method in ("svd", "fms"):
        assert run("fit", "--corpus", path, "--m", 6, "--method", method, "--out", tmp_path / f"{method}.json") == EXIT_OK
    d = subspace_distance(load_basis(tmp_path / "svd.json").u, load_basis(tmp_path / "fms.json").u)
    assert d < 1e-6


def test_fit_trace_file(tmp_path):
    assert run("fit", "--count", 60, "--m", 4, "--max-iterations", 3, "--out", tmp_path / "b.json", "--trace", tmp_path / "t.csv") == EXIT_OK
    assert (tmp_path / "t.csv").read_text().startswith("iteration,objective,step_distance")


def test_encode_decode_round_trip(tmp_path):
    contours = generate_ribbons(40, seed=2)
    corpus = write_jsonl(tmp_path / "c.jsonl", contours)
    assert run("fit", "--corpus", corpus, "--m", 28, "--method", "svd", "--out", tmp_path / "b.json") == EXIT_OK
    assert run("encode", "--corpus", corpus, "--basis", tmp_path / "b.json", "--out", tmp_path / "codes.jsonl") == EXIT_OK
    assert run("decode", "--basis", tmp_path / "b.json", "--codes", tmp_path / "codes.jsonl", "--out", tmp_path / "rec.jsonl") == EXIT_OK
    recs = [json.loads(line) for line in (tmp_path / "rec.jsonl").read_text().splitlines()]
    assert [r["id"] for r in recs] == [f"img{i}#0" for i in range(40)]
    for r, c in zip(recs, contours):
        np.testing.assert_allclose(r["polygons"][0], c.points, atol=1e-9)


def test_eval_complete_basis_and_rows(tmp_path, capsys):
    corpus = write_jsonl(tmp_path / "c.jsonl", generate_ribbons(80, seed=3))
    assert run("fit", "--corpus", corpus, "--m", 28, "--method", "svd", "--out", tmp_path / "full.json") == EXIT_OK
    assert run("eval", "--corpus", corpus, "--basis", tmp_path / "full.json", "--out", tmp_path / "ev") == EXIT_OK
    rep = json.loads((tmp_path / "ev.json").read_text())
    assert rep["rows"][0]["mean_iou"] >= 0.999
    assert len(rep["per_contour"]) == 80
    assert rep["rows"][0]["config_hash"] == rep["params"]["config_hash"]
    assert "mean IoU" in capsys.readouterr().out

    assert run("fit", "--corpus", corpus, "--m", 14, "--out", tmp_path / "m14.json") == EXIT_OK
    assert run("eval", "--corpus", corpus, "--basis", tmp_path / "m14.json", "--out", tmp_path / "ev14") == EXIT_OK
    lines = (tmp_path / "ev14.contours.csv").read_text().splitlines()
    assert len(lines) == 1 + 80
    assert json.loads((tmp_path / "ev14.json").read_text())["rows"][0]["condition"] == "aggregate"


def test_eval_vertex_mismatch_names_both(tmp_path, capsys):
    corpus = write_jsonl(tmp_path / "c.jsonl", generate_ribbons(30, seed=3))
    assert run("fit", "--corpus", corpus, "--m", 6, "--out", tmp_path / "b.json") == EXIT_OK
    code = run("eval", "--corpus", corpus, "--n-vertices", 12, "--basis", tmp_path / "b.json", "--out", tmp_path / "ev")
    err = capsys.readouterr().err
    assert code == EXIT_DATA
    assert "n_vertices=12" in err and "n_vertices=14" in err


def test_sweep_full_dim(tmp_path):
    assert run("sweep", "--count", 100, "--dims", "28", "--out", tmp_path / "sw") == EXIT_OK
    rows = json.loads((tmp_path / "sw.json").read_text())["rows"]
    assert len(rows) == 1 and rows[0]["mean_iou"] >= 0.999


def test_noise_zero_fraction(tmp_path):
    assert run("noise", "--count", 100, "--m", 6, "--corrupt-fraction", 0, "--out", tmp_path / "nz") == EXIT_OK
    rows = json.loads((tmp_path / "nz.json").read_text())["rows"]
    assert all(r["iou_drop"] == 0.0 for r in rows)


def test_generalize_reports_gap(tmp_path, capsys):
    assert run("generalize", "--count", 100, "--m", 6, "--method", "svd", "--out", tmp_path / "g") == EXIT_OK
    assert "generalization gap" in capsys.readouterr().out


def test_assign_sim_forced_cells(tmp_path):
    # one GT covering exactly three cell centers: (0.5,0.5), (1.5,0.5), (2.5,0.5)
    scn = {"grid": {"h": 3, "w": 4}, "gts": [[[0.1, 0.1], [2.9, 0.1], [2.9, 0.9], [0.1, 0.9]]], "k": 3, "n_vertices": 4, "seed": 1}
    (tmp_path / "s.json").write_text(json.dumps(scn))
    assert run("assign-sim", "--scenario", tmp_path / "s.json", "--out", tmp_path / "a.json") == EXIT_OK
    doc = json.loads((tmp_path / "a.json").read_text())
    assert sorted(p["cell"] for p in doc["pairs"]) == [[0, 0], [0, 1], [0, 2]]
    assert doc["feasible"]


def test_assign_sim_bad_scenario(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"grid": {"h": 2, "w": 2}, "gts": [], "bogus": 1}))
    assert run("assign-sim", "--scenario", tmp_path / "s.json", "--out", tmp_path / "a.json") == EXIT_DATA


def test_inspect_basis(tmp_path, capsys):
    assert run("fit", "--count", 40, "--m", 3, "--method", "svd", "--out", tmp_path / "b.json") == EXIT_OK
    capsys.readouterr()
    assert run("inspect-basis", "--basis", tmp_path / "b.json") == EXIT_OK
    out = capsys.readouterr().out
    assert "m: 3" in out and "fit_method: svd" in out


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("count = 40  # small\nm = 3\nmethod = svd\n")
    assert run("fit", "--config", cfg, "--m", 4, "--out", tmp_path / "b.json") == EXIT_OK
    b = load_basis(tmp_path / "b.json")
    assert b.m == 4
    assert b.provenance["config"]["count"] == 40
    assert b.provenance["config_hash"] == config_hash(b.provenance["config"])


def test_usage_errors(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("m = 3\nmethd = svd\n")
    assert run("fit", "--config", cfg, "--out", tmp_path / "b.json") == EXIT_USAGE
    assert "methd" in capsys.readouterr().err
    assert run("fit", "--bogus", 1) == EXIT_USAGE
    assert run("fit") == EXIT_USAGE
    assert run("fit", "--m", "three", "--out", tmp_path / "b.json") == EXIT_USAGE
    assert run("frobnicate") == EXIT_USAGE


def test_data_errors(tmp_path):
    assert run("inspect-basis", "--basis", tmp_path / "missing.json") == EXIT_DATA
    (tmp_path / "bad.json").write_text("{}")
    assert run("inspect-basis", "--basis", tmp_path / "bad.json") == EXIT_DATA
    assert run("fit", "--corpus", tmp_path / "nope.jsonl", "--out", tmp_path / "b.json") == EXIT_DATA


def test_seed_derivation_stable():
    assert derive_seeds(3, 2) == derive_seeds(3, 2)
    assert derive_seeds(3, 2)[0] == derive_seeds(3, 1)[0]
    assert len(set(derive_seeds(3, 4))) == 4
