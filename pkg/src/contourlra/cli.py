"""Command-line entry point.

Every command takes its parameters from an optional flat ``key = value``
config file, overridden by ``--key value`` flags. Unknown keys are errors.
The resolved config and its hash are embedded in every output.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import load_contours, write_annotations
from .assignment import AssignmentError, Scenario, run_scenario
from .codec import CodecError, OrthanchorBasis, ShapeCode, code_record, decode, dumps_basis, encode, load_basis
from .corpus import CorpusError, CorpusSpec
from .geometry import DEFAULT_N, DEFAULT_RESOLUTION, GeometryError
from .robustness import HarnessError, NoiseSpec, Report, dim_sweep, evaluate_basis, generalization_check, noise_benchmark
from .subspace import Canonicalization, FmsParams, FmsTrace, NumericalError, SubspaceError, build_matrix, fit_subspace, l12_objective

logger = logging.getLogger("contourlra")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int_list(v) -> list[int]:
    if isinstance(v, list):
        return [int(x) for x in v]
    return [int(x) for x in str(v).replace("[", "").replace("]", "").replace(",", " ").split()]


CORPUS_KEYS = {
    "corpus": (str, None),
    "family": (str, "ribbon"),
    "count": (int, 500),
    "seed": (int, 0),
    "n_vertices": (int, DEFAULT_N),
    "center": (_bool, True),
    "normalize_scale": (_bool, False),
}
FIT_KEYS = {
    "m": (int, 14),
    "method": (str, "fms"),
    "max_iterations": (int, 100),
    "tolerance": (float, 1e-9),
    "weight_floor": (float, 1e-10),
}
EVAL_KEYS = {"resolution": (int, DEFAULT_RESOLUTION)}
OUT = {"out": (str, None)}

SCHEMAS = {
    "fit": {**CORPUS_KEYS, **FIT_KEYS, **OUT, "trace": (str, None)},
    "encode": {**CORPUS_KEYS, "basis": (str, None), **OUT},
    "decode": {"basis": (str, None), "codes": (str, None), **OUT},
    "eval": {**CORPUS_KEYS, **EVAL_KEYS, "basis": (str, None), **OUT},
    "sweep": {**CORPUS_KEYS, **EVAL_KEYS, "method": (str, "svd"), "dims": (_int_list, [6, 10, 14, 18, 28]), "max_iterations": (int, 100), "tolerance": (float, 1e-9), "weight_floor": (float, 1e-10), **OUT},
    "noise": {
        **CORPUS_KEYS,
        **EVAL_KEYS,
        **{k: v for k, v in FIT_KEYS.items() if k != "method"},
        "corrupt_fraction": (float, 0.2),
        "vertices_min": (int, 1),
        "vertices_max": (int, 5),
        "magnitude_min": (float, 0.5),
        "magnitude_max": (float, 1.0),
        **OUT,
    },
    "generalize": {
        **CORPUS_KEYS,
        **EVAL_KEYS,
        **FIT_KEYS,
        "eval_corpus": (str, None),
        "eval_family": (str, None),
        "eval_count": (int, None),
        **OUT,
    },
    "assign-sim": {"scenario": (str, None), **OUT},
    "inspect-basis": {"basis": (str, None)},
}

REQUIRED = {
    "fit": ["out"],
    "encode": ["basis", "out"],
    "decode": ["basis", "codes", "out"],
    "eval": ["basis", "out"],
    "sweep": ["out"],
    "noise": ["out"],
    "generalize": ["out"],
    "assign-sim": ["scenario", "out"],
    "inspect-basis": ["basis"],
}


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file ('#' comments allowed, no sections)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    return dict(parser["run"])


def resolve_config(command: str, file_values: dict, flag_values: dict) -> dict:
    schema = SCHEMAS[command]
    unknown = sorted(set(file_values) - set(schema))
    if unknown:
        raise UsageError(f"unknown config key(s) for '{command}': {', '.join(unknown)}")
    cfg = {}
    for key, (conv, default) in schema.items():
        raw = flag_values.get(key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            cfg[key] = default
            continue
        try:
            cfg[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"'{command}' needs: {', '.join(missing)}")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def derive_seeds(seed: int, count: int) -> list[int]:
    """Independent child seeds split deterministically from one run seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def corpus_spec(cfg: dict, seed: int | None = None, prefix: str = "") -> CorpusSpec:
    """Corpus from the config; a generated corpus defaults to the run's first child seed."""
    canon = Canonicalization(cfg["center"], cfg["normalize_scale"])
    path = cfg.get(prefix + "corpus")
    if prefix and path is None and cfg.get("corpus") is not None:
        raise UsageError("fitting on an annotation file requires eval_corpus as well")
    if seed is None:
        seed = derive_seeds(cfg["seed"], 1)[0]
    family = cfg.get(prefix + "family") or cfg["family"]
    count = cfg.get(prefix + "count") or cfg["count"]
    return CorpusSpec(family=family, count=count, seed=seed, path=path, n_vertices=cfg["n_vertices"], canon=canon)


def fms_params(cfg: dict) -> FmsParams:
    return FmsParams(cfg["max_iterations"], cfg["tolerance"], cfg["weight_floor"])


def load_corpus(spec: CorpusSpec):
    if spec.path is not None and not Path(spec.path).exists():
        raise DataError(f"corpus file not found: {spec.path}")
    loaded = spec.load()
    if loaded.skipped_lines or loaded.diagnostics:
        print(f"ingestion: {len(loaded.contours)} contours, {loaded.skipped_lines} malformed line(s) skipped, {len(loaded.diagnostics)} diagnostic(s)", file=sys.stderr)
    if not loaded.contours:
        raise DataError("corpus contains no usable contours")
    return loaded


def _load_basis(path) -> OrthanchorBasis:
    if not Path(path).exists():
        raise DataError(f"basis file not found: {path}")
    return load_basis(path)


def write_report(report: Report, prefix: str, cfg: dict, started: str) -> None:
    report.params["config"] = cfg
    report.params["config_hash"] = config_hash(cfg)
    for row in report.rows:
        row["config_hash"] = report.params["config_hash"]
    base = Path(prefix)
    base.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{base}.json").write_text(report.to_json())
    Path(f"{base}.csv").write_text(report.to_csv())
    if report.per_contour:
        Path(f"{base}.contours.csv").write_text(report.per_contour_csv())
    write_sidecar(prefix, started, report.timings)


def write_sidecar(prefix: str, started: str, timings: dict) -> None:
    side = {"started": started, "version": __version__, "timings_s": timings}
    Path(f"{prefix}.log.json").write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fit(cfg: dict) -> int:
    spec = corpus_spec(cfg)
    contours = load_corpus(spec).contours
    a = build_matrix(contours, spec.canon)
    params = fms_params(cfg)
    trace = FmsTrace() if cfg["method"] == "fms" else None
    t0 = time.perf_counter()
    basis = fit_subspace(a, cfg["m"], cfg["method"], params, trace)
    wall = time.perf_counter() - t0
    objective = l12_objective(a, basis)
    prov = {"corpus": spec.to_dict(), "corpus_hash": spec.spec_hash(), "n_samples": a.n_samples, "config": cfg, "config_hash": config_hash(cfg)}
    if cfg["method"] == "fms":
        prov["params"] = params.to_dict()
        prov["iterations"] = trace.iterations
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps_basis(OrthanchorBasis(basis, prov)))
    if trace is not None and cfg["trace"]:
        Path(cfg["trace"]).write_text(trace.to_csv())
    iterations = trace.iterations if trace is not None else 0
    print(f"method={cfg['method']} m={cfg['m']} L={a.n_samples} iterations={iterations} objective={objective:.6g} wall_time={wall:.3f}s")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_encode(cfg: dict) -> int:
    b = _load_basis(cfg["basis"])
    spec = corpus_spec(cfg)
    if spec.n_vertices != b.n_vertices:
        raise DataError(f"corpus n_vertices={spec.n_vertices} but basis {cfg['basis']} has n_vertices={b.n_vertices}")
    loaded = load_corpus(spec)
    with open(cfg["out"], "w") as fh:
        for ident, c in zip(loaded.ids, loaded.contours):
            fh.write(code_record(ident, encode(b, c)) + "\n")
    print(f"encoded {len(loaded.contours)} contours into {cfg['out']}")
    return EXIT_OK


def cmd_decode(cfg: dict) -> int:
    b = _load_basis(cfg["basis"])
    records = []
    try:
        with open(cfg["codes"]) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    code = ShapeCode.from_dict(d)
                    records.append((d["id"], [decode(b, code).points]))
                except (json.JSONDecodeError, KeyError, TypeError, CodecError, GeometryError) as exc:
                    raise DataError(f"{cfg['codes']} line {lineno}: {exc}") from None
    except OSError as exc:
        raise DataError(f"cannot read codes {cfg['codes']}: {exc.strerror}") from None
    write_annotations(cfg["out"], records)
    print(f"decoded {len(records)} codes into {cfg['out']}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    started = datetime.now(timezone.utc).isoformat()
    b = _load_basis(cfg["basis"])
    spec = corpus_spec(cfg)
    if spec.n_vertices != b.n_vertices:
        raise DataError(f"corpus n_vertices={spec.n_vertices} but basis {cfg['basis']} has n_vertices={b.n_vertices}")
    loaded = load_corpus(spec)
    report = evaluate_basis(b, loaded.ids, loaded.contours, spec.spec_hash(), cfg["resolution"])
    write_report(report, cfg["out"], cfg, started)
    print(report.summary())
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    started = datetime.now(timezone.utc).isoformat()
    spec = corpus_spec(cfg)
    report = dim_sweep(spec, cfg["dims"], cfg["method"], fms_params(cfg), cfg["resolution"])
    write_report(report, cfg["out"], cfg, started)
    print(report.summary())
    return EXIT_OK


def cmd_noise(cfg: dict) -> int:
    started = datetime.now(timezone.utc).isoformat()
    corpus_seed, noise_seed = derive_seeds(cfg["seed"], 2)
    spec = corpus_spec(cfg, seed=corpus_seed)
    noise = NoiseSpec(cfg["corrupt_fraction"], cfg["vertices_min"], cfg["vertices_max"], (cfg["magnitude_min"], cfg["magnitude_max"]), noise_seed)
    report = noise_benchmark(spec, noise, cfg["m"], fms_params(cfg), cfg["resolution"])
    write_report(report, cfg["out"], cfg, started)
    print(report.summary())
    return EXIT_OK


def cmd_generalize(cfg: dict) -> int:
    started = datetime.now(timezone.utc).isoformat()
    fit_seed, eval_seed = derive_seeds(cfg["seed"], 2)
    fit = corpus_spec(cfg, seed=fit_seed)
    ev = corpus_spec(cfg, seed=eval_seed, prefix="eval_")
    report = generalization_check(fit, ev, cfg["m"], cfg["method"], fms_params(cfg), cfg["resolution"])
    write_report(report, cfg["out"], cfg, started)
    print(report.summary())
    gap = report.row(condition="held_out")["iou_drop"]
    print(f"generalization gap (in-sample minus held-out mean IoU): {gap:.4f}")
    return EXIT_OK


def cmd_assign_sim(cfg: dict) -> int:
    try:
        scn = Scenario.load(cfg["scenario"])
    except OSError as exc:
        raise DataError(f"cannot read scenario {cfg['scenario']}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"scenario is not valid JSON: {exc}") from None
    grid, assignment = run_scenario(scn)
    doc = {"scenario": scn.to_dict(), "config_hash": config_hash(cfg), **assignment.to_dict(grid)}
    Path(cfg["out"]).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    for j in range(len(scn.gts)):
        cells = [grid.cell(r) for r in assignment.rows_for(j)]
        print(f"instance {j}: cells {cells}")
    if not assignment.feasible:
        missing = ", ".join(f"instance {j} short by {c}" for j, c in sorted(assignment.unmatched.items()))
        print(f"partial assignment: {missing}", file=sys.stderr)
    print(f"total cost {assignment.total_cost:.6g}; wrote {cfg['out']}")
    return EXIT_OK


def cmd_inspect_basis(cfg: dict) -> int:
    b = _load_basis(cfg["basis"])
    print(f"n_vertices: {b.n_vertices}")
    print(f"m: {b.m}")
    print(f"fit_method: {b.fit_method}")
    print(f"canonicalization: {json.dumps(b.canon.to_dict(), sort_keys=True)}")
    print(f"orthonormality error: {b.basis.orthonormality_error():.3g}")
    print(f"provenance: {json.dumps(b.provenance, sort_keys=True)}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "noise": cmd_noise,
    "generalize": cmd_generalize,
    "assign-sim": cmd_assign_sim,
    "inspect-basis": cmd_inspect_basis,
}


HELP = {
    "fit": "fit an orthanchor basis (svd or fms) and write it as JSON",
    "encode": "project contours onto a basis and write shape codes as JSONL",
    "decode": "reconstruct contours from shape codes",
    "eval": "reconstruction IoU of a basis on a corpus",
    "sweep": "IoU and squared error across basis dimensions",
    "noise": "spike-noise robustness of svd vs fms",
    "generalize": "fit on one corpus, evaluate on another",
    "assign-sim": "run the sparse assignment simulator on a scenario",
    "inspect-basis": "print a basis file's metadata",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contourlra", description="Low-rank text contour representation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="flat key = value config file")
        for key in schema:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in SCHEMAS[args.command]}
        cfg = resolve_config(args.command, file_values, flags)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GeometryError, CorpusError, CodecError, SubspaceError, HarnessError, AssignmentError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
