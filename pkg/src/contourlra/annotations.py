"""JSON-Lines annotation ingestion.

One record per line: ``{"id": "<image id>", "polygons": [[[x, y], ...], ...]}``.
Bad lines and degenerate polygons are reported, never silently dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Contour, GeometryError, clean_polygon, resample_contour

logger = logging.getLogger(__name__)


@dataclass
class Diagnostic:
    line: int
    message: str
    polygon: int | None = None

    def __str__(self):
        where = f"line {self.line}" + (f", polygon {self.polygon}" if self.polygon is not None else "")
        return f"{where}: {self.message}"


@dataclass
class LoadedCorpus:
    ids: list[str] = field(default_factory=list)
    contours: list[Contour] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    skipped_lines: int = 0


def read_records(path):
    """Yield (line number, record) for valid lines and Diagnostic for bad ones."""
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                yield Diagnostic(lineno, f"invalid JSON ({exc.msg})")
                continue
            if not isinstance(rec, dict) or not isinstance(rec.get("id"), str) or not isinstance(rec.get("polygons"), list):
                yield Diagnostic(lineno, "record needs a string 'id' and a 'polygons' list")
                continue
            yield lineno, rec


def load_contours(path, n: int) -> LoadedCorpus:
    """Read every polygon in a JSONL file as an n-vertex contour.

    Polygons with exactly n vertices are used as-is; others are resampled
    along a closed cubic spline. Contour ids are ``<record id>#<k>``.
    """
    out = LoadedCorpus()
    for item in read_records(Path(path)):
        if isinstance(item, Diagnostic):
            out.diagnostics.append(item)
            out.skipped_lines += 1
            continue
        lineno, rec = item
        for k, poly in enumerate(rec["polygons"]):
            try:
                pts = clean_polygon(np.asarray(poly, dtype=float))
                contour = Contour(pts) if len(pts) == n else resample_contour(pts, n)
            except (GeometryError, ValueError, TypeError) as exc:
                out.diagnostics.append(Diagnostic(lineno, str(exc), k))
                continue
            out.ids.append(f"{rec['id']}#{k}")
            out.contours.append(contour)
    for d in out.diagnostics:
        logger.warning("%s: %s", path, d)
    if out.skipped_lines:
        logger.warning("%s: skipped %d malformed line(s)", path, out.skipped_lines)
    return out


def write_annotations(path, records) -> None:
    """Write (id, [polygon, ...]) pairs as JSONL."""
    with open(path, "w") as fh:
        for ident, polys in records:
            fh.write(json.dumps({"id": ident, "polygons": [np.asarray(p, dtype=float).tolist() for p in polys]}) + "\n")
