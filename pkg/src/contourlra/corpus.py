"""Synthetic text-like ribbon corpora and corpus specs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .annotations import LoadedCorpus, load_contours
from .geometry import DEFAULT_N, Contour, is_simple
from .subspace import Canonicalization

MAX_RETRIES = 50


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class RibbonFamily:
    """Ranges for the six shape latents of a ribbon.

    Each ribbon is a cubic Bezier centerline of length ``length`` rotated by
    ``rotation`` (radians), with two bend offsets (fractions of the length)
    on the inner control points, a height set by ``aspect`` and a linear
    width taper.
    """

    length: tuple[float, float] = (80.0, 320.0)
    aspect: tuple[float, float] = (2.0, 12.0)
    rotation: tuple[float, float] = (-0.35, 0.35)
    bend: tuple[float, float] = (-0.35, 0.35)
    taper: tuple[float, float] = (-0.3, 0.3)
    image_size: float = 1024.0


FAMILIES = {
    "ribbon": RibbonFamily(),
    "gentle": RibbonFamily(bend=(-0.1, 0.1), rotation=(-0.15, 0.15)),
    "extreme": RibbonFamily(bend=(-0.6, 0.6), rotation=(-0.6, 0.6), taper=(-0.5, 0.5)),
    "curved": RibbonFamily(aspect=(6.0, 12.0), bend=(-0.5, 0.5)),
}


def _bezier(ctrl: np.ndarray, t: np.ndarray):
    """Points and unit normals of a cubic Bezier at parameters ``t``."""
    p0, p1, p2, p3 = ctrl
    s = 1 - t
    pts = (s**3)[:, None] * p0 + (3 * s * s * t)[:, None] * p1 + (3 * s * t * t)[:, None] * p2 + (t**3)[:, None] * p3
    d = (3 * s * s)[:, None] * (p1 - p0) + (6 * s * t)[:, None] * (p2 - p1) + (3 * t * t)[:, None] * (p3 - p2)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    normal = np.stack([-d[:, 1], d[:, 0]], axis=1)
    return pts, normal


def ribbon(latents, n: int = DEFAULT_N, center=(0.0, 0.0)) -> np.ndarray:
    """Boundary of one ribbon as an (n, 2) array.

    ``latents`` is (length, aspect, rotation, bend1, bend2, taper). The
    first n/2 vertices run along the top side left to right, the rest along
    the bottom side right to left.
    """
    if n % 2 or n < 4:
        raise CorpusError(f"ribbon vertex count must be even and >= 4, got {n}")
    length, aspect, rot, b1, b2, taper = latents
    half = length / 2
    ctrl = np.array([[-half, 0.0], [-length / 6, b1 * length], [length / 6, b2 * length], [half, 0.0]])
    t = np.linspace(0.0, 1.0, n // 2)
    mid, normal = _bezier(ctrl, t)
    width = (length / aspect) * (1 + taper * (2 * t - 1))
    top = mid - normal * (width / 2)[:, None]
    bottom = mid + normal * (width / 2)[:, None]
    pts = np.vstack([top, bottom[::-1]])
    c, s = np.cos(rot), np.sin(rot)
    pts = pts @ np.array([[c, s], [-s, c]])
    return pts + np.asarray(center, dtype=float)


def _draw_latents(rng: np.random.Generator, fam: RibbonFamily) -> np.ndarray:
    return np.array([
        rng.uniform(*fam.length),
        rng.uniform(*fam.aspect),
        rng.uniform(*fam.rotation),
        rng.uniform(*fam.bend),
        rng.uniform(*fam.bend),
        rng.uniform(*fam.taper),
    ])


def generate_ribbons(count: int, seed: int, family: str = "ribbon", n: int = DEFAULT_N) -> list[Contour]:
    """Draw ``count`` simple ribbon contours, reproducibly from ``seed``.

    Non-simple draws are rejected and redrawn, at most MAX_RETRIES times per
    contour.
    """
    try:
        fam = FAMILIES[family]
    except KeyError:
        raise CorpusError(f"unknown generator family {family!r}; choose from {sorted(FAMILIES)}") from None
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        for _ in range(MAX_RETRIES):
            lat = _draw_latents(rng, fam)
            margin = fam.length[1]
            center = rng.uniform(margin, fam.image_size - margin, size=2)
            pts = ribbon(lat, n, center)
            if is_simple(pts):
                out.append(Contour(pts))
                break
        else:
            raise CorpusError(f"could not draw a simple ribbon for item {i} in {MAX_RETRIES} tries")
    return out


@dataclass(frozen=True)
class CorpusSpec:
    """Where a corpus comes from: a JSONL annotation file or the ribbon generator."""

    family: str = "ribbon"
    count: int = 500
    seed: int = 0
    path: str | None = None
    n_vertices: int = DEFAULT_N
    canon: Canonicalization = field(default_factory=Canonicalization)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["canon"] = self.canon.to_dict()
        if self.path is None:
            d.pop("path")
        else:
            for k in ("family", "count", "seed"):
                d.pop(k)
        return d

    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def load(self) -> LoadedCorpus:
        if self.path is not None:
            return load_contours(self.path, self.n_vertices)
        contours = generate_ribbons(self.count, self.seed, self.family, self.n_vertices)
        return LoadedCorpus([f"{self.family}-{self.seed}-{i}" for i in range(len(contours))], contours)
