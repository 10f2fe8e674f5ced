"""Shape codes: projection onto an orthanchor basis, reconstruction, persistence.

Also carries the truncated Fourier-descriptor baseline used for comparison.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_RESOLUTION, Contour, Frame, batch_polygon_iou, canonicalize, polygon_iou, restore
from .subspace import Basis, Canonicalization

FORMAT_VERSION = 1
ORTHONORMALITY_TOL = 1e-6


class CodecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OrthanchorBasis:
    basis: Basis
    provenance: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        return self.basis.u

    @property
    def m(self) -> int:
        return self.basis.m

    @property
    def n_vertices(self) -> int:
        return self.basis.dim // 2

    @property
    def canon(self) -> Canonicalization:
        return self.basis.canon

    @property
    def fit_method(self) -> str:
        return self.basis.fit_method


@dataclass(frozen=True, eq=False)
class ShapeCode:
    coefficients: np.ndarray
    frame: Frame = Frame()

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise CodecError("shape code coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    def to_dict(self) -> dict:
        return {"coefficients": [float(x) for x in self.coefficients], "frame": self.frame.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeCode":
        return cls(np.asarray(d["coefficients"], dtype=float), Frame.from_dict(d["frame"]))


def encode(b: OrthanchorBasis, c: Contour) -> ShapeCode:
    if c.n != b.n_vertices:
        raise CodecError(f"contour has {c.n} vertices, basis expects {b.n_vertices}")
    canon, frame = canonicalize(c, b.canon.center, b.canon.normalize_scale)
    return ShapeCode(b.u.T @ canon.flat(), frame)


def decode(b: OrthanchorBasis, s: ShapeCode) -> Contour:
    if s.coefficients.shape != (b.m,):
        raise CodecError(f"shape code has {s.coefficients.size} coefficients, basis has M={b.m}")
    return restore(Contour.from_flat(b.u @ s.coefficients), s.frame)


def reconstruct_points(b: OrthanchorBasis, points: np.ndarray) -> np.ndarray:
    """Vectorized decode(encode(.)) for a (L, N, 2) stack, in image coordinates."""
    points = np.asarray(points, dtype=float)
    if points.shape[1:] != (b.n_vertices, 2):
        raise CodecError(f"expected (L, {b.n_vertices}, 2) points, got {points.shape}")
    shift = points.mean(axis=1, keepdims=True) if b.canon.center else np.zeros((len(points), 1, 2))
    moved = points - shift
    scale = np.ones((len(points), 1, 1))
    if b.canon.normalize_scale:
        scale = np.linalg.norm(moved.reshape(len(points), -1), axis=1)[:, None, None]
        if np.any(scale <= 0):
            raise CodecError("cannot scale-normalize a zero-norm contour")
        moved = moved / scale
    x = moved.reshape(len(points), -1).T
    rec = (b.u @ (b.u.T @ x)).T.reshape(points.shape)
    return rec * scale + shift


def reconstruction_iou(b: OrthanchorBasis, c: Contour, resolution: int = DEFAULT_RESOLUTION) -> float:
    return polygon_iou(c, decode(b, encode(b, c)), resolution)


def reconstruction_ious(b: OrthanchorBasis, contours, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    """Per-contour reconstruction IoU over a list of contours."""
    pts = np.stack([c.points for c in contours])
    return batch_polygon_iou(pts, reconstruct_points(b, pts), resolution)


# ---------------------------------------------------------------------------
# Fourier baseline
# ---------------------------------------------------------------------------

def fourier_frequencies(n: int, count: int) -> list[int]:
    """First ``count`` distinct DFT bins in the order 0, +1, -1, +2, -2, ..."""
    out, seen, f = [], set(), 0
    while len(out) < count:
        for g in ((0,) if f == 0 else (f, -f)):
            if g % n not in seen and len(out) < count:
                seen.add(g % n)
                out.append(g)
        f += 1
    return out


def fourier_encode(c: Contour, dims: int) -> np.ndarray:
    """Real code [Re c0, Im c0, Re c+1, Im c+1, ...] of the lowest frequencies.

    ``dims`` counts real parameters, so dims/2 complex coefficients are kept.
    """
    n = c.n
    if int(dims) != dims or dims % 2 or not 2 <= dims <= 2 * n:
        raise CodecError(f"dims must be even with 2 <= dims <= {2 * n}, got {dims}")
    z = c.points[:, 0] + 1j * c.points[:, 1]
    spec = np.fft.fft(z) / n
    freqs = fourier_frequencies(n, dims // 2)
    kept = spec[np.asarray(freqs) % n]
    return np.stack([kept.real, kept.imag], axis=1).reshape(-1)


def fourier_decode(code, n: int) -> Contour:
    code = np.asarray(code, dtype=float)
    if code.ndim != 1 or code.size % 2 or not 2 <= code.size <= 2 * n:
        raise CodecError(f"Fourier code length must be even and in [2, {2 * n}], got {code.shape}")
    coef = code[0::2] + 1j * code[1::2]
    spec = np.zeros(n, dtype=complex)
    spec[np.asarray(fourier_frequencies(n, coef.size)) % n] = coef
    z = np.fft.ifft(spec) * n
    return Contour(np.stack([z.real, z.imag], axis=1))


def fourier_reconstruction_ious(contours, dims: int, resolution: int = DEFAULT_RESOLUTION) -> np.ndarray:
    pts = np.stack([c.points for c in contours])
    rec = np.stack([fourier_decode(fourier_encode(c, dims), c.n).points for c in contours])
    return batch_polygon_iou(pts, rec, resolution)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def matrix_hash(u: np.ndarray) -> str:
    """sha256 of the little-endian float64 row-major matrix bytes."""
    return hashlib.sha256(np.ascontiguousarray(u, dtype="<f8").tobytes()).hexdigest()


def basis_document(b: OrthanchorBasis) -> dict:
    u = b.u
    return {
        "version": FORMAT_VERSION,
        "n_vertices": b.n_vertices,
        "m": b.m,
        "fit_method": b.fit_method,
        "canonicalization": b.canon.to_dict(),
        "matrix": [format(float(x), ".17g") for x in u.reshape(-1)],
        "provenance": b.provenance,
        "hash": matrix_hash(u),
    }


def dumps_basis(b: OrthanchorBasis) -> str:
    return json.dumps(basis_document(b), indent=1, sort_keys=True) + "\n"


def save_basis(b: OrthanchorBasis, path) -> None:
    Path(path).write_text(dumps_basis(b))


def parse_basis(doc: dict) -> OrthanchorBasis:
    try:
        version = doc["version"]
        if version != FORMAT_VERSION:
            raise CodecError(f"unsupported basis file version {version!r}, expected {FORMAT_VERSION}")
        n, m = int(doc["n_vertices"]), int(doc["m"])
        flat = np.array([float(x) for x in doc["matrix"]], dtype=float)
        canon = Canonicalization(**doc["canonicalization"])
        method = doc["fit_method"]
        provenance = doc.get("provenance", {})
        expected = doc["hash"]
    except (KeyError, TypeError) as exc:
        raise CodecError(f"malformed basis file: {exc!r}") from None
    if flat.size != 2 * n * m:
        raise CodecError(f"basis advertises {2 * n}x{m} but carries {flat.size} entries")
    u = flat.reshape(2 * n, m)
    if matrix_hash(u) != expected:
        raise CodecError("basis matrix hash mismatch")
    b = Basis(u, method, canon)
    err = b.orthonormality_error()
    if err > ORTHONORMALITY_TOL:
        raise CodecError(f"basis columns are not orthonormal (max deviation {err:.3g})")
    return OrthanchorBasis(b, provenance)


def load_basis(path) -> OrthanchorBasis:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CodecError(f"basis file is not valid JSON: {exc}") from None
    return parse_basis(doc)


def code_record(ident: str, code: ShapeCode) -> str:
    return json.dumps({"id": ident, **code.to_dict()})
