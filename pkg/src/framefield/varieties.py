"""Defining quadrics of the octahedral and odeco varieties, membership
residuals, normal/tangent spaces and the odeco retraction.

The quadrics are recovered numerically: sample points of the variety, evaluate
every monomial of degree ≤ 2, and take the nullspace. Any basis of that
nullspace cuts out the same variety; the packaged basis is orthonormal under
the Frobenius inner product.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import hashlib
import io
from importlib import resources
from pathlib import Path

import numpy as np

from . import quartic, so3
from .exceptions import (DegenerateSampling, DimensionMismatch, InputError, NotTangent,
                         ParseError, SingularPoint)

SH_CONVENTION = "real-sh/m=-l..l/orthonormal-S2/band2=(-xy,-yz,3z2-r2,xz,x2-y2)/action=f(R^T x)"
OCTA_COUNT = 15
ODECO_COUNT = 27
GENERIC_NORMAL_RANK = 9
DEFAULT_SEED = 0
DEFAULT_OCTA_SAMPLES = 2000
DEFAULT_ODECO_SAMPLES = 5000


@dataclass(frozen=True)
class QuadricSet:
    """Symmetric matrices whose quadratic forms vanish on a variety.

    ``homogeneous`` sets use ``qᵀ A q``; the others act on the lifted vector
    ``(1, q)``, so their matrices have side ``dim + 1``.
    """

    name: str
    dim: int
    homogeneous: bool
    matrices: np.ndarray
    singular_values: np.ndarray = field(default=None, repr=False)
    gap_ratio: float = float("nan")

    @property
    def count(self):
        return len(self.matrices)


def random_rotations(n, rng):
    """Uniform rotations from normalized Gaussian quaternions."""
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    w, x, y, z = quat.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], axis=1)


def _quadratic_features(points, affine):
    n, d = points.shape
    iu = np.triu_indices(d)
    quad = (points[:, :, None] * points[:, None, :])[:, iu[0], iu[1]]
    if affine:
        return np.hstack([np.ones((n, 1)), points, quad])
    return quad


def _pack(vec, d, affine):
    """Coefficient vector over quadratic monomials -> symmetric matrix."""
    size = d + 1 if affine else d
    A = np.zeros((size, size))
    off = 0
    if affine:
        A[0, 0] = vec[0]
        A[0, 1:] = A[1:, 0] = 0.5 * vec[1:d + 1]
        off = d + 1
    iu = np.triu_indices(d)
    shift = 1 if affine else 0
    Q = np.zeros((d, d))
    Q[iu] = vec[off:]
    Q = 0.5 * (Q + Q.T)
    A[shift:, shift:] = Q
    return A


def _nullspace_quadrics(points, affine, expected, name):
    features = _quadratic_features(points, affine)
    _, s, vt = np.linalg.svd(features, full_matrices=False)
    rel = s / s[0]
    null = rel < 1e-10
    k = int(null.sum())
    if k == 0 or k == len(s):
        raise DegenerateSampling(f"{name}: no clean nullspace in the sample matrix")
    gap = rel[~null][-1] / max(rel[null][0], 1e-300)
    if gap < 1e4 or k != expected:
        raise DegenerateSampling(
            f"{name}: nullspace dimension {k} (expected {expected}), gap ratio {gap:.3g}")
    d = points.shape[1]
    mats = np.stack([_pack(v, d, affine) for v in vt[null]])
    # orthonormalize under the Frobenius inner product
    flat = mats.reshape(k, -1)
    _, _, basis = np.linalg.svd(flat, full_matrices=False)
    mats = basis.reshape(mats.shape)
    mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    return mats, s, gap


def derive_octa_quadrics(samples=DEFAULT_OCTA_SAMPLES, seed=DEFAULT_SEED):
    """The 15 inhomogeneous quadrics on (1, q) cutting out the octahedral variety."""
    if samples < 500:
        raise InputError("derive_octa_quadrics needs at least 500 samples")
    rng = np.random.default_rng(seed)
    W = so3.wigner_from_rotation(4, random_rotations(samples, rng), check=False)
    points = W @ so3.Q0
    mats, s, gap = _nullspace_quadrics(points, True, OCTA_COUNT, "octahedral")
    return QuadricSet("octahedral", 9, False, mats, s, gap)


def random_odeco(n, rng, lambdas=None):
    """Random odeco frames: standard normal weights, uniform random axes."""
    if lambdas is None:
        lambdas = rng.normal(size=(n, 3))
    axes = random_rotations(n, rng)
    return quartic.odeco_from_decomposition(lambdas, np.swapaxes(axes, 1, 2), check=False)


def derive_odeco_quadrics(samples=DEFAULT_ODECO_SAMPLES, seed=DEFAULT_SEED):
    """The 27 homogeneous quadrics cutting out the odeco variety (SH basis)."""
    if samples < 2000:
        raise InputError("derive_odeco_quadrics needs at least 2000 samples")
    rng = np.random.default_rng(seed)
    points = random_odeco(samples, rng)
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    mats, s, gap = _nullspace_quadrics(points, False, ODECO_COUNT, "odeco")
    return QuadricSet("odeco", 15, True, mats, s, gap)


def zaligned_odeco_quadrics():
    """The three 5×5 quadrics on the chart coordinates of z-aligned odeco frames."""
    r = 3.0 * np.sqrt(2.0)
    A1 = np.array([[-4, 0, -r, 0, 0],
                   [0, 0, 0, 18, 0],
                   [-r, 0, 0, 0, 18],
                   [0, 18, 0, 72, 0],
                   [0, 0, 18, 0, 72]], dtype=float)
    A2 = np.array([[0, 2 * r, 0, 0, 0],
                   [2 * r, 0, 0, 0, 36],
                   [0, 0, 0, -36, 0],
                   [0, 0, -36, 0, 0],
                   [0, 36, 0, 0, 0]], dtype=float)
    A3 = np.array([[-4, 0, r, 0, 0],
                   [0, 0, 0, -18, 0],
                   [r, 0, 0, 0, -18],
                   [0, -18, 0, 72, 0],
                   [0, 0, -18, 0, 72]], dtype=float)
    return QuadricSet("zaligned-odeco", 5, True, np.stack([A1, A2, A3]))


def residual(q, quadrics):
    """max_i |qᵀ A_i q| (or on (1, q) for lifted sets); batched over leading axes."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != quadrics.dim:
        raise DimensionMismatch(f"expected vectors of length {quadrics.dim}, got {q.shape[-1]}")
    if not quadrics.homogeneous:
        q = np.concatenate([np.ones(q.shape[:-1] + (1,)), q], axis=-1)
    vals = np.einsum("...i,kij,...j->...k", q, quadrics.matrices, q)
    return np.abs(vals).max(axis=-1)


# ---------------------------------------------------------------- data file

def _format_body(sets):
    buf = io.StringIO()
    for qs in sets:
        size = qs.matrices.shape[1]
        buf.write(f"[{qs.name}] dim={qs.dim} count={qs.count} "
                  f"homogeneous={int(qs.homogeneous)} size={size} gap={float(qs.gap_ratio)!r}\n")
        for A in qs.matrices:
            for row in A:
                buf.write(" ".join(repr(float(x)) for x in row))
                buf.write("\n")
    return buf.getvalue()


def content_hash(sets):
    return hashlib.sha256(_format_body(sets).encode()).hexdigest()


def save_quadrics(path, octa, odeco, seed=None, samples=None):
    """Write the quadric data file; returns its content hash."""
    body = _format_body([octa, odeco])
    digest = hashlib.sha256(body.encode()).hexdigest()
    header = [
        "# framefield quadric data v1",
        f"# sh_convention: {SH_CONVENTION}",
        f"# seed: {seed}",
        f"# samples: {samples}",
        f"# content_hash: {digest}",
    ]
    Path(path).write_text("\n".join(header) + "\n" + body)
    return digest


def load_quadrics(path):
    """Read a quadric data file -> (octa QuadricSet, odeco QuadricSet, header dict)."""
    text = Path(path).read_text() if not hasattr(path, "read_text") else path.read_text()
    header, body_lines = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.startswith("#"):
            if ":" in line:
                key, _, val = line[1:].partition(":")
                header[key.strip()] = val.strip()
        elif line.strip():
            body_lines.append((lineno, line))
    body = "".join(line + "\n" for _, line in body_lines)
    digest = hashlib.sha256(body.encode()).hexdigest()
    if header.get("content_hash") not in (None, digest):
        raise ParseError("content hash mismatch", path=str(path))
    if header.get("sh_convention", SH_CONVENTION) != SH_CONVENTION:
        raise ParseError("quadric file uses a different spherical-harmonic convention",
                         path=str(path))
    sets = {}
    i = 0
    while i < len(body_lines):
        lineno, line = body_lines[i]
        if not line.startswith("["):
            raise ParseError("expected a section header", line=lineno, path=str(path))
        name = line[1:line.index("]")]
        fields = dict(kv.split("=", 1) for kv in line[line.index("]") + 1:].split())
        try:
            count, size = int(fields["count"]), int(fields["size"])
            rows = [np.array(body_lines[i + 1 + r][1].split(), dtype=float)
                    for r in range(count * size)]
        except (KeyError, ValueError, IndexError) as exc:
            raise ParseError(f"malformed section {name!r}: {exc}", line=lineno,
                             path=str(path)) from None
        mats = np.array(rows).reshape(count, size, size)
        sets[name] = QuadricSet(name, int(fields["dim"]), bool(int(fields["homogeneous"])),
                                mats, gap_ratio=float(fields.get("gap", "nan")))
        i += 1 + count * size
    try:
        return sets["octahedral"], sets["odeco"], header
    except KeyError as exc:
        raise ParseError(f"missing section {exc}", path=str(path)) from None


_active_path = None


def use_quadrics(path):
    """Make the solvers load quadrics from ``path`` instead of the packaged file."""
    global _active_path
    _active_path = None if path is None else Path(path)
    default_quadrics.cache_clear()


@lru_cache(maxsize=None)
def default_quadrics():
    """(octa, odeco) quadric sets: packaged data file, derived on the fly if absent."""
    if _active_path is not None:
        octa, odeco, _ = load_quadrics(_active_path)
        return octa, odeco
    packaged = resources.files("framefield") / "data" / "quadrics.txt"
    if packaged.is_file():
        octa, odeco, _ = load_quadrics(packaged)
        return octa, odeco
    return derive_octa_quadrics(), derive_odeco_quadrics()


def octa_quadrics():
    return default_quadrics()[0]


def odeco_quadrics():
    return default_quadrics()[1]


def octa_residual(q):
    return residual(q, octa_quadrics())


def odeco_residual(q):
    return residual(q, odeco_quadrics())


# ---------------------------------------------------------- local geometry

def _orth(vectors, tol):
    """Orthonormal basis (columns) of the span of the columns of ``vectors``."""
    if vectors.shape[1] == 0:
        return vectors
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    return u[:, s > tol]


def odeco_normal_space(q, quadrics=None, on_singular="raise"):
    """Orthonormal basis (15 × r) of span{A_i q}.

    At smooth points r = 9. Smaller rank means ``q`` sits on a singular
    stratum; this raises :class:`SingularPoint` unless ``on_singular='ignore'``.
    """
    quadrics = quadrics or odeco_quadrics()
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        if on_singular == "raise":
            raise SingularPoint("the origin is the singular point of the odeco cone", rank=0)
        return np.zeros((15, 0))
    basis = _orth((quadrics.matrices @ q).T, 1e-8 * norm)
    if basis.shape[1] < GENERIC_NORMAL_RANK and on_singular == "raise":
        err = SingularPoint(f"normal space has rank {basis.shape[1]} < "
                            f"{GENERIC_NORMAL_RANK}", rank=basis.shape[1])
        err.basis = basis
        raise err
    return basis


@dataclass(frozen=True)
class TangentSplit:
    rotational: np.ndarray
    scaling: np.ndarray

    @property
    def tangent(self):
        return np.hstack([self.rotational, self.scaling])


def odeco_tangent_split(q, quadrics=None):
    """Tangent space at ``q`` as rotational ⊕ scaling (orthonormal columns)."""
    q = np.asarray(q, dtype=float)
    normal = odeco_normal_space(q, quadrics)
    tangent = np.eye(15) - normal @ normal.T
    tangent = _orth(tangent, 0.5)
    rot_dirs = (so3.odeco_generators() @ q).T
    rotational = _orth(rot_dirs, 1e-8 * max(np.linalg.norm(q), 1e-300))
    rest = tangent - rotational @ (rotational.T @ tangent)
    scaling = _orth(rest, 1e-6)
    return TangentSplit(rotational, scaling)


def odeco_retract(q, v, quadrics=None, tangent_tol=1e-8):
    """retr_q(v) = exp(v_r · L̃)(q + v_s): rotate the scaled frame."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    normal = odeco_normal_space(q, quadrics)
    if np.linalg.norm(normal.T @ v) > tangent_tol * max(1.0, np.linalg.norm(v)):
        raise NotTangent("step is not tangent to the odeco variety")
    split = odeco_tangent_split(q, quadrics)
    v_s = split.scaling @ (split.scaling.T @ v)
    v_r = v - v_s
    dirs = (so3.odeco_generators() @ q).T
    coef = np.linalg.lstsq(dirs, v_r, rcond=None)[0]
    return so3.odeco_wigner(v=coef) @ (q + v_s)
