"""Rotation machinery: Lie algebra generators, real Wigner matrices on the
even spherical-harmonic bands, the octahedral group and octahedral geodesics.

Conventions
-----------
* ``exp(v · l)`` with ``v · l = v[0] l1 + v[1] l2 + v[2] l3`` is the rotation
  attached to the axis-angle vector ``v``. With the generators below,
  ``v · l = -[P v]_×`` where ``P = diag(1, -1, 1)`` and ``[a]_×`` is the
  cross-product matrix; l2 has the opposite handedness of l1 and l3.
* A rotation ``R`` acts on functions on the sphere by ``f ↦ f ∘ Rᵀ``;
  ``wigner(band, R)`` is the matrix of that action in the real spherical
  harmonic basis of the band (ordering m = -band..band).
* Everything accepts a single item or a leading batch axis.
"""
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .exceptions import NotARotation, NotOnVariety, NotUnit

l1 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
l2 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
l3 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
LIE_GENERATORS = np.stack([l1, l2, l3])
LIE_GENERATORS.setflags(write=False)

ALPHA = np.sqrt(3.0 / 20.0)
Q0 = np.array([0.0, 0.0, 0.0, 0.0, np.sqrt(7.0 / 12.0), 0.0, 0.0, 0.0, np.sqrt(5.0 / 12.0)])
Q0.setflags(write=False)

#: Squared norm of each L_i q for unit q on the octahedral variety (= 1/ALPHA²).
TANGENT_NORM2 = 20.0 / 3.0

BANDS = (0, 2, 4)

_FLIP_Y = np.array([1.0, -1.0, 1.0])


def _skew(n, entries):
    L = np.zeros((n, n))
    for (i, j), v in entries.items():
        L[i, j] = v
        L[j, i] = -v
    return L


def _band4_generators():
    s2, s72, c3, s10 = np.sqrt(2.0), np.sqrt(3.5), 3.0 / np.sqrt(2.0), np.sqrt(10.0)
    L1 = _skew(9, {(0, 7): -s2, (1, 6): -s72, (1, 8): -s2, (2, 5): -c3,
                   (2, 7): -s72, (3, 4): -s10, (3, 6): -c3})
    L2 = _skew(9, {(0, 1): s2, (1, 2): s72, (2, 3): c3, (4, 5): -s10,
                   (5, 6): -c3, (6, 7): -s72, (7, 8): -s2})
    L3 = _skew(9, {(k, 8 - k): 4.0 - k for k in range(4)})
    return L1, L2, L3


def _band2_generators():
    # Basis (-xy, -yz, 3z²-r², xz, x²-y²), each normalized on the sphere; same
    # sign pattern as the band-4 matrices. tests/test_so3.py re-derives these
    # by differentiating the rotation action on polynomials.
    s3 = np.sqrt(3.0)
    L1 = _skew(5, {(0, 3): -1.0, (1, 2): -s3, (1, 4): -1.0})
    L2 = _skew(5, {(0, 1): 1.0, (2, 3): -s3, (3, 4): -1.0})
    L3 = _skew(5, {(0, 4): 2.0, (1, 3): 1.0})
    return L1, L2, L3


@lru_cache(maxsize=None)
def band_generators(band):
    """The three (2·band+1)² skew generator matrices of a band, stacked."""
    if band == 4:
        gens = np.stack(_band4_generators())
    elif band == 2:
        gens = np.stack(_band2_generators())
    elif band == 0:
        gens = np.zeros((3, 1, 1))
    else:
        raise ValueError(f"unsupported band {band}; expected 0, 2 or 4")
    gens.setflags(write=False)
    return gens


@lru_cache(maxsize=None)
def odeco_generators():
    """Generators on V0 ⊕ V2 ⊕ V4 (15 × 15 block diagonal)."""
    gens = np.zeros((3, 15, 15))
    gens[:, 1:6, 1:6] = band_generators(2)
    gens[:, 6:, 6:] = band_generators(4)
    gens.setflags(write=False)
    return gens


@lru_cache(maxsize=None)
def r23(band):
    """ρ(exp((π/2) l1)) for the band."""
    out = expm(0.5 * np.pi * band_generators(band)[0])
    out.setflags(write=False)
    return out


def wigner_z(band, theta):
    """exp(theta · L3) in closed form; ``theta`` may be an array."""
    theta = np.asarray(theta, dtype=float)
    d = 2 * band + 1
    out = np.zeros(theta.shape + (d, d))
    out[..., band, band] = 1.0
    for k in range(band):
        m = band - k
        c, s = np.cos(m * theta), np.sin(m * theta)
        out[..., k, k] = c
        out[..., d - 1 - k, d - 1 - k] = c
        out[..., k, d - 1 - k] = s
        out[..., d - 1 - k, k] = -s
    return out


def _hat(v):
    """v · l, i.e. Σ v_i l_i."""
    v = np.asarray(v, dtype=float)
    return np.einsum("...i,ijk->...jk", v, LIE_GENERATORS)


def rotation_from_axis_angle(v):
    """exp(v · l) via Rodrigues; batched over leading axes of ``v``."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    K = _hat(v)
    safe = np.where(theta > 0, theta, 1.0)
    Kn = K / safe
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + np.sin(theta) * Kn + (1.0 - np.cos(theta)) * (Kn @ Kn)


def _check_rotation(R, tol=1e-8):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise NotARotation(f"expected 3x3 matrices, got shape {R.shape}")
    err = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max(axis=(-1, -2))
    if np.any(err > tol) or np.any(np.linalg.det(R) <= 0):
        raise NotARotation("matrix is not a proper rotation (RᵀR ≠ I or det ≤ 0)")
    return R


def axis_angle_from_rotation(R, check=True):
    """Inverse of :func:`rotation_from_axis_angle` with angle in [0, π]."""
    if check:
        R = _check_rotation(R)
    R = np.asarray(R, dtype=float)
    single = R.ndim == 2
    R = R.reshape(-1, 3, 3)
    out = np.zeros((R.shape[0], 3))
    skew = 0.5 * (R - np.swapaxes(R, -1, -2))
    # v · l = -[P v]_x, so the "vee" of the skew part is -sin(θ) P v̂
    w = -np.stack([skew[:, 2, 1], -skew[:, 0, 2], skew[:, 1, 0]], axis=-1)
    cos_t = 0.5 * (np.trace(R, axis1=1, axis2=2) - 1.0)
    theta = np.arctan2(np.linalg.norm(w, axis=-1), cos_t)
    small = theta < 1e-6
    mid = ~small & (theta <= 0.5 * np.pi)
    obtuse = theta > 0.5 * np.pi
    out[small] = w[small]
    out[mid] = (theta[mid] / np.sin(theta[mid]))[:, None] * w[mid]
    for i in np.flatnonzero(obtuse):
        # R + Rᵀ = 2cos(θ) I + 2(1 - cos θ) n nᵀ is well conditioned here
        nn = (R[i] + R[i].T - 2.0 * cos_t[i] * np.eye(3)) / (2.0 * (1.0 - cos_t[i]))
        k = int(np.argmax(np.diag(nn)))
        axis = nn[:, k] / np.sqrt(nn[k, k]) * _FLIP_Y
        if axis @ w[i] < 0:
            axis = -axis
        out[i] = theta[i] * axis
    return out[0] if single else out


def wigner_from_axis_angle(band, v):
    """ρ(exp(v · l)) on the band, built from ``wigner_z`` and ``r23`` only."""
    v = np.asarray(v, dtype=float)
    d = 2 * band + 1
    angle = np.linalg.norm(v, axis=-1)
    out = np.broadcast_to(np.eye(d), angle.shape + (d, d)).copy()
    nz = angle > 0
    if not np.any(nz):
        return out
    vn = v[nz] / angle[nz][..., None]
    # spherical angles of P v̂; r = exp(-polar l2) exp(azimuth l3) satisfies
    # rᵀ l3 r = v̂ · l, and ρ(exp(-a l2)) = R23 exp(a L3) R23ᵀ
    azimuth = np.arctan2(-vn[..., 1], vn[..., 0])
    polar = np.arctan2(np.hypot(vn[..., 0], vn[..., 1]), vn[..., 2])
    R = r23(band)
    rho_r = R @ wigner_z(band, polar) @ R.T @ wigner_z(band, azimuth)
    out[nz] = np.swapaxes(rho_r, -1, -2) @ wigner_z(band, angle[nz]) @ rho_r
    return out


def wigner_from_rotation(band, R, check=True):
    return wigner_from_axis_angle(band, axis_angle_from_rotation(R, check=check))


def odeco_wigner(R=None, v=None):
    """Direct-sum Wigner matrix on V0 ⊕ V2 ⊕ V4 from a rotation or axis-angle."""
    if v is None:
        v = axis_angle_from_rotation(R)
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (15, 15))
    out[..., 0, 0] = 1.0
    out[..., 1:6, 1:6] = wigner_from_axis_angle(2, v)
    out[..., 6:, 6:] = wigner_from_axis_angle(4, v)
    return out


@lru_cache(maxsize=None)
def _octahedral_group():
    gens = [np.rint(expm(0.5 * np.pi * l)) for l in LIE_GENERATORS]
    elements = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier:
        new = []
        for g in frontier:
            for h in gens:
                cand = g @ h
                if all(np.abs(cand - e).max() >= 1e-8 for e in elements):
                    elements.append(cand)
                    new.append(cand)
        frontier = new
        if len(elements) > 24:
            break
    if len(elements) != 24:
        raise RuntimeError(f"octahedral closure produced {len(elements)} elements")
    out = np.stack(elements)
    out.setflags(write=False)
    return out


def octahedral_group():
    """The 24 rotations of the cube, as a (24, 3, 3) array; identity first."""
    return _octahedral_group()


@lru_cache(maxsize=None)
def group_average_projector():
    """H = (1/24) Σ_g ρ(g) on band 4; equals q0 q0ᵀ."""
    H = wigner_from_rotation(4, octahedral_group()).mean(axis=0)
    H.setflags(write=False)
    return H


def rotation_taking_z_to(n, tol=1e-8):
    """Deterministic rotation r with r e_z = n (Rodrigues about e_z × n).

    The antipode n = -e_z maps to the rotation by π about the x axis.
    """
    n = np.asarray(n, dtype=float)
    norms = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise NotUnit("normal must have unit length")
    single = n.ndim == 1
    n = n.reshape(-1, 3)
    c = n[:, 2]
    w = np.stack([-n[:, 1], n[:, 0], np.zeros_like(c)], axis=-1)  # e_z × n
    W = np.zeros((n.shape[0], 3, 3))
    W[:, 0, 1], W[:, 0, 2] = -w[:, 2], w[:, 1]
    W[:, 1, 0], W[:, 1, 2] = w[:, 2], -w[:, 0]
    W[:, 2, 0], W[:, 2, 1] = -w[:, 1], w[:, 0]
    antipodal = c < -1.0 + 1e-9
    denom = np.where(antipodal, 1.0, 1.0 + c)
    out = np.eye(3) + W + (W @ W) / denom[:, None, None]
    out[antipodal] = np.diag([1.0, -1.0, -1.0])
    return out[0] if single else out


def octa_tangent_basis(q):
    """Rows L_i q (shape (3, 9), or (n, 3, 9) for a batch of frames)."""
    q = np.asarray(q, dtype=float)
    return np.einsum("ijk,...k->...ij", band_generators(4), q)


def octa_exp(q, v, check=True):
    """Geodesic step on the octahedral variety: ρ(exp(v · l)) q.

    ``v`` holds tangent coefficients in the bi-invariant metric, so the frame
    rotates by the angle ‖v‖; the embedded curve has speed ‖v‖ / ALPHA.
    """
    q = np.asarray(q, dtype=float)
    if check:
        from .varieties import octa_residual

        if np.max(octa_residual(q)) > 1e-6:
            raise NotOnVariety("frame is not on the octahedral variety")
    W = wigner_from_axis_angle(4, v)
    return np.einsum("...ij,...j->...i", W, q)
