"""Projections onto the octahedral and odeco varieties and onto their
boundary-aligned subsets.

Unconstrained projections go through the SDP relaxation and report the
eigenvalue-ratio certificate λ₂/λ₁. When the relaxation is not tight the
result comes from a deterministic local refinement instead, and the ratio
returned with it makes that visible.
"""
from dataclasses import dataclass

import numpy as np

from . import quartic, sdp, so3
from .exceptions import (DegenerateQuery, DimensionMismatch, NotUnit, SingularPoint,
                         SolverFailure)
from .quartic import BAND4
from .varieties import (odeco_quadrics, odeco_tangent_split, octa_quadrics,
                        zaligned_odeco_quadrics)

RATIO_TOL = 1e-6
REFINE_STEPS = 50


# ------------------------------------------------------------------ helpers

def _rows(y, dim):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[-1] != dim:
        raise DimensionMismatch(f"expected vectors of length {dim}, got {y.shape[-1]}")
    return y, single


def _top_candidate(solution):
    """Dehomogenized top eigenvector of an SDP solution."""
    w, V = np.linalg.eigh(solution.X)
    u = V[:, -1] * np.sqrt(max(w[-1], 0.0))
    if abs(u[0]) > 1e-8:
        return u[1:] / u[0]
    return u[1:]


def frame_from_axes(axes):
    """Octahedral frame whose axes are the rows of ``axes``."""
    M = np.asarray(axes, dtype=float)
    if np.linalg.det(M) < 0:
        M = M.copy()
        M[2] *= -1
    return so3.wigner_from_rotation(4, M.T) @ so3.Q0


def nearest_axes(c):
    """Axes of the best odeco fit to the band-4 vector ``c``."""
    full = np.zeros(15)
    full[0] = quartic.octa_band0_constant()
    full[BAND4] = c / max(np.linalg.norm(c), 1e-300)
    return quartic.tensor_decompose(full, check=False).axes


def _refine_octa(q, y, steps=REFINE_STEPS):
    """Geodesic ascent of ⟨q, y⟩ on the octahedral variety."""
    value = q @ y
    L = so3.band_generators(4)
    for _ in range(steps):
        g = (L @ q) @ y
        if np.linalg.norm(g) < 1e-15:
            break
        t = 3.0 / 20.0
        while t > 1e-12:
            cand = so3.wigner_from_axis_angle(4, t * g) @ q
            if cand @ y > value:
                q, value = cand, cand @ y
                break
            t *= 0.5
        else:
            break
    return q


def _polish_octa(q, y, steps=8):
    """Riemannian Newton iterations for max ⟨q, y⟩ on the octahedral variety.

    Interior-point solutions pin the optimum only to about √gap along the
    variety; a few Newton steps recover full precision.
    """
    L = so3.band_generators(4)
    value = q @ y
    for _ in range(steps):
        Lq = L @ q
        g = Lq @ y
        if np.linalg.norm(g) <= 1e-15 * max(1.0, np.linalg.norm(y)):
            break
        LLq = np.einsum("iab,jbc,c->ija", L, L, q)
        H = 0.5 * (LLq + LLq.transpose(1, 0, 2)) @ y
        w = np.linalg.eigvalsh(H)
        if w[-1] >= 0:
            break
        cand = so3.wigner_from_axis_angle(4, -np.linalg.solve(H, g)) @ q
        if cand @ y < value - 1e-15 * max(1.0, abs(value)):
            break
        q, value = cand, cand @ y
    return q


def _octa_fallback(y, candidate):
    starts = [frame_from_axes(nearest_axes(c)) for c in (candidate, y)
              if np.linalg.norm(c) > 1e-12]
    if not starts:
        return so3.Q0.copy()
    best = max(starts, key=lambda q: q @ y)
    return _refine_octa(best, y)


def _odeco_start(c):
    dec = quartic.tensor_decompose(c, check=False)
    design = quartic.monomial_to_sh(quartic.power_monomials(dec.axes)).T
    lambdas = np.linalg.lstsq(design, c, rcond=None)[0]
    return design @ lambdas


def _refine_odeco(q, y, steps=REFINE_STEPS):
    """Retraction-based gradient descent of ‖q − y‖² on the odeco variety."""
    quadrics = odeco_quadrics()
    for _ in range(steps):
        try:
            split = odeco_tangent_split(q, quadrics)
        except SingularPoint:
            break
        T = split.tangent
        step = T @ (T.T @ (y - q))
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(y)):
            break
        dist = np.linalg.norm(q - y)
        t = 1.0
        while t > 1e-10:
            rs = split.rotational @ (split.rotational.T @ (t * step))
            ss = t * step - rs
            dirs = (so3.odeco_generators() @ q).T
            coef = np.linalg.lstsq(dirs, rs, rcond=None)[0]
            cand = so3.odeco_wigner(v=coef) @ (q + ss)
            if np.linalg.norm(cand - y) < dist:
                q = cand
                break
            t *= 0.5
        else:
            break
    return q


def _polish_odeco(q, y, steps=8):
    """Newton iterations for ½‖q − y‖² over rotations and weights of an odeco frame."""
    if np.linalg.norm(q) < 1e-12:
        return q
    dec = quartic.tensor_decompose(q, check=False)
    axes, lam = dec.axes, dec.lambdas
    Lt = so3.odeco_generators()

    def frame(axes, lam):
        S = quartic.monomial_to_sh(quartic.power_monomials(axes)).T
        return S @ lam, S

    q, S = frame(axes, lam)
    cost = 0.5 * np.sum((q - y) ** 2)
    for _ in range(steps):
        r = q - y
        J = np.hstack([(Lt @ q).T, S])
        g = J.T @ r
        if np.linalg.norm(g) <= 1e-15 * max(1.0, np.linalg.norm(y)):
            break
        H = J.T @ J
        LLq = np.einsum("iab,jbc,c->ija", Lt, Lt, q)
        H[:3, :3] += 0.5 * (LLq + LLq.transpose(1, 0, 2)) @ r
        H[:3, 3:] += np.einsum("iab,bj,a->ij", Lt, S, r)
        H[3:, :3] = H[:3, 3:].T
        w, V = np.linalg.eigh(H)
        keep = w > 1e-10 * max(w[-1], 1e-300)
        step = -(V[:, keep] @ ((V[:, keep].T @ g) / w[keep]))
        R = so3.rotation_from_axis_angle(step[:3])
        new_axes, new_lam = axes @ R.T, lam + step[3:]
        cand, S_new = frame(new_axes, new_lam)
        new_cost = 0.5 * np.sum((cand - y) ** 2)
        if new_cost > cost + 1e-15 * max(1.0, cost):
            break
        axes, lam, q, S, cost = new_axes, new_lam, cand, S_new, new_cost
    return q


def _odeco_fallback(y, candidate):
    starts = [_odeco_start(c) for c in (candidate, y)]
    starts.append(np.zeros(15))
    best = min(starts, key=lambda q: np.linalg.norm(q - y))
    if np.linalg.norm(best) < 1e-12:
        return best
    return _refine_odeco(best, y)


def _project(y, quadrics, fallback, polish, workers, ratio_tol):
    A, b = sdp.homogenized_constraints(quadrics)
    sols = sdp.solve_many(sdp._projection_cost(y), A, b, workers=workers)
    out = np.zeros_like(y)
    ratio = np.zeros(len(y))
    for i, sol in enumerate(sols):
        if sol.status == sdp.Status.NUMERICAL_FAILURE:
            raise SolverFailure(f"SDP failed for query {i}")
        ratio[i] = sol.eig_ratio
        q = sdp.rank1_extract(sol, ratio_tol) if sol.status == sdp.Status.OPTIMAL else None
        out[i] = polish(q, y[i]) if q is not None else fallback(y[i], _top_candidate(sol))
    return out, ratio


def project_octa(y, workers=1, ratio_tol=RATIO_TOL):
    """Nearest octahedral frame(s) to ``y`` with the SDP certificate ratio."""
    y, single = _rows(y, 9)
    q, ratio = _project(y, octa_quadrics(), _octa_fallback, _polish_octa, workers, ratio_tol)
    return (q[0], ratio[0]) if single else (q, ratio)


def project_odeco(y, workers=1, ratio_tol=RATIO_TOL):
    """Nearest odeco frame(s) to ``y`` with the SDP certificate ratio."""
    y, single = _rows(y, 15)
    q, ratio = _project(y, odeco_quadrics(), _odeco_fallback, _polish_odeco, workers, ratio_tol)
    return (q[0], ratio[0]) if single else (q, ratio)


# ------------------------------------------------------------------- charts

_OCTA_QZ = np.zeros(9)
_OCTA_QZ[4] = np.sqrt(7.0 / 12.0)
_OCTA_BZ = np.zeros((9, 2))
_OCTA_BZ[8, 0] = np.sqrt(5.0 / 12.0)  # cos(4t) slot
_OCTA_BZ[0, 1] = np.sqrt(5.0 / 12.0)  # sin(4t) slot
for _a in (_OCTA_QZ, _OCTA_BZ):
    _a.setflags(write=False)


def _check_unit(n):
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-8:
        raise NotUnit("normal must be a unit 3-vector")
    return n


@dataclass(frozen=True)
class AlignedChartOcta:
    """Frames with an axis along ``normal``: rot (q_z + B_z s), ‖s‖ = 1."""

    normal: np.ndarray
    q_z: np.ndarray
    B_z: np.ndarray
    rot: np.ndarray

    def point(self, s):
        return self.rot @ (self.q_z + self.B_z @ np.asarray(s, dtype=float))


def octa_aligned_chart(n):
    n = _check_unit(n)
    rot = so3.wigner_from_rotation(4, so3.rotation_taking_z_to(n))
    return AlignedChartOcta(n, _OCTA_QZ, _OCTA_BZ, rot)


def _aligned_octa_coords(y, rot):
    return np.einsum("...ji,...j->...i", rot, y) @ _OCTA_BZ


def project_octa_aligned(y, chart, on_degenerate="tiebreak"):
    """Closed-form nearest frame with an axis along the chart normal.

    A query with no component in the chart directions has every aligned frame
    at the same distance; the tie is broken by s = (1, 0) unless
    ``on_degenerate='raise'``.
    """
    y = np.asarray(y, dtype=float)
    s = _aligned_octa_coords(y, chart.rot)
    norm = np.linalg.norm(s)
    if norm <= 1e-12:
        if on_degenerate == "raise":
            raise DegenerateQuery("query has no component along the aligned family")
        s = np.array([1.0, 0.0])
    else:
        s = s / norm
    return chart.point(s)


def project_octa_aligned_batch(y, rots):
    """Vectorized :func:`project_octa_aligned` for per-row rotations."""
    s = _aligned_octa_coords(y, rots)
    norm = np.linalg.norm(s, axis=-1, keepdims=True)
    s = np.where(norm > 1e-12, s / np.where(norm > 1e-12, norm, 1.0), np.array([1.0, 0.0]))
    return np.einsum("...ij,...j->...i", rots, _OCTA_QZ + s @ _OCTA_BZ.T)


def _binary_quartics():
    """Monomial vectors of (x²+y²)², the two frequency-2 and the two
    frequency-4 binary quartics, and z⁴."""
    vec = quartic._monomial_vector
    e0 = vec({(4, 0, 0): 1, (2, 2, 0): 2, (0, 4, 0): 1}, 4)
    c2 = vec({(4, 0, 0): 1, (0, 4, 0): -1}, 4)
    s2 = vec({(3, 1, 0): 2, (1, 3, 0): 2}, 4)
    c4 = vec({(4, 0, 0): 1, (2, 2, 0): -6, (0, 4, 0): 1}, 4)
    s4 = vec({(3, 1, 0): 4, (1, 3, 0): -4}, 4)
    z4 = vec({(0, 0, 4): 1}, 4)
    return e0, c2, s2, c4, s4, z4


def odeco_normal_weight():
    """Weight of every axis of an octahedral frame embedded as odeco."""
    full = quartic.octa_to_odeco(so3.Q0, check=False)
    return float(quartic.tensor_decompose(full).lambdas[0])


def _odeco_chart_basis(weight):
    e0, c2, s2, c4, s4, z4 = _binary_quartics()
    r2 = np.sqrt(2.0)
    B = quartic.monomial_to_sh(np.stack([e0, c2, s2, r2 * s4, -r2 * c4])).T
    return weight * quartic.monomial_to_sh(z4), B


@dataclass(frozen=True)
class AlignedChartOdeco:
    """Odeco frames with one axis along ``normal`` carrying weight ``weight``:
    rot (q_z + B_z s) with s on the three z-aligned quadrics."""

    normal: np.ndarray
    q_z: np.ndarray
    B_z: np.ndarray
    rot: np.ndarray
    weight: float

    def point(self, s):
        return self.rot @ (self.q_z + self.B_z @ np.asarray(s, dtype=float))


def odeco_aligned_chart(n, weight=None):
    """Chart of odeco frames aligned to ``n``.

    ``weight`` is the fixed coefficient of the normal axis; it defaults to the
    weight of embedded octahedral frames so those stay feasible.
    """
    n = _check_unit(n)
    weight = odeco_normal_weight() if weight is None else float(weight)
    q_z, B_z = _odeco_chart_basis(weight)
    rot = so3.odeco_wigner(R=so3.rotation_taking_z_to(n))
    return AlignedChartOdeco(n, q_z, B_z, rot, weight)


def chart_coordinates(lambdas12, t):
    """Chart coordinates s of the z-aligned frame with in-plane axes at angle
    t and 0 + π/2 carrying weights λ₁, λ₂."""
    l1, l2 = (np.asarray(v, dtype=float) for v in lambdas12)
    S, D = l1 + l2, l1 - l2
    f0 = 3.0 * S / 8.0
    a2 = D / 2.0
    a4 = S / 8.0
    t = np.asarray(t, dtype=float)
    return np.stack([f0, a2 * np.cos(2 * t), a2 * np.sin(2 * t),
                     a4 * np.sin(4 * t) / np.sqrt(2.0),
                     -a4 * np.cos(4 * t) / np.sqrt(2.0)], axis=-1)


def _chart_dcoords(lambdas12, t):
    """Derivative of :func:`chart_coordinates` in t."""
    l1, l2 = lambdas12
    S, D = l1 + l2, l1 - l2
    return np.array([0.0, -D * np.sin(2 * t), D * np.cos(2 * t),
                     S * np.cos(4 * t) / np.sqrt(2.0), S * np.sin(4 * t) / np.sqrt(2.0)])


def _chart_fit(t, target, B):
    """Best weights at angle t, the residual norm and its t-derivative."""
    cols = np.stack([B @ chart_coordinates((1.0, 0.0), t),
                     B @ chart_coordinates((0.0, 1.0), t)], axis=-1)
    lam = np.linalg.lstsq(cols, target, rcond=None)[0]
    r = cols @ lam - target
    return np.linalg.norm(r), lam, (B @ _chart_dcoords(lam, t)) @ r


def _chart_polish(target, B, t0, h):
    """Root of the angle derivative near t0 (the weights are optimal at every
    t, so this is a critical point of the distance)."""
    from scipy.optimize import brentq

    def slope(t):
        return _chart_fit(t, target, B)[2]

    lo, hi = t0 - h, t0 + h
    for _ in range(6):
        if slope(lo) <= 0.0 <= slope(hi):
            t = brentq(slope, lo, hi, xtol=1e-15, rtol=1e-15)
            return t, _chart_fit(t, target, B)
        lo, hi = t0 - 2 * (t0 - lo), t0 + 2 * (hi - t0)
    return t0, _chart_fit(t0, target, B)


def _chart_scan(target, B, grid=720):
    """Global nearest point of the aligned family to ``target`` in R¹⁵
    (target already expressed relative to q_z): scan the in-plane angle,
    solving for the two weights in closed form, then polish the best angle."""
    ts = np.linspace(0.0, np.pi / 2, grid, endpoint=False)
    errs = [_chart_fit(t, target, B)[0] for t in ts]
    k = int(np.argmin(errs))
    t, (_, lam, _) = _chart_polish(target, B, ts[k], ts[1] - ts[0])
    return chart_coordinates(lam, t)


def _chart_refine(target, B, s):
    """Sharpen an SDP chart solution s to full precision."""
    a4 = np.hypot(s[3], s[4])
    if a4 < 1e-9:
        return s
    base = 0.25 * np.arctan2(s[3], -s[4])
    best = min((base, base + np.pi / 4), key=lambda t: _chart_fit(t, target, B)[0])
    t, (err, lam, _) = _chart_polish(target, B, best, 1e-3)
    cand = chart_coordinates(lam, t)
    return cand if err <= np.linalg.norm(B @ s - target) else s


def _aligned_sdp_data(B):
    Q = zaligned_odeco_quadrics().matrices
    A = np.zeros((4, 6, 6))
    A[0, 0, 0] = 1.0
    A[1:, 1:, 1:] = Q
    b = np.array([1.0, 0.0, 0.0, 0.0])
    return A, b, B.T @ B


def project_odeco_aligned(y, chart, ratio_tol=RATIO_TOL):
    """Nearest odeco frame in the aligned chart, with the SDP ratio."""
    q, ratio = project_odeco_aligned_batch(np.asarray(y, dtype=float)[None],
                                           chart.rot[None], chart.weight, ratio_tol)
    return q[0], ratio[0]


def project_odeco_aligned_batch(y, rots, weight=None, ratio_tol=RATIO_TOL, workers=1):
    """Aligned odeco projection for per-row chart rotations (6×6 SDPs)."""
    weight = odeco_normal_weight() if weight is None else weight
    q_z, B = _odeco_chart_basis(weight)
    local = np.einsum("bji,bj->bi", rots, y) - q_z
    A, b, BtB = _aligned_sdp_data(B)
    g = local @ B
    C = np.zeros((len(y), 6, 6))
    C[:, 0, 0] = np.einsum("bi,bi->b", local, local)
    C[:, 0, 1:] = -g
    C[:, 1:, 0] = -g
    C[:, 1:, 1:] = BtB
    sols = sdp.solve_many(C, A, b, workers=workers)
    out = np.zeros_like(y)
    ratio = np.zeros(len(y))
    for i, sol in enumerate(sols):
        if sol.status == sdp.Status.NUMERICAL_FAILURE:
            raise SolverFailure(f"aligned SDP failed for query {i}")
        ratio[i] = sol.eig_ratio
        s = sdp.rank1_extract(sol, ratio_tol) if sol.status == sdp.Status.OPTIMAL else None
        s = _chart_scan(local[i], B) if s is None else _chart_refine(local[i], B, s)
        out[i] = rots[i] @ (q_z + B @ s)
    return out, ratio
