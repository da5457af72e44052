"""Quartic polynomials on the sphere: monomial <-> spherical-harmonic
coefficients, odeco frame construction and decomposition.

An odeco frame is stored as 15 spherical-harmonic coefficients
``(band 0 | band 2 | band 4)`` of the quartic ``Σ λ_i (v_i · x)⁴``. The basis
is orthonormal on the unit sphere, so Euclidean distance between coefficient
vectors is the L² distance between the polynomials on the sphere.
"""
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.linalg

from . import _poly, so3
from .exceptions import AxesNotOrthonormal, NoConvergence, NotOdeco, NotOnVariety

MONOMIALS = _poly.monomials(4)
BAND0 = slice(0, 1)
BAND2 = slice(1, 6)
BAND4 = slice(6, 15)


def _monomial_vector(terms, degree):
    index = _poly.monomial_index(degree)
    out = np.zeros(len(index))
    for e, c in terms.items():
        out[index[e]] += c
    return out


def _orthonormalize(P, gram):
    w, V = np.linalg.eigh(P.T @ gram @ P)
    return P @ V @ np.diag(w ** -0.5) @ V.T


@lru_cache(maxsize=None)
def band2_quadratics():
    """Columns: monomial coefficients of the degree-2 harmonics of band 2."""
    P = np.stack([
        _monomial_vector({(1, 1, 0): -1.0}, 2),
        _monomial_vector({(0, 1, 1): -1.0}, 2),
        _monomial_vector({(0, 0, 2): 2.0, (2, 0, 0): -1.0, (0, 2, 0): -1.0}, 2),
        _monomial_vector({(1, 0, 1): 1.0}, 2),
        _monomial_vector({(2, 0, 0): 1.0, (0, 2, 0): -1.0}, 2),
    ], axis=1)
    gram = _poly.sphere_gram(2)
    return P / np.sqrt(np.diag(P.T @ gram @ P))


@lru_cache(maxsize=None)
def _band4_harmonics():
    gram = _poly.sphere_gram(4)
    harmonic = _orthonormalize(scipy.linalg.null_space(_poly.laplacian(4)), gram)
    gens = [harmonic.T @ gram @ _poly.generator_action(l, 4) @ harmonic
            for l in so3.LIE_GENERATORS]
    # The change of basis U with U G_i = L_i U is unique up to sign (Schur).
    eye = np.eye(9)
    system = np.vstack([np.kron(eye, L) - np.kron(G.T, eye)
                        for L, G in zip(so3.band_generators(4), gens)])
    null = scipy.linalg.null_space(system)
    if null.shape[1] != 1:
        raise RuntimeError("band-4 intertwiner is not unique")
    U = null[:, 0].reshape(9, 9, order="F")
    U /= np.sqrt((U @ U.T)[0, 0])
    basis = harmonic @ U.T
    # sign: x⁴ + y⁴ + z⁴ must project onto +q0
    probe = _monomial_vector({(4, 0, 0): 1.0, (0, 4, 0): 1.0, (0, 0, 4): 1.0}, 4)
    if (basis.T @ gram @ probe)[4] < 0:
        basis = -basis
    return basis


@lru_cache(maxsize=None)
def sh_to_monomial_matrix():
    """15×15 matrix whose columns are the basis quartics in monomial coefficients."""
    r4 = _monomial_vector({(4, 0, 0): 1.0, (0, 4, 0): 1.0, (0, 0, 4): 1.0,
                           (2, 2, 0): 2.0, (2, 0, 2): 2.0, (0, 2, 2): 2.0}, 4)
    Y = np.zeros((15, 15))
    Y[:, 0] = r4 / np.sqrt(4.0 * np.pi)
    Y[:, BAND2] = _poly.multiply_by_r2(2) @ band2_quadratics()
    Y[:, BAND4] = _band4_harmonics()
    Y.setflags(write=False)
    return Y


@lru_cache(maxsize=None)
def monomial_to_sh_matrix():
    """15×15 change of basis from monomial to spherical-harmonic coefficients."""
    M = sh_to_monomial_matrix().T @ _poly.sphere_gram(4)
    M.setflags(write=False)
    return M


def monomial_to_sh(coeffs):
    return np.asarray(coeffs, dtype=float) @ monomial_to_sh_matrix().T


def sh_to_monomial(q):
    return np.asarray(q, dtype=float) @ sh_to_monomial_matrix().T


@lru_cache(maxsize=None)
def _multinomial_table():
    exps = np.array(MONOMIALS)
    weights = np.array([factorial(4) / (factorial(a) * factorial(b) * factorial(c))
                        for a, b, c in MONOMIALS])
    return exps, weights


def power_monomials(v):
    """Monomial coefficients of (v · x)⁴ for v of shape (..., 3)."""
    exps, weights = _multinomial_table()
    v = np.asarray(v, dtype=float)
    return weights * np.prod(v[..., None, :] ** exps, axis=-1)


@dataclass(frozen=True)
class OdecoDecomposition:
    """Weights and orthonormal axes (rows of ``axes``) of Σ λ_i (v_i · x)⁴."""

    lambdas: np.ndarray
    axes: np.ndarray
    degenerate: bool = False

    @property
    def has_negative_weight(self):
        return bool(np.any(self.lambdas < 0))


def _check_axes(axes, tol=1e-8):
    axes = np.asarray(axes, dtype=float)
    err = np.abs(axes @ np.swapaxes(axes, -1, -2) - np.eye(3)).max(axis=(-1, -2))
    if np.any(err > tol):
        raise AxesNotOrthonormal("decomposition axes are not orthonormal")
    return axes


def odeco_from_decomposition(lambdas, axes=None, check=True):
    """SH coefficients of Σ λ_i (v_i · x)⁴; ``axes`` rows are the v_i.

    Also accepts an :class:`OdecoDecomposition` as the first argument.
    """
    if isinstance(lambdas, OdecoDecomposition):
        lambdas, axes = lambdas.lambdas, lambdas.axes
    lambdas = np.asarray(lambdas, dtype=float)
    axes = _check_axes(axes) if check else np.asarray(axes, dtype=float)
    mono = np.einsum("...i,...ik->...k", lambdas, power_monomials(axes))
    return monomial_to_sh(mono)


@lru_cache(maxsize=None)
def _octa_band0():
    probe = _monomial_vector({(4, 0, 0): 1.0, (0, 4, 0): 1.0, (0, 0, 4): 1.0}, 4)
    sh = monomial_to_sh(probe)
    return sh[0] / np.linalg.norm(sh[BAND4])


def octa_band0_constant():
    """Band-0 coefficient of an octahedral frame embedded with ‖band 4‖ = 1."""
    return _octa_band0()


def octa_to_odeco(q, check=True):
    """Embed octahedral frame(s) (…, 9) into the odeco coordinates (…, 15)."""
    q = np.asarray(q, dtype=float)
    if check:
        from .varieties import octa_residual

        if np.max(octa_residual(q)) > 1e-6:
            raise NotOnVariety("frame is not on the octahedral variety")
    out = np.zeros(q.shape[:-1] + (15,))
    out[..., 0] = _octa_band0()
    out[..., BAND4] = q
    return out


def odeco_to_octa(q):
    """Band-4 block of odeco coordinates, renormalized to unit length."""
    q4 = np.asarray(q, dtype=float)[..., BAND4]
    return q4 / np.linalg.norm(q4, axis=-1, keepdims=True)


def _power_iterate(coeffs, starts, basis, max_iter, step_tol):
    """Symmetric power iteration u ← ±∇p(u) restricted to span(basis rows)."""
    best, best_val = None, -np.inf
    for u in starts:
        converged = False
        u = u @ basis
        u /= np.linalg.norm(u)
        for _ in range(max_iter):
            value = _poly.evaluate(coeffs, u, 4)
            g = _poly.gradient(coeffs, u, 4) @ basis.T @ basis
            norm = np.linalg.norm(g)
            if norm < 1e-300:
                break
            u_new = np.sign(value or 1.0) * g / norm
            step = np.linalg.norm(u_new - u)
            u = u_new
            if step < step_tol:
                converged = True
                break
        if not converged and norm >= 1e-300:
            continue
        val = abs(_poly.evaluate(coeffs, u, 4))
        if val > best_val:
            best, best_val = u, val
    if best is None:
        raise NoConvergence("tensor power iteration hit max_iter from every start")
    return best


def tensor_decompose(q, max_iter=500, tol=1e-8, seed=0, check=True):
    """Recover weights and axes of an odeco frame from its 15 coefficients.

    Finds the dominant axis by power iteration from 8 random starts, the second
    by power iteration in its orthogonal complement, and completes with the
    cross product. Weights come from a least-squares fit, sorted descending.
    With ``check=False`` any quartic is accepted and the best-fitting odeco
    weights for the recovered axes are returned.
    """
    from .varieties import odeco_residual

    q = np.asarray(q, dtype=float)
    scale = np.linalg.norm(q)
    if scale < 1e-12:
        return OdecoDecomposition(np.zeros(3), np.eye(3), degenerate=True)
    if check and odeco_residual(q / scale) > 1e-6:
        raise NotOdeco("coefficients do not satisfy the odeco quadrics")
    coeffs = sh_to_monomial(q / scale)
    rng = np.random.default_rng(seed)
    v1 = _power_iterate(coeffs, rng.normal(size=(8, 3)), np.eye(3), max_iter, 1e-12)
    plane = scipy.linalg.null_space(v1[None, :]).T
    v2 = _power_iterate(coeffs, rng.normal(size=(8, 2)), plane, max_iter, 1e-12)
    v2 -= (v2 @ v1) * v1
    v2 /= np.linalg.norm(v2)
    axes = np.stack([v1, v2, np.cross(v1, v2)])
    design = monomial_to_sh(power_monomials(axes)).T
    lambdas = np.linalg.lstsq(design, q, rcond=None)[0]
    err = np.linalg.norm(design @ lambdas - q)
    if check and err > tol * max(1.0, scale):
        raise NoConvergence(f"decomposition residual {err:.3g} exceeds tolerance")
    order = np.argsort(-lambdas, kind="stable")
    degenerate = bool(np.sum(np.abs(lambdas) > 1e-9 * scale) < 3)
    return OdecoDecomposition(lambdas[order], axes[order], degenerate=degenerate)


@lru_cache(maxsize=None)
def _square_tensor():
    index = _poly.monomial_index(4)
    mons = _poly.monomials(2)
    P = np.zeros((6, 6, 15))
    for i, a in enumerate(mons):
        for j, b in enumerate(mons):
            P[i, j, index[tuple(np.add(a, b))]] = 1.0
    return P


def sum_of_squares_quartics(n, rng, terms=3):
    """SH coefficients of n random quartics Σ_k p_k², p_k Gaussian quadratics,
    scaled to unit norm."""
    c = rng.normal(size=(n, terms, 6))
    mono = np.einsum("ntj,ntk,jkm->nm", c, c, _square_tensor())
    q = monomial_to_sh(mono)
    return q / np.linalg.norm(q, axis=1, keepdims=True)
