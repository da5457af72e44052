"""Homogeneous polynomials in (x, y, z) stored as dense monomial coefficient vectors.

Monomials of degree ``d`` are ordered lexicographically by descending exponent
of x, then y: for d = 2 this is x², xy, xz, y², yz, z².
"""
from collections import defaultdict
from functools import lru_cache
import math

import numpy as np


@lru_cache(maxsize=None)
def monomials(degree):
    return tuple((a, b, degree - a - b)
                 for a in range(degree, -1, -1)
                 for b in range(degree - a, -1, -1))


@lru_cache(maxsize=None)
def monomial_index(degree):
    return {e: i for i, e in enumerate(monomials(degree))}


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def sphere_moment(exponents):
    """Integral of x^a y^b z^c over the unit sphere (closed form)."""
    if any(k % 2 for k in exponents):
        return 0.0
    a, b, c = exponents
    num = _double_factorial(a - 1) * _double_factorial(b - 1) * _double_factorial(c - 1)
    return 4.0 * math.pi * num / _double_factorial(a + b + c + 1)


@lru_cache(maxsize=None)
def sphere_gram(degree):
    """L2(S²) Gram matrix of the degree-``degree`` monomials."""
    mons = monomials(degree)
    gram = np.array([[sphere_moment(tuple(np.add(p, q))) for q in mons] for p in mons])
    gram.setflags(write=False)
    return gram


def _polymul(p, q):
    out = defaultdict(float)
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            out[(e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2])] += c1 * c2
    return out


def rotation_action(R, degree):
    """Matrix ``T`` with coeffs(p ∘ Rᵀ) = T @ coeffs(p).

    Computed by exact expansion, so it serves as an oracle for the Wigner
    matrices built from generators.
    """
    R = np.asarray(R, dtype=float)
    linear = [{(1, 0, 0): R[0, k], (0, 1, 0): R[1, k], (0, 0, 1): R[2, k]} for k in range(3)]
    mons = monomials(degree)
    index = monomial_index(degree)
    T = np.zeros((len(mons), len(mons)))
    for j, e in enumerate(mons):
        p = {(0, 0, 0): 1.0}
        for k in range(3):
            for _ in range(e[k]):
                p = _polymul(p, linear[k])
        for ee, c in p.items():
            T[index[ee], j] += c
    return T


def generator_action(l, degree):
    """Derivative at t = 0 of ``rotation_action(expm(t l), degree)``.

    d/dt p(exp(t l)ᵀ x) = ∇p(x) · (lᵀ x), evaluated exactly on monomials.
    """
    l = np.asarray(l, dtype=float)
    mons = monomials(degree)
    index = monomial_index(degree)
    T = np.zeros((len(mons), len(mons)))
    for j, e in enumerate(mons):
        for k in range(3):
            if e[k] == 0:
                continue
            base = list(e)
            base[k] -= 1
            for m in range(3):
                if l[m, k] == 0.0:
                    continue
                ee = list(base)
                ee[m] += 1
                T[index[tuple(ee)], j] += e[k] * l[m, k]
    return T


def laplacian(degree):
    """Laplace operator from degree ``degree`` to degree ``degree - 2`` polynomials."""
    mons = monomials(degree)
    index = monomial_index(degree - 2)
    T = np.zeros((len(index), len(mons)))
    for j, e in enumerate(mons):
        for k in range(3):
            if e[k] >= 2:
                ee = list(e)
                ee[k] -= 2
                T[index[tuple(ee)], j] += e[k] * (e[k] - 1)
    return T


def multiply_by_r2(degree):
    """Map coeffs(p) -> coeffs((x²+y²+z²) p), degree -> degree + 2."""
    src = monomials(degree)
    index = monomial_index(degree + 2)
    T = np.zeros((len(index), len(src)))
    for j, e in enumerate(src):
        for k in range(3):
            ee = list(e)
            ee[k] += 2
            T[index[tuple(ee)], j] += 1.0
    return T


def evaluate(coeffs, points, degree):
    """Evaluate polynomial(s) at points of shape (..., 3)."""
    points = np.asarray(points, dtype=float)
    exps = np.array(monomials(degree))
    vals = np.prod(points[..., None, :] ** exps, axis=-1)
    return vals @ np.asarray(coeffs, dtype=float).T


def gradient(coeffs, points, degree):
    """Gradient of a single polynomial at points of shape (..., 3)."""
    coeffs = np.asarray(coeffs, dtype=float)
    points = np.asarray(points, dtype=float)
    exps = np.array(monomials(degree))
    out = np.zeros(points.shape)
    for k in range(3):
        dexp = exps.copy()
        factor = dexp[:, k].astype(float)
        dexp[:, k] = np.maximum(dexp[:, k] - 1, 0)
        vals = np.prod(points[..., None, :] ** dexp, axis=-1)
        out[..., k] = vals @ (coeffs * factor)
    return out
