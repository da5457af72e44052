"""Dense primal-dual interior-point solver for small semidefinite programs.

Primal:  min <C, X>  s.t.  <A_i, X> = b_i,  X ⪰ 0
Dual:    max bᵀy     s.t.  Σ y_i A_i + Z = C,  Z ⪰ 0

Infeasible path-following with Nesterov-Todd scaling and Mehrotra's
predictor-corrector. Problems sharing the constraint data (A, b) can be solved
as a batch: every array carries a leading batch axis and each problem is
frozen as soon as it converges, so its iterates do not depend on the rest of
the batch.
"""
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
import enum
import warnings

import numpy as np

from .exceptions import DimensionMismatch, SolverFailure
from .varieties import octa_quadrics, odeco_quadrics


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SdpProblem:
    C: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.C.shape[-1]
        if self.C.shape[-2:] != (n, n) or self.A.shape[1:] != (n, n):
            raise ValueError("cost and constraint matrices must share the side n")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("one right-hand side per constraint matrix")
        if not (np.allclose(self.C, np.swapaxes(self.C, -1, -2))
                and np.allclose(self.A, np.swapaxes(self.A, -1, -2))):
            raise ValueError("SDP data must be symmetric")

    @property
    def n(self):
        return self.C.shape[-1]

    @property
    def m(self):
        return self.A.shape[0]


@dataclass
class SdpSolution:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    primal_obj: float
    dual_obj: float
    status: Status
    eig_ratio: float
    iterations: int = 0
    primal_infeas: float = field(default=np.nan, repr=False)
    dual_infeas: float = field(default=np.nan, repr=False)


def independent_constraints(A, b, tol=1e-10):
    """Drop linearly dependent constraint rows (with a warning)."""
    flat = A.reshape(len(A), -1)
    keep = []
    basis = np.zeros((0, flat.shape[1]))
    for i, row in enumerate(flat):
        resid = row - basis.T @ (basis @ row) if len(basis) else row
        norm = np.linalg.norm(resid)
        if norm > tol * max(1.0, np.linalg.norm(row)):
            keep.append(i)
            basis = np.vstack([basis, resid / norm])
    if len(keep) < len(A):
        warnings.warn(f"dropping {len(A) - len(keep)} linearly dependent SDP constraints",
                      stacklevel=3)
    return A[keep], b[keep]


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _factor(S):
    """Factor S = F Fᵀ via the eigendecomposition (tolerates near-singular S)."""
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.maximum(w, 0.0))[..., None, :]


def _max_step(lam, D):
    """Largest α with diag(lam) + α D ⪰ 0 (inf when unbounded), batched."""
    s = 1.0 / np.sqrt(lam)
    K = D * s[..., :, None] * s[..., None, :]
    mn = np.linalg.eigvalsh(_sym(K))[..., 0]
    with np.errstate(divide="ignore"):
        return np.where(mn < 0, -1.0 / mn, np.inf)


def _svec_index(n):
    iu = np.triu_indices(n)
    weight = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return iu, weight


def _newton_step(X, y, Z, C, A, A_flat, b, eye, svec):
    """One Mehrotra predictor-corrector step with NT scaling, computed in the
    scaled space where X and Z both become diag(lam)."""
    k, n = len(X), X.shape[-1]
    iu, weight = svec
    Lx = _factor(X)
    Rz = _factor(Z)
    U, lam, Vt = np.linalg.svd(np.swapaxes(Rz, -1, -2) @ Lx)
    if np.any(lam <= 0):
        raise np.linalg.LinAlgError("iterate left the cone")
    isq = 1.0 / np.sqrt(lam)
    G = (Lx @ np.swapaxes(Vt, -1, -2)) * isq[:, None, :]
    Ginv = (np.swapaxes(U, -1, -2) @ np.swapaxes(Rz, -1, -2)) * isq[:, :, None]
    Gt = np.swapaxes(G, -1, -2)

    rp = b - X.reshape(k, -1) @ A_flat.T
    Rd = _sym(C - Z - np.einsum("bi,ijk->bjk", y, A))
    Rd_s = Gt @ Rd @ G
    At = np.einsum("bji,mjk,bkl->bmil", G, A, G)
    K = (At[:, :, iu[0], iu[1]] * weight).transpose(0, 2, 1)
    Uk, sk, Vk = np.linalg.svd(K, full_matrices=False)
    keep = sk > 1e-13 * sk[:, :1]
    s_inv = np.where(keep, 1.0 / np.where(keep, sk, 1.0), 0.0)
    proj_rp = np.einsum("bij,bj->bi", Vk, rp) * s_inv

    def smat(v):
        M = np.zeros((k, n, n))
        M[:, iu[0], iu[1]] = v / weight
        return M + np.swapaxes(M, -1, -2) - M * eye

    def direction(Rc_s):
        v = (Rc_s - Rd_s)[:, iu[0], iu[1]] * weight
        uv = np.einsum("bji,bj->bi", Uk, v) * keep
        dxs = v - np.einsum("bij,bj->bi", Uk, uv - proj_rp)
        dy = np.einsum("bji,bj->bi", Vk, s_inv * (proj_rp - uv))
        dXs = smat(dxs)
        dZs = _sym(Rc_s - dXs)
        return dXs, dy, dZs

    diag = lam[:, :, None] * eye
    mu = np.sum(lam ** 2, axis=1) / n
    dXs, dy, dZs = direction(-diag)
    ap = np.minimum(1.0, _max_step(lam, dXs))
    ad = np.minimum(1.0, _max_step(lam, dZs))
    mu_aff = np.einsum("bij,bij->b", diag + ap[:, None, None] * dXs,
                       diag + ad[:, None, None] * dZs) / n
    sigma = np.clip((mu_aff / mu) ** 3, 0.0, 1.0)
    target = (sigma * mu)[:, None, None] * eye - diag * lam[:, None, :] - _sym(dXs @ dZs)
    dXs, dy, dZs = direction(2.0 * target / (lam[:, :, None] + lam[:, None, :]))
    ap = np.minimum(1.0, 0.98 * _max_step(lam, dXs))
    ad = np.minimum(1.0, 0.98 * _max_step(lam, dZs))
    dX = _sym(G @ dXs @ Gt)
    dZ = _sym(Rd - np.einsum("bi,ijk->bjk", dy, A))
    return (X + ap[:, None, None] * dX, y + ad[:, None] * dy, Z + ad[:, None, None] * dZ)


def solve_batch(C, A, b, feas_tol=1e-10, gap_tol=1e-10, max_iter=200, check_independence=True):
    """Solve a batch of SDPs sharing (A, b); ``C`` has shape (B, n, n).

    Returns a list of :class:`SdpSolution`, one per problem.
    """
    C = _sym(np.asarray(C, dtype=float))
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if check_independence:
        A, b = independent_constraints(A, b)
    batch, n = C.shape[0], C.shape[-1]
    m = len(A)
    A_flat = A.reshape(m, -1)
    eye = np.eye(n)
    svec = _svec_index(n)

    scale = 1.0 + np.linalg.norm(C, axis=(1, 2))
    X = scale[:, None, None] * eye
    Z = X.copy()
    y = np.zeros((batch, m))
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(C, axis=(1, 2))

    def measures(X, y, Z, C, nc):
        rp = b - X.reshape(len(X), -1) @ A_flat.T
        Rd = C - Z - np.einsum("bi,ijk->bjk", y, A)
        pobj = np.einsum("bij,bij->b", C, X)
        dobj = y @ b
        p_inf = np.linalg.norm(rp, axis=1) / norm_b
        d_inf = np.linalg.norm(Rd, axis=(1, 2)) / nc
        gap = np.abs(pobj - dobj) / (1.0 + np.abs(pobj))
        return p_inf, d_inf, gap

    status = [Status.MAX_ITER] * batch
    iters = np.zeros(batch, dtype=int)
    pinf, dinf, gap = measures(X, y, Z, C, norm_c)
    active = np.ones(batch, dtype=bool)
    for _ in range(max_iter):
        done = active & (pinf < feas_tol) & (dinf < feas_tol) & (gap < gap_tol)
        for i in np.flatnonzero(done):
            status[i] = Status.OPTIMAL
        active &= ~done
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        groups = [idx]
        try:
            with np.errstate(all="ignore"):
                steps = [_newton_step(X[idx], y[idx], Z[idx], C[idx], A, A_flat, b, eye, svec)]
        except np.linalg.LinAlgError:
            # isolate the failing problems so the rest of the batch proceeds
            groups, steps = [], []
            for i in idx:
                try:
                    with np.errstate(all="ignore"):
                        steps.append(_newton_step(X[i:i + 1], y[i:i + 1], Z[i:i + 1], C[i:i + 1],
                                                  A, A_flat, b, eye, svec))
                    groups.append(np.array([i]))
                except np.linalg.LinAlgError:
                    status[i] = Status.NUMERICAL_FAILURE
                    active[i] = False
        for g, (Xn, yn, Zn) in zip(groups, steps):
            ok = (np.all(np.isfinite(Xn), axis=(1, 2)) & np.all(np.isfinite(Zn), axis=(1, 2))
                  & np.all(np.isfinite(yn), axis=1))
            for i in g[~ok]:
                status[i] = Status.NUMERICAL_FAILURE
                active[i] = False
            g, Xn, yn, Zn = g[ok], Xn[ok], yn[ok], Zn[ok]
            p2, d2, g2 = measures(Xn, yn, Zn, C[g], norm_c[g])
            X[g], y[g], Z[g] = _sym(Xn), yn, _sym(Zn)
            pinf[g], dinf[g], gap[g] = p2, d2, g2
            iters[g] += 1
    else:
        done = active & (pinf < feas_tol) & (dinf < feas_tol) & (gap < gap_tol)
        for i in np.flatnonzero(done):
            status[i] = Status.OPTIMAL

    pobj = np.einsum("bij,bij->b", C, X)
    dobj = y @ b
    evals = np.linalg.eigvalsh(X)
    top = np.maximum(evals[:, -1], 1e-300)
    ratio = np.maximum(evals[:, -2], 0.0) / top if n > 1 else np.zeros(batch)
    return [SdpSolution(X[i], y[i], Z[i], float(pobj[i]), float(dobj[i]), status[i],
                        float(ratio[i]), int(iters[i]), float(pinf[i]), float(dinf[i]))
            for i in range(batch)]


CHUNK = 256


def solve_many(C, A, b, workers=1, chunk=CHUNK, **opts):
    """Solve many SDPs sharing (A, b) in fixed-size chunks.

    Chunk boundaries do not depend on ``workers``, so results are identical
    for any worker count.
    """
    C = np.asarray(C, dtype=float)
    A, b = independent_constraints(np.asarray(A, dtype=float), np.asarray(b, dtype=float))
    starts = range(0, len(C), chunk)

    def run(s):
        return solve_batch(C[s:s + chunk], A, b, check_independence=False, **opts)

    if workers > 1 and len(C) > chunk:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return [sol for part in parts for sol in part]


def _projection_cost(y):
    """Homogenized cost matrices [[‖y‖², −yᵀ], [−y, I]] for a batch of queries."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    k, d = y.shape
    C = np.zeros((k, d + 1, d + 1))
    C[:, 0, 0] = np.einsum("bi,bi->b", y, y)
    C[:, 0, 1:] = -y
    C[:, 1:, 0] = -y
    C[:, 1:, 1:] = np.eye(d)
    return C


def homogenized_constraints(quadrics):
    """Constraint data (A, b) for X₁₁ = 1 and ⟨Q_i, X⟩ = 0.

    Affine quadrics already act on (1, q); homogeneous ones are embedded in the
    lower-right block.
    """
    mats = quadrics.matrices
    if quadrics.homogeneous:
        k, d = mats.shape[0], mats.shape[1]
        Q = np.zeros((k, d + 1, d + 1))
        Q[:, 1:, 1:] = mats
    else:
        Q = mats
    n = Q.shape[-1]
    first = np.zeros((1, n, n))
    first[0, 0, 0] = 1.0
    b = np.zeros(len(Q) + 1)
    b[0] = 1.0
    return np.concatenate([first, Q]), b


def lift_projection(y, quadrics):
    """SDP relaxation of min ‖q − y‖² over the variety cut out by ``quadrics``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != quadrics.dim:
        raise DimensionMismatch(f"query has length {y.shape[-1]}, expected {quadrics.dim}")
    A, b = homogenized_constraints(quadrics)
    C = _projection_cost(y)
    return SdpProblem(C[0] if y.ndim == 1 else C, A, b)


def lift_projection_octa(y, quadrics=None):
    return lift_projection(y, quadrics if quadrics is not None else octa_quadrics())


def lift_projection_odeco(y, quadrics=None):
    return lift_projection(y, quadrics if quadrics is not None else odeco_quadrics())


def solve(problem, feas_tol=1e-10, gap_tol=1e-10, max_iter=200):
    """Solve one :class:`SdpProblem`."""
    C = problem.C[None] if problem.C.ndim == 2 else problem.C
    sols = solve_many(C, problem.A, problem.b, feas_tol=feas_tol, gap_tol=gap_tol,
                      max_iter=max_iter)
    return sols[0] if problem.C.ndim == 2 else sols


def rank1_extract(solution, ratio_tol=1e-6):
    """Return q with X ≈ (1, q)(1, q)ᵀ, or ``None`` when X is not rank one.

    The certificate ratio λ₂/λ₁ is available as ``solution.eig_ratio``.
    """
    if solution.status != Status.OPTIMAL:
        raise SolverFailure(f"cannot extract from a {solution.status.value} solution")
    if solution.eig_ratio > ratio_tol:
        return None
    w, V = np.linalg.eigh(solution.X)
    u = V[:, -1]
    if abs(u[0]) < 1e-12:
        return None
    return u[1:] / u[0]
