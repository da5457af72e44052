"""Field solvers: Riemannian trust region over products of octahedral or
odeco varieties, and MBO/mMBO diffusion-generated optimization.

A field is a d×n matrix (d = 9 or 15), one column per mesh vertex. Boundary
vertices that are not creases carry an alignment constraint to their normal.
"""
from dataclasses import dataclass, field, replace
import time
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import projection, quartic, so3
from .exceptions import (DimensionMismatch, InputError, LinearSolveFailure, NotOdeco)
from .mesh import fem_operators, smallest_nonzero_stiffness_eigenvalue
from .varieties import octa_residual, odeco_residual

OCTA = "octa"
ODECO = "odeco"
DIMS = {OCTA: 9, ODECO: 15}
_SQRT_TN = np.sqrt(so3.TANGENT_NORM2)
_FLIP_Y = np.array([1.0, -1.0, 1.0])


@dataclass
class TraceRow:
    iteration: int
    energy: float
    measure: float
    tau: float
    wall: float


@dataclass
class FieldState:
    """Frame field plus boundary constraints and solver bookkeeping.

    ``constrained`` lists the vertices whose frame must keep an axis along the
    matching row of ``normals``. For odeco fields ``rotations`` and
    ``weights`` hold the decomposition of every column (axes as columns of
    each rotation, the constrained axis last).
    """

    rep: str
    coeffs: np.ndarray
    constrained: np.ndarray
    normals: np.ndarray
    rotations: np.ndarray = None
    weights: np.ndarray = None
    normal_weight: float = None
    energy_trace: list = field(default_factory=list)
    status: str = "initial"
    fallback_count: int = 0

    def __post_init__(self):
        if self.rep not in DIMS:
            raise InputError(f"unknown representation {self.rep!r}")
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape[0] != DIMS[self.rep]:
            raise DimensionMismatch(f"{self.rep} fields need {DIMS[self.rep]} rows")
        self.constrained = np.asarray(self.constrained, dtype=np.int64)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if self.rep == ODECO and self.normal_weight is None:
            self.normal_weight = projection.odeco_normal_weight()

    @property
    def d(self):
        return self.coeffs.shape[0]

    @property
    def n(self):
        return self.coeffs.shape[1]

    def copy(self):
        return replace(self, coeffs=self.coeffs.copy(),
                       rotations=None if self.rotations is None else self.rotations.copy(),
                       weights=None if self.weights is None else self.weights.copy(),
                       energy_trace=list(self.energy_trace))

    def chart_rotations(self):
        R = so3.rotation_taking_z_to(self.normals)
        if self.rep == OCTA:
            return so3.wigner_from_rotation(4, R)
        return so3.odeco_wigner(R=R)

    def residuals(self):
        res = octa_residual(self.coeffs.T) if self.rep == OCTA else odeco_residual(self.coeffs.T)
        return np.atleast_1d(res)


@dataclass(frozen=True)
class MboConfig:
    tau0: float = None
    schedule: str = "powerlaw"
    delta: float = 1e-4
    max_outer: int = 200
    a: float = 50.0
    p: float = 3.0

    def __post_init__(self):
        if self.tau0 is not None and self.tau0 <= 0:
            raise InputError("tau0 must be positive")
        if self.delta < 0:
            raise InputError("delta must be non-negative")
        if self.schedule not in ("constant", "powerlaw"):
            raise InputError(f"unknown schedule {self.schedule!r}")

    def beta(self, k):
        return 1.0 if self.schedule == "constant" else self.a * float(k) ** (-self.p)


@dataclass(frozen=True)
class RtrConfig:
    initial_radius: float = None
    max_radius: float = None
    grad_tol: float = None
    max_outer: int = 500
    max_inner: int = 200
    time_limit: float = None

    def __post_init__(self):
        for name in ("initial_radius", "max_radius", "grad_tol", "time_limit"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise InputError(f"{name} must be positive")
        if self.max_outer <= 0 or self.max_inner <= 0:
            raise InputError("iteration counts must be positive")


# ------------------------------------------------------------ initialization

def _constraints(mesh, align):
    if not align:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3))
    return mesh.constrained_vertices()


def _rz(t):
    c, s = np.cos(t), np.sin(t)
    out = np.zeros(np.shape(t) + (3, 3))
    out[..., 0, 0], out[..., 0, 1] = c, -s
    out[..., 1, 0], out[..., 1, 1] = s, c
    out[..., 2, 2] = 1.0
    return out


def random_rotations_about_z(n, rng):
    """rotation_taking_z_to(random direction) · Rz(random angle)."""
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return so3.rotation_taking_z_to(direction) @ _rz(angle)


def _aligned_octa_rotations(R, normals):
    """Closest rotations with last axis on each normal (per vertex)."""
    base = so3.rotation_taking_z_to(normals)
    q = so3.wigner_from_rotation(4, R) @ so3.Q0
    rots = so3.wigner_from_rotation(4, base)
    s = np.einsum("bji,bj->bi", rots, q) @ projection._OCTA_BZ
    t = np.arctan2(s[:, 1], s[:, 0]) / 4.0
    return base @ _rz(t)


def random_octa_field(mesh, seed=0, rep=OCTA, align=True):
    """Independent random frame per vertex; constrained columns snapped to
    their aligned charts. Odeco fields are lifted octahedral fields."""
    rng = np.random.default_rng(seed)
    R = random_rotations_about_z(mesh.n_vertices, rng)
    idx, normals = _constraints(mesh, align)
    if len(idx):
        R[idx] = _aligned_octa_rotations(R[idx], normals)
    return field_from_rotations(R, rep, idx, normals)


def field_from_rotations(R, rep, constrained, normals, weights=None):
    n = len(R)
    if rep == OCTA:
        q = so3.wigner_from_rotation(4, R) @ so3.Q0
        return FieldState(OCTA, q.T, constrained, normals)
    state = FieldState(ODECO, np.zeros((15, n)), constrained, normals)
    if weights is None:
        weights = np.full((n, 3), state.normal_weight)
    state.rotations = np.array(R, dtype=float)
    state.weights = np.array(weights, dtype=float)
    state.coeffs = _odeco_coeffs(state.rotations, state.weights).T
    return state


def constant_field(mesh, R=None, rep=OCTA, align=False):
    R = np.eye(3) if R is None else np.asarray(R)
    idx, normals = _constraints(mesh, align)
    return field_from_rotations(np.broadcast_to(R, (mesh.n_vertices, 3, 3)).copy(),
                                rep, idx, normals)


def lift_to_odeco(state):
    """Embed an octahedral field as odeco (same frames, equal weights)."""
    if state.rep != OCTA:
        raise InputError("field is already odeco")
    q = quartic.octa_to_odeco(state.coeffs.T, check=False)
    out = FieldState(ODECO, q.T, state.constrained, state.normals)
    _refresh_odeco_params(out)
    return out


def _odeco_coeffs(R, lam):
    return quartic.odeco_from_decomposition(lam, np.swapaxes(R, -1, -2), check=False)


def _refresh_odeco_params(state):
    """Recover (rotations, weights) from odeco coefficients column by column."""
    n = state.n
    R = np.zeros((n, 3, 3))
    lam = np.zeros((n, 3))
    cpos = np.full(n, -1)
    cpos[state.constrained] = np.arange(len(state.constrained))
    for v in range(n):
        q = state.coeffs[:, v]
        try:
            dec = quartic.tensor_decompose(q, check=False)
        except NotOdeco:
            dec = quartic.tensor_decompose(q, check=False)
        axes, w = dec.axes, dec.lambdas
        if cpos[v] >= 0:
            nrm = state.normals[cpos[v]]
            k = int(np.argmax(np.abs(axes @ nrm)))
            order = [i for i in range(3) if i != k] + [k]
            axes, w = axes[order], w[order]
            axes[2] = nrm
            axes[1] -= (axes[1] @ nrm) * nrm
            axes[1] /= np.linalg.norm(axes[1])
            axes[0] = np.cross(axes[1], axes[2])
            w = w.copy()
            w[2] = state.normal_weight
        elif np.linalg.det(axes) < 0:
            axes = axes.copy()
            axes[0] *= -1
        R[v] = axes.T
        lam[v] = w
    state.rotations, state.weights = R, lam
    state.coeffs = _odeco_coeffs(R, lam).T


# ---------------------------------------------------------------- energies

def dirichlet_energy(state, ops):
    """½ Σ_rows q S qᵀ."""
    q = state.coeffs if isinstance(state, FieldState) else np.asarray(state, dtype=float)
    if q.shape[1] != ops.S.shape[0]:
        raise DimensionMismatch(f"field has {q.shape[1]} columns, mesh has {ops.S.shape[0]} vertices")
    return max(0.0, 0.5 * float(np.einsum("ij,ji->", q, ops.S @ q.T)))


def _ambient_gradient(q, S):
    return (S @ q.T).T


class _Tangents:
    """Per-vertex orthonormal tangent bases T_v (d×k, zero-padded) and the
    map from tangent coordinates back to generator coefficients."""

    def __init__(self, state):
        self.state = state
        q = state.coeffs.T
        n = state.n
        cidx = state.constrained
        # exp(v · l) fixes the axis P v, P = diag(1, -1, 1)
        self.spin = state.normals * _FLIP_Y
        if state.rep == OCTA:
            L = so3.band_generators(4)
            dirs = np.einsum("ijk,nk->nji", L, q)  # n × 9 × 3
            if len(cidx):
                dn = np.einsum("ci,cdi->cd", self.spin, dirs[cidx])
                dirs[cidx] = 0.0
                dirs[cidx, :, 0] = dn
        else:
            Lt = so3.odeco_generators()
            rot = np.einsum("ijk,nk->nji", Lt, q)  # n × 15 × 3
            R = state.rotations
            scal = quartic.monomial_to_sh(
                quartic.power_monomials(np.swapaxes(R, -1, -2))).transpose(0, 2, 1)
            if len(cidx):
                rn = np.einsum("ci,cdi->cd", self.spin, rot[cidx])
                rot[cidx] = 0.0
                rot[cidx, :, 0] = rn
                scal[cidx, :, 2] = 0.0
            dirs = np.concatenate([rot, scal], axis=2)  # n × 15 × 6
        self.dirs = dirs
        gram = np.einsum("ndi,ndj->nij", dirs, dirs)
        w, U = np.linalg.eigh(gram)
        scale = np.maximum(w.max(axis=1, keepdims=True), 1e-300)
        keep = w > 1e-10 * scale
        inv_sqrt = np.where(keep, 1.0 / np.sqrt(np.where(keep, w, 1.0)), 0.0)
        self.coef_map = U * inv_sqrt[:, None, :]  # coords → generator coefficients
        self.T = np.einsum("ndi,nij->ndj", dirs, self.coef_map)

    def project(self, G):
        """Ambient d×n → tangent coordinates n×k."""
        return np.einsum("ndk,dn->nk", self.T, G)

    def ambient(self, xi):
        return np.einsum("ndk,nk->dn", self.T, xi)

    def retract(self, xi):
        """New FieldState after moving along tangent coordinates ``xi``."""
        st = self.state
        c = np.einsum("nij,nj->ni", self.coef_map, xi)
        out = st.copy()
        if st.rep == OCTA:
            a = c.copy()
            a[st.constrained] = c[st.constrained, :1] * self.spin
            W = so3.wigner_from_axis_angle(4, a)
            out.coeffs = np.einsum("nij,jn->in", W, st.coeffs)
            return out
        a = c[:, :3].copy()
        a[st.constrained] = c[st.constrained, :1] * self.spin
        b = c[:, 3:]
        out.weights = st.weights + b
        out.rotations = so3.rotation_from_axis_angle(a) @ st.rotations
        out.coeffs = _odeco_coeffs(out.rotations, out.weights).T
        return out


def riemannian_gradient(state, ops):
    """Tangent projection of the ambient gradient q S, as a d×n matrix."""
    tan = _Tangents(state)
    return tan.ambient(tan.project(_ambient_gradient(state.coeffs, ops.S)))


def _ensure_params(state):
    if state.rep == ODECO and (state.rotations is None or state.weights is None):
        _refresh_odeco_params(state)


def _tcg(grad, hess, radius, max_inner, kappa=0.1, theta=1.0):
    """Steihaug-Toint truncated CG for min ⟨g,η⟩ + ½⟨η,Hη⟩, ‖η‖ ≤ radius."""
    eta = np.zeros_like(grad)
    r = grad.copy()
    rr = float(np.sum(r * r))
    r0 = np.sqrt(rr)
    d = -r
    hit = False
    for _ in range(max_inner):
        Hd = hess(d)
        dHd = float(np.sum(d * Hd))
        alpha = rr / dHd if dHd > 0 else np.inf
        ee = float(np.sum(eta * eta))
        if dHd <= 0 or ee + 2 * alpha * float(np.sum(eta * d)) + alpha ** 2 * float(np.sum(d * d)) >= radius ** 2:
            ed, dd = float(np.sum(eta * d)), float(np.sum(d * d))
            tau = (-ed + np.sqrt(ed * ed + dd * (radius ** 2 - ee))) / dd
            eta = eta + tau * d
            hit = True
            break
        eta = eta + alpha * d
        r = r + alpha * Hd
        rr_new = float(np.sum(r * r))
        if np.sqrt(rr_new) <= r0 * min(r0 ** theta, kappa):
            break
        d = -r + (rr_new / rr) * d
        rr = rr_new
    return eta, hit


def rtr_solve(state, ops, cfg=None, callback=None):
    """Riemannian trust region with truncated CG and the projected ambient
    Hessian. Accepted steps never increase the energy."""
    cfg = cfg or RtrConfig()
    state = state.copy()
    _ensure_params(state)
    S = ops.S
    n = state.n
    grad_tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * np.sqrt(n)
    max_radius = cfg.max_radius if cfg.max_radius is not None else np.pi * np.sqrt(n) * _SQRT_TN
    radius = cfg.initial_radius if cfg.initial_radius is not None else max_radius / 8.0
    min_radius = 1e-12 * max_radius
    t0 = time.perf_counter()
    energy = dirichlet_energy(state, ops)
    state.status = "max-iterations"
    it = 0
    while True:
        tan = _Tangents(state)
        G = _ambient_gradient(state.coeffs, S)
        g = tan.project(G)
        gnorm = float(np.linalg.norm(g))
        state.energy_trace.append(TraceRow(it, energy, gnorm, np.nan, time.perf_counter() - t0))
        if callback is not None:
            callback(state)
        if gnorm < grad_tol:
            state.status = "converged"
            break
        if it >= cfg.max_outer:
            break
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            state.status = "time-limit"
            break

        def hess(xi):
            return tan.project(_ambient_gradient(tan.ambient(xi), S))

        while True:
            eta, hit = _tcg(g, hess, radius, cfg.max_inner)
            model_drop = -float(np.sum(g * eta)) - 0.5 * float(np.sum(eta * hess(eta)))
            cand = tan.retract(eta)
            e_new = dirichlet_energy(cand, ops)
            rho = (energy - e_new) / model_drop if model_drop > 0 else -np.inf
            if rho < 0.25:
                radius *= 0.25
            elif rho > 0.75 and hit:
                radius = min(2.0 * radius, max_radius)
            if rho > 0.1 and e_new <= energy:
                state, energy = cand, e_new
                break
            if radius < min_radius:
                state.status = "line-failure"
                break
        if state.status == "line-failure":
            break
        it += 1
    return state


# ----------------------------------------------------------------------- MBO

class _Diffusion:
    """(M + τS) q̄ᵀ = M qᵀ with constrained columns reduced to chart
    coordinates: q_i = rot_i q_z + rot_i B_z s_i."""

    def __init__(self, ops, state):
        d, n = state.d, state.n
        self.d, self.n = d, n
        cmask = np.zeros(n, dtype=bool)
        cmask[state.constrained] = True
        free = np.flatnonzero(~cmask)
        rots = state.chart_rotations() if len(state.constrained) else np.zeros((0, d, d))
        if state.rep == OCTA:
            qz, Bz = projection._OCTA_QZ, projection._OCTA_BZ
        else:
            qz, Bz = projection._odeco_chart_basis(state.normal_weight)
        k = Bz.shape[1]
        self.offset = np.zeros((n, d))
        if len(state.constrained):
            self.offset[state.constrained] = rots @ qz
        # Φ maps reduced unknowns to vec(Q̄) (vertex-major, n·d)
        rows, cols, vals = [], [], []
        col = 0
        fpos = {}
        for v in free:
            fpos[v] = col
            col += d
        cstart = col
        rr = np.arange(d)
        for v in free:
            rows.append(v * d + rr)
            cols.append(fpos[v] + rr)
            vals.append(np.ones(d))
        P = rots @ Bz
        for j, v in enumerate(state.constrained):
            rows.append(np.repeat(v * d + rr, k))
            cols.append(np.tile(cstart + j * k + np.arange(k), d))
            vals.append(P[j].ravel())
        nred = cstart + k * len(state.constrained)
        self.Phi = sp.csr_matrix((np.concatenate(vals) if vals else [],
                                  (np.concatenate(rows) if rows else [],
                                   np.concatenate(cols) if cols else [])),
                                 shape=(n * d, nred))
        self.I_d = sp.identity(d, format="csr")
        self.Mk = sp.kron(ops.M, self.I_d, format="csr")
        self.Sk = sp.kron(ops.S, self.I_d, format="csr")
        self.ops = ops
        self._tau = None
        self._solve = None

    def step(self, q, tau):
        if tau != self._tau:
            K = self.Mk + tau * self.Sk
            A = (self.Phi.T @ K @ self.Phi).tocsc()
            try:
                self._solve = spla.factorized(A)
            except RuntimeError as exc:
                raise LinearSolveFailure(f"factorization failed: {exc}") from exc
            self._K = K
            self._tau = tau
        c = self.offset.ravel()
        rhs = self.Phi.T @ (self.Mk @ q.T.ravel() - self._K @ c)
        x = self._solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure("diffusion solve produced non-finite values")
        return (self.Phi @ x + c).reshape(self.n, self.d).T


def _project_columns(state, qbar, workers=1):
    """Project every column; returns new coefficients and fallback count."""
    out = np.empty_like(qbar)
    cmask = np.zeros(state.n, dtype=bool)
    cmask[state.constrained] = True
    free = np.flatnonzero(~cmask)
    fallbacks = 0
    if state.rep == OCTA:
        if free.size:
            q, ratio = projection.project_octa(qbar[:, free].T, workers=workers)
            out[:, free] = q.T
            fallbacks += int(np.sum(ratio > projection.RATIO_TOL))
        if cmask.any():
            out[:, state.constrained] = projection.project_octa_aligned_batch(
                qbar[:, state.constrained].T, state.chart_rotations()).T
    else:
        if free.size:
            q, ratio = projection.project_odeco(qbar[:, free].T, workers=workers)
            out[:, free] = q.T
            fallbacks += int(np.sum(ratio > projection.RATIO_TOL))
        if cmask.any():
            q, ratio = projection.project_odeco_aligned_batch(
                qbar[:, state.constrained].T, state.chart_rotations(),
                state.normal_weight, workers=workers)
            out[:, state.constrained] = q.T
            fallbacks += int(np.sum(ratio > projection.RATIO_TOL))
    return out, fallbacks


def default_tau0(ops):
    return 1.0 / smallest_nonzero_stiffness_eigenvalue(ops)


def mbo_solve(state, ops, cfg=None, workers=1, callback=None):
    """Diffuse, project, repeat (Algorithm-1 style) with schedule β(k)."""
    cfg = cfg or MboConfig()
    tau0 = cfg.tau0 if cfg.tau0 is not None else default_tau0(ops)
    state = state.copy()
    state.rotations = state.weights = None
    diffusion = _Diffusion(ops, state)
    mass = ops.mass
    t0 = time.perf_counter()
    q = state.coeffs
    energy = dirichlet_energy(q, ops)
    state.energy_trace.append(TraceRow(0, energy, np.nan, np.nan, 0.0))
    state.status = "max-iterations"
    for k in range(1, cfg.max_outer + 1):
        tau = cfg.beta(k) * tau0
        qbar = diffusion.step(q, tau)
        q_new, fb = _project_columns(state, qbar, workers)
        state.fallback_count += fb
        diff = q_new - q
        denom = float(np.einsum("dn,n,dn->", q_new, mass, q_new))
        change = float(np.einsum("dn,n,dn->", diff, mass, diff)) / max(denom, 1e-300)
        e_new = dirichlet_energy(q_new, ops)
        rel = abs(e_new - energy) / e_new if e_new > 0 else 0.0
        q, energy = q_new, e_new
        state.coeffs = q
        state.energy_trace.append(TraceRow(k, energy, change, tau, time.perf_counter() - t0))
        if callback is not None:
            callback(state)
        # a decreasing schedule is swept at least down to τ0 before testing
        if cfg.delta > 0 and cfg.beta(k) <= 1.0 and (rel < cfg.delta or change < cfg.delta):
            state.status = "converged"
            break
    if fb := state.fallback_count:
        warnings.warn(f"{fb} projections used the local fallback", RuntimeWarning, stacklevel=2)
    return state


# ------------------------------------------------------------------- reports

@dataclass(frozen=True)
class EnergyReport:
    energy: float
    density: np.ndarray
    max_density: float
    max_residual: float
    max_boundary_violation: float


def vertex_energies(state, mesh):
    """Energy per vertex: each tet's share ½ Σ_ab K_ab ⟨q_a, q_b⟩ split in four."""
    from .mesh import element_stiffness

    K, _ = element_stiffness(mesh.vertices, mesh.tets)
    Q = state.coeffs.T[mesh.tets]  # m × 4 × d
    e_tet = 0.5 * np.einsum("tab,tad,tbd->t", K, Q, Q)
    e_v = np.zeros(mesh.n_vertices)
    np.add.at(e_v, mesh.tets.ravel(), np.repeat(e_tet / 4.0, 4))
    return e_v


def boundary_violation(state):
    """Largest distance of a constrained column from its chart's affine span."""
    if not len(state.constrained):
        return 0.0
    rots = state.chart_rotations()
    local = np.einsum("cji,jc->ci", rots, state.coeffs[:, state.constrained])
    if state.rep == OCTA:
        qz, Bz = projection._OCTA_QZ, projection._OCTA_BZ
    else:
        qz, Bz = projection._odeco_chart_basis(state.normal_weight)
    Qb, _ = np.linalg.qr(Bz)
    r = local - qz
    r = r - (r @ Qb) @ Qb.T
    return float(np.linalg.norm(r, axis=1).max())


def field_energy_report(state, ops, mesh):
    e_v = vertex_energies(state, mesh)
    density = e_v / ops.mass
    return EnergyReport(energy=float(e_v.sum()), density=density,
                        max_density=float(density.max()),
                        max_residual=float(state.residuals().max()),
                        max_boundary_violation=boundary_violation(state))


def write_trace_csv(path, state, header=""):
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("iteration,energy,measure,tau,wall_seconds\n")
        for row in state.energy_trace:
            fh.write(f"{row.iteration},{float(row.energy)!r},{float(row.measure)!r},{float(row.tau)!r},{row.wall:.6f}\n")


def checkpoint_bytes(state, mesh_hash=""):
    """Binary dump: text header line then little-endian float64 columns."""
    header = f"framefield rep={state.rep} d={state.d} n={state.n} mesh={mesh_hash}\n"
    return header.encode() + np.ascontiguousarray(state.coeffs.T, dtype="<f8").tobytes()


def read_checkpoint(data):
    head, _, body = data.partition(b"\n")
    fields = dict(tok.split("=", 1) for tok in head.decode().split()[1:])
    d, n = int(fields["d"]), int(fields["n"])
    coeffs = np.frombuffer(body, dtype="<f8").reshape(n, d).T.copy()
    return fields, coeffs


def solve_field(mesh, rep=OCTA, solver="rtr", seed=0, ops=None, mbo=None, rtr=None,
                workers=1, align=True):
    """Random initialization followed by the chosen solver(s)."""
    ops = ops or fem_operators(mesh)
    state = random_octa_field(mesh, seed, OCTA, align)
    if rep == ODECO:
        state = lift_to_odeco(state)
    if solver in ("mbo", "mmbo", "mbo-then-rtr"):
        cfg = mbo or MboConfig(schedule="constant" if solver == "mbo" else "powerlaw")
        state = mbo_solve(state, ops, cfg, workers)
    if solver in ("rtr", "mbo-then-rtr"):
        state = rtr_solve(state, ops, rtr)
    if solver not in ("mbo", "mmbo", "rtr", "mbo-then-rtr"):
        raise InputError(f"unknown solver {solver!r}")
    return state, ops
