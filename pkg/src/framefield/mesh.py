"""Tetrahedral meshes: parsing, boundary geometry, built-in generators,
linear finite-element operators and export."""
from dataclasses import dataclass, field
import hashlib
from pathlib import Path
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import (DegenerateTet, DimensionMismatch, EmptyMesh, InputError,
                         NoConvergence, NonManifoldBoundary, ParseError)

DEFAULT_CREASE_DEG = 45.0

# faces opposite each corner, ordered so their normals point out of a
# positively oriented tet
_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def signed_volumes(vertices, tets):
    p = vertices[tets]
    return np.einsum("ij,ij->i", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                     p[:, 3] - p[:, 0]) / 6.0


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Tetrahedral mesh with cached boundary data.

    ``normals`` and ``crease_flags`` are aligned with ``boundary_vertices``.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    boundary_vertices: np.ndarray
    normals: np.ndarray
    crease_flags: np.ndarray
    crease_deg: float = DEFAULT_CREASE_DEG
    name: str = field(default="mesh", compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def volume(self):
        return float(signed_volumes(self.vertices, self.tets).sum())

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.tets, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    def constrained_vertices(self):
        """Boundary vertices that receive an alignment constraint (non-crease)."""
        keep = ~self.crease_flags
        return self.boundary_vertices[keep], self.normals[keep]


def build_mesh(vertices, tets, crease_deg=DEFAULT_CREASE_DEG, name="mesh"):
    """Validate, orient and equip raw arrays with boundary data."""
    vertices = np.array(vertices, dtype=float)
    tets = np.array(tets, dtype=np.int64)
    if len(vertices) == 0 or len(tets) == 0:
        raise EmptyMesh("mesh has no vertices or no tetrahedra")
    if vertices.ndim != 2 or vertices.shape[1] != 3 or tets.ndim != 2 or tets.shape[1] != 4:
        raise DimensionMismatch("expected n×3 vertices and m×4 tetrahedra")
    if tets.min() < 0 or tets.max() >= len(vertices):
        raise InputError("tetrahedron references a missing vertex")
    vol = signed_volumes(vertices, tets)
    extent = np.ptp(vertices, axis=0).max()
    tiny = 1e-14 * extent ** 3
    bad = np.flatnonzero(np.abs(vol) < tiny)
    if bad.size:
        raise DegenerateTet(f"tetrahedron {bad[0]} has volume {vol[bad[0]]:.3g}",
                            tet_index=int(bad[0]))
    flip = vol < 0
    tets[flip] = tets[flip][:, [1, 0, 2, 3]]
    faces = boundary_faces(tets)
    bverts = np.unique(faces)
    normals, creases = vertex_normals(vertices, faces, bverts, crease_deg)
    for arr in (vertices, tets, faces, bverts, normals, creases):
        arr.setflags(write=False)
    return TetMesh(vertices, tets, faces, bverts, normals, creases, crease_deg, name)


def boundary_faces(tets):
    """Outward-oriented triangles incident to exactly one tetrahedron."""
    all_faces = tets[:, _FACES].reshape(-1, 3)
    key = np.sort(all_faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    faces = all_faces[counts[inverse.ravel()] == 1]
    if np.any(counts > 2):
        raise InputError("a face is shared by more than two tetrahedra")
    edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, ecount = np.unique(edges, axis=0, return_counts=True)
    if np.any(ecount != 2):
        warnings.warn("boundary is not a closed 2-manifold", NonManifoldBoundary, stacklevel=3)
    return faces


def vertex_normals(vertices, faces, bverts, crease_deg=DEFAULT_CREASE_DEG):
    """Area-weighted unit normals and crease flags for ``bverts``.

    A vertex is a crease when two incident boundary triangles have normals
    more than ``crease_deg`` apart, or when the weighted sum vanishes.
    """
    p = vertices[faces]
    area_n = 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    unit = area_n / np.linalg.norm(area_n, axis=1, keepdims=True)
    pos = np.full(len(vertices), -1)
    pos[bverts] = np.arange(len(bverts))
    acc = np.zeros((len(bverts), 3))
    for k in range(3):
        np.add.at(acc, pos[faces[:, k]], area_n)
    norm = np.linalg.norm(acc, axis=1)
    zero = norm <= 1e-12 * max(norm.max(), 1e-300)
    normals = acc / np.where(zero, 1.0, norm)[:, None]
    normals[zero] = np.array([0.0, 0.0, 1.0])

    # crease test: every incident face normal within the cone of half-angle
    # crease_deg around every other one
    inc_v = faces.ravel()
    inc_f = np.repeat(np.arange(len(faces)), 3)
    order = np.argsort(pos[inc_v], kind="stable")
    inc_v, inc_f = inc_v[order], inc_f[order]
    starts = np.searchsorted(pos[inc_v], np.arange(len(bverts)))
    ends = np.append(starts[1:], len(inc_v))
    cos_t = np.cos(np.radians(crease_deg))
    creases = zero.copy()
    for i, (s, e) in enumerate(zip(starts, ends)):
        U = unit[inc_f[s:e]]
        if np.min(U @ U.T) < cos_t - 1e-12:
            creases[i] = True
    return normals, creases


def with_crease_threshold(mesh, crease_deg):
    return build_mesh(mesh.vertices, mesh.tets, crease_deg, mesh.name)


# ---------------------------------------------------------------- generators

def _kuhn_tets(n):
    """Grid vertices of [0,1]³ and 6 tets per cell; also each tet's cell."""
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    paths = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets, cells = [], []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for path in paths:
                    c = [i, j, k]
                    ids = [vid(*c)]
                    for axis in path:
                        c[axis] += 1
                        ids.append(vid(*c))
                    tets.append(ids)
                    cells.append((i, j, k))
    return verts, np.array(tets), np.array(cells)


def generate_cube_mesh(n, crease_deg=DEFAULT_CREASE_DEG):
    """Unit cube with n³ cells, each split into 6 tets along its diagonal."""
    if n < 1:
        raise InputError("need at least one subdivision")
    verts, tets, _ = _kuhn_tets(int(n))
    return build_mesh(verts, tets, crease_deg, name=f"cube{n}")


def _compact(verts, tets):
    used = np.unique(tets)
    remap = np.full(len(verts), -1)
    remap[used] = np.arange(len(used))
    return verts[used], remap[tets]


def _kuhn_grid(shape, periodic_first=False):
    """Kuhn split of a logical (a, b, c) vertex grid; the first index may wrap."""
    na, nb, nc = shape
    cells_a = na if periodic_first else na - 1

    def vid(i, j, k):
        return ((i % na) * nb + j) * nc + k

    paths = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for i in range(cells_a):
        for j in range(nb - 1):
            for k in range(nc - 1):
                for path in paths:
                    c = [i, j, k]
                    ids = [vid(*c)]
                    for axis in path:
                        c[axis] += 1
                        ids.append(vid(*c))
                    tets.append(ids)
    return np.array(tets)


def generate_cube_with_hole(n, crease_deg=DEFAULT_CREASE_DEG):
    """Cube mesh with 3n cells per side minus the middle third in x and y
    (a square through-hole along z)."""
    if n < 1:
        raise InputError("need at least one subdivision")
    n = int(n)
    verts, tets, cells = _kuhn_tets(3 * n)
    inside = ((cells[:, 0] >= n) & (cells[:, 0] < 2 * n)
              & (cells[:, 1] >= n) & (cells[:, 1] < 2 * n))
    verts, tets = _compact(verts, tets[~inside])
    return build_mesh(verts, tets, crease_deg, name=f"holed-cube{n}")


def generate_cube_with_round_hole(n, radius=1.0 / 6.0, crease_deg=DEFAULT_CREASE_DEG):
    """Unit cube minus a vertical cylinder of the given radius about x = y = ½.

    The cross-section is an O-grid: 8n sectors around the hole and 2n rings
    blending the circle into the outer square, with 2n layers in z.
    """
    if n < 1:
        raise InputError("need at least one subdivision")
    if not 0.0 < radius < 0.5:
        raise InputError("hole radius must lie in (0, 1/2)")
    n = int(n)
    n_ang, n_rad, n_z = 8 * n, 2 * n + 1, 2 * n + 1
    phi = np.linspace(0.0, 2.0 * np.pi, n_ang, endpoint=False) + np.pi / 4.0
    circle = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    square = 0.5 * circle / np.abs(circle).max(axis=1, keepdims=True)
    t = np.linspace(0.0, 1.0, n_rad)
    xy = (1.0 - t)[None, :, None] * circle[:, None] + t[None, :, None] * square[:, None]
    z = np.linspace(0.0, 1.0, n_z)
    verts = np.empty((n_ang, n_rad, n_z, 3))
    verts[..., :2] = 0.5 + xy[:, :, None, :]
    verts[..., 2] = z
    tets = _kuhn_grid((n_ang, n_rad, n_z), periodic_first=True)
    return build_mesh(verts.reshape(-1, 3), tets, crease_deg, name=f"round-holed-cube{n}")


def map_cube_to_ball(mesh):
    """Push a [0,1]³ mesh onto the unit ball (concentric squircle map)."""
    p = 2.0 * mesh.vertices - 1.0
    x, y, z = p.T
    q = np.stack([x * np.sqrt(1 - y * y / 2 - z * z / 2 + y * y * z * z / 3),
                  y * np.sqrt(1 - z * z / 2 - x * x / 2 + z * z * x * x / 3),
                  z * np.sqrt(1 - x * x / 2 - y * y / 2 + x * x * y * y / 3)], axis=1)
    return build_mesh(q, mesh.tets, mesh.crease_deg, name=f"ball-{mesh.name}")


# -------------------------------------------------------------------- parsing

def _tokens(path):
    """(token, line number) pairs, skipping '#' comments."""
    out = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0]
            out.extend((tok, lineno) for tok in line.split())
    return out


def _number(tok, kind, path):
    try:
        return kind(tok[0]) if kind is float else int(tok[0])
    except ValueError:
        raise ParseError(f"expected a number, got {tok[0]!r}", tok[1], path) from None


def read_medit(path, crease_deg=DEFAULT_CREASE_DEG):
    toks = _tokens(path)
    pos = 0
    verts = tets = None

    def take(count, width, kinds):
        nonlocal pos
        if pos + count * width > len(toks):
            last = toks[-1][1] if toks else None
            raise ParseError("unexpected end of file", last, path)
        rows = [[_number(toks[pos + r * width + c], kinds[c], path) for c in range(width)]
                for r in range(count)]
        pos += count * width
        return rows

    while pos < len(toks):
        word, line = toks[pos]
        key = word.lower()
        pos += 1
        if key == "meshversionformatted" or key == "dimension":
            value = _number(toks[pos], int, path) if pos < len(toks) else None
            if key == "dimension" and value != 3:
                raise ParseError("only 3-dimensional meshes are supported", line, path)
            pos += 1
        elif key == "vertices":
            count = _number(toks[pos], int, path)
            pos += 1
            verts = np.array(take(count, 4, [float, float, float, int]))[:, :3]
        elif key == "tetrahedra":
            count = _number(toks[pos], int, path)
            pos += 1
            tets = np.array(take(count, 5, [int] * 5), dtype=np.int64)[:, :4] - 1
        elif key in ("triangles", "edges", "corners", "ridges", "requiredvertices"):
            width = {"triangles": 4, "edges": 3}.get(key, 1)
            count = _number(toks[pos], int, path)
            pos += 1
            take(count, width, [int] * width)
        elif key == "end":
            break
        else:
            raise ParseError(f"unknown keyword {word!r}", line, path)
    if verts is None or tets is None or len(verts) == 0 or len(tets) == 0:
        raise EmptyMesh(f"{path}: no vertices or tetrahedra")
    return build_mesh(verts, tets, crease_deg, name=Path(path).stem)


def _table(path, header_width):
    rows = {}
    for tok, line in _tokens(path):
        rows.setdefault(line, []).append(tok)
    lines = sorted(rows)
    if not lines:
        raise EmptyMesh(f"{path}: empty file")
    head = [_number((t, lines[0]), int, path) for t in rows[lines[0]][:header_width]]
    body = [(ln, rows[ln]) for ln in lines[1:]]
    return head, body


def read_tetgen(path, crease_deg=DEFAULT_CREASE_DEG):
    base = Path(path)
    if base.suffix in (".node", ".ele"):
        base = base.with_suffix("")
    node, ele = base.with_suffix(".node"), base.with_suffix(".ele")
    for p in (node, ele):
        if not p.exists():
            raise InputError(f"missing file {p}")
    head, body = _table(node, 4)
    count = head[0]
    if len(head) > 1 and head[1] != 3:
        raise ParseError("only 3-dimensional nodes are supported", 1, node)
    if len(body) < count:
        raise ParseError("fewer node lines than declared", body[-1][0] if body else 1, node)
    ids, verts = [], []
    for ln, toks in body[:count]:
        if len(toks) < 4:
            raise ParseError("node line needs an index and 3 coordinates", ln, node)
        ids.append(_number((toks[0], ln), int, node))
        verts.append([_number((t, ln), float, node) for t in toks[1:4]])
    first = ids[0]
    head, body = _table(ele, 3)
    count, per = head[0], head[1] if len(head) > 1 else 4
    if per not in (4, 10):
        raise ParseError("tetrahedra must have 4 or 10 nodes", 1, ele)
    tets = []
    for ln, toks in body[:count]:
        if len(toks) < 5:
            raise ParseError("element line needs an index and 4 nodes", ln, ele)
        tets.append([_number((t, ln), int, ele) - first for t in toks[1:5]])
    if len(tets) < count:
        raise ParseError("fewer element lines than declared", body[-1][0] if body else 1, ele)
    return build_mesh(np.array(verts), np.array(tets), crease_deg, name=base.name)


def load_mesh(path, fmt=None, crease_deg=DEFAULT_CREASE_DEG):
    """Read a MEDIT ``.mesh`` or TetGen ``.node``/``.ele`` mesh."""
    path = Path(path)
    if fmt is None:
        fmt = "medit" if path.suffix == ".mesh" else "tetgen"
    if fmt == "medit":
        if not path.exists():
            raise InputError(f"missing file {path}")
        return read_medit(path, crease_deg)
    if fmt == "tetgen":
        return read_tetgen(path, crease_deg)
    raise InputError(f"unknown mesh format {fmt!r}")


def write_medit(mesh, path):
    with open(path, "w") as fh:
        fh.write("MeshVersionFormatted 2\nDimension 3\n")
        fh.write(f"Vertices\n{mesh.n_vertices}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + " 0\n")
        fh.write(f"Tetrahedra\n{mesh.n_tets}\n")
        for t in mesh.tets + 1:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]} 0\n")
        fh.write(f"Triangles\n{len(mesh.boundary_faces)}\n")
        for t in mesh.boundary_faces + 1:
            fh.write(f"{t[0]} {t[1]} {t[2]} 0\n")
        fh.write("End\n")


def write_tetgen(mesh, base):
    base = Path(base)
    with open(base.with_suffix(".node"), "w") as fh:
        fh.write(f"{mesh.n_vertices} 3 0 0\n")
        for i, v in enumerate(mesh.vertices, 1):
            fh.write(f"{i} " + " ".join(repr(float(x)) for x in v) + "\n")
    with open(base.with_suffix(".ele"), "w") as fh:
        fh.write(f"{mesh.n_tets} 4 0\n")
        for i, t in enumerate(mesh.tets + 1, 1):
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


# ------------------------------------------------------------------------ FEM

@dataclass(frozen=True, eq=False)
class FemOperators:
    """Stiffness S (sparse PSD) and lumped mass (diagonal entries)."""

    S: sp.csr_matrix
    mass: np.ndarray

    @property
    def M(self):
        return sp.diags(self.mass).tocsr()


def shape_gradients(vertices, tets):
    """Constant gradients of the 4 barycentric shape functions per tet."""
    p = vertices[tets]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=1)
    Jinv = np.linalg.inv(J)  # rows of Jinv.T are grads of λ1..λ3
    g = np.swapaxes(Jinv, 1, 2)
    g0 = -g.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g], axis=1)


def element_stiffness(vertices, tets):
    vol = signed_volumes(vertices, tets)
    G = shape_gradients(vertices, tets)
    return vol[:, None, None] * G @ np.swapaxes(G, 1, 2), vol


def fem_operators(mesh):
    """Linear-FEM stiffness (cotangent Laplacian) and lumped mass."""
    K, vol = element_stiffness(mesh.vertices, mesh.tets)
    n = mesh.n_vertices
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    S = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    S = (0.5 * (S + S.T)).tocsr()
    S.sort_indices()
    mass = np.zeros(n)
    np.add.at(mass, mesh.tets.ravel(), np.repeat(vol / 4.0, 4))
    return FemOperators(S, mass)


def smallest_nonzero_stiffness_eigenvalue(ops, boundary_reduced=False, mesh=None,
                                          tol=1e-8, max_iter=500, seed=0):
    """Smallest eigenvalue of S u = λ M u after deflating constants.

    With ``boundary_reduced`` the boundary rows and columns (of ``mesh``) are
    removed instead, which gives the Dirichlet spectrum without a kernel.
    """
    S, mass = ops.S, ops.mass
    if boundary_reduced:
        if mesh is None:
            raise InputError("boundary reduction needs the mesh")
        keep = np.setdiff1d(np.arange(len(mass)), mesh.boundary_vertices)
        S, mass = S[keep][:, keep], mass[keep]
        deflate = False
    else:
        deflate = True
    k = 2 if deflate else 1
    if len(mass) <= k:
        raise InputError("mesh too small for a nonzero eigenvalue")
    shift = 1e-6 * S.diagonal().mean() / mass.mean()
    v0 = np.random.default_rng(seed).normal(size=len(mass))
    try:
        vals = spla.eigsh(S.tocsc(), k=k + 1, M=sp.diags(mass).tocsc(), sigma=-shift,
                          which="LM", tol=tol, maxiter=max_iter, v0=v0,
                          return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence("eigenvalue iteration did not converge") from exc
    vals = np.sort(vals)
    zero = 1e-8 * S.diagonal().mean() / mass.mean()
    if deflate and vals[1] < zero:
        warnings.warn("stiffness has more than one zero mode (disconnected mesh?)",
                      RuntimeWarning, stacklevel=2)
    lam = vals[k - 1]
    return float(lam)


def dirichlet_energy_matrix(q, S):
    """½ Σ_rows q_r S q_rᵀ for q of shape (d, n)."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != S.shape[0]:
        raise DimensionMismatch(f"field has {q.shape[-1]} columns, mesh has {S.shape[0]} vertices")
    return 0.5 * float(np.einsum("ij,ij->", q, (S @ q.T).T))


# --------------------------------------------------------------------- export

def write_vtk(mesh, path, coeffs=None, axes=None, header=""):
    """Legacy ASCII VTK unstructured grid with optional per-vertex frames.

    ``coeffs`` is d×n; ``axes`` is n×3×3 with rows the frame axes scaled by
    their weights.
    """
    if coeffs is not None and np.shape(coeffs)[-1] != mesh.n_vertices:
        raise DimensionMismatch("coefficients need one column per vertex")
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write((header or "frame field").replace("\n", " ")[:250] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for t in mesh.tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        fh.write("10\n" * mesh.n_tets)
        if coeffs is None and axes is None:
            return
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        if coeffs is not None:
            coeffs = np.asarray(coeffs)
            fh.write(f"FIELD frame 1\ncoeffs {coeffs.shape[0]} {mesh.n_vertices} double\n")
            for col in coeffs.T:
                fh.write(" ".join(repr(float(c)) for c in col) + "\n")
        if axes is not None:
            for k in range(3):
                fh.write(f"VECTORS axis{k} double\n")
                for a in axes[:, k]:
                    fh.write(" ".join(repr(float(x)) for x in a) + "\n")


def write_coefficients_csv(path, coeffs, header=""):
    coeffs = np.asarray(coeffs)
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("vertex," + ",".join(f"c{i}" for i in range(coeffs.shape[0])) + "\n")
        for j, col in enumerate(coeffs.T):
            fh.write(f"{j}," + ",".join(repr(float(c)) for c in col) + "\n")


def read_coefficients_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("vertex"):
                continue
            rows.append([float(t) for t in line.strip().split(",")[1:]])
    return np.array(rows).T
