"""Command-line front end: ``framefield <subcommand> [flags]``.

Exit codes: 0 success, 1 numerical failure, 2 input error.
"""
import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, mesh as meshmod, optim, projection, quartic, so3, varieties
from .exceptions import FrameFieldError, InputError, NumericalError

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2

_GENERATORS = {
    "cube": meshmod.generate_cube_mesh,
    "holed-cube": meshmod.generate_cube_with_hole,
    "round-hole": meshmod.generate_cube_with_round_hole,
}

# keys accepted in a --config file (flag names with dashes replaced)
_CONFIG_KEYS = {"mesh", "format", "rep", "solver", "seed", "tau0", "schedule", "delta",
                "grad_tol", "crease_deg", "quadrics", "out", "trace", "workers", "trials",
                "max_outer", "samples"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _common(p, *names):
    if "mesh" in names:
        p.add_argument("--mesh", help="mesh file, or cube:N / holed-cube:N / round-hole:N")
        p.add_argument("--format", choices=["medit", "tetgen"], default=None)
        p.add_argument("--crease-deg", type=float, default=None)
    if "rep" in names:
        p.add_argument("--rep", choices=["octa", "odeco"], default=None)
    if "seed" in names:
        p.add_argument("--seed", type=int, default=None)
    if "workers" in names:
        p.add_argument("--workers", type=int, default=None)
    if "trials" in names:
        p.add_argument("--trials", type=int, default=None)
    p.add_argument("--quadrics", default=None, help="quadric data file")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="key = value file; flags win")


def build_parser():
    parser = _Parser(prog="framefield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"framefield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("derive-quadrics", help="derive and save the defining quadrics")
    _common(p, "seed")
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("solve", help="optimize a frame field on a mesh")
    _common(p, "mesh", "rep", "seed", "workers")
    p.add_argument("--solver", choices=["rtr", "mbo", "mmbo", "mbo-then-rtr"], default=None)
    p.add_argument("--tau0", type=float, default=None)
    p.add_argument("--schedule", choices=["constant", "powerlaw"], default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--max-outer", type=int, default=None)
    p.add_argument("--trace", default=None, help="trace CSV path")

    p = sub.add_parser("project", help="project query vectors onto a variety")
    _common(p, "rep", "workers")
    p.add_argument("input", help="table with 9 or 15 numbers per line")

    p = sub.add_parser("exactness-test", help="histogram of SDP eigenvalue ratios")
    _common(p, "rep", "seed", "workers", "trials")
    for action in p._actions:
        if action.dest == "rep":
            action.choices = ["octa", "odeco", "odeco-positive"]

    p = sub.add_parser("geodesic", help="sample an octahedral geodesic")
    _common(p)
    p.add_argument("--start", default=None, help="9 comma-separated coefficients (default q0)")
    p.add_argument("--v", default="0,0,1.5707963267948966", help="axis-angle x,y,z")
    p.add_argument("--steps", type=int, default=100)

    p = sub.add_parser("export-vtk", help="write a mesh and coefficient CSV as VTK")
    _common(p, "mesh")
    p.add_argument("--coeffs", required=False, default=None, help="coefficient CSV")

    p = sub.add_parser("info", help="version, conventions and quadric data")
    _common(p, "mesh")
    return parser


# ---------------------------------------------------------------- helpers

def _read_config(path):
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip('"')
    return out


_DEFAULTS = {"rep": "octa", "solver": "rtr", "seed": 0, "workers": None, "trials": 1000,
             "crease_deg": meshmod.DEFAULT_CREASE_DEG, "delta": 1e-4}
_TYPES = {"seed": int, "workers": int, "trials": int, "tau0": float, "delta": float,
          "grad_tol": float, "crease_deg": float, "max_outer": int, "samples": int}


def _resolve(args):
    """Merge defaults < config file < flags into a plain dict."""
    cfg = dict(_DEFAULTS)
    if args.config:
        if not Path(args.config).is_file():
            raise InputError(f"config file not found: {args.config}")
        for key, value in _read_config(args.config).items():
            cfg[key] = _TYPES.get(key, str)(value)
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        cfg[key] = value
    if cfg.get("workers") is None:
        cfg["workers"] = os.cpu_count() or 1
    if cfg["workers"] < 1:
        raise InputError("--workers must be at least 1")
    cfg["command"] = args.command
    return cfg


def _config_hash(cfg):
    keep = {k: v for k, v in cfg.items() if k not in ("workers", "out", "trace")}
    return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _quadric_hash():
    octa, odeco = varieties.default_quadrics()
    return varieties.content_hash([octa, odeco])[:16]


def _header(cfg):
    return (f"framefield {__version__} command={cfg['command']} config={_config_hash(cfg)} "
            f"quadrics={_quadric_hash()}")


def _setup_quadrics(cfg):
    path = cfg.get("quadrics")
    if path is not None:
        if not Path(path).is_file():
            raise InputError(f"quadric file not found: {path}")
        varieties.use_quadrics(path)


def _load_mesh(cfg):
    spec = cfg.get("mesh")
    if not spec:
        raise InputError("--mesh is required")
    kind, _, size = spec.partition(":")
    if kind in _GENERATORS and size and not Path(spec).exists():
        try:
            n = int(size)
        except ValueError:
            raise InputError(f"bad mesh size in {spec!r}") from None
        return _GENERATORS[kind](n, crease_deg=cfg["crease_deg"])
    if not Path(spec).exists() and not Path(spec).with_suffix(".node").exists():
        raise InputError(f"mesh file not found: {spec}")
    return meshmod.load_mesh(spec, cfg.get("format"), cfg["crease_deg"])


def _out_path(cfg, default):
    return Path(cfg.get("out") or default)


def _read_table(path):
    if not Path(path).is_file():
        raise InputError(f"input file not found: {path}")
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(t) for t in line.replace(",", " ").split()])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows or len({len(r) for r in rows}) != 1 or len(rows[0]) not in (9, 15):
        raise InputError(f"{path}: need rows of 9 or 15 numbers")
    return np.array(rows)


def _frame_axes(coeffs, rep):
    """n×3×3 axes scaled by weights (rows), for VTK glyphs."""
    q = coeffs.T
    if rep == "octa" or q.shape[1] == 9:
        q = quartic.octa_to_odeco(q, check=False)
    out = np.zeros((len(q), 3, 3))
    for i, col in enumerate(q):
        dec = quartic.tensor_decompose(col, check=False)
        out[i] = dec.lambdas[:, None] * dec.axes
    return out


# ---------------------------------------------------------------- commands

def cmd_derive_quadrics(cfg):
    seed = cfg["seed"]
    samples = cfg.get("samples")
    octa = varieties.derive_octa_quadrics(samples or varieties.DEFAULT_OCTA_SAMPLES, seed)
    odeco = varieties.derive_odeco_quadrics(samples or varieties.DEFAULT_ODECO_SAMPLES, seed)
    out = _out_path(cfg, "quadrics.txt")
    digest = varieties.save_quadrics(out, octa, odeco, seed=seed, samples=samples)
    print(f"octahedral: {octa.count} quadrics, singular-value gap {octa.gap_ratio:.3e}")
    print(f"odeco: {odeco.count} quadrics, singular-value gap {odeco.gap_ratio:.3e}")
    print(f"wrote {out} content_hash={digest}")
    return EXIT_OK


def _solver_configs(cfg):
    solver = cfg["solver"]
    schedule = cfg.get("schedule") or ("constant" if solver == "mbo" else "powerlaw")
    extra = {"max_outer": cfg["max_outer"]} if cfg.get("max_outer") else {}
    mbo = optim.MboConfig(tau0=cfg.get("tau0"), schedule=schedule, delta=cfg["delta"], **extra)
    rtr = optim.RtrConfig(grad_tol=cfg.get("grad_tol"), **extra)
    return mbo, rtr


def cmd_solve(cfg):
    mesh = _load_mesh(cfg)
    mbo, rtr = _solver_configs(cfg)
    t0 = time.perf_counter()
    state, ops = optim.solve_field(mesh, cfg["rep"], cfg["solver"], cfg["seed"],
                                   mbo=mbo, rtr=rtr, workers=cfg["workers"])
    wall = time.perf_counter() - t0
    header = _header(cfg) + f" mesh={mesh.content_hash()}"
    base = _out_path(cfg, "field")
    if base.parent != Path("."):
        base.parent.mkdir(parents=True, exist_ok=True)
    meshmod.write_coefficients_csv(base.with_suffix(".csv"), state.coeffs, header)
    base.with_suffix(".bin").write_bytes(optim.checkpoint_bytes(state, mesh.content_hash()))
    meshmod.write_vtk(mesh, base.with_suffix(".vtk"), state.coeffs,
                      _frame_axes(state.coeffs, state.rep), header)
    if cfg.get("trace"):
        optim.write_trace_csv(cfg["trace"], state, header)
    report = optim.field_energy_report(state, ops, mesh)
    iterations = state.energy_trace[-1].iteration if state.energy_trace else 0
    print(f"# {header}")
    print(f"energy {report.energy:.12g}")
    print(f"iterations {iterations}")
    print(f"wall_seconds {wall:.3f}")
    print(f"status {state.status}")
    print(f"max_residual {report.max_residual:.3e}")
    print(f"max_boundary_violation {report.max_boundary_violation:.3e}")
    if state.fallback_count:
        print(f"projection_fallbacks {state.fallback_count}")
    ok = np.isfinite(report.energy) and report.max_residual < 1e-6
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_project(cfg):
    y = _read_table(cfg["input"])
    rep = cfg["rep"]
    if (rep == "octa") != (y.shape[1] == 9):
        raise InputError(f"{rep} projection needs {9 if rep == 'octa' else 15} columns")
    fn = projection.project_octa if rep == "octa" else projection.project_odeco
    q, ratio = fn(y, workers=cfg["workers"])
    lines = [f"# {_header(cfg)}"]
    lines += [" ".join(repr(float(x)) for x in row) + f" {float(r)!r}" for row, r in zip(q, ratio)]
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def exactness_queries(variety, trials, seed):
    rng = np.random.default_rng(seed)
    if variety == "octa":
        return rng.normal(size=(trials, 9))
    if variety == "odeco":
        return rng.normal(size=(trials, 15))
    if variety == "odeco-positive":
        return quartic.sum_of_squares_quartics(trials, rng)
    raise InputError(f"unknown variety {variety!r}")


def exactness_run(variety, trials, seed=0, workers=1):
    """Solve the projection SDPs; returns (ratios, statuses)."""
    from . import sdp

    y = exactness_queries(variety, trials, seed)
    quad = varieties.octa_quadrics() if variety == "octa" else varieties.odeco_quadrics()
    prob = sdp.lift_projection(y, quad)
    sols = sdp.solve_many(prob.C, prob.A, prob.b, workers=workers)
    return np.array([s.eig_ratio for s in sols]), [s.status for s in sols]


def cmd_exactness_test(cfg):
    from .sdp import Status

    variety, trials = cfg["rep"], cfg["trials"]
    if trials < 1:
        raise InputError("--trials must be positive")
    ratios, status = exactness_run(variety, trials, cfg["seed"], cfg["workers"])
    failed = sum(s != Status.OPTIMAL for s in status)
    edges = 10.0 ** np.arange(-16, 1)
    counts, _ = np.histogram(np.clip(ratios, 1e-16, 1.0), bins=edges)
    out = _out_path(cfg, f"exactness-{variety}.csv")
    with open(out, "w") as fh:
        fh.write(f"# {_header(cfg)}\n")
        fh.write("bin_low,bin_high,count\n")
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            fh.write(f"{lo:.0e},{hi:.0e},{c}\n")
    print(f"trials {trials}")
    print(f"not_optimal {failed}")
    print(f"max_ratio {np.max(ratios):.3e}")
    print(f"fraction_above_1e-8 {np.mean(ratios > 1e-8):.6f}")
    print(f"histogram {out}")
    return EXIT_NUMERICAL if failed > 0.001 * trials else EXIT_OK


def geodesic_points(start, v, steps):
    t = np.linspace(0.0, 1.0, steps + 1)
    return so3.octa_exp(np.broadcast_to(start, (steps + 1, 9)), t[:, None] * v)


def cmd_geodesic(cfg):
    start = so3.Q0 if cfg.get("start") is None else _floats(cfg["start"], 9, "--start")
    v = _floats(cfg["v"], 3, "--v")
    if cfg["steps"] < 1:
        raise InputError("--steps must be positive")
    if varieties.octa_residual(start) > 1e-6:
        from .exceptions import NotOnVariety

        raise NotOnVariety("start point is not an octahedral frame")
    pts = geodesic_points(start, v, cfg["steps"])
    res = np.atleast_1d(varieties.octa_residual(pts))
    lines = [f"# {_header(cfg)}", "t," + ",".join(f"c{i}" for i in range(9)) + ",residual"]
    for t, p, r in zip(np.linspace(0, 1, len(pts)), pts, res):
        lines.append(f"{float(t)!r}," + ",".join(repr(float(x)) for x in p) + f",{float(r)!r}")
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text)
        print(f"chord_length {np.linalg.norm(np.diff(pts, axis=0), axis=1).sum():.12g}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _floats(text, count, name):
    try:
        vals = np.array([float(t) for t in str(text).replace(",", " ").split()])
    except ValueError:
        raise InputError(f"{name}: expected {count} numbers") from None
    if len(vals) != count:
        raise InputError(f"{name}: expected {count} numbers, got {len(vals)}")
    return vals


def cmd_export_vtk(cfg):
    mesh = _load_mesh(cfg)
    coeffs = None
    if cfg.get("coeffs"):
        if not Path(cfg["coeffs"]).is_file():
            raise InputError(f"coefficient file not found: {cfg['coeffs']}")
        coeffs = meshmod.read_coefficients_csv(cfg["coeffs"])
        if coeffs.ndim != 2 or coeffs.shape[1] != mesh.n_vertices or coeffs.shape[0] not in (9, 15):
            raise InputError("coefficient table does not match the mesh")
    out = _out_path(cfg, "field.vtk")
    axes = None if coeffs is None else _frame_axes(coeffs, "octa" if coeffs.shape[0] == 9 else "odeco")
    meshmod.write_vtk(mesh, out, coeffs, axes, _header(cfg))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_info(cfg):
    octa, odeco = varieties.default_quadrics()
    print(f"framefield {__version__}")
    print(f"sh_convention {varieties.SH_CONVENTION}")
    print(f"quadrics octahedral={octa.count} odeco={odeco.count} hash={_quadric_hash()}")
    if cfg.get("mesh"):
        m = _load_mesh(cfg)
        idx, _ = m.constrained_vertices()
        print(f"mesh {m.name} vertices={m.n_vertices} tets={m.n_tets} volume={m.volume:.12g}")
        print(f"boundary_vertices {len(m.boundary_vertices)} constrained={len(idx)} "
              f"creases={int(m.crease_flags.sum())}")
    return EXIT_OK


COMMANDS = {
    "derive-quadrics": cmd_derive_quadrics,
    "solve": cmd_solve,
    "project": cmd_project,
    "exactness-test": cmd_exactness_test,
    "geodesic": cmd_geodesic,
    "export-vtk": cmd_export_vtk,
    "info": cmd_info,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        cfg = _resolve(args)
        if cfg["command"] == "exactness-test" and cfg["rep"] not in ("octa", "odeco", "odeco-positive"):
            raise InputError(f"unknown variety {cfg['rep']!r}")
        _setup_quadrics(cfg)
        return COMMANDS[cfg["command"]](cfg)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FrameFieldError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        varieties.use_quadrics(None)


if __name__ == "__main__":
    sys.exit(main())
