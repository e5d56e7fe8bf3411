"""Command-line entry point.

Subcommands: sample-explicit, simulate, diagnose, osc, lemma, constants,
hausdorff, audit. Outputs are written atomically; CSV reports get a JSON
sidecar with the full parameter set, its sha256 and library versions.

Exit codes: 0 success, 2 validation/usage error, 3 numerical failure
(e.g. Newton divergence). LOGDIFF_THREADS caps internal parallelism; the
computations here are single-threaded, so the cap is recorded in the
provenance and trivially honored.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import degiorgi, diagnostics, hausdorff, snapshots
from .errors import NewtonDivergenceError
from .exact import ExplicitSolution, sample
from .geometry import ParabolicCylinder, SpaceTimeGrid, make_cutoff
from .solver import BoundaryData, SolverConfig, run


def _thread_cap():
    raw = os.environ.get("LOGDIFF_THREADS")
    if raw is None:
        return None
    cap = int(raw)
    if cap < 1:
        raise ValueError(f"LOGDIFF_THREADS must be >= 1, got {raw}")
    return cap


def _parse_vertex(text):
    """'x1,x2,...@t' -> ((x1, x2, ...), t)"""
    try:
        xs, t = text.split("@")
        return tuple(float(c) for c in xs.split(",")), float(t)
    except Exception as err:
        raise ValueError(f"bad vertex {text!r}; expected 'x1,x2,...@t'") from err


def _parse_floats(text):
    return [float(c) for c in text.split(",")]


def _radius_ladder(r0, n, factor):
    if r0 <= 0 or n < 1 or factor <= 1:
        raise ValueError("need r0 > 0, n >= 1, factor > 1")
    return [r0 * factor**-k for k in range(n)]


def _provenance(args, **extra):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {"threads": _thread_cap()}
    doc.update(extra)
    return params, doc


def _validate_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


# ---------------------------------------------------------------------------

def _cmd_constants(args):
    b = degiorgi.beta(args.N, args.p)
    print(f"beta = {b:.6f}")
    params = degiorgi.DeGiorgiConstants(
        args.N, args.p, args.a, args.xi, args.theta, args.omega,
        mu_minus=args.mu_minus, b=args.b, gamma=args.gamma,
    )
    print(
        f"inputs: a={args.a} xi={args.xi} theta={args.theta} omega={args.omega} "
        f"mu_minus={args.mu_minus} b={args.b} gamma={args.gamma}"
    )
    rows = [("beta", b)]
    for label, reduced in (("reduced", True), ("full", False)):
        A = params.A(reduced=reduced)
        nu = degiorgi.nu_minus(params, reduced=reduced)
        print(f"A_{label} = {A:.6f}  nu_minus_{label} = {nu:.6e}")
        rows += [(f"A_{label}", A), (f"nu_minus_{label}", nu)]
    nup = degiorgi.nu_plus(params)
    print(f"nu_plus = {nup:.6e}")
    rows.append(("nu_plus", nup))
    thr = degiorgi.fgc(0.0, params.A(reduced=True), 16.0, b).threshold
    print(f"fgc_threshold(C=A_reduced, b=16) = {thr:.6e}")
    rows.append(("fgc_threshold", thr))
    if args.out:
        snapshots.write_csv(args.out, ("name", "value"), rows)
        p, extra = _provenance(args)
        snapshots.write_sidecar(args.out, p, extra)
    return 0


def _cmd_sample_explicit(args):
    sol = ExplicitSolution(args.N, args.lam, args.T)
    grid = SpaceTimeGrid.from_box(args.N, args.lo, args.hi, args.nodes,
                                  args.t0, args.t1, args.steps)
    fld = sample(sol, grid, eps_floor=args.eps_floor)
    snapshots.write_field(args.out, fld)
    print(f"wrote {args.out}: N={args.N} lam={args.lam} T={args.T} "
          f"nodes={args.nodes}^{args.N} steps={args.steps}")
    return 0


_GRID_KEYS = ("dim", "lo", "hi", "nodes_per_axis", "t0", "t1", "n_steps")
_CFG_KEYS = ("grid", "newton_tol", "newton_max_iter", "eps_floor", "boundary")
_BC_KEYS = {
    "constant": ("kind", "value"),
    "oracle": ("kind", "N", "lam", "T"),
    "snapshot": ("kind", "path"),
}


def _cmd_simulate(args):
    with open(args.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    _validate_keys(cfg, _CFG_KEYS, "config")
    _validate_keys(cfg["grid"], _GRID_KEYS, "config.grid")
    g = cfg["grid"]
    grid = SpaceTimeGrid.from_box(g["dim"], g["lo"], g["hi"], g["nodes_per_axis"],
                                  g["t0"], g["t1"], g["n_steps"])
    bc_cfg = cfg.get("boundary", {"kind": "constant", "value": 1.0})
    kind = bc_cfg.get("kind")
    if kind not in _BC_KEYS:
        raise ValueError(f"unknown boundary kind {kind!r}")
    _validate_keys(bc_cfg, _BC_KEYS[kind], "config.boundary")
    if kind == "constant":
        bc = BoundaryData.constant(bc_cfg["value"])
    elif kind == "oracle":
        bc = BoundaryData.from_solution(
            ExplicitSolution(bc_cfg["N"], bc_cfg["lam"], bc_cfg["T"])
        )
    else:
        bc = BoundaryData.from_field(snapshots.read_field(bc_cfg["path"]))
    config = SolverConfig(
        grid,
        newton_tol=cfg.get("newton_tol", 1e-10),
        newton_max_iter=cfg.get("newton_max_iter", 50),
        eps_floor=cfg.get("eps_floor", 1e-12),
    )
    result = run(config, bc)
    snapshots.write_field(args.out, result.field)
    print(f"wrote {args.out}: {grid.n_steps} steps, newton iterations "
          f"{min(result.newton_iterations)}..{max(result.newton_iterations)}")
    return 0


def _cmd_diagnose(args):
    fld = snapshots.read_field(args.field)
    vertex = _parse_vertex(args.vertex)
    radii = _radius_ladder(args.r0, args.n_radii, args.factor)
    curve = diagnostics.indicator_curve(fld, vertex, radii, args.p,
                                        allow_low_p=args.allow_low_p)
    theta_curve = diagnostics.so_indicator(fld, vertex, args.p, radii,
                                           allow_low_p=args.allow_low_p)
    rows = list(zip(curve.radii, curve.values, curve.envelope, theta_curve.values))
    snapshots.write_csv(args.out, ("radius", "indicator", "envelope", "theta"), rows)
    fit = None
    if len(radii) >= 3 and np.all(curve.values > 0):
        fit = diagnostics.powerlaw_fit(list(zip(curve.radii, curve.values)))
        print(f"fitted slope = {fit.slope:.6f} (r^2 = {fit.r_squared:.4f})")
    p, extra = _provenance(args, fit=None if fit is None else vars(fit))
    snapshots.write_sidecar(args.out, p, extra)
    print(f"wrote {args.out}")
    return 0


def _cmd_osc(args):
    fld = snapshots.read_field(args.field)
    vertex = _parse_vertex(args.vertex)
    radii = _radius_ladder(args.r0, args.n_radii, args.factor)
    pts = diagnostics.osc_curve(fld, vertex, radii, args.theta)
    snapshots.write_csv(args.out, ("radius", "essosc"), pts)
    p, extra = _provenance(args)
    snapshots.write_sidecar(args.out, p, extra)
    print(f"wrote {args.out} ({len(pts)} radii)")
    return 0


def _cmd_lemma(args):
    fld = snapshots.read_field(args.field)
    gammas = _parse_floats(args.gammas)
    all_verdicts = []
    smallest_ok = None
    for gamma in gammas:
        if args.which == 41:
            vs = degiorgi.lemma41_sweep(fld, args.n, args.seed, args.p, gamma=gamma)
        else:
            vs = degiorgi.lemma42_sweep(fld, args.n, args.seed, b=args.b, gamma=gamma)
        n_ce = sum(v.counterexample for v in vs)
        n_hyp = sum(v.hypothesis_met for v in vs)
        print(f"gamma={gamma}: {len(vs)} verdicts, hypothesis met {n_hyp}, "
              f"counterexamples {n_ce}")
        if n_ce == 0 and smallest_ok is None:
            smallest_ok = gamma
        all_verdicts.extend(vs)
    degiorgi.write_verdicts_jsonl(args.out, all_verdicts)
    p, extra = _provenance(args, smallest_sufficient_gamma=smallest_ok)
    snapshots.write_sidecar(args.out, p, extra)
    print(f"smallest sufficient gamma: {smallest_ok}")
    print(f"wrote {args.out}")
    return 0


def _so_vertices(grid, r0, stride):
    """Lattice of vertices whose theta=1 cylinders of radius r0 fit the grid."""
    half = r0 / 2.0
    axes = []
    for d in range(grid.dim):
        c = grid.axis_coords(d)
        ok = (c >= grid.origin[d] + half - 1e-12) & (
            c <= grid.origin[d] + (grid.nodes_per_axis - 1) * grid.h - half + 1e-12
        )
        axes.append(c[ok][::stride])
    times = grid.times[grid.times >= grid.t0 + r0**2 - 1e-12]
    tpick = times[:: max(1, len(times) // 3)][-3:] if len(times) else []
    verts = []
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)
    for t in tpick:
        for xy in coords:
            verts.append((tuple(float(v) for v in xy), float(t)))
    return verts


def _cmd_hausdorff(args):
    deltas = _parse_floats(args.deltas)
    if args.points_csv is None and args.field is None:
        raise ValueError("need one of --points-csv or --field")
    if args.points_csv:
        pts = snapshots.read_points_csv(args.points_csv)
    else:
        fld = snapshots.read_field(args.field)
        radii = _radius_ladder(args.r0, args.n_radii, args.factor)
        verts = _so_vertices(fld.grid, args.r0, args.stride)
        curves = diagnostics.so_curves(fld, verts, args.p, radii,
                                       allow_low_p=args.allow_low_p)
        pts = hausdorff.extract_so(curves, args.eta, radii[-1])
        print(f"extracted {len(pts)} candidate discontinuity points "
              f"from {len(verts)} vertices")
        if args.points_out:
            snapshots.write_points_csv(args.points_out, pts)
    ests = [hausdorff.premeasure(pts, args.k, d, strategy=args.strategy)
            for d in deltas]
    for est in ests:
        print(f"delta={est.delta}: count={est.count} premeasure(k={args.k})={est.value:.6g}")
    if len(deltas) >= 3 and len(pts) > 0:
        dim = hausdorff.parabolic_dimension(pts, deltas)
        print(f"parabolic covering dimension ~ {dim:.3f}")
    snapshots.write_cover_csv(args.out, ests)
    p, extra = _provenance(args, n_points=len(pts))
    snapshots.write_sidecar(args.out, p, extra)
    print(f"wrote {args.out}")
    return 0


def _cmd_audit(args):
    fld = snapshots.read_field(args.field)
    vertex = _parse_vertex(args.vertex)
    cyl = ParabolicCylinder(vertex[0], vertex[1], args.rho, args.theta)
    sel = fld.values[cyl.node_mask(fld.grid)]
    k = args.k if args.k is not None else float(np.quantile(sel, args.k_quantile))
    profile = "space_only" if args.kind == "log" else "space_time"
    zeta = make_cutoff(fld.grid, cyl, args.sigma, profile=profile)
    if args.kind == "sub":
        rep = diagnostics.audit_energy_sub(fld, cyl, k, zeta)
    elif args.kind == "super":
        rep = diagnostics.audit_energy_super(fld, cyl, k, zeta)
    else:
        H = float(np.maximum(sel - k, 0.0).max())
        c = args.c if args.c is not None else min(1.0, H) / 8.0 if H > 0 else 0.5
        rep = diagnostics.audit_log_estimate(fld, cyl, k, c, zeta)
    for side, terms in (("lhs", rep.lhs_terms), ("rhs", rep.rhs_terms)):
        for name, val in terms.items():
            print(f"{side}.{name} = {val:.6e}")
    print(f"empirical_ratio = {rep.empirical_ratio:.6f}")
    doc = {"kind": args.kind, "k": k, "lhs_terms": rep.lhs_terms,
           "rhs_terms": rep.rhs_terms, "empirical_ratio": rep.empirical_ratio}
    snapshots.atomic_write_text(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    p, extra = _provenance(args)
    snapshots.write_sidecar(args.out, p, extra)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="logdiff",
                                 description="logarithmic diffusion laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="level-set iteration constants")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--mu-minus", dest="mu_minus", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.125)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("sample-explicit", help="sample the closed-form family")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--lambda", "--lam", dest="lam", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--eps-floor", dest="eps_floor", type=float, default=1e-12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample_explicit)

    p = sub.add_parser("simulate", help="implicit solve from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="indicator curve at a vertex")
    p.add_argument("--field", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--vertex", required=True, help="x1,x2,...@t")
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--n-radii", dest="n_radii", type=int, default=6)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--allow-low-p", dest="allow_low_p", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("osc", help="oscillation curve at a vertex")
    p.add_argument("--field", required=True)
    p.add_argument("--vertex", required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--n-radii", dest="n_radii", type=int, default=6)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_osc)

    p = sub.add_parser("lemma", help="lemma conformance sweep")
    p.add_argument("--field", required=True)
    p.add_argument("--which", type=int, choices=(41, 42), default=41)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--b", type=float, default=0.125)
    p.add_argument("--gammas", default="1,10,100")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lemma)

    p = sub.add_parser("hausdorff", help="covering premeasure of a point set")
    p.add_argument("--points-csv", dest="points_csv", default=None)
    p.add_argument("--field", default=None)
    p.add_argument("--p", type=float, default=2.75)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--r0", type=float, default=0.2)
    p.add_argument("--n-radii", dest="n_radii", type=int, default=3)
    p.add_argument("--factor", type=float, default=2.0)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--allow-low-p", dest="allow_low_p", action="store_true")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--deltas", required=True)
    p.add_argument("--strategy", choices=("grid", "greedy"), default="grid")
    p.add_argument("--points-out", dest="points_out", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_hausdorff)

    p = sub.add_parser("audit", help="energy/logarithmic estimate audit")
    p.add_argument("--field", required=True)
    p.add_argument("--kind", choices=("sub", "super", "log"), required=True)
    p.add_argument("--vertex", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--k-quantile", dest="k_quantile", type=float, default=0.5)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_audit)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NewtonDivergenceError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
