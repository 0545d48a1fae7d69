"""Command line runner.

Every record written carries the constants registry snapshot and the seed.
CSV outputs start with ``#`` comment lines holding both as JSON; JSON outputs
have ``registry`` and ``seed`` keys.  Floats are written with ``repr`` so
re-runs are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .constants import Registry, load_registry
from .errors import FlatDriftError, ValidationError

SEED_MASK = (1 << 64) - 1


# ---------------------------------------------------------------------------
# output helpers

def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, complex):
        return [float(v.real), float(v.imag)]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def emit_json(payload: dict, reg: Registry, seed, out: str | None) -> None:
    doc = {"registry": reg.snapshot(), "registry_source": reg.source, "seed": seed}
    doc.update(payload)
    _emit(json.dumps(_clean(doc), indent=1, sort_keys=True) + "\n", out)


def emit_csv(header, rows, reg: Registry, seed, out: str | None, footer=None) -> None:
    buf = io.StringIO()
    buf.write("# registry " + json.dumps(_clean(reg.snapshot()), sort_keys=True) + "\n")
    buf.write(f"# seed {seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    for line in footer or []:
        buf.write("# " + line + "\n")
    _emit(buf.getvalue(), out)


# ---------------------------------------------------------------------------
# surface inputs

def _read_surface(path: str):
    from .surface import from_json
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"surface file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"surface file {p}: {exc}") from None
    return from_json(obj)


def _proto(vals):
    from .tori import Prototype
    p = Prototype(*[int(v) for v in vals])
    if not p.is_valid():
        raise ValidationError(f"{tuple(vals)} is not a prototype (a, b, c, e)")
    return p


def _surface_arg(args):
    """--surface file, --proto a b c e, or a generic H(2) surface from --seed."""
    from .dynamics import generic_surface
    from .tori import prototype_float
    if getattr(args, "surface", None):
        return _read_surface(args.surface)
    if getattr(args, "proto", None):
        return prototype_float(_proto(args.proto))
    return generic_surface(args.seed)


def _add_surface_opts(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--surface", help="surface JSON file")
    g.add_argument("--proto", nargs=4, metavar=("A", "B", "C", "E"), help="prototype parameters")


def _map(fn, items, workers: int):
    """Ordered map; results are reduced in input order whatever the worker count."""
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# commands

def cmd_prototypes(args, reg):
    from .tori import component_count, enumerate_prototypes
    rows = []
    for D in range(5, args.dmax + 1):
        if D % 4 not in (0, 1):
            continue
        comp = component_count(D)
        for p in enumerate_prototypes(D):
            rows.append((D, p.a, p.b, p.c, p.e, comp))
    if args.format == "json":
        emit_json({"prototypes": [dict(zip(("D", "a", "b", "c", "e", "components"), r)) for r in rows]},
                  reg, args.seed, args.out)
    else:
        emit_csv(("D", "a", "b", "c", "e", "components"), rows, reg, args.seed, args.out)


def cmd_build_prototype(args, reg):
    from .surface import to_json
    from .tori import exact_area, prototype_surface
    p = _proto((args.a, args.b, args.c, args.e))
    ps = prototype_surface(p)
    doc = to_json(ps.surface)
    doc["prototype"] = {"a": p.a, "b": p.b, "c": p.c, "e": p.e, "D": p.D}
    doc["exact_area"] = str(exact_area(ps.triangles))
    emit_json(doc, reg, args.seed, args.out)


def cmd_validate(args, reg):
    from .surface import area, systole, validate
    s = _read_surface(args.file)
    validate(s)
    emit_json({"valid": True, "triangles": s.n_triangles, "zero_orders": list(s.zero_orders),
               "area": area(s), "systole": systole(s)}, reg, args.seed, args.out)


def cmd_flow(args, reg):
    from .dynamics import FlowState, flow, horocycle
    from .surface import to_json
    s = _surface_arg(args)
    st = FlowState.start(s)
    if args.r:
        st = horocycle(st, args.r, int(reg["flip_cap"]))
    st = flow(st, args.t, max_flips=int(reg["flip_cap"]))
    doc = to_json(st.surface)
    doc["time"] = args.t
    doc["cocycle"] = [[int(v) for v in row] for row in st.cocycle]
    emit_json(doc, reg, args.seed, args.out)


def _lyap_job(job):
    seed, T, renorm, flip_cap, proto = job
    from .dynamics import generic_surface, lyapunov_estimate
    from .tori import prototype_float
    base = prototype_float(_proto(proto)) if proto else None
    s = generic_surface(seed, base=base)
    return lyapunov_estimate(s, T, renorm, seed=seed, max_flips=flip_cap).tolist()


def cmd_lyapunov(args, reg):
    jobs = [((args.seed + i) & SEED_MASK, args.time, args.renorm, int(reg["flip_cap"]), args.proto)
            for i in range(args.samples)]
    res = _map(_lyap_job, jobs, args.workers)
    rows = []
    for (sd, *_), ex in zip(jobs, res):
        for k, v in enumerate(ex):
            rows.append((sd, k + 1, float(v)))
    second = [ex[1] for ex in res]
    emit_csv(("sample_seed", "index", "exponent"), rows, reg, args.seed, args.out,
             footer=[f"mean_second {float(np.mean(second))!r}",
                     f"target {reg['lambda_plus']!r} margin {reg['lambda_plus_margin']!r}"])


def cmd_nondiv(args, reg):
    from .dynamics import fit_power_law, systole_samples
    s = _surface_arg(args)
    eps = [float(e) for e in args.eps_grid.split(",")]
    sys_ = systole_samples(s, args.t, args.samples, args.seed, int(reg["flip_cap"]))
    fr = [float(np.mean(sys_ < e)) for e in eps]
    kappa, C, r2 = fit_power_law(eps, fr)
    eps0 = (0.01 / C) ** (1 / kappa) if kappa > 0 and C > 0 else float("nan")
    emit_csv(("eps", "fraction"), list(zip(eps, fr)), reg, args.seed, args.out,
             footer=[f"kappa {kappa!r}", f"C {C!r}", f"R2 {r2!r}", f"eps0 {eps0!r}"])


def _contraction_job(job):
    seed, gamma, grid, n_r = job
    from .dynamics import generic_surface
    from .margulis import contraction_probe, random_balance_vector
    from .tori import Prototype, prototype_float
    base = prototype_float(Prototype(0, 4, 1, 0) if seed % 2 else Prototype(0, 2, 1, 0))
    x = generic_surface(seed, base=base)
    w = random_balance_vector(x, seed=seed, size=0.1)
    r = contraction_probe(x, gamma, w, grid, n_r=n_r, seed=seed, stop_early=True)
    return r.t_grid, r.ratios, r.t4


def cmd_margulis(args, reg):
    from . import margulis as M
    k6 = float(reg["kappa6"])
    if args.mcmd == "contraction":
        grid = [float(v) for v in np.arange(0, args.t + 1e-9, args.dt)]
        rows, t4s = [], []
        if args.synthetic:
            r = M.synthetic_contraction_probe(args.gamma, args.n, grid)
            rows = [("synthetic", t, q) for t, q in zip(r.t_grid, r.ratios)]
            t4s = [r.t4]
        else:
            jobs = [((args.seed + i) & SEED_MASK, args.gamma, grid, args.n_r)
                    for i in range(args.samples)]
            for (sd, *_), (ts, qs, t4) in zip(jobs, _map(_contraction_job, jobs, args.workers)):
                rows += [(sd, t, q) for t, q in zip(ts, qs)]
                t4s.append(t4)
        emit_csv(("sample", "t", "ratio"), rows, reg, args.seed, args.out,
                 footer=["t4 " + json.dumps(t4s)])
        return
    x = _surface_arg(args)
    if args.mcmd == "scan":
        r = M.horocycle_transversal_scan(x, args.t, args.kappa, args.samples, args.gamma, k6,
                                         float(reg["C_F_cap"]))
        emit_json({"t": args.t, "kappa": args.kappa, "samples": args.samples,
                   "max_density": r.max_density, "coincidences": r.coincidences,
                   "transversal_counts": {str(k): len(v) for k, v in sorted(r.spines.items())},
                   "cap": r.cap, "cap_ok": r.cap_ok, "unknown": r.unknown}, reg, args.seed, args.out)
        return
    sk = M.toy_skeleton(x, args.size, seed=args.seed, kappa6=k6)
    if args.mcmd == "walk":
        walk = M.DriftWalk(args.gamma, args.m, args.k)
        r = M.random_walk_expectation(sk, walk, args.n_mc, args.seed)
        emit_json({"spine_size": sk.size, "k": r.k, "lhs": r.lhs, "base_integral": r.base_integral,
                   "decay": r.decay, "C_by_k": r.residual_C, "C": max(r.residual_C),
                   "leb_mass": r.mass, "n_mc": r.n_mc}, reg, args.seed, args.out)
        return
    # bootstrap
    try:
        trace = M.dimension_bootstrap(sk, args.gamma, args.eps, args.m, n_walk=args.n_walk,
                                      max_iter=args.max_iter, seed=args.seed)
    except FlatDriftError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None and args.out:
            emit_json({"trace": [r._asdict() for r in trace], "error": type(exc).__name__},
                      reg, args.seed, args.out)
        raise
    emit_json({"trace": [r._asdict() for r in trace]}, reg, args.seed, args.out)


def cmd_veech(args, reg):
    from .arithmetic import contains_hyperbolic, is_parabolic, veech_search
    x = _surface_arg(args)
    r = veech_search(x, args.tmax, budget=int(reg["budget_candidates"]))
    emit_json({"tmax": args.tmax, "elements": [g.tolist() for g in r.elements],
               "parabolic": [bool(is_parabolic(g)) for g in r.elements],
               "contains_hyperbolic": contains_hyperbolic(r.elements),
               "minus_identity": r.minus_identity, "candidates": r.candidates},
              reg, args.seed, args.out)


def _int_rows(text: str):
    try:
        return [[int(v) for v in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError:
        raise ValidationError(f"expected integer rows like '1,0,0;0,1,0', got {text!r}") from None


def cmd_height(args, reg):
    from .arithmetic import IntegralSubspace, height
    rows = _int_rows(args.vectors)
    V = IntegralSubspace.span(rows) if args.saturate else IntegralSubspace.from_basis(rows)
    emit_json({"basis": V.rows(), "dim": V.dim, "height": height(V)}, reg, args.seed, args.out)


def cmd_disc(args, reg):
    from .arithmetic import plane_discriminant, prototype_plane
    p = _proto(args.proto)
    s, plane = prototype_plane(p)
    emit_json({"prototype": list(p.as_tuple()), "D": p.D,
               "discriminant": plane_discriminant(s, plane)}, reg, args.seed, args.out)


def cmd_spherical(args, reg):
    from .arithmetic import spherical_closed_form, spherical_function
    ts = [float(v) for v in args.t.split(",")]
    rows = [(t, spherical_function(t), spherical_closed_form(t)) for t in ts]
    emit_csv(("t", "phi", "phi_closed_form"), rows, reg, args.seed, args.out)


def cmd_count(args, reg):
    from .arithmetic import GroupBallSpec, count_group_ball
    p = Path(args.gens)
    if not p.is_file():
        raise ValidationError(f"generator file not found: {p}")
    try:
        gens = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"generator file: {exc}") from None
    G = [np.asarray(g, float) for g in gens]
    if not G or any(g.shape != (2, 2) or abs(np.linalg.det(g) - 1) > 1e-9 for g in G):
        raise ValidationError("generators must be 2x2 matrices of determinant one")
    n = count_group_ball(GroupBallSpec(tuple(G), args.T, args.sep), budget=int(reg["word_budget"]))
    emit_json({"T": args.T, "separation": args.sep, "count": n}, reg, args.seed, args.out)


def cmd_near_returns(args, reg):
    from .arithmetic import near_return_scan
    x = _surface_arg(args)
    pairs, rep = near_return_scan(x, args.T, args.N, args.grid)
    emit_json({"report": rep, "pairs": [{"i": p.i, "j": p.j, "g_i": p.g_i, "g_j": p.g_j,
                                         "distance": p.distance, "separation": p.separation}
                                        for p in pairs]}, reg, args.seed, args.out)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="flatdrift", description="Genus-two translation surface experiments.")
    top.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--config", help="registry JSON (overrides FLATDRIFT_CONFIG)")
    common.add_argument("--workers", type=int, default=1)
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("prototypes", parents=[common])
    p.add_argument("--dmax", type=int, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=cmd_prototypes)

    p = sub.add_parser("build-prototype", parents=[common])
    for k in "abce":
        p.add_argument(k, type=int)
    p.set_defaults(fn=cmd_build_prototype)

    p = sub.add_parser("validate", parents=[common])
    p.add_argument("file")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("flow", parents=[common])
    _add_surface_opts(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--r", type=float, default=0.0, help="horocycle shift applied first")
    p.set_defaults(fn=cmd_flow)

    p = sub.add_parser("lyapunov", parents=[common])
    p.add_argument("--time", type=float, default=2000.0)
    p.add_argument("--renorm", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--proto", nargs=4, metavar=("A", "B", "C", "E"), help="base prototype to perturb")
    p.set_defaults(fn=cmd_lyapunov)

    p = sub.add_parser("nondiv", parents=[common])
    _add_surface_opts(p)
    p.add_argument("--t", type=float, default=6.0)
    p.add_argument("--eps-grid", default="0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16,0.18,0.2")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(fn=cmd_nondiv)

    p = sub.add_parser("margulis")
    msub = p.add_subparsers(dest="mcmd", required=True)
    q = msub.add_parser("contraction", parents=[common])
    q.add_argument("--gamma", type=float, default=0.9)
    q.add_argument("--t", type=float, default=25.0, help="largest grid time")
    q.add_argument("--dt", type=float, default=1.0)
    q.add_argument("--samples", type=int, default=10)
    q.add_argument("--n-r", type=int, default=40)
    q.add_argument("--synthetic", action="store_true")
    q.add_argument("--n", type=int, default=10_000, help="synthetic family size")
    q = msub.add_parser("walk", parents=[common])
    _add_surface_opts(q)
    q.add_argument("--gamma", type=float, default=0.9)
    q.add_argument("--k", type=int, default=4)
    q.add_argument("--m", type=float, default=1.0)
    q.add_argument("--size", type=int, default=20)
    q.add_argument("--n-mc", type=int, default=20)
    q = msub.add_parser("scan", parents=[common])
    _add_surface_opts(q)
    q.add_argument("--gamma", type=float, default=0.9)
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--kappa", type=float, default=0.5)
    q.add_argument("--samples", type=int, default=200)
    q = msub.add_parser("bootstrap", parents=[common])
    _add_surface_opts(q)
    q.add_argument("--gamma", type=float, default=0.9)
    q.add_argument("--eps", type=float, default=0.1)
    q.add_argument("--m", type=float, default=1.0)
    q.add_argument("--size", type=int, default=12)
    q.add_argument("--n-walk", type=int, default=4)
    q.add_argument("--max-iter", type=int, default=4)
    p.set_defaults(fn=cmd_margulis)

    p = sub.add_parser("veech", parents=[common])
    _add_surface_opts(p)
    p.add_argument("--tmax", type=float, default=5.0)
    p.set_defaults(fn=cmd_veech)

    p = sub.add_parser("height", parents=[common])
    p.add_argument("--vectors", required=True, help="integer rows, e.g. '1,0,0;0,1,0'")
    p.add_argument("--saturate", action="store_true", help="saturate the span first")
    p.set_defaults(fn=cmd_height)

    p = sub.add_parser("disc", parents=[common])
    p.add_argument("--proto", nargs=4, metavar=("A", "B", "C", "E"), required=True)
    p.set_defaults(fn=cmd_disc)

    p = sub.add_parser("spherical", parents=[common])
    p.add_argument("--t", default="0,0.5,1,2,4", help="comma separated times")
    p.set_defaults(fn=cmd_spherical)

    p = sub.add_parser("count", parents=[common])
    p.add_argument("--gens", required=True, help="JSON list of 2x2 matrices")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--sep", type=float, default=1.0)
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("near-returns", parents=[common])
    _add_surface_opts(p)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--N", type=float, default=2.0)
    p.add_argument("--grid", type=int, default=5)
    p.set_defaults(fn=cmd_near_returns)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed < 0 or args.seed > SEED_MASK:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if args.workers < 1:
            raise ValidationError("workers must be >= 1")
        reg = load_registry(args.config)
        args.fn(args, reg)
    except FlatDriftError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
