"""Command-line entry point.

Exit codes: 0 when all requested checks PASS or WARN, 1 when any check FAILs,
2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import sys

from . import capacity, hyperbolic, mesh as meshmod, spectral, verify
from .errors import ConfigError, MeshFormatError, ParameterError, SteklovError


def _parse_geometry_spec(text: str) -> tuple[str, dict]:
    """Parse 'kind:key=value,key=value' geometry descriptions."""
    kind, _, rest = text.partition(":")
    params: dict = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ParameterError(f"malformed geometry parameter {item!r}")
            try:
                params[key.strip()] = int(val)
            except ValueError:
                try:
                    params[key.strip()] = float(val)
                except ValueError:
                    params[key.strip()] = val.strip()
    return kind.strip(), params


def _parse_arcs(text: str) -> list[meshmod.BoundaryArc]:
    """Parse 'loop:start:end[,loop:start:end...]' arc lists."""
    arcs = []
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 3:
            raise ParameterError(f"malformed arc {item!r}; expected loop:start:end")
        arcs.append(meshmod.BoundaryArc(int(parts[0]), int(parts[1]), int(parts[2])))
    return arcs


def _cmd_mesh(args) -> int:
    kind, params = _parse_geometry_spec(args.spec)
    m = meshmod.generate(kind, **params)
    diag = meshmod.validate(m)
    if not diag.passed:
        print(f"generated mesh invalid: {diag.summary()}", file=sys.stderr)
        return 1
    meshmod.save(m, args.output)
    print(f"{m.name}: {m.n_vertices} vertices, {m.n_triangles} triangles -> {args.output}")
    return 0


def _cmd_steklov(args) -> int:
    m = meshmod.load(args.mesh)
    res = spectral.steklov_spectrum(m, args.k)
    for i, (ev, r) in enumerate(zip(res.eigenvalues, res.residuals)):
        print(f"sigma_{i} = {ev:.12g}   (residual {r:.3e})")
    if args.csv:
        spectral.save_spectrum_csv(args.csv, res)
    return 0


def _cmd_capacity(args) -> int:
    m = meshmod.load(args.mesh)
    averts: set[int] = set()
    bverts: set[int] = set()
    for arc in _parse_arcs(args.a):
        averts.update(m.arc_vertices(arc))
    for arc in _parse_arcs(args.b):
        bverts.update(m.arc_vertices(arc))
    res = capacity.capacity(m, averts, bverts)
    print(f"capacity = {res.value:.12g}")
    print(f"flux     = {res.flux_value:.12g}   (gap {res.flux_gap:.3e})")
    return 0


def _cmd_gamma(args) -> int:
    m = meshmod.load(args.mesh)
    mode = capacity.MIXED if args.mixed else capacity.COMPACT
    est = capacity.gamma_search(m, mode=mode, coarse_step=args.step)
    print(f"gamma = {est.value:.12g}")
    for arc in est.witness_a:
        print(f"witness A: loop {arc.loop}, vertices {arc.start}..{arc.end}")
    if isinstance(est.witness_b, str):
        print(f"witness B: {est.witness_b} boundary")
    else:
        for arc in est.witness_b:
            print(f"witness B: loop {arc.loop}, vertices {arc.start}..{arc.end}")
    print(f"candidates evaluated: {est.candidates_evaluated}")
    if args.json:
        capacity.save_gamma_json(args.json, est)
    return 0


def _cmd_hyperbolic(args) -> int:
    if args.op == "cn":
        print(f"{hyperbolic.c_n(args.n):.12g}")
        return 0
    if args.op == "collar":
        cb = hyperbolic.collar_bound(args.l0, rho1=args.rho1, n_boundaries=args.n_boundaries)
        print(f"rho0 = {cb.rho0:.12g}")
        print(f"rho1 = {cb.rho1:.12g}")
        print(f"energy(Phi) = {cb.e_phi:.12g}")
        print(f"energy(Psi) bound = {cb.e_psi_bound:.12g}")
        print(f"bound (1 boundary)   = {cb.bound_case1:.12g}")
        print(f"bound (>=2 boundaries) = {cb.bound_case2:.12g}")
        if args.json:
            hyperbolic.save_collar_json(args.json, cb)
        return 0
    if args.op == "halfplane":
        l_values = [float(x) for x in args.l_values.split(",")]
        rows = hyperbolic.halfplane_bottom_estimate(l_values, args.dx, args.x_max)
        for L, r in rows:
            print(f"L = {L:8.3f}   rayleigh = {r:.12g}")
        if args.csv:
            hyperbolic.save_rayleigh_csv(args.csv, rows)
        return 0
    raise ParameterError(f"unknown hyperbolic op {args.op!r}")


def _cmd_verify(args) -> int:
    scenario = verify.load_scenario(args.config)
    report = verify.run_scenario(scenario)
    if args.output:
        report.save_json(args.output)
        verify.save_tables_csv(report, args.output)
    for rec in report.records:
        line = f"[{rec.status}] {rec.name}"
        if rec.message:
            line += f": {rec.message}"
        print(line)
    return 0 if report.worst_status != verify.FAIL else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steklov",
        description="Steklov spectra, capacities, and isocapacitary bounds "
        "on triangulated surfaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate a mesh and write it to JSON")
    p.add_argument("spec", help="geometry, e.g. disk:n_radial=8,n_angular=32")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_mesh)

    p = sub.add_parser("steklov", help="Steklov spectrum of a mesh file")
    p.add_argument("mesh")
    p.add_argument("-k", type=int, default=6, help="number of nonzero eigenvalues")
    p.add_argument("--csv", help="write (index, eigenvalue, residual) rows")
    p.set_defaults(func=_cmd_steklov)

    p = sub.add_parser("capacity", help="capacity between boundary arc sets")
    p.add_argument("mesh")
    p.add_argument("--a", required=True, help="arcs loop:start:end[,...] held at 1")
    p.add_argument("--b", required=True, help="arcs loop:start:end[,...] held at 0")
    p.set_defaults(func=_cmd_capacity)

    p = sub.add_parser("gamma", help="isocapacitary constant search")
    p.add_argument("mesh")
    p.add_argument("--mixed", action="store_true", help="F vs INTERIOR boundary")
    p.add_argument("--step", type=int, default=4, help="coarse endpoint grid step")
    p.add_argument("--json", help="write the estimate as JSON")
    p.set_defaults(func=_cmd_gamma)

    p = sub.add_parser("hyperbolic", help="closed-form hyperbolic computations")
    hsub = p.add_subparsers(dest="op", required=True)
    q = hsub.add_parser("cn", help="reciprocal sech-power integral")
    q.add_argument("n", type=int)
    q = hsub.add_parser("collar", help="collar eigenvalue bounds")
    q.add_argument("l0", type=float)
    q.add_argument("--rho1", type=float, default=None)
    q.add_argument("--n-boundaries", type=int, default=1)
    q.add_argument("--json", help="write the bound record as JSON")
    q = hsub.add_parser("halfplane", help="plateau family Rayleigh quotients")
    q.add_argument("--l-values", default="5,10,25,50")
    q.add_argument("--dx", type=float, default=0.05)
    q.add_argument("--x-max", type=float, default=60.0)
    q.add_argument("--csv", help="write the (L, rayleigh) table as CSV")
    p.set_defaults(func=_cmd_hyperbolic)

    p = sub.add_parser("verify", help="run a scenario config, emit a report")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="report JSON path")
    p.set_defaults(func=_cmd_verify)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ConfigError, ParameterError, MeshFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SteklovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
