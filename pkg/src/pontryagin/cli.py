"""Command-line front end.

Every command prints one JSON document echoing the tool version, the seed
and all parameters. Exit codes: 0 success, 1 usage error, 2 numerical or
pipeline error (with an error document on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cobordism import descriptor, disjoint_union
from .collapse import (CollapseMap, build_product_neighborhood, export_grid_csv, roundtrip)
from .errors import ArityError, DSLSyntaxError, PontryaginError
from .homotopy import HomotopyPath, constant_homotopy, linear_homotopy, verify_invariance
from .jsonio import dumps, load_manifold, manifold_to_json, write_polylines_csv
from .mapdsl import (ZOO_VERSION, ChartMap, builtin, chart_to_sphere_distance, is_infinite,
                     parse_components, parse_map)
from .preimage import DEFAULT_SEEDS, DEFAULT_TOL, FixedLastCoordinate, pontryagin_manifold, trace_cobordism
from .transversality import (LevelSetSubmanifold, check_transverse, locate_intersections,
                             perturb_to_transverse)

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# argument helpers


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated vector: {text!r}") from exc


def _map_text(src: str) -> str:
    """Inline DSL, or the contents of a file (one component per line, '#' comments)."""
    path = Path(src)
    if not src.startswith("builtin:") and ("\n" not in src) and len(src) < 4096 and path.is_file():
        rows = [line.split("#", 1)[0].strip() for line in path.read_text().splitlines()]
        return "; ".join(r.strip().rstrip(";") for r in rows if r)
    return src


def resolve_map(src: str, m: int, support_radius: float | None = None) -> ChartMap:
    """A chart map from ``builtin:NAME``, a file path or inline DSL in ``x1..xm``."""
    if src.startswith("builtin:"):
        f = builtin(src)
        if f.domain_dim != m:
            raise UsageError(f"{src} is a map on R^{f.domain_dim}, expected R^{m}")
        return f
    text = _map_text(src)
    comps = parse_components(text, m)
    kw = {} if support_radius is None else {"support_radius": support_radius}
    return parse_map(text, m, len(comps), name=src, **kw)


def _pipeline_args(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="regularity threshold on σ_min")
    p.add_argument("--budget", type=int, default=DEFAULT_SEEDS, help="Newton starts per fiber")
    p.add_argument("--value-budget", type=int, default=64, help="regular-value draws")
    p.add_argument("--search-radius", type=float, default=1.0, help="ball for regular-value draws")
    p.add_argument("--step", type=float, default=0.02, help="continuation step")
    p.add_argument("--loop-samples", type=int, default=1024, help="resampled points per loop")


def _map_args(p: argparse.ArgumentParser):
    p.add_argument("--map", required=True, help="inline DSL, file path or builtin:NAME")
    p.add_argument("--support-radius", type=float, default=None,
                   help="support ball radius for parsed maps (default 10)")


def _pipeline_kwargs(a) -> dict:
    return dict(budget=a.budget, tol=a.tol, step=a.step, loop_samples=a.loop_samples,
                search_radius=a.search_radius, value_budget=a.value_budget)


def _out(a, doc: dict):
    text = dumps(doc)
    if getattr(a, "output", None):
        Path(a.output).write_text(text)
    else:
        sys.stdout.write(text)


def _envelope(a, command: str, **result) -> dict:
    params = {k: v for k, v in sorted(vars(a).items()) if k not in ("func", "command", "output")}
    return {"tool": "pontryagin", "version": __version__, "zoo_version": ZOO_VERSION,
            "command": command, "seed": getattr(a, "seed", None), "parameters": params, **result}


# ---------------------------------------------------------------------------
# commands


def cmd_preimage(a) -> dict:
    f = resolve_map(a.map, a.n + a.k, a.support_radius)
    if f.codomain_dim != a.n:
        raise UsageError(f"map has {f.codomain_dim} components, expected n = {a.n}")
    P = pontryagin_manifold(f, a.n, a.k, rng_seed=a.seed, y=a.y, **_pipeline_kwargs(a))
    if a.csv:
        write_polylines_csv(P, a.csv)
    return _envelope(a, "preimage", manifold=manifold_to_json(P), descriptor=descriptor(P).to_json())


def _boundary_profile(theta: CollapseMap, rng_seed: int) -> list[dict]:
    nb = theta.neighborhood
    out = []
    for frac in (0.5, 0.9, 0.99, 0.999):
        X = nb.shell_points(frac, 64, rng_seed)
        F, _, _ = theta.evaluate_batch(X)
        d = [chart_to_sphere_distance(None if is_infinite(v[None])[0] else v, None) for v in F]
        out.append({"fraction": frac, "max_distance_to_infinity": float(max(d))})
    return out


def cmd_collapse(a) -> dict:
    P = load_manifold(a.input)
    nb = build_product_neighborhood(P, rng_seed=a.seed, samples=a.cert_samples)
    theta = CollapseMap(nb)
    values = []
    for x in a.at or []:
        if len(x) != P.n + P.k:
            raise UsageError(f"--at needs {P.n + P.k} coordinates, got {len(x)}")
        F, _, _ = theta.evaluate_batch(np.asarray(x, dtype=float)[None, :])
        values.append({"x": x, "theta": None if is_infinite(F)[0] else F[0].tolist()})
    if a.grid_csv:
        export_grid_csv(theta, a.grid_csv, a.grid_lo, a.grid_hi, a.grid_res)
    report = {"epsilon": nb.epsilon, "inverse_strategy": nb.inverse_strategy, "k": P.k, "n": P.n,
              "support_radius": theta.support_radius, "values": values,
              "boundary_profile": _boundary_profile(theta, a.seed)}
    return _envelope(a, "collapse", report=report)


def cmd_roundtrip(a) -> dict:
    P = load_manifold(a.input)
    r = roundtrip(P, rng_seed=a.seed, budget=a.budget)
    return _envelope(a, "roundtrip", report=r.to_json())


def _submanifold(a, n: int) -> LevelSetSubmanifold:
    text = _map_text(a.S)
    c = len(parse_components(text, n))
    return LevelSetSubmanifold(n, c, parse_map(text, n, c), a.S)


def cmd_transverse(a) -> dict:
    f = resolve_map(a.map, len(a.at), a.support_radius)
    S = _submanifold(a, f.codomain_dim)
    rep = check_transverse(f, S, a.at, a.tol)
    return _envelope(a, "transverse", report=rep.to_json())


def cmd_perturb(a) -> dict:
    if a.m is None:
        raise UsageError("--m (domain dimension) is required for perturb")
    f = resolve_map(a.map, a.m, a.support_radius)
    S = _submanifold(a, f.codomain_dim)
    res = perturb_to_transverse(f, S, a.radius, rng_seed=a.seed, budget=a.budget,
                                tol=a.tol, seeds=a.seeds)
    unperturbed = [check_transverse(f, S, x, a.tol).to_json()
                   for x in locate_intersections(f, S, a.seed, a.seeds)]
    report = {"t": res.t.tolist(), "attempts": res.attempts,
              "reports": [r.to_json() for r in res.reports], "unperturbed": unperturbed}
    return _envelope(a, "perturb", report=report)


def cmd_descriptor(a) -> dict:
    Ps = [load_manifold(p) for p in a.input]
    P = Ps[0]
    for Q in Ps[1:]:
        P = disjoint_union(P, Q)
    return _envelope(a, "descriptor", descriptor=descriptor(P).to_json(),
                     parts=[descriptor(Q).value for Q in Ps])


def cmd_cobordism_trace(a) -> dict:
    H = resolve_map(a.map, a.n + 1, a.support_radius)
    if H.codomain_dim != a.n:
        raise UsageError(f"homotopy has {H.codomain_dim} components, expected n = {a.n}")
    tr = trace_cobordism(H, a.y, step=a.step, rng_seed=a.seed, budget=a.budget, tol=a.tol)
    if a.csv:
        lines = []
        for i, c in enumerate(tr.components):
            if i:
                lines.append("")
            lines.extend(",".join(repr(float(v)) for v in s) for s in c.samples)
        Path(a.csv).write_text("\n".join(lines) + ("\n" if lines else ""))
    c0, c1 = tr.signed_counts()
    report = {"y": tr.y.tolist(), "ends": [e.tolist() for e in tr.ends],
              "signs": [list(s) for s in tr.signs], "signed_counts": [c0, c1],
              "boundary_error": tr.boundary_error(),
              "components": [{"kind": c.kind, "samples": len(c.samples),
                              "endpoints": [list(e) for e in c.endpoints]} for c in tr.components]}
    return _envelope(a, "cobordism-trace", report=report)


def cmd_sweep(a) -> dict:
    m = a.n + a.k
    if a.map_to is not None:
        H = linear_homotopy(resolve_map(a.map, m, a.support_radius),
                            resolve_map(a.map_to, m, a.support_radius))
    elif a.constant:
        H = constant_homotopy(resolve_map(a.map, m, a.support_radius))
    else:
        Hm = resolve_map(a.map, m + 1, a.support_radius)
        H = HomotopyPath(Hm, FixedLastCoordinate(Hm, 0.0), FixedLastCoordinate(Hm, 1.0), "map")
    rep = verify_invariance(None, H, a.n, a.k, a.t_samples, rng_seed=a.seed, y=a.y,
                            **_pipeline_kwargs(a))
    return _envelope(a, "sweep", report=rep.to_json())


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pontryagin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preimage", help="framed preimage of a regular value")
    _map_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True, choices=(0, 1))
    p.add_argument("--y", type=_vector, default=None, help="regular value (drawn when omitted)")
    _pipeline_args(p)
    p.add_argument("--csv", default=None, help="write points or loop polylines as CSV")
    p.set_defaults(func=cmd_preimage)

    p = sub.add_parser("collapse", help="collapse map of a framed manifold")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cert-samples", type=int, default=10_000)
    p.add_argument("--at", type=_vector, action="append", default=None, help="evaluate θ here")
    p.add_argument("--grid-csv", default=None)
    p.add_argument("--grid-lo", type=float, default=-3.0)
    p.add_argument("--grid-hi", type=float, default=3.0)
    p.add_argument("--grid-res", type=int, default=41)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("roundtrip", help="collapse then re-extract the framed manifold")
    p.add_argument("--input", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=DEFAULT_SEEDS)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("transverse", help="transversality certificate at a point")
    _map_args(p)
    p.add_argument("--S", required=True, help="DSL for φ with S = φ^{-1}(0)")
    p.add_argument("--at", type=_vector, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=cmd_transverse)

    p = sub.add_parser("perturb", help="find a small shift making f transverse to S")
    _map_args(p)
    p.add_argument("--S", required=True)
    p.add_argument("--m", type=int, default=None, help="domain dimension of the map")
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--seeds", type=int, default=1024)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("descriptor", help="cobordism descriptor (of the disjoint union of inputs)")
    p.add_argument("--input", required=True, nargs="+")
    p.set_defaults(func=cmd_descriptor)

    p = sub.add_parser("cobordism-trace", help="trace H^{-1}(y) in R^n x [0, 1] (k = 0)")
    _map_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--y", type=_vector, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--budget", type=int, default=DEFAULT_SEEDS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_cobordism_trace)

    p = sub.add_parser("sweep", help="descriptors along a homotopy (time is the last variable)")
    _map_args(p)
    p.add_argument("--to", dest="map_to", default=None, help="linear homotopy to this map")
    p.add_argument("--constant", action="store_true", help="constant homotopy of --map")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True, choices=(0, 1))
    p.add_argument("--t-samples", type=_vector, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--y", type=_vector, default=None)
    _pipeline_args(p)
    p.set_defaults(func=cmd_sweep)

    for action in sub.choices.values():
        action.add_argument("-o", "--output", default=None, help="write JSON here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        doc = a.func(a)
    except (UsageError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        sys.stderr.write(dumps({"error": "usage-error", "message": str(exc), "command": a.command}))
        return EXIT_USAGE
    except (DSLSyntaxError, ArityError) as exc:
        sys.stderr.write(dumps({**exc.to_json(), "command": a.command}))
        return EXIT_USAGE
    except PontryaginError as exc:
        sys.stderr.write(dumps({**exc.to_json(), "command": a.command}))
        return EXIT_PIPELINE
    _out(a, doc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
