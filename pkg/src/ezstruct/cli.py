"""Command-line entry point.

Exit codes: 0 pass, 1 usage or parse error, 2 certification failure,
3 resource guard.  Guards can be raised with EZSTRUCT_MAX_ELEMENTS and
EZSTRUCT_MAX_STATES.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import CertificationError, EzError, InvalidInputError, ResourceGuardError

EXIT_OK, EXIT_USAGE, EXIT_CERT, EXIT_GUARD = 0, 1, 2, 3
CAVEAT = "net-certified, bounded-verification result; not a proof beyond the stated scale"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _guard(name, default):
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"{name} must be an integer") from exc


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


def _emit(doc, path):
    text = _dump(doc)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _provenance(args):
    from .nullity_lab import config_hash
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return {"version": __version__, "config_hash": config_hash(cfg), "caveat": CAVEAT}


def _load_graph(args):
    from .graph_of_groups import GraphOfGroups
    if args.bs:
        return GraphOfGroups.baumslag_solitar(*args.bs)
    if not args.input:
        raise InvalidInputError("give --input FILE or --bs M N")
    try:
        text = Path(args.input).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {args.input}: {exc}") from exc
    return GraphOfGroups.from_json(text)


def parse_word(g, text):
    """Product of generator names separated by '*', e.g. ``a*t^-1``; '1' is the identity."""
    w = g.identity()
    text = text.strip()
    if text in ("", "1"):
        return w
    gens = g.generators
    for tok in text.split("*"):
        tok = tok.strip()
        if tok not in gens:
            raise InvalidInputError(f"unknown generator {tok!r}; known: {sorted(gens)}")
        w = w.multiply(gens[tok])
    return w


def _counterexample(args, doc):
    path = getattr(args, "report", None)
    target = f"{path}.counterexample.json" if path else None
    if target:
        Path(target).write_text(_dump(doc))
    else:
        sys.stderr.write(_dump(doc))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_build_tree(args):
    from .bass_serre import tree_ball_document
    g = _load_graph(args)
    doc = tree_ball_document(g, args.radius, _guard("EZSTRUCT_MAX_ELEMENTS", 1_000_000))
    doc["provenance"] = _provenance(args)
    doc["certified_at_scale"] = {"radius": args.radius}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_verify_relators(args):
    from .bass_serre import verify_relators
    g = _load_graph(args)
    rep = verify_relators(g)
    doc = rep.to_dict()
    doc["provenance"] = _provenance(args)
    doc["certified_at_scale"] = {"exact": True, "relators": len(rep.results)}
    _emit(doc, args.report)
    if not rep.passed:
        _counterexample(args, {"failures": doc["relators"]})
        return EXIT_CERT
    return EXIT_OK


def cmd_nullity(args):
    from .nullity_lab import run_nullity, stats_csv
    g = _load_graph(args)
    side = None if args.cube_side is None else Fraction(args.cube_side)
    report, stats = run_nullity(g, args.wordlen, args.compress, side, args.r0, args.seed,
                                args.phi, _guard("EZSTRUCT_MAX_ELEMENTS", 2_000_000))
    if args.csv:
        Path(args.csv).write_text(stats_csv(stats))
    _emit(report, args.report)
    if not report["certified_at_scale"]["certified"]:
        _counterexample(args, report["certificate"]["counterexample"])
        return EXIT_CERT
    return EXIT_OK


def _slope(text):
    return math.inf if text.strip() in ("inf", "infinity") else float(Fraction(text.strip()))


def cmd_boundary(args):
    from .bass_serre import BassSerreTree
    from .compression import hhat, parse_phi
    from .nullity_lab import build_domain, fit_psi, slope_limit, translate_sweep
    g = _load_graph(args)
    dom = build_domain(g)
    fit = fit_psi(translate_sweep(g, dom, args.wordlen), graph=g)
    cmap = hhat(fit.pair, parse_phi(args.phi), log_precomposed=True)
    tree = BassSerreTree(g)
    xi = tree.rays(args.depth)[0]
    eta = [1.0] + [0.0] * (g.rank - 1)
    rows, ok = [], True
    for word in args.words:
        w = parse_word(g, word)
        for m in (_slope(s) for s in args.slopes.split(",")):
            r = slope_limit(g, w, xi, eta, m, cmap, args.t_max)
            passed = r.error <= args.tol
            ok &= passed
            rows.append({"word": word, "m": "inf" if m == math.inf else m,
                         "ratio": r.ratio if math.isfinite(r.ratio) else "inf",
                         "inverse_ratio": r.inverse_ratio if math.isfinite(r.inverse_ratio)
                         else "inf",
                         "error": r.error, "passed": passed,
                         "tree_endpoint": [str(v) for v in r.tree_endpoint],
                         "fiber_endpoint": list(r.fiber_endpoint)})
    doc = {"results": rows, "psi": fit.pair.to_dict(), "provenance": _provenance(args),
           "certified_at_scale": {"depth": args.depth, "t_max": args.t_max, "tol": args.tol,
                                  "certified": ok}}
    _emit(doc, args.report)
    if not ok:
        _counterexample(args, [r for r in rows if not r["passed"]])
        return EXIT_CERT
    return EXIT_OK


def cmd_cover(args):
    from .metric_models import (
        boundary_net, cover_constants, space_from_json, standard_cover, verify_cover_constants,
    )
    try:
        text = Path(args.space).read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {args.space}: {exc}") from exc
    space = space_from_json(text)
    coarse = boundary_net(space, args.resolution, args.depth)
    cover = standard_cover(space, coarse, args.radius, args.eps)
    consts = cover_constants(space, cover, coarse, args.margin)
    fine = boundary_net(space, 2 * args.resolution, None if args.depth is None else 2 * args.depth)
    bad = verify_cover_constants(space, cover, consts, fine)
    doc = {"radius_R": consts.radius_R, "delta": consts.delta, "delta_prime": consts.delta_prime,
           "net_size": consts.net_size, "refined_net_size": len(fine), "uncovered": bad,
           "provenance": _provenance(args),
           "certified_at_scale": {"resolution": args.resolution, "refined": 2 * args.resolution,
                                  "certified": not bad}}
    _emit(doc, args.report)
    if bad:
        _counterexample(args, bad)
        return EXIT_CERT
    return EXIT_OK


def cmd_witness(args):
    from .compression import parse_phi
    from .obstructions import t4_components, t4_contradiction_index, t4_formula
    if args.kind != "t4":
        raise InvalidInputError(f"unknown witness {args.kind!r}")
    idx = t4_contradiction_index(parse_phi(args.phi), args.c)
    counts = {str(r): {"enumerated": t4_components(r), "formula": t4_formula(r)}
              for r in range(1, args.r_max + 1)}
    ok = all(v["enumerated"] == v["formula"] for v in counts.values())
    doc = {"index": idx.n, "components_outside_n_ball": idx.left,
           "components_outside_phi_ball": idx.right, "phi_ball_radius": idx.radius,
           "components": counts, "provenance": _provenance(args),
           "certified_at_scale": {"r_max": args.r_max, "certified": ok},
           "note": "quantitative component-count formalisation chosen by this toolkit"}
    _emit(doc, args.report)
    return EXIT_OK if ok else EXIT_CERT


def cmd_growth(args):
    from .obstructions import RACG, racg_growth
    if args.racg == "pentagon":
        g = RACG.cycle(5)
    else:
        try:
            g = RACG.from_json(Path(args.racg).read_text())
        except OSError as exc:
            raise InvalidInputError(f"cannot read {args.racg}: {exc}") from exc
    table = racg_growth(g, args.n, _guard("EZSTRUCT_MAX_STATES", 5_000_000))
    _emit({"beta": table.beta, "spheres": table.spheres(), "provenance": _provenance(args),
           "certified_at_scale": {"n": args.n}}, args.report)
    return EXIT_OK


def cmd_davis(args):
    from .compression import parse_phi
    from .obstructions import davis_index
    res = davis_index(args.k, args.eps, args.r, args.s, parse_phi(args.phi))
    _emit({"n": res.n, "phi_value": res.phi_value, "half_inner_radius": res.half_inner_radius,
           "provenance": _provenance(args), "certified_at_scale": {"n": res.n}}, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="ezstruct", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def graph_opts(sp):
        sp.add_argument("--input", help="graph-of-groups JSON")
        sp.add_argument("--bs", nargs=2, type=int, metavar=("M", "N"),
                        help="use BS(M, N) instead of a file")

    sp = sub.add_parser("build-tree", help="emit a Bass-Serre tree ball as JSON")
    graph_opts(sp)
    sp.add_argument("--radius", type=int, default=3)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build_tree)

    sp = sub.add_parser("verify-relators", help="exact relator check of the fiber action")
    graph_opts(sp)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_verify_relators)

    sp = sub.add_parser("nullity", help="translate sweep, fit, compress and certify")
    graph_opts(sp)
    sp.add_argument("--wordlen", type=int, default=8)
    sp.add_argument("--compress", default="log", help="none, log, loglog or pow:p")
    sp.add_argument("--phi", default="log", help="modulus used when --compress none")
    sp.add_argument("--cube-side")
    sp.add_argument("--r0", type=float, default=5.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_nullity)

    sp = sub.add_parser("boundary", help="slope-limit checks of the boundary extension")
    graph_opts(sp)
    sp.add_argument("--words", nargs="+", default=["t", "a*t", "t^-1"])
    sp.add_argument("--slopes", default="0,1/2,1,2,inf")
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--t-max", type=float, default=1e5)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--wordlen", type=int, default=8, help="sweep length for fitting psi")
    sp.add_argument("--phi", default="log")
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_boundary)

    sp = sub.add_parser("cover", help="cover constants and their refined-net check")
    sp.add_argument("--space", required=True, help="space JSON")
    sp.add_argument("--resolution", type=int, default=8)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--radius", type=float, default=2.0)
    sp.add_argument("--eps", type=float, default=1.0)
    sp.add_argument("--margin", type=float, default=1.0)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_cover)

    sp = sub.add_parser("witness", help="T4 component-count witness")
    sp.add_argument("kind", choices=["t4"])
    sp.add_argument("--phi", default="log")
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--r-max", type=int, default=7)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_witness)

    sp = sub.add_parser("growth", help="growth function of a right-angled Coxeter group")
    sp.add_argument("--racg", required=True, help="RACG JSON or 'pentagon'")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_growth)

    sp = sub.add_parser("davis", help="index of the Davis-manifold contradiction")
    sp.add_argument("--k", type=float, default=1.0)
    sp.add_argument("--eps", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=1.0)
    sp.add_argument("--s", type=int, default=0)
    sp.add_argument("--phi", default="log")
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_davis)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceGuardError as exc:
        sys.stderr.write(f"resource guard: {exc}\n")
        return EXIT_GUARD
    except CertificationError as exc:
        sys.stderr.write(f"certification failed: {exc}\n")
        return EXIT_CERT
    except (InvalidInputError, EzError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
