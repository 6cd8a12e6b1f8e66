"""Command-line front end.

Every command prints key=value records followed by a ``[summary]`` block
and exits 0 (ok/true), 1 (violations/false/obstruction) or 2 (usage or
parse error).  ``--out`` also writes the report as JSON.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import atlas as at
from . import counterexamples as cx
from . import numeric as nm
from .atlas_io import parse_atlas, relations_from_dict
from .errors import OrbiliftError, ParseError
from .expr import Ball
from .group import FiniteMatrixGroup, conjugate_in_gl, is_reflection
from .lifting import circle_loop, describe_hom, describe_matrix, monodromy, radial_lift_extension

VERBS = ("validate", "structure-group", "compare", "lift", "monodromy", "demo")
LIFT_MAPS = ("example2", "halfangle")
EXAMPLE2_RADII = (0.02, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 1.0)
HALFANGLE_LOOP = 0.75
EXAMPLE2_LOOP = cx.band_midpoint(3)


class UsageError(Exception):
    pass


@dataclass
class Report:
    records: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    status: int = 0

    def put(self, key: str, value) -> None:
        self.records.append((key, _text(value)))

    def sum(self, key: str, value) -> None:
        self.summary.append((key, _text(value)))

    def render(self) -> str:
        lines = [f"{k}={v}" for k, v in self.records]
        lines.append("[summary]")
        lines += [f"{k}={v}" for k, v in self.summary]
        lines.append(f"status={self.status}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"records": [list(r) for r in self.records],
                           "summary": dict(self.summary), "status": self.status}, indent=2) + "\n"


def _text(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v).replace("\n", " ")


# ---------------------------------------------------------------- inputs


def load_atlas(name: str, tol: float) -> at.OrbifoldPresentation:
    """Atlas file if ``name`` is an existing path, else a named fixture."""
    if os.path.isfile(name):
        return parse_atlas(name, tol)
    return cx.atlas_fixture(name)


def parse_point(text: str, dim: int):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != dim:
        raise UsageError(f"--point needs {dim} comma-separated numbers")
    exact = all(nm._is_rational(p) for p in parts)
    try:
        return np.array([nm.parse_scalar(p, exact) for p in parts],
                        dtype=object if exact else float)
    except ValueError:
        raise UsageError(f"--point: cannot read {text!r}") from None


def describe_group(G: FiniteMatrixGroup) -> str:
    n = G.order
    if n == 1:
        return "trivial"
    orders = [G.element_order(i) for i in range(n)]
    if max(orders) == n:
        return f"cyclic of order {n}"
    abelian = bool(np.all(G.table == G.table.T))
    if not abelian and n % 2 == 0 and max(orders) == n // 2 and \
            sum(1 for o in orders if o == 2) > n // 2 - 1:
        return f"dihedral of order {n}"
    return f"{'abelian' if abelian else 'nonabelian'} of order {n}"


# ---------------------------------------------------------------- commands


def _validation(rep: Report, P: at.OrbifoldPresentation, args, mode: str) -> bool:
    res = at.validate(P, args.samples, args.seed, args.grid, args.word_bound, mode)
    for k, line in enumerate(res.lines(), 1):
        rep.put(f"violation.{k}", line)
    return res.ok


def cmd_validate(args, rep: Report) -> None:
    P = load_atlas(args.inputs[0], args.tolerance)
    mode = args.mode or P.mode
    rep.put("atlas", P.name or args.inputs[0])
    rep.put("mode", mode)
    rep.put("charts", ",".join(P.ids))
    ok = _validation(rep, P, args, mode)
    rep.sum("verdict", "valid" if ok else "invalid")
    rep.sum("violations", sum(1 for k, _ in rep.records if k.startswith("violation.")))
    rep.status = 0 if ok else 1


def cmd_structure_group(args, rep: Report) -> None:
    P = load_atlas(args.inputs[0], args.tolerance)
    if args.chart is None or args.point is None:
        raise UsageError("structure-group needs --chart and --point")
    c = P.chart(args.chart)
    u = parse_point(args.point, c.dim)
    G = at.structure_group_at(P, c.id, u)
    rep.put("atlas", P.name or args.inputs[0])
    rep.put("chart", c.id)
    rep.put("point", at.point_text(u))
    rep.put("order", G.order)
    rep.put("group", describe_group(G))
    rep.put("reflection_free", not any(is_reflection(g, G.mode) for g in G.elements[1:]))
    rep.put("elements", "; ".join(at.matrix_text(g) for g in G.elements))
    rep.put("note", "canonical up to conjugation in GL(n)")
    agree = True
    X = np.array([nm.to_float(u)])
    for other in P.ids:
        if other == c.id:
            continue
        Y, ok = at.relation_map(P, c.id, X, other, args.word_bound)
        if not ok[0]:
            continue
        H = at.structure_group_at(P, other, Y[0])
        conj = G.order == H.order and conjugate_in_gl(G, H) is not None
        agree &= conj
        rep.put(f"identified.{other}", f"({at.point_text(Y[0])}) order {H.order} "
                                       f"conjugate={_text(conj)}")
    rep.sum("structure_group", describe_group(G))
    rep.sum("consistent", agree)
    rep.status = 0 if agree else 1


def _cross_relations(args, P, Q) -> list:
    if args.identifications:
        try:
            with open(args.identifications) as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ParseError(exc.strerror or str(exc), field=args.identifications) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, field=f"line {exc.lineno}, column {exc.colno}") from None
        return relations_from_dict(d, P, Q)
    rels = cx.fixture_cross_relations(P, Q)
    if rels is None:
        raise UsageError("no known relations between these atlases; pass --identifications")
    return rels


def cmd_compare(args, rep: Report) -> None:
    if len(args.inputs) != 2:
        raise UsageError("compare needs two atlases")
    P = load_atlas(args.inputs[0], args.tolerance)
    Q = load_atlas(args.inputs[1], args.tolerance)
    rels = _cross_relations(args, P, Q)
    rep.put("left", P.name or args.inputs[0])
    rep.put("right", Q.name or args.inputs[1])
    rep.put("relations", len(rels))
    res = at.compare_atlases(P, Q, rels, args.samples, args.seed, args.word_bound)
    for k, line in enumerate(res.lines(), 1):
        rep.put(f"violation.{k}", line)
    rep.sum("equivalent", res.ok)
    rep.status = 0 if res.ok else 1


def _lift_report(name: str, radius: float):
    if name == "example2":
        return cx.example2_analysis(radius)
    if name == "halfangle":
        return radial_lift_extension(cx.halfangle_map(region=Ball(np.zeros(2), radius)))
    raise UsageError(f"lift takes one of {', '.join(LIFT_MAPS)}")


def cmd_lift(args, rep: Report) -> None:
    name = args.inputs[0]
    radius = 1.0 if args.radius is None else args.radius
    res = _lift_report(name, radius)
    rep.put("map", name)
    rep.put("radius", radius)
    for k, p in enumerate(res.pieces, 1):
        rep.put(f"piece.{k}", f"r=[{p.r_min:.4g},{p.r_max:.4g}] band={p.band} "
                              f"nodes={p.nodes} hom={describe_hom(p.homomorphism)}")
    rep.sum("verdict", res.summary())
    rep.status = 0 if res.status == "Lifted" else 1


def cmd_monodromy(args, rep: Report) -> None:
    name = args.inputs[0]
    if name == "halfangle":
        f, r = cx.halfangle_map(), HALFANGLE_LOOP
    elif name == "example2":
        f, r = cx.example2_quotient_map(), EXAMPLE2_LOOP
    else:
        raise UsageError(f"monodromy takes one of {', '.join(LIFT_MAPS)}")
    r = r if args.radius is None else args.radius
    loop = circle_loop(r)
    g = monodromy(f, loop, f.rep_batch(loop[:1])[0])
    trivial = np.allclose(nm.to_float(g), np.eye(len(g)))
    rep.put("map", name)
    rep.put("loop_radius", r)
    rep.sum("monodromy", describe_matrix(g))
    rep.status = 0 if trivial else 1


# ---------------------------------------------------------------- demos


def _demo_example1(rep: Report) -> bool:
    ok = True
    for a, b, n in cx.example1_pairs():
        fa, fb = cx.example1_map(a), cx.example1_map(b)
        near = cx.constant_sign_relating(fa, fb, 1.0 / n)
        fifth = cx.constant_sign_relating(fa, fb, 0.2)
        rep.put(f"example1.flip{n}", f"constant sign on (0,1/{n}]: {near or 'none'}; "
                                     f"on (0,1/5]: {fifth or 'none'}")
        ok &= near is None and fifth is None
    return ok


def _demo_example2(rep: Report, radii) -> bool:
    ok = True
    for r in radii:
        res = cx.example2_analysis(r)
        rep.put(f"example2.r{r:g}", res.summary())
        ok &= res.status == "NonLiftable"
    return ok


def _demo_halfangle(rep: Report) -> bool:
    f = cx.halfangle_map()
    loop = circle_loop(HALFANGLE_LOOP)
    g = monodromy(f, loop, f.rep_batch(loop[:1])[0])
    res = radial_lift_extension(f)
    rep.put("halfangle.monodromy", describe_matrix(g))
    rep.put("halfangle.lift", res.summary())
    return describe_matrix(g) == "-I" and res.status == "NonLiftable"


def _demo_atlas(rep: Report, name: str, mode: str | None, args) -> bool:
    P = cx.atlas_fixture(name)
    mode = mode or P.mode
    res = at.validate(P, args.samples, args.seed, args.grid, args.word_bound, mode)
    key = f"{name}.{mode}"
    rep.put(key, "valid" if res.ok else "invalid")
    for k, line in enumerate(res.lines(), 1):
        rep.put(f"{key}.violation.{k}", line)
    if P.mode != at.SATAKE or mode != at.SATAKE:
        chk = at.structure_group_consistency(P.with_mode(mode))
        rep.put(f"{key}.structure_groups", f"{chk.conjugate}/{chk.checked} conjugate, "
                                          f"{chk.reflection_agree}/{chk.checked} reflection-agree")
    return res.ok


def _demo_compare(rep: Report, a: str, b: str, args) -> bool:
    P, Q = cx.atlas_fixture(a), cx.atlas_fixture(b)
    res = at.compare_atlases(P, Q, cx.fixture_cross_relations(P, Q), args.samples, args.seed,
                             args.word_bound)
    rep.put(f"compare.{a}.{b}", "equivalent" if res.ok else "inequivalent")
    for k, line in enumerate(res.lines()[:4], 1):
        rep.put(f"compare.{a}.{b}.violation.{k}", line)
    return res.ok


def _demo_structure(rep: Report, name: str, chart: str, point, order: int) -> bool:
    G = at.structure_group_at(cx.atlas_fixture(name), chart, np.array(point, dtype=object))
    rep.put(f"{name}.{chart}.structure_group", describe_group(G))
    return G.order == order


# (name, expected outcome, runner)
def _suite(args):
    fu = "bad-union-F-union-Fprime"
    return [
        ("example1", True, lambda r: _demo_example1(r)),
        ("example2", True, lambda r: _demo_example2(r, EXAMPLE2_RADII)),
        ("halfangle", True, lambda r: _demo_halfangle(r)),
        (fu, False, lambda r: _demo_atlas(r, fu, None, args)),
        ("bad-union-F-union-Fsecond", True,
         lambda r: _demo_atlas(r, "bad-union-F-union-Fsecond", None, args)),
        ("bad-union-Fprime-union-Fsecond", True,
         lambda r: _demo_atlas(r, "bad-union-Fprime-union-Fsecond", None, args)),
        ("compare F Fprime", True,
         lambda r: _demo_compare(r, "bad-union-F", "bad-union-Fprime", args)),
        ("compare pm-plane plane", False, lambda r: _demo_compare(r, "pm-plane", "plane", args)),
        ("teardrop(3)", True, lambda r: _demo_atlas(r, "teardrop(3)", None, args)),
        ("teardrop(3) cone point", True,
         lambda r: _demo_structure(r, "teardrop(3)", "cone", (0, 0), 3)),
        ("football(2,3)", True, lambda r: _demo_atlas(r, "football(2,3)", None, args)),
        ("mirror satake", False, lambda r: _demo_atlas(r, "mirror", at.SATAKE, args)),
        ("mirror diffeological", True,
         lambda r: _demo_atlas(r, "mirror", at.DIFFEOLOGICAL, args)),
    ]


def cmd_demo(args, rep: Report) -> None:
    if not args.inputs:
        passed = 0
        suite = _suite(args)
        for name, expected, run in suite:
            got = run(rep)
            match = got == expected
            passed += match
            rep.put(f"check[{name}]", "reproduced" if match else "MISMATCH")
        rep.sum("reproduced", f"{passed}/{len(suite)}")
        rep.status = 0 if passed == len(suite) else 1
        return
    name = args.inputs[0]
    if name == "example1":
        ok = _demo_example1(rep)
        rep.sum("verdict", "no constant-sign equivalence" if ok else "equivalence found")
        rep.status = 1 if ok else 0
        return
    if name == "example2":
        radii = EXAMPLE2_RADII if args.radius is None else (args.radius,)
        for r in radii:
            res = cx.example2_analysis(r)
            rep.put(f"example2.r{r:g}", res.summary())
            rep.status = max(rep.status, 0 if res.status == "Lifted" else 1)
        if len(radii) == 1:
            rep.sum("verdict", res.summary())
        else:
            rep.sum("verdict", "NonLiftable on every ball" if rep.status else "liftable")
        return
    if name == "halfangle":
        ok = _demo_halfangle(rep)
        rep.sum("verdict", "does not lift (monodromy -I)" if ok else "lifts")
        rep.status = 1 if ok else 0
        return
    ok = _demo_atlas(rep, name, args.mode, args)
    rep.sum("verdict", "valid" if ok else "invalid")
    rep.status = 0 if ok else 1


COMMANDS = {"validate": cmd_validate, "structure-group": cmd_structure_group,
            "compare": cmd_compare, "lift": cmd_lift, "monodromy": cmd_monodromy,
            "demo": cmd_demo}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbilift", description=__doc__.split("\n")[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("inputs", nargs="*", help="atlas files, fixture names or map names")
    p.add_argument("--out", help="also write the report as JSON to this path")
    p.add_argument("--samples", type=int, default=at.SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=nm.DEFAULT_TOL)
    p.add_argument("--word-bound", type=int, default=at.WORD_BOUND)
    p.add_argument("--grid", type=int, default=at.GRID)
    p.add_argument("--mode", choices=at.MODES)
    p.add_argument("--chart")
    p.add_argument("--point", help="comma-separated coordinates")
    p.add_argument("--radius", type=float)
    p.add_argument("--identifications", help="JSON file of cross relations for compare")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    rep = Report()
    rep.put("command", args.verb)
    try:
        if args.verb not in ("demo",) and not args.inputs:
            raise UsageError(f"{args.verb} needs an input")
        if args.samples < 1 or args.grid < 4 or args.word_bound < 0 or not args.tolerance > 0:
            raise UsageError("samples, grid, word bound and tolerance must be positive")
        COMMANDS[args.verb](args, rep)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OrbiliftError as exc:
        rep.put("error", f"{type(exc).__name__}: {exc}")
        rep.sum("verdict", type(exc).__name__)
        rep.status = 1
    stdout.write(rep.render())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rep.to_json())
    return rep.status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
