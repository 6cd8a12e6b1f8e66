"""Atlas description files: JSON with numbers written as decimal or "p/q" strings.

Layout::

    {"mode": "satake", "name": "...",
     "charts": [{"id", "dim", "region", "group": {"scalarMode", "generators"}}],
     "transitions": [{"from", "to", "domain", "linear", "offset"}],
     "identifications": [{"from", "to", "domain", "map": [expr, ...]}]}

Generators are lists of row-major entries (flat or nested by rows).  In an
exact group every entry must be an integer or "p/q".  Transition entries
are read as rationals when all of them are rational and as floats otherwise.
"""
from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from . import numeric as nm
from .atlas import MODES, Chart, Identification, OrbifoldPresentation, Transition
from .errors import DimMismatch, NonSquare, ParseError, Singular
from .expr import MapExpr, parse_map, region_from_dict
from .group import FiniteMatrixGroup, close_generators


# ---------------------------------------------------------------- writing


def _scalar_text(x) -> str:
    if isinstance(x, (Fraction, int, np.integer)):
        return str(Fraction(x))
    return repr(float(x))


def _matrix_rows(m) -> list:
    return [[_scalar_text(v) for v in row] for row in np.asarray(m)]


def group_to_dict(G: FiniteMatrixGroup) -> dict:
    gens = G.generators or tuple(range(1, G.order))
    return {"scalarMode": G.mode.name,
            "generators": [_matrix_rows(G.elements[g]) for g in gens]}


def _relation_to_dict(r) -> dict:
    d = {"from": r.source, "to": r.target, "domain": r.domain.to_dict()}
    if isinstance(r, Transition):
        d["linear"] = _matrix_rows(r.linear)
        d["offset"] = [_scalar_text(v) for v in r.offset]
        return d
    if not isinstance(r.map, MapExpr):
        raise ParseError(f"identification {r.source}->{r.target} is defined by code",
                         field="identifications.map")
    d["map"] = r.map.sources()
    return d


def atlas_to_dict(P: OrbifoldPresentation) -> dict:
    return {
        "mode": P.mode,
        "name": P.name,
        "charts": [{"id": c.id, "dim": c.dim, "name": c.name, "region": c.model.to_dict(),
                    "group": group_to_dict(c.group)} for c in P.charts],
        "transitions": [_relation_to_dict(t) for t in P.transitions],
        "identifications": [_relation_to_dict(e) for e in P.identifications],
    }


def dump_atlas(P: OrbifoldPresentation, path) -> None:
    with open(path, "w") as fh:
        json.dump(atlas_to_dict(P), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- reading


def _field(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ParseError("expected an object", field=where)
    if key not in d:
        raise ParseError("missing", field=f"{where}.{key}")
    return d[key]


def _scalar(x, exact: bool, where: str):
    if isinstance(x, bool) or not isinstance(x, (str, int, float)):
        raise ParseError(f"not a number: {x!r}", field=where)
    if exact and isinstance(x, float):
        raise ParseError(f"{x!r} is not a rational (write p/q)", field=where)
    try:
        return nm.parse_scalar(x, exact)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"{x!r} is not " + ("a rational p/q" if exact else "a number"),
                         field=where) from None


def _matrix(data, n: int, exact: bool, where: str) -> np.ndarray:
    if not isinstance(data, list):
        raise ParseError("expected a list", field=where)
    flat = [v for row in data for v in row] if data and isinstance(data[0], list) else data
    if len(flat) != n * n:
        raise ParseError(f"expected {n * n} entries, got {len(flat)}", field=where)
    vals = [_scalar(v, exact, f"{where}[{k}]") for k, v in enumerate(flat)]
    return np.array(vals, dtype=object if exact else float).reshape(n, n)


def _vector(data, n: int, exact: bool, where: str) -> np.ndarray:
    if not isinstance(data, list) or len(data) != n:
        raise ParseError(f"expected {n} entries", field=where)
    vals = [_scalar(v, exact, f"{where}[{k}]") for k, v in enumerate(data)]
    return np.array(vals, dtype=object if exact else float)


def _all_rational(values) -> bool:
    return all(nm._is_rational(v) for v in values)


def _group(d, n: int, where: str, tol: float = nm.DEFAULT_TOL) -> FiniteMatrixGroup:
    mode_name = _field(d, "scalarMode", where)
    if mode_name not in ("exact", "approx"):
        raise ParseError(f"unknown scalar mode {mode_name!r}", field=f"{where}.scalarMode")
    exact = mode_name == "exact"
    gens = d.get("generators", [])
    if not isinstance(gens, list):
        raise ParseError("expected a list", field=f"{where}.generators")
    mats = [_matrix(g, n, exact, f"{where}.generators[{k}]") for k, g in enumerate(gens)]
    try:
        return close_generators(mats, mode=nm.Mode(exact, tol), dim=n)
    except (Singular, NonSquare, DimMismatch) as exc:
        raise ParseError(str(exc), field=f"{where}.generators") from None


def _region(d, n: int, where: str):
    try:
        reg = region_from_dict(d, n)
    except ParseError as exc:
        raise ParseError(str(exc), field=where) from None
    if reg.dim != n:
        raise ParseError(f"region in R^{reg.dim}, chart in R^{n}", field=where)
    return reg


def atlas_from_dict(d: dict, tol: float = nm.DEFAULT_TOL) -> OrbifoldPresentation:
    """Build and check a presentation; NotFinite from group closure propagates.

    ``tol`` is the comparison tolerance of approximate groups.
    """
    mode = d.get("mode", "satake") if isinstance(d, dict) else None
    if mode not in MODES:
        raise ParseError(f"unknown mode {mode!r}", field="mode")
    charts = []
    dims = {}
    raw = _field(d, "charts", "atlas")
    if not isinstance(raw, list) or not raw:
        raise ParseError("expected a non-empty list", field="charts")
    for k, c in enumerate(raw):
        where = f"charts[{k}]"
        cid = str(_field(c, "id", where))
        if cid in dims:
            raise ParseError(f"duplicate chart id {cid!r}", field=f"{where}.id")
        n = _field(c, "dim", where)
        if not isinstance(n, int) or n < 1:
            raise ParseError(f"bad dimension {n!r}", field=f"{where}.dim")
        region = _region(_field(c, "region", where), n, f"{where}.region")
        group = _group(_field(c, "group", where), n, f"{where}.group", tol)
        charts.append(Chart(cid, region, group, str(c.get("name", ""))))
        dims[cid] = n

    def ends(r, where):
        a, b = str(_field(r, "from", where)), str(_field(r, "to", where))
        for key, cid in (("from", a), ("to", b)):
            if cid not in dims:
                raise ParseError(f"unknown chart {cid!r}", field=f"{where}.{key}")
        if dims[a] != dims[b]:
            raise ParseError("charts of different dimension", field=where)
        return a, b, dims[a]

    transitions = []
    for k, t in enumerate(d.get("transitions", [])):
        where = f"transitions[{k}]"
        a, b, n = ends(t, where)
        lin = _field(t, "linear", where)
        off = t.get("offset", ["0"] * n)
        if not isinstance(lin, list) or not isinstance(off, list):
            raise ParseError("expected lists", field=where)
        flat = [v for row in lin for v in row] if lin and isinstance(lin[0], list) else lin
        exact = _all_rational(list(flat) + list(off))
        A = _matrix(lin, n, exact, f"{where}.linear")
        b_ = _vector(off, n, exact, f"{where}.offset")
        dom = _region(_field(t, "domain", where), n, f"{where}.domain")
        transitions.append(Transition(a, b, dom, A, b_))

    idents = []
    for k, e in enumerate(d.get("identifications", [])):
        where = f"identifications[{k}]"
        a, b, n = ends(e, where)
        src = _field(e, "map", where)
        if not isinstance(src, list) or len(src) != n or not all(isinstance(s, str) for s in src):
            raise ParseError(f"expected {n} expressions", field=f"{where}.map")
        try:
            fmap = parse_map(src, n)
        except ParseError as exc:
            raise ParseError(str(exc), field=f"{where}.map") from None
        dom = _region(_field(e, "domain", where), n, f"{where}.domain")
        idents.append(Identification(a, b, dom, fmap))
    return OrbifoldPresentation(charts, transitions, idents, mode, str(d.get("name", "")))


def loads_atlas(text: str, tol: float = nm.DEFAULT_TOL) -> OrbifoldPresentation:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, field=f"line {exc.lineno}, column {exc.colno}") from None
    return atlas_from_dict(d, tol)


def parse_atlas(path, tol: float = nm.DEFAULT_TOL) -> OrbifoldPresentation:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(exc.strerror or str(exc), field=str(path)) from None
    return loads_atlas(text, tol)


def relations_from_dict(d: dict, left: OrbifoldPresentation, right: OrbifoldPresentation) -> list:
    """Cross relations for a comparison: the transition/identification lists of
    ``d``, resolved against the charts of both presentations."""
    charts = [c for c in left.charts]
    taken = set(left.ids)
    charts += [c for c in right.charts if c.id not in taken]
    shell = {"mode": left.mode,
             "charts": [{"id": c.id, "dim": c.dim, "region": {"kind": "full", "dim": c.dim},
                         "group": {"scalarMode": "exact", "generators": []}} for c in charts],
             "transitions": d.get("transitions", []),
             "identifications": d.get("identifications", [])}
    P = atlas_from_dict(shell)
    return P.transitions + P.identifications


# ---------------------------------------------------------------- comparison


def _element_set_equal(G: FiniteMatrixGroup, H: FiniteMatrixGroup) -> bool:
    return G.order == H.order and all(H.index_of(g) is not None for g in G.elements)


def presentations_equal(P: OrbifoldPresentation, Q: OrbifoldPresentation,
                        tol: float = 1e-12) -> bool:
    """Same mode, charts (ids, regions, group element sets) and relations in declared order."""
    if P.mode != Q.mode or P.ids != Q.ids:
        return False
    for a, b in zip(P.charts, Q.charts):
        if a.model.to_dict() != b.model.to_dict() or not _element_set_equal(a.group, b.group):
            return False
    if len(P.transitions) != len(Q.transitions):
        return False
    for s, t in zip(P.transitions, Q.transitions):
        if (s.source, s.target) != (t.source, t.target) or \
                s.domain.to_dict() != t.domain.to_dict():
            return False
        if not (np.allclose(nm.to_float(s.linear), nm.to_float(t.linear), rtol=0, atol=tol) and
                np.allclose(nm.to_float(s.offset), nm.to_float(t.offset), rtol=0, atol=tol)):
            return False
    if len(P.identifications) != len(Q.identifications):
        return False
    for s, t in zip(P.identifications, Q.identifications):
        if (s.source, s.target) != (t.source, t.target) or \
                s.domain.to_dict() != t.domain.to_dict():
            return False
        if not (isinstance(s.map, MapExpr) and isinstance(t.map, MapExpr)) or \
                s.map.sources() != t.map.sources():
            return False
    return True
