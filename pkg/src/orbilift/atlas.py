"""Orbifold atlases as data: charts, relations between charts, and their checks.

A presentation lists charts (a connected model region with a finite linear
group), affine transitions and general identifications.  An identification
is any map between chart coordinates that names the same points of the
underlying space; unlike a transition it need not be affine or invertible
and is only followed forwards.  Points of two charts are compared by a
bounded breadth-first search over relation words, where group elements are
free and only relation steps count towards the bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import numeric as nm
from .errors import (Ambiguous, EmptyRestriction, EvaluationError, IdentificationIncomplete,
                     Inconsistent, NoFactor, NotOrbitPreserving, OutOfChart)
from .expr import (GridComponent, Intersection, MapExpr, PredicateRegion, Region, grid_labels)
from .group import (FiniteMatrixGroup, conjugate_in_gl, invariant_gram, is_reflection, stabilizer,
                    stabilizer_indices)
from .lifting import (_well_conditioned, conjugation_table, describe_matrix, find_element,
                      graph_lift, unique_group_element)

SATAKE = "satake"
HAEFLIGER = "haefliger"
DIFFEOLOGICAL = "diffeological"
MODES = (SATAKE, HAEFLIGER, DIFFEOLOGICAL)

WORD_BOUND = 4
SAMPLES = 200
GRID = 64
GERM_NODES = 8        # germ grid nodes per axis off the plane (even: the centre is no node)
GERM_RINGS = 4
GERM_DIRECTIONS = 48
GERM_SCALE = 0.001    # germ grid spacing as a fraction of the model diameter
GERM_RESIDUAL = 0.02  # allowed relative residual of the quadratic germ fit
ORBIT_REL = 1e-8


# ---------------------------------------------------------------- data


@dataclass(frozen=True, eq=False)
class Chart:
    """Model region with a finite linear group acting on it."""
    id: str
    model: Region
    group: FiniteMatrixGroup
    name: str = ""

    def __post_init__(self):
        if self.model.dim != self.group.dim:
            raise ValueError(f"chart {self.id}: model in R^{self.model.dim}, "
                             f"group in GL({self.group.dim})")

    @property
    def dim(self) -> int:
        return self.model.dim


@dataclass(frozen=True, eq=False)
class Transition:
    """Affine map x -> linear @ x + offset from ``source`` into ``target``."""
    source: str
    target: str
    domain: Region
    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.linear)
        b = np.asarray(self.offset)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise ValueError(f"transition {self.source}->{self.target}: bad shapes "
                             f"{A.shape}, {b.shape}")
        object.__setattr__(self, "linear", A)
        object.__setattr__(self, "offset", b)
        Af = nm.to_float(A)
        object.__setattr__(self, "_A", Af)
        object.__setattr__(self, "_b", nm.to_float(b))
        inv = None
        if _well_conditioned(Af, 1e12):
            inv = np.linalg.inv(Af)
        object.__setattr__(self, "_Ainv", inv)

    @property
    def invertible(self) -> bool:
        return self._Ainv is not None

    def apply(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self._A.T + self._b

    def invert(self, Y) -> np.ndarray:
        return (np.asarray(Y, dtype=float) - self._b) @ self._Ainv.T

    def image(self) -> Region:
        return AffineImage(self)


@dataclass(frozen=True, eq=False)
class AffineImage(Region):
    """Image of a transition's domain."""
    transition: Transition

    @property
    def dim(self):
        return self.transition.domain.dim

    def contains(self, X):
        return self.transition.domain.contains(self.transition.invert(X))

    def bbox(self):
        lo, hi = self.transition.domain.bbox()
        n = len(lo)
        corners = np.array([[hi[k] if (m >> k) & 1 else lo[k] for k in range(n)]
                            for m in range(2 ** n)])
        Y = self.transition.apply(corners)
        return Y.min(axis=0), Y.max(axis=0)

    def to_dict(self):
        raise NotImplementedError("images are derived, not serialised")


@dataclass(frozen=True, eq=False)
class Identification:
    """Map from ``source`` coordinates to ``target`` coordinates of the same points.

    ``map`` is a MapExpr (serialisable) or a vectorised callable.
    """
    source: str
    target: str
    domain: Region
    map: MapExpr | Callable

    def apply(self, X) -> np.ndarray:
        """Images; rows that fail to evaluate come back as NaN."""
        X = np.asarray(X, dtype=float)
        if isinstance(self.map, MapExpr):
            with np.errstate(all="ignore"):
                cols = [np.broadcast_to(np.asarray(c.ev(X), dtype=float), (len(X),))
                        for c in self.map.components]
            return np.stack(cols, axis=1) if cols else np.zeros((len(X), 0))
        return np.asarray(self.map(X), dtype=float)


@dataclass(eq=False)
class OrbifoldPresentation:
    charts: list
    transitions: list = field(default_factory=list)
    identifications: list = field(default_factory=list)
    mode: str = SATAKE
    name: str = ""
    # restricted chart id -> (parent chart id, element indices of the parent group)
    parents: dict = field(default_factory=dict)

    def __post_init__(self):
        self.charts = list(self.charts)
        self.transitions = list(self.transitions)
        self.identifications = list(self.identifications)
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate chart ids")
        self._by_id = {c.id: c for c in self.charts}
        for r in self.transitions + self.identifications:
            for cid in (r.source, r.target):
                if cid not in self._by_id:
                    raise ValueError(f"relation refers to unknown chart {cid!r}")

    @property
    def ids(self) -> list:
        return [c.id for c in self.charts]

    def chart(self, cid: str) -> Chart:
        try:
            return self._by_id[cid]
        except KeyError:
            raise OutOfChart(f"no chart {cid!r}") from None

    def with_mode(self, mode: str) -> "OrbifoldPresentation":
        return OrbifoldPresentation(self.charts, self.transitions, self.identifications, mode,
                                    self.name, dict(self.parents))


# ---------------------------------------------------------------- reports


def _num(v) -> str:
    if isinstance(v, Fraction):
        return str(v)
    v = float(v)
    r = round(v)
    if abs(v - r) < 1e-9:
        return str(int(r))
    return f"{v:.6g}"


def matrix_text(g) -> str:
    """diag(...) for diagonal matrices, nested rows otherwise."""
    g = np.asarray(g)
    gf = nm.to_float(g)
    if np.allclose(gf, np.diag(np.diag(gf))):
        return "diag(" + ",".join(_num(g[i, i]) for i in range(g.shape[0])) + ")"
    return "[" + ",".join("[" + ",".join(_num(x) for x in row) + "]" for row in g) + "]"


def point_text(u) -> str:
    return ",".join(_num(x) for x in np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Violation:
    condition: str
    ids: tuple
    witness: tuple | None
    message: str

    def line(self) -> str:
        w = "" if self.witness is None else f" at ({point_text(self.witness)})"
        return f"{self.message} [{','.join(self.ids)}]{w}"


def _violation(condition, ids, witness, message) -> Violation:
    w = None if witness is None else tuple(float(x) for x in np.asarray(witness, dtype=float))
    return Violation(condition, tuple(ids), w, message)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, v: Violation) -> None:
        self.violations.append(v)

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        self.violations.extend(other.violations)
        return self

    def lines(self) -> list:
        return [v.line() for v in self.violations]

    def messages(self) -> list:
        return [v.message for v in self.violations]


# ---------------------------------------------------------------- relations


@dataclass(frozen=True)
class _Step:
    target: str
    domain: Region
    fn: Callable


def _steps(P: OrbifoldPresentation, cid: str) -> list:
    out = []
    for t in P.transitions:
        if t.source == cid:
            out.append(_Step(t.target, t.domain, t.apply))
        if t.target == cid and t.invertible:
            out.append(_Step(t.source, t.image(), t.invert))
    for e in P.identifications:
        if e.source == cid:
            out.append(_Step(e.target, e.domain, e.apply))
    return out


def into_region(G: FiniteMatrixGroup, Z, region: Region):
    """First image g z (element order) of each row inside ``region``, and a found-mask."""
    Z = np.asarray(Z, dtype=float)
    out = Z.copy()
    found = np.zeros(len(Z), dtype=bool)
    if len(Z) == 0:
        return out, found
    for g in G.floats:
        need = np.nonzero(~found)[0]
        if len(need) == 0:
            break
        cand = Z[need] @ g.T
        ok = region.contains(cand)
        out[need[ok]] = cand[ok]
        found[need[ok]] = True
    return out, found


def relation_map(P: OrbifoldPresentation, i: str, X, j: str,
                 word_bound: int = WORD_BOUND):
    """Points of chart j naming the same points as X in chart i.

    Returns (Y, ok); rows with ok False have no relation word of length
    <= word_bound.  Before each step the current point is moved by the
    first group element that brings it into the step's domain.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N = len(X)
    cj = P.chart(j)
    if i == j:
        return X.copy(), np.ones(N, dtype=bool)
    Y = np.full((N, cj.dim), np.nan)
    ok = np.zeros(N, dtype=bool)
    visited = {i: np.ones(N, dtype=bool)}
    frontier = {i: (X, np.arange(N))}
    for _ in range(word_bound):
        nxt: dict = {}
        for c, (Z, idx) in frontier.items():
            G = P.chart(c).group
            for st in _steps(P, c):
                live = ~ok[idx]
                if st.target != j:
                    live &= ~visited.setdefault(st.target, np.zeros(N, dtype=bool))[idx]
                if not np.any(live):
                    continue
                W, has = into_region(G, Z[live], st.domain)
                if not np.any(has):
                    continue
                try:
                    V = np.asarray(st.fn(W[has]), dtype=float)
                except EvaluationError:
                    continue
                good = np.all(np.isfinite(V), axis=1)
                good[good] = P.chart(st.target).model.contains(V[good])
                sel = idx[live][has][good]
                V = V[good]
                if st.target == j:
                    Y[sel] = V
                    ok[sel] = True
                else:
                    visited[st.target][sel] = True
                    if st.target in nxt:
                        V0, s0 = nxt[st.target]
                        nxt[st.target] = (np.concatenate([V0, V]), np.concatenate([s0, sel]))
                    else:
                        nxt[st.target] = (V, sel)
        frontier = nxt
        if not frontier or np.all(ok):
            break
    return Y, ok


def chart_samples(chart: Chart, k: int, seed: int = 0, region: Region | None = None) -> np.ndarray:
    """k random points of the model (or of ``region`` inside it) plus special
    points: the origin and points on fixed subspaces of group elements."""
    region = region or chart.model
    rng = np.random.default_rng(seed)
    X = region.sample(rng, k)
    G = chart.group
    special = [np.zeros(chart.dim)]
    for gi in range(1, G.order):
        powers = [np.eye(chart.dim)]
        g = G.floats[gi]
        while len(powers) < G.element_order(gi):
            powers.append(powers[-1] @ g)
        proj = sum(powers) / len(powers)
        special.extend(X[:3] @ proj.T)
    S = np.array(special)
    S = S[region.contains(S)]
    if len(S):
        X = np.concatenate([S[_first_unique(S)], X])
    return X


def _first_unique(S) -> np.ndarray:
    keep = []
    for k, s in enumerate(S):
        if all(np.max(np.abs(s - S[m])) > 1e-12 for m in keep):
            keep.append(k)
    return np.array(keep, dtype=int)


def same_orbit_mask(G: FiniteMatrixGroup, A, B) -> np.ndarray:
    """Row-wise: is B[k] in the G-orbit of A[k]?"""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if len(A) == 0:
        return np.zeros(0, dtype=bool)
    err = np.max(np.abs(G.act(A) - B[:, None, :]), axis=2)
    tol = ORBIT_REL * (1.0 + np.max(np.abs(B), axis=1))
    return np.any(err <= tol[:, None], axis=1)


# ---------------------------------------------------------------- single charts


def validate_lus(c: Chart, mode: str = SATAKE, grid: int = GRID, samples: int = SAMPLES,
                 seed: int = 0) -> ValidationReport:
    """Connected model, G-invariant model, and no reflections in Satake mode."""
    rep = ValidationReport()
    nodes, _, labels, count = c.model.grid_components(grid)
    if count == 0:
        rep.add(_violation("connected", (c.id,), None, f"chart {c.id}: empty model"))
    elif count > 1:
        rep.add(_violation("connected", (c.id,), nodes[labels != labels[0]][0],
                           f"chart {c.id}: model splits into {count} grid components"))
    if count:
        X = chart_samples(c, min(samples, 64), seed)
        for gi in range(1, c.group.order):
            out = ~c.model.contains(X @ c.group.floats[gi].T)
            if np.any(out):
                rep.add(_violation("invariant", (c.id,), X[out][0],
                                   f"chart {c.id}: model not invariant under "
                                   f"{matrix_text(c.group.elements[gi])}"))
                break
    if mode == SATAKE:
        for gi in range(1, c.group.order):
            if is_reflection(c.group.elements[gi], c.group.mode):
                rep.add(_violation("reflection", (c.id,), None,
                                   f"reflection present: {matrix_text(c.group.elements[gi])}"))
    return rep


def structure_group_at(P: OrbifoldPresentation, cid: str, u) -> FiniteMatrixGroup:
    """Stabilizer of u in the chart group; canonical only up to conjugacy in GL(n)."""
    c = P.chart(cid)
    u = np.asarray(u)
    if u.shape != (c.dim,) or not c.model.contains_point(nm.to_float(u)):
        raise OutOfChart(f"point {np.asarray(u).tolist()} is not in chart {cid}")
    return stabilizer(c.group, u)


# ---------------------------------------------------------------- injections


def validate_injection(t: Transition, src: Chart, tgt: Chart, samples: int = SAMPLES,
                       seed: int = 0) -> ValidationReport:
    """Sampled check that the affine transition induces an injection of quotients."""
    rep = ValidationReport()
    ids = (src.id, tgt.id)
    label = f"transition {src.id}->{tgt.id}"
    if not t.invertible:
        rep.add(_violation("invertible", ids, None, f"{label}: linear part is singular"))
        return rep
    dom = Intersection((src.model, t.domain))
    try:
        X = chart_samples(src, samples, seed, region=dom)
    except EvaluationError:
        rep.add(_violation("domain", ids, None, f"{label}: empty domain"))
        return rep
    Y = t.apply(X)
    out = ~tgt.model.contains(Y)
    if np.any(out):
        rep.add(_violation("image", ids, X[out][0], f"{label}: image leaves the target model"))
    G, G2 = src.group, tgt.group
    for gi in range(1, G.order):
        Xg = X @ G.floats[gi].T
        inside = dom.contains(Xg)
        bad = inside.copy()
        bad[inside] = ~same_orbit_mask(G2, Y[inside], t.apply(Xg[inside]))
        if np.any(bad):
            rep.add(_violation("compatible", ids, X[bad][0],
                               f"{label}: images of u and {matrix_text(G.elements[gi])}u "
                               "lie on different target orbits"))
            break
    for gi in range(1, G2.order):
        U = t.invert(Y @ G2.floats[gi].T)
        inside = dom.contains(U)
        bad = inside.copy()
        bad[inside] = ~same_orbit_mask(G, X[inside], U[inside])
        if np.any(bad):
            rep.add(_violation("orbit-injective", ids, X[bad][0],
                               f"{label}: distinct source orbits meet one target orbit "
                               f"(via {matrix_text(G2.elements[gi])})"))
            break
    return rep


def injection_unique_factor(lam: Transition, mu: Transition, to: Chart, samples: int = 100,
                            seed: int = 0) -> np.ndarray:
    """The unique g' in G_to with mu = g' o lam on the shared domain."""
    if (lam.source, lam.target) != (mu.source, mu.target) or not lam.invertible:
        raise NoFactor("transitions do not share source and target charts")
    region = AffineImage(Transition(lam.source, lam.target,
                                    Intersection((lam.domain, mu.domain)), lam.linear,
                                    lam.offset))

    def h(Y):
        return mu.apply(lam.invert(Y))

    try:
        return unique_group_element(h, region, to.group, samples, seed)
    except (NotOrbitPreserving, Ambiguous, Inconsistent, EvaluationError) as exc:
        raise NoFactor(str(exc)) from None


@dataclass
class InjectionSearch:
    found: bool
    how: str
    witness: np.ndarray | None = None
    nodes: np.ndarray | None = None
    values: np.ndarray | None = None


def _orbit_separation(G: FiniteMatrixGroup, Y) -> np.ndarray:
    if G.order == 1:
        return np.ones(len(Y))
    imgs = G.act(Y)
    return np.min(np.max(np.abs(imgs[:, 1:, :] - Y[:, None, :]), axis=2), axis=1)


def find_injection(P: OrbifoldPresentation, i: str, j: str, grid: int = GRID,
                   word_bound: int = WORD_BOUND) -> InjectionSearch:
    """Search for an injection chart i -> chart j over the identified points.

    Continues the orbit-valued relation map over the model grid of chart i
    (nearest orbit point with linear prediction).  A closing edge that
    disagrees gives the monodromy element; a consistent continuation is
    checked for injectivity and for a constant sign of its Jacobian.
    """
    ci, cj = P.chart(i), P.chart(j)
    nodes, h = ci.model.grid(grid)
    Y, ok = relation_map(P, i, nodes, j, word_bound)
    if not np.all(ok):
        return InjectionSearch(False, "chart is not contained", nodes[~ok][0])
    pairs = cKDTree(nodes).query_pairs(r=1.01 * h, output_type="ndarray")
    gram = nm.to_float(invariant_gram(cj.group).gram)
    gl = graph_lift(nodes, Y, cj.group, gram, pairs, _orbit_separation(cj.group, Y))
    if gl.bad_edge is not None:
        a = gl.bad_edge[0]
        g = gl.monodromy_index
        what = "?" if g is None else describe_matrix(cj.group.elements[g])
        return InjectionSearch(False, f"monodromy {what}", nodes[a])
    pieces = set(gl.comp[gl.regular].tolist())
    if len(pieces) > 1:
        return InjectionSearch(False, f"no injection found in search class "
                               f"(continuation splits into {len(pieces)} pieces)", nodes[0])
    V = gl.values
    scale = float(np.max(np.abs(V))) + 1e-300
    close = cKDTree(V).query_pairs(r=1e-7 * scale, output_type="ndarray")
    if len(close):
        far = np.linalg.norm(nodes[close[:, 0]] - nodes[close[:, 1]], axis=1) > 1.5 * h
        if np.any(far):
            return InjectionSearch(False, "not injective", nodes[close[far][0, 0]])
    dets = _grid_jacobian_dets(nodes, V, h)
    if len(dets):
        big = np.abs(dets) > 1e-6 * (np.max(np.abs(dets)) + 1e-300)
        if np.any(dets[big] > 0) and np.any(dets[big] < 0):
            return InjectionSearch(False, "not a local diffeomorphism", nodes[0])
        if not np.any(big):
            return InjectionSearch(False, "degenerate Jacobian", nodes[0])
    A = np.hstack([nodes, np.ones((len(nodes), 1))])
    coef, *_ = np.linalg.lstsq(A, V, rcond=None)
    resid = float(np.max(np.abs(A @ coef - V)))
    how = "affine" if resid <= 1e-8 * scale else "continuation"
    return InjectionSearch(True, how, None, nodes, V)


def _grid_jacobian_dets(nodes, V, h) -> np.ndarray:
    """Forward-difference Jacobian determinants at nodes with all axis neighbours."""
    n = nodes.shape[1]
    tree = cKDTree(nodes)
    cols = []
    have = np.ones(len(nodes), dtype=bool)
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        d, idx = tree.query(nodes + step)
        have &= d < 1e-6 * h
        cols.append(idx)
    sel = np.nonzero(have)[0]
    if len(sel) == 0:
        return np.zeros(0)
    J = np.stack([(V[cols[k][sel]] - V[sel]) / h for k in range(n)], axis=2)
    return np.linalg.det(J)


# ---------------------------------------------------------------- defining families


def _declared_injection(P, i, j, X_i, reports) -> bool:
    """Does a declared, valid transition provide an injection chart i -> chart j?"""
    for k, t in enumerate(P.transitions):
        if (t.source, t.target) == (i, j) and reports[k].ok:
            _, has = into_region(P.chart(i).group, X_i, t.domain)
            if np.all(has):
                return True
    return False


def containment(P: OrbifoldPresentation, samples: dict, word_bound: int = WORD_BOUND):
    """(relation masks, containment) from sampled points of every chart."""
    masks = {}
    inside = {}
    for i in P.ids:
        for j in P.ids:
            _, ok = relation_map(P, i, samples[i], j, word_bound)
            masks[i, j] = ok
            inside[i, j] = bool(np.all(ok))
    return masks, inside


def validate_defining_family(P: OrbifoldPresentation, samples: int = SAMPLES, seed: int = 0,
                             grid: int = GRID, word_bound: int = WORD_BOUND) -> ValidationReport:
    """Charts, declared injections, then the covering (1) and injection (2) conditions."""
    rep = ValidationReport()
    for c in P.charts:
        rep.extend(validate_lus(c, SATAKE, grid, samples, seed))
    t_reports = []
    for t in P.transitions:
        r = validate_injection(t, P.chart(t.source), P.chart(t.target), samples, seed)
        t_reports.append(r)
        rep.extend(r)
    X = {c.id: chart_samples(c, samples, seed + k) for k, c in enumerate(P.charts)}
    masks, inside = containment(P, X, word_bound)
    for i in P.ids:
        for j in P.ids:
            if i == j:
                continue
            meet = masks[i, j]
            if not np.any(meet):
                continue
            covered = np.zeros(len(meet), dtype=bool)
            for k in P.ids:
                if inside[k, i] and inside[k, j]:
                    covered |= masks[i, k]
            bad = meet & ~covered
            if np.any(bad):
                rep.add(_violation("condition (1)", (i, j), X[i][bad][0],
                                   f"condition (1): no chart inside {i} and {j} "
                                   "around a common point"))
    for i in P.ids:
        for j in P.ids:
            if i == j or not inside[i, j]:
                continue
            if _declared_injection(P, i, j, X[i], t_reports):
                continue
            res = find_injection(P, i, j, grid, word_bound)
            if not res.found:
                rep.add(_violation("condition (2)", (i, j), res.witness,
                                   f"condition (2): no injection {i}->{j} ({res.how})"))
    return rep


# ---------------------------------------------------------------- Haefliger germs


def _germ_offsets(n: int):
    """Unit-spacing germ grid around the origin and its edges.

    In the plane: rings of radius 1..GERM_RINGS with GERM_DIRECTIONS nodes
    each, fine enough in angle to continue around a cone point.  Otherwise a
    cube grid with an even number of nodes per axis (the centre is no node).
    """
    if n == 2:
        t = 2 * math.pi * np.arange(GERM_DIRECTIONS) / GERM_DIRECTIONS
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        radii = np.arange(1, GERM_RINGS + 1, dtype=float)
        offs = (radii[:, None, None] * dirs[None]).reshape(-1, 2)
        node = np.arange(len(offs)).reshape(GERM_RINGS, GERM_DIRECTIONS)
        ring = np.stack([node, np.roll(node, -1, axis=1)], axis=-1).reshape(-1, 2)
        radial = np.stack([node[:-1], node[1:]], axis=-1).reshape(-1, 2)
        return offs, np.concatenate([ring, radial])
    k = GERM_NODES if n <= 3 else 4
    axis = np.arange(k) - (k - 1) / 2.0
    offs = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pairs = cKDTree(offs).query_pairs(r=1.01, output_type="ndarray")
    return offs, pairs


def _quadratic_features(D) -> np.ndarray:
    n = D.shape[1]
    cols = [np.ones(len(D))] + [D[:, a] for a in range(n)]
    cols += [D[:, a] * D[:, b] for a in range(n) for b in range(a, n)]
    return np.stack(cols, axis=1)


@dataclass
class Germ:
    ok: bool
    reason: str
    linear: np.ndarray | None = None


def germs(P: OrbifoldPresentation, i: str, j: str, U, V, nodes, Y, ok, spacing) -> list:
    """Judge identified pairs (U[b], V[b]) from relation data on germ grids.

    ``nodes``, ``Y`` and ``ok`` hold one germ grid per pair, back to back.
    All grids are continued in one pass over their disjoint union.
    """
    ci, cj = P.chart(i), P.chart(j)
    n = ci.dim
    offs, pairs = _germ_offsets(n)
    m, B = len(offs), len(U)
    out: list = [None] * B
    need = max(m // 2, (n + 1) * (n + 2) // 2 + 1)
    enough = ok.reshape(B, m).sum(axis=1) >= need
    for b in np.nonzero(~enough)[0]:
        out[b] = Germ(False, "too few identified points near the pair")
    keep = np.nonzero(ok & np.repeat(enough, m))[0]
    if len(keep) == 0:
        return out
    pos = -np.ones(B * m, dtype=int)
    pos[keep] = np.arange(len(keep))
    E = pos[(pairs[None] + (np.arange(B) * m)[:, None, None]).reshape(-1, 2)]
    E = E[np.all(E >= 0, axis=1)]
    Z, W = nodes[keep], Y[keep]
    owner = keep // m
    G2 = cj.group
    gram = nm.to_float(invariant_gram(G2).gram)
    sep = _orbit_separation(G2, W)
    gl = graph_lift(Z, W, G2, gram, E, sep)
    for k, (a, bnode) in enumerate(gl.bad):
        b = int(owner[a])
        if out[b] is None:
            g = find_element(G2, gl.values[bnode], gl.bad_values[k])
            what = "?" if g is None else describe_matrix(G2.elements[g])
            out[b] = Germ(False, f"no germ (monodromy {what})")
    starts = np.searchsorted(owner, np.arange(B + 1))
    for b in range(B):
        if out[b] is None:
            sl = slice(starts[b], starts[b + 1])
            out[b] = _fit_germ(ci, G2, U[b], V[b], Z[sl], gl.values[sl], gl.regular[sl],
                               gl.comp[sl], sep[sl], spacing[b])
    return out


def _fit_germ(ci: Chart, G2, u, v, Z, W, reg, comp, sep, spacing) -> Germ:
    """Quadratic fit of a continued germ, then derivative and stabilizer checks."""
    if not np.any(reg):
        return Germ(False, "no germ (all nearby images singular)")
    seed = np.nonzero(reg)[0][np.argmax(sep[reg])]
    use = reg & (comp == comp[seed])
    D = (Z[use] - u) / spacing
    F = _quadratic_features(D)
    if len(D) < F.shape[1] + 1:
        return Germ(False, "no germ (lift splits near the pair)")
    W = W[use]
    coef, *_ = np.linalg.lstsq(F, W, rcond=None)
    spread = float(np.max(np.abs(W - W.mean(axis=0)))) + 1e-300
    if float(np.max(np.abs(F @ coef - W))) > GERM_RESIDUAL * spread:
        return Germ(False, "no germ (continued lift is not smooth)")
    n = ci.dim
    L = coef[1:n + 1].T / spacing
    if not _well_conditioned(L, 1e6) or np.max(np.abs(L)) * spacing < 1e-6 * spread:
        return Germ(False, "no germ (singular derivative)")
    s1 = stabilizer(ci.group, u)
    # the germ sends u near coef[0]; use the orbit point of v closest to it
    imgs = G2.act(v)
    v0 = imgs[int(np.argmin(np.linalg.norm(imgs - coef[0], axis=1)))]
    s2 = stabilizer(G2, v0)
    if s1.order != s2.order:
        return Germ(False, f"stabilizer orders differ ({s1.order} vs {s2.order})", L)
    if s1.order > 1:
        table = conjugation_table(L, s1, s2, tol=1e-3)
        if table is None or len(set(table)) != s2.order:
            return Germ(False, "derivative does not conjugate the stabilizers", L)
    return Germ(True, "ok", L)


def haefliger_compatible(P: OrbifoldPresentation, i: str, j: str, samples: int = SAMPLES,
                         seed: int = 0, word_bound: int = WORD_BOUND,
                         report_all: bool = False) -> ValidationReport:
    """Local germs g with pi_j o g = pi_i at sampled identified pairs (chart i -> j)."""
    rep = ValidationReport()
    ci = P.chart(i)
    X = chart_samples(ci, samples, seed)
    Yc, okc = relation_map(P, i, X, j, word_bound)
    U, Vt = X[okc], Yc[okc]
    if len(U) == 0:
        return rep
    lo, hi = ci.model.bbox()
    # keep each germ grid inside the slice around u (away from other orbit points)
    sep = _moving_gap(ci.group, U)
    spacing = np.minimum(GERM_SCALE * float(np.max(hi - lo)), 0.1 * sep)
    offs, _ = _germ_offsets(ci.dim)
    m = len(offs)
    pending = np.arange(len(U))
    failures = []
    for _ in range(4):
        if len(pending) == 0:
            break
        nodes = (U[pending][:, None, :] + spacing[pending][:, None, None] * offs[None])
        nodes = nodes.reshape(-1, ci.dim)
        inside = ci.model.contains(nodes)
        Y = np.full((len(nodes), P.chart(j).dim), np.nan)
        ok = np.zeros(len(nodes), dtype=bool)
        if np.any(inside):
            Y[inside], ok[inside] = relation_map(P, i, nodes[inside], j, word_bound)
        judged = germs(P, i, j, U[pending], Vt[pending], nodes, Y, ok, spacing[pending])
        retry = []
        for p, germ in zip(pending, judged):
            if germ.reason.startswith("too few"):
                retry.append(p)
            elif not germ.ok:
                failures.append((p, germ.reason))
        pending = np.array(retry, dtype=int)
        spacing[pending] /= 4
    failures += [(p, "too few identified points near the pair") for p in pending]
    for p, reason in sorted(failures, key=lambda t: t[0]):
        rep.add(_violation("haefliger", (i, j), U[p], f"haefliger {i}->{j}: {reason}"))
        if not report_all:
            break
    return rep


def _moving_gap(G: FiniteMatrixGroup, U) -> np.ndarray:
    """min |g u - u| over g that move u (inf when nothing moves u)."""
    if G.order == 1:
        return np.full(len(U), np.inf)
    d = np.linalg.norm(G.act(U)[:, 1:, :] - U[:, None, :], axis=2)
    tol = 1e-9 * (1 + np.max(np.abs(U), axis=1))
    d = np.where(d > tol[:, None], d, np.inf)
    return np.min(d, axis=1)


# ---------------------------------------------------------------- structure groups


@dataclass
class StructureCheck:
    checked: int = 0
    conjugate: int = 0
    reflection_agree: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.checked == self.conjugate == self.reflection_agree


def _reflection_free(G: FiniteMatrixGroup) -> bool:
    return not any(is_reflection(G.elements[k], G.mode) for k in range(1, G.order))


def structure_group_consistency(P: OrbifoldPresentation, samples: int = 50, seed: int = 0,
                                word_bound: int = WORD_BOUND) -> StructureCheck:
    """Conjugacy in GL(n) of the structure groups seen at sampled identified points."""
    out = StructureCheck()
    cache: dict = {}
    for k, c in enumerate(P.charts):
        X = chart_samples(c, samples, seed + k)
        for d in P.charts:
            if d.id == c.id:
                continue
            Y, ok = relation_map(P, c.id, X, d.id, word_bound)
            for x, y in zip(X[ok], Y[ok]):
                s1 = stabilizer_indices(c.group, x)
                s2 = stabilizer_indices(d.group, y)
                key = (c.id, tuple(s1), d.id, tuple(s2))
                if key not in cache:
                    g1, g2 = c.group.subgroup(s1), d.group.subgroup(s2)
                    cache[key] = (conjugate_in_gl(g1, g2) is not None,
                                  _reflection_free(g1) == _reflection_free(g2))
                conj, refl = cache[key]
                out.checked += 1
                out.conjugate += conj
                out.reflection_agree += refl
                if not (conj and refl):
                    out.failures.append((c.id, d.id, tuple(x)))
    return out


def image_is_component(P: OrbifoldPresentation, k: int, grid: int = GRID,
                       word_bound: int = WORD_BOUND, slack: float = 0.02) -> bool:
    """Is the image of transition k a grid component of the identified target preimage?"""
    t = P.transitions[k]
    src, tgt = P.chart(t.source), P.chart(t.target)
    nodes, h = tgt.model.grid(grid)
    _, ok = relation_map(P, tgt.id, nodes, src.id, word_bound)
    S = nodes[ok]
    if len(S) == 0:
        return False
    _, labels = grid_labels(S, h)
    img = t.image()
    dom = Intersection((src.model, t.domain))
    X = dom.sample(np.random.default_rng(0), 64)
    _, near = cKDTree(S).query(t.apply(X))
    comp = np.isin(labels, np.unique(labels[near]))
    in_img = img.contains(S) & dom.contains(t.invert(S))
    mismatch = int(np.sum(comp != in_img))
    return mismatch <= slack * max(int(comp.sum()), 1)


# ---------------------------------------------------------------- dispatch


def validate(P: OrbifoldPresentation, samples: int = SAMPLES, seed: int = 0, grid: int = GRID,
             word_bound: int = WORD_BOUND, mode: str | None = None) -> ValidationReport:
    """Mode-dependent validation: Satake defining family, or charts plus
    declared transitions plus Haefliger compatibility of every chart pair."""
    mode = mode or P.mode
    if mode == SATAKE:
        return validate_defining_family(P, samples, seed, grid, word_bound)
    rep = ValidationReport()
    for c in P.charts:
        rep.extend(validate_lus(c, mode, grid, samples, seed))
    for t in P.transitions:
        rep.extend(validate_injection(t, P.chart(t.source), P.chart(t.target), samples, seed))
    for i in P.ids:
        for j in P.ids:
            if i != j:
                rep.extend(haefliger_compatible(P, i, j, samples, seed, word_bound))
    return rep


# ---------------------------------------------------------------- equivalence


def _renamed(r, prefix_src: str, prefix_tgt: str):
    return replace(r, source=prefix_src + r.source, target=prefix_tgt + r.target)


def union_presentation(P: OrbifoldPresentation, Q: OrbifoldPresentation, identifications,
                       left: str = "P:", right: str = "Q:") -> OrbifoldPresentation:
    """Disjoint union of P and Q (ids prefixed) joined by cross identifications.

    A cross relation whose source is a chart of P and target a chart of Q
    runs P -> Q; otherwise it must run Q -> P.
    """
    charts = [replace(c, id=left + c.id) for c in P.charts]
    charts += [replace(c, id=right + c.id) for c in Q.charts]
    rels_t = [_renamed(t, left, left) for t in P.transitions]
    rels_t += [_renamed(t, right, right) for t in Q.transitions]
    rels_i = [_renamed(e, left, left) for e in P.identifications]
    rels_i += [_renamed(e, right, right) for e in Q.identifications]
    pids, qids = set(P.ids), set(Q.ids)
    for r in identifications:
        if r.source in pids and r.target in qids:
            rr = _renamed(r, left, right)
        elif r.source in qids and r.target in pids:
            rr = _renamed(r, right, left)
        else:
            raise IdentificationIncomplete(f"relation {r.source}->{r.target} does not join "
                                           "the two presentations")
        (rels_t if isinstance(rr, Transition) else rels_i).append(rr)
    return OrbifoldPresentation(charts, rels_t, rels_i, HAEFLIGER, f"{P.name}+{Q.name}")


def identity_identifications(P: OrbifoldPresentation) -> list:
    """Identity transitions chart -> same chart, for comparing P with itself."""
    return [Transition(c.id, c.id, c.model, np.eye(c.dim), np.zeros(c.dim)) for c in P.charts]


def compare_atlases(P: OrbifoldPresentation, Q: OrbifoldPresentation, identifications,
                    samples: int = SAMPLES, seed: int = 0,
                    word_bound: int = WORD_BOUND) -> ValidationReport:
    """Haefliger compatibility of the union over all cross chart pairs."""
    U = union_presentation(P, Q, identifications)
    left = ["P:" + c for c in P.ids]
    right = ["Q:" + c for c in Q.ids]
    for a in left:
        X = chart_samples(U.chart(a), min(samples, 64), seed)
        if not any(np.any(relation_map(U, a, X, b, word_bound)[1]) for b in right):
            raise IdentificationIncomplete(f"chart {a[2:]} has no relation to the other cover")
    rep = ValidationReport()
    for a in left:
        for b in right:
            rep.extend(haefliger_compatible(U, a, b, samples, seed, word_bound))
            rep.extend(haefliger_compatible(U, b, a, samples, seed, word_bound))
    return rep


def atlases_equivalent(P: OrbifoldPresentation, Q: OrbifoldPresentation, identifications=None,
                       samples: int = SAMPLES, seed: int = 0,
                       word_bound: int = WORD_BOUND) -> bool:
    """True iff the union of P and Q passes the Haefliger test on every cross pair."""
    if identifications is None:
        identifications = identity_identifications(P)
    return compare_atlases(P, Q, identifications, samples, seed, word_bound).ok


# ---------------------------------------------------------------- restriction


def selection_from(P: OrbifoldPresentation, anchor: str, region: Region,
                   word_bound: int = WORD_BOUND) -> dict:
    """Per-chart preimages of the set named by ``region`` in the anchor chart
    (saturated by the anchor group)."""
    G = P.chart(anchor).group
    out = {}
    for c in P.charts:
        def pred(X, cid=c.id):
            Y, ok = relation_map(P, cid, X, anchor, word_bound)
            res = ok.copy()
            if np.any(ok):
                imgs = G.act(Y[ok])
                hit = np.zeros(int(ok.sum()), dtype=bool)
                for g in range(G.order):
                    hit |= region.contains(imgs[:, g])
                res[ok] = hit
            return res
        out[c.id] = PredicateRegion(c.model, pred, label=f"{c.id}|selection")
    return out


def _component_action(G: FiniteMatrixGroup, nodes, labels, count, h) -> np.ndarray:
    """perm[g, a] = label of the component that g maps component a onto."""
    tree = cKDTree(nodes)
    perm = np.zeros((G.order, count), dtype=int)
    for g in range(G.order):
        _, idx = tree.query(nodes @ G.floats[g].T)
        img = labels[idx]
        for a in range(count):
            vals, cnt = np.unique(img[labels == a], return_counts=True)
            perm[g, a] = vals[np.argmax(cnt)]
    return perm


def restrict_family(P: OrbifoldPresentation, selection: dict, grid: int = GRID,
                    word_bound: int = WORD_BOUND) -> OrbifoldPresentation:
    """Restriction to an open set given per chart by ``selection`` (chart id -> Region).

    Each chart is replaced by one grid component per group orbit of
    components of model & selection, with the subgroup preserving it.
    Transitions are restricted and composed with target group elements so
    that they land in the kept components; identifications are restricted
    the same way, pointwise.
    """
    charts, parents = [], {}
    for c in P.charts:
        if c.id not in selection:
            continue
        base = Intersection((c.model, selection[c.id]))
        nodes, h, labels, count = base.grid_components(grid)
        if count == 0:
            continue
        perm = _component_action(c.group, nodes, labels, count, h)
        # keep the component with the lex-largest centroid from each orbit
        centroid = [tuple(np.round(nodes[labels == a].mean(axis=0), 9)) for a in range(count)]
        seen = set()
        reps = []
        for a in range(count):
            if a in seen:
                continue
            orb = sorted({int(perm[g, a]) for g in range(c.group.order)})
            seen.update(orb)
            reps.append(max(orb, key=lambda b: centroid[b]))
        for k, a in enumerate(reps):
            sub = [g for g in range(c.group.order) if perm[g, a] == a]
            cid = c.id if len(reps) == 1 else f"{c.id}.{k}"
            model = GridComponent(base, nodes[labels == a], h)
            charts.append(Chart(cid, model, c.group.subgroup(sub), c.name))
            parents[cid] = (c.id, tuple(sub))
    if not charts:
        raise EmptyRestriction("the selection misses every chart")
    by_parent: dict = {}
    for ch in charts:
        by_parent.setdefault(parents[ch.id][0], []).append(ch)
    transitions = []
    for t in P.transitions:
        for a in by_parent.get(t.source, []):
            for b in by_parent.get(t.target, []):
                transitions.extend(_restricted_transitions(P, t, a, b, parents[b.id][1]))
    idents = []
    for e in P.identifications:
        for a in by_parent.get(e.source, []):
            for b in by_parent.get(e.target, []):
                r = _restricted_identification(P, e, a, b)
                if r is not None:
                    idents.append(r)
    return OrbifoldPresentation(charts, transitions, idents, P.mode, f"{P.name}|restricted",
                                parents)


def _nonempty(region: Region, probe: Region, points: int = 24) -> bool:
    nodes, _ = probe.grid(points)
    return bool(len(nodes)) and bool(np.any(region.contains(nodes)))


def _restricted_transitions(P, t: Transition, a: Chart, b: Chart, sub) -> list:
    G = P.chart(t.target).group
    out, covered = [], set()
    for g in range(G.order):
        if g in covered:
            continue
        gm = G.floats[g]
        lin = gm @ nm.to_float(t.linear)
        off = gm @ nm.to_float(t.offset)

        def pred(X, lin=lin, off=off):
            return t.domain.contains(X) & b.model.contains(X @ lin.T + off)

        dom = PredicateRegion(a.model, pred, label=f"{a.id}->{b.id}")
        if _nonempty(dom, a.model):
            out.append(Transition(a.id, b.id, dom, lin, off))
            covered.update(int(G.table[s, g]) for s in sub)
    return out


def _restricted_identification(P, e: Identification, a: Chart, b: Chart):
    G = P.chart(e.target).group

    def fn(X):
        V, found = into_region(G, e.apply(X), b.model)
        V[~found] = np.nan
        return V

    def pred(X):
        V = e.apply(X)
        good = np.all(np.isfinite(V), axis=1)
        out = e.domain.contains(X) & good
        if np.any(out):
            out[out] = into_region(G, V[out], b.model)[1]
        return out

    dom = PredicateRegion(a.model, pred, label=f"{a.id}->{b.id}")
    if not _nonempty(dom, a.model):
        return None
    return Identification(a.id, b.id, dom, fn)


def reglue(P: OrbifoldPresentation, parts: list) -> OrbifoldPresentation:
    """Union of restrictions of P, joined through P wherever their points meet."""
    charts, parents, transitions, idents = [], {}, [], []
    for k, R in enumerate(parts):
        pre = f"{k}:"
        charts += [replace(c, id=pre + c.id) for c in R.charts]
        parents.update({pre + cid: v for cid, v in R.parents.items()})
        transitions += [_renamed(t, pre, pre) for t in R.transitions]
        idents += [_renamed(e, pre, pre) for e in R.identifications]
    for a in charts:
        for b in charts:
            if a.id.split(":")[0] == b.id.split(":")[0]:
                continue
            e = _through_parent(P, a, b, parents[a.id][0], parents[b.id][0])
            if e is not None:
                idents.append(e)
    return OrbifoldPresentation(charts, transitions, idents, P.mode, f"{P.name}|reglued",
                                parents)


def _through_parent(P, a: Chart, b: Chart, pa: str, pb: str):
    G = P.chart(pb).group

    def fn(X):
        Y, ok = relation_map(P, pa, X, pb)
        V = np.full_like(Y, np.nan)
        if np.any(ok):
            W, found = into_region(G, Y[ok], b.model)
            W[~found] = np.nan
            V[ok] = W
        return V

    def pred(X):
        return np.all(np.isfinite(fn(X)), axis=1)

    dom = PredicateRegion(a.model, pred, label=f"{a.id}->{b.id}")
    if not _nonempty(dom, a.model):
        return None
    return Identification(a.id, b.id, dom, fn)


def parent_identifications(R: OrbifoldPresentation) -> list:
    """Identity transitions from each restricted chart to its parent chart."""
    return [Transition(c.id, R.parents[c.id][0], c.model, np.eye(c.dim), np.zeros(c.dim))
            for c in R.charts]
