"""Lifting maps between finite linear quotients.

The continuation engine works on a polar sample grid: spheres of the
source Gamma-norm at geometrically growing radii, each carrying a
Gamma-closed set of directions.  Lifted values are chosen node by node as
the target orbit point nearest to an already lifted neighbour.  Edges along
which that choice is a tie (typically a jump in scale next to a zero of the
map) are dropped; the remaining graph splits into pieces.  Closing edges
that disagree expose monodromy, and pieces whose induced homomorphisms
cannot be matched by a constant target element expose the obstruction to
an equivariant lift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import numeric as nm
from .errors import (Ambiguous, DimMismatch, EvaluationError, Inconsistent, JacobianMismatch,
                     NoConsistentImage, NoGroupElement, NotHomomorphism, NotOrbitPreserving,
                     ObstructionFound, SeedOffOrbit, SingularJacobian, StepTooLarge)
from .expr import FullSpace, MapExpr, Region, band_index
from .group import (FiniteMatrixGroup, GroupHomomorphism, _generators, homomorphism_from_images,
                    stabilizer)
from .quotient import LinearQuotient, canonical_rep, canonical_rep_batch

MATCH_REL = 1e-7
TIE_REL = 1e-6
GROWTH = 1.2
SUBSTEPS = 4
BASE_DIRECTIONS = 160
TINY = 1e-200
UNDETERMINED_SHARE = 0.1
MAX_RELATIVE_STEP = 0.5
OUTER_MARGIN = 0.995  # last sphere radius as a fraction of the region's radial extent


def _batch(fn, X) -> np.ndarray:
    if isinstance(fn, MapExpr):
        return fn.eval_batch(X)
    return np.asarray(fn(np.asarray(X, dtype=float)), dtype=float)


def _tol(y) -> np.ndarray:
    """Matching tolerance for points of magnitude |y|."""
    return MATCH_REL * np.max(np.abs(y), axis=-1) + 1e-300


# ---------------------------------------------------------------- quotient maps


@dataclass
class QuotientMap:
    """Map source.region/Gamma -> target/Gamma' given by an orbit representative.

    ``rep`` takes a batch (N, n) and returns *some* point on each image orbit.
    """
    source: LinearQuotient
    region: Region
    target: LinearQuotient
    rep: Callable
    declared_lift: MapExpr | None = None

    @classmethod
    def from_lift(cls, source, region, target, lift: MapExpr) -> "QuotientMap":
        return cls(source, region, target, lift.eval_batch, lift)

    def rep_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.source.dim:
            raise DimMismatch(f"input of shape {X.shape}")
        return _batch(self.rep, X)

    def eval(self, u) -> np.ndarray:
        """Canonical representative of the image orbit of u."""
        return canonical_rep(self.target, self.rep_batch(np.asarray(u, dtype=float)[None])[0])

    def eval_batch(self, X) -> np.ndarray:
        return canonical_rep_batch(self.target, self.rep_batch(X))

    def well_defined_error(self, samples: int = 50, seed: int = 0) -> float:
        """max over samples and gamma of |eval(gamma u) - eval(u)|."""
        X = self.region.sample(np.random.default_rng(seed), samples)
        base = self.eval_batch(X)
        worst = 0.0
        for g in self.source.group.floats:
            Xg = X @ g.T
            ok = self.region.contains(Xg)
            if np.any(ok):
                worst = max(worst, float(np.max(np.abs(self.eval_batch(Xg[ok]) - base[ok]))))
        return worst


# ---------------------------------------------------------------- unique element


def _match_indices(G: FiniteMatrixGroup, X, Y) -> list[list[int]]:
    """For each row, the indices g with g x ~ y."""
    imgs = G.act(X)  # (N, |G|, n)
    err = np.max(np.abs(imgs - Y[:, None, :]), axis=2)
    tol = (_tol(Y) + MATCH_REL * np.max(np.abs(X), axis=1))[:, None]
    ok = err <= tol
    return [list(np.nonzero(row)[0]) for row in ok]


def _trivial_stabilizer_mask(G: FiniteMatrixGroup, X) -> np.ndarray:
    imgs = G.act(X)
    if G.order == 1:
        return np.ones(len(X), dtype=bool)
    err = np.max(np.abs(imgs[:, 1:, :] - X[:, None, :]), axis=2)
    return np.all(err > _tol(X)[:, None], axis=1)


def unique_group_element_index(h, U: Region, G: FiniteMatrixGroup, samples: int = 100,
                               seed: int = 0) -> int:
    X = U.sample(np.random.default_rng(seed), samples)
    Y = _batch(h, X)
    matches = _match_indices(G, X, Y)
    for x, m in zip(X, matches):
        if not m:
            raise NotOrbitPreserving(f"image of {x.tolist()} is off its orbit")
    regular = _trivial_stabilizer_mask(G, X)
    found = {m[0] for m, ok in zip(matches, regular) if ok}
    if not found:
        raise Ambiguous("no sample with trivial stabilizer")
    if len(found) > 1:
        raise Inconsistent(f"samples disagree: elements {sorted(int(i) for i in found)}")
    return int(found.pop())


def unique_group_element(h, U: Region, G: FiniteMatrixGroup, samples: int = 100,
                         seed: int = 0) -> np.ndarray:
    """The single g in G with h(x) = g x on U, found by orbit matching."""
    return G.elements[unique_group_element_index(h, U, G, samples, seed)]


# ---------------------------------------------------------------- path lifting


def _gnorm(gram, V) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", V, gram, V), 0.0))


def _nearest(orbits, prev, gram, tie_rel=TIE_REL):
    """Nearest orbit point to prev, row by row, with a tie flag."""
    d = _gnorm(gram, orbits - prev[:, None, :])
    order = np.argsort(d, axis=1, kind="stable")
    rows = np.arange(len(d))
    best = order[:, 0]
    d0 = d[rows, best]
    if d.shape[1] > 1:
        # ignore orbit points that coincide with the best one
        chosen = orbits[rows, best]
        sep = np.max(np.abs(orbits - chosen[:, None, :]), axis=2)
        same = sep <= _tol(chosen)[:, None] * 10
        d_other = np.where(same, np.inf, d)
        d1 = np.min(d_other, axis=1)
        tie = np.isfinite(d1) & (d1 - d0 <= tie_rel * d1)
    else:
        tie = np.zeros(len(d), dtype=bool)
    return orbits[rows, best], best, tie


def path_lift(f: QuotientMap, path, seed, tie_rel: float = TIE_REL,
              predict: bool = True) -> np.ndarray:
    """Continue a lift along ``path`` starting at ``seed``.

    Each step takes the image orbit point nearest (target Gamma-norm) to the
    previous lifted point, or with ``predict`` to its linear extrapolation
    2*prev - prevprev, which keeps the smooth branch where a path grazes a
    mirror of the source group.
    """
    path = np.asarray(path, dtype=float)
    seed = np.asarray(seed, dtype=float)
    G2 = f.target.group
    gram = f.target.gram_float
    Y = f.rep_batch(path)
    orbits = G2.act(Y)
    err = np.max(np.abs(orbits[0] - seed[None]), axis=1)
    if not np.any(err <= _tol(seed[None])[0] + MATCH_REL * (1 + np.abs(seed).max())):
        raise SeedOffOrbit(f"seed {seed.tolist()} is not on the image orbit of the first point")
    out = np.empty_like(Y)
    out[0] = orbits[0, int(np.argmin(err))]
    for k in range(1, len(path)):
        guess = out[k - 1:k]
        if predict and k >= 2:
            guess = 2 * out[k - 1:k] - out[k - 2:k - 1]
        val, _, tie = _nearest(orbits[k:k + 1], guess, gram, tie_rel)
        if tie[0]:
            raise StepTooLarge(f"ambiguous continuation at step {k}")
        out[k] = val[0]
    return out


def find_element(G: FiniteMatrixGroup, a, b) -> int | None:
    """Lowest index g with g a ~ b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    err = np.max(np.abs(G.act(a) - b[None]), axis=1)
    ok = np.nonzero(err <= 1e-6 * max(np.abs(b).max(), np.abs(a).max()) + 1e-300)[0]
    return int(ok[0]) if len(ok) else None


def monodromy(f: QuotientMap, loop, seed) -> np.ndarray:
    """Element g' with lifted end = g' * lifted start along the closed loop."""
    lifted = path_lift(f, loop, seed)
    i = find_element(f.target.group, lifted[0], lifted[-1])
    if i is None:
        raise NoGroupElement("lifted endpoint is off the start orbit")
    return f.target.group.elements[i]


def circle_loop(radius: float, steps: int = 400, dim: int = 2, center=None) -> np.ndarray:
    t = np.linspace(0.0, 2 * math.pi, steps + 1)
    pts = np.zeros((steps + 1, dim))
    pts[:, 0] = radius * np.cos(t)
    pts[:, 1] = radius * np.sin(t)
    pts[-1] = pts[0]
    if center is not None:
        pts += np.asarray(center, dtype=float)
    return pts


# ---------------------------------------------------------------- homomorphisms


def induced_homomorphism(ft, G: FiniteMatrixGroup, G2: FiniteMatrixGroup, U: Region,
                         samples: int = 100, seed: int = 0,
                         check_jacobian: bool = True) -> GroupHomomorphism:
    """h with ft(g x) = h(g) ft(x), from generator images by unanimous matching."""
    rng = np.random.default_rng(seed)
    X = U.sample(rng, samples)
    Y = _batch(ft, X)
    gens = _generators(G)
    images = {}
    for g in gens:
        Xg = X @ G.floats[g].T
        inside = U.contains(Xg)
        if not np.any(inside):
            raise NoConsistentImage(f"no sample stays in the region under generator {g}")
        Yg = _batch(ft, Xg[inside])
        cands = None
        for m in _match_indices(G2, Y[inside], Yg):
            cands = set(m) if cands is None else cands & set(m)
        if not cands:
            raise NoConsistentImage(f"generator {G.elements[g].tolist()} has no unanimous image")
        images[g] = min(cands)
    hom = homomorphism_from_images(G, G2, images) if gens else GroupHomomorphism(
        G, G2, tuple([0] * G.order))
    if check_jacobian and U.contains_point(np.zeros(G.dim)):
        L = jacobian_at(ft, np.zeros(G.dim))
        if L is not None and _well_conditioned(L):
            table = conjugation_table(L, G, G2)
            if table is not None and tuple(table) != hom.map:
                raise JacobianMismatch("orbit matching disagrees with L g L^-1")
    return hom


def jacobian_at(ft, u) -> np.ndarray | None:
    try:
        return nm.jacobian_fd(lambda x: _batch(ft, x[None])[0], u)
    except (EvaluationError, ArithmeticError):
        return None


def _well_conditioned(L, limit=1e8) -> bool:
    s = np.linalg.svd(L, compute_uv=False)
    return s[-1] > 0 and s[0] / s[-1] < limit


def conjugation_table(L, G: FiniteMatrixGroup, G2: FiniteMatrixGroup, tol: float = 1e-6):
    """Index of L g L^-1 in G2 for each g, or None if some conjugate is missing."""
    Linv = np.linalg.inv(L)
    out = []
    for g in G.floats:
        c = L @ g @ Linv
        d = np.sqrt(np.sum((G2.floats - c[None]) ** 2, axis=(1, 2)))
        i = int(np.argmin(d))
        if d[i] > tol * (1 + np.abs(c).max()):
            return None
        out.append(i)
    return out


def stabilizer_transport(ft, Q: LinearQuotient, Q2: LinearQuotient, u, tol: float = 1e-6):
    """(L, ok): L = d_u ft; ok iff L Gamma_u L^-1 equals Gamma'_{ft(u)} as a set.

    Stabilizers of different order give ok = False without requiring an
    invertible L; otherwise a singular L raises SingularJacobian.
    """
    u = np.asarray(u, dtype=float)
    L = jacobian_at(ft, u)
    u2 = _batch(ft, u[None])[0]
    s1 = stabilizer(Q.group, u)
    s2 = stabilizer(Q2.group, u2)
    if s1.order != s2.order:
        return L, False
    if L is None or not _well_conditioned(L):
        raise SingularJacobian(f"Jacobian at {u.tolist()} is not invertible")
    table = conjugation_table(L, s1, s2, tol)
    return L, table is not None and len(set(table)) == s2.order


def describe_hom(h: GroupHomomorphism | None) -> str:
    if h is None:
        return "undetermined"
    if h.is_trivial:
        return "trivial"
    same = h.source is h.target or (
        h.source.order == h.target.order and
        all(np.allclose(h.source.floats[i], h.target.floats[h.map[i]])
            for i in range(h.source.order)))
    if same and all(np.allclose(h.source.floats[i], h.target.floats[h.map[i]])
                    for i in range(h.source.order)):
        return "identity"
    return "injective" if h.is_injective else "map" + str(list(h.map))


def describe_matrix(m) -> str:
    m = nm.to_float(np.asarray(m))
    n = m.shape[0]
    if np.allclose(m, np.eye(n)):
        return "I"
    if np.allclose(m, -np.eye(n)):
        return "-I"
    rows = ["[" + ",".join(_fmt(v) for v in row) + "]" for row in m]
    return "[" + ",".join(rows) + "]"


def _fmt(v: float) -> str:
    r = round(v)
    return str(int(r)) if abs(v - r) < 1e-9 else f"{v:.6g}"


# ---------------------------------------------------------------- polar grid


def _chol(gram):
    return np.linalg.cholesky(gram).T  # C with |Cx| = ||x||_gram


def polar_directions(G: FiniteMatrixGroup, gram: np.ndarray, base: int = BASE_DIRECTIONS,
                     seed: int = 0):
    """Unit directions (Gamma-norm), closed under G, with adjacency and G-permutations.

    Returns (dirs (M, n), edges (E, 2), perms (|G|, M)).
    """
    n = G.dim
    C = _chol(gram)
    Cinv = np.linalg.inv(C)
    gz = np.einsum("ij,gjk,kl->gil", C, G.floats, Cinv)  # orthogonal in z coordinates
    per_orbit = max(8, int(math.ceil(base / G.order)))
    if n == 1:
        z = np.array([[1.0], [-1.0]])
    elif n == 2:
        t = 2 * math.pi * (np.arange(per_orbit) + 0.2718) / per_orbit
        z = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(per_orbit * 2, n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
    allz = np.concatenate([z @ g.T for g in gz])
    allz /= np.linalg.norm(allz, axis=1, keepdims=True)
    # dedupe
    tree = cKDTree(allz)
    keep = np.ones(len(allz), dtype=bool)
    for i, j in sorted(tree.query_pairs(1e-9)):
        if keep[i]:
            keep[j] = False
    zs = allz[keep]
    if n == 2:
        zs = zs[np.argsort(np.arctan2(zs[:, 1], zs[:, 0]), kind="stable")]
        m = len(zs)
        edges = np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1)
    elif n == 1:
        edges = np.zeros((0, 2), dtype=int)
    else:
        k = min(2 * n + 2, len(zs) - 1)
        _, nb = cKDTree(zs).query(zs, k + 1)
        pairs = {(min(i, j), max(i, j)) for i in range(len(zs)) for j in nb[i, 1:]}
        edges = np.array(sorted(pairs), dtype=int)
    ztree = cKDTree(zs)
    perms = []
    for g in gz:
        d, idx = ztree.query(zs @ g.T)
        if np.any(d > 1e-6):
            raise ValueError("direction set is not closed under the group")
        perms.append(idx)
    return zs @ Cinv.T, edges, np.array(perms)


def radial_extent(region: Region, dirs: np.ndarray, resolution: int = 4000) -> tuple[float, float]:
    """(r_in, r_out) in direction-scale units such that r * d lies in the region
    for every direction d and r_in < r < r_out."""
    lo, hi = region.bbox()
    scale = float(np.max(np.maximum(np.abs(lo), np.abs(hi)))) * math.sqrt(len(lo))
    dn = np.linalg.norm(dirs, axis=1)
    tmax = scale / float(dn.min())
    ts = np.linspace(tmax / resolution, tmax, resolution)
    pts = ts[:, None, None] * dirs[None]
    inside = region.contains(pts.reshape(-1, dirs.shape[1])).reshape(len(ts), len(dirs))
    inb = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=2)
    inside &= inb
    r_in, r_out = 0.0, math.inf
    for j in range(len(dirs)):
        col = inside[:, j]
        if not col.any():
            return 0.0, 0.0
        first = int(np.argmax(col))
        run_end = first + int(np.argmin(col[first:])) if not col[first:].all() else len(col)
        start = ts[first - 1] if first > 0 else 0.0
        r_in = max(r_in, start)
        r_out = min(r_out, ts[run_end - 1])
    return r_in, r_out


# ---------------------------------------------------------------- results


@dataclass
class Piece:
    label: int
    r_min: float
    r_max: float
    band: int
    nodes: int
    homomorphism: GroupHomomorphism | None


@dataclass
class Obstruction:
    kind: str
    description: str
    element: np.ndarray | None = None
    pieces: list = field(default_factory=list)


@dataclass
class LiftReport:
    status: str
    lift: "SampledLift | None" = None
    homomorphism: GroupHomomorphism | None = None
    obstruction: Obstruction | None = None
    pieces: list = field(default_factory=list)

    def summary(self) -> str:
        if self.status == "Lifted":
            return f"Lifted: homomorphism {describe_hom(self.homomorphism)}"
        if self.status == "NonLiftable":
            return f"NonLiftable: {self.obstruction.description}"
        return f"Inconclusive: {self.obstruction.description if self.obstruction else ''}".rstrip()


class SampledLift:
    """Lift known on polar grid nodes, evaluated elsewhere by short continuation."""

    def __init__(self, f: QuotientMap, points, values, usable, steps: int = 8):
        self.f = f
        self.points = np.asarray(points)
        self.values = np.asarray(values)
        self.steps = steps
        self._idx = np.nonzero(usable)[0]
        self._tree = cKDTree(self.points[self._idx])

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        _, j = self._tree.query(X)
        start = self.points[self._idx[j]]
        cur = self.values[self._idx[j]]
        G2 = self.f.target.group
        gram = self.f.target.gram_float
        for s in range(1, self.steps + 1):
            P = start + (X - start) * (s / self.steps)
            O = G2.act(self.f.rep_batch(P))
            cur, _, _ = _nearest(O, cur, gram)
        return cur[0] if single else cur

    def eval_batch(self, X):
        return self(X)


# ---------------------------------------------------------------- radial extension


@dataclass
class GraphLift:
    """Continuation of a lift over a sample graph."""
    values: np.ndarray
    regular: np.ndarray
    comp: np.ndarray
    edges: np.ndarray
    bad_edge: tuple | None = None  # first (a, b, continued value at b)
    monodromy_index: int | None = None
    bad: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    bad_values: np.ndarray | None = None


def regular_mask(Y, G2: FiniteMatrixGroup) -> np.ndarray:
    """Nodes whose target orbit has full size and usable magnitude."""
    O = G2.act(Y)
    if G2.order > 1:
        diff = np.max(np.abs(O[:, :, None, :] - O[:, None, :, :]), axis=3)
        iu = np.triu_indices(G2.order, 1)
        regular = np.all(diff[:, iu[0], iu[1]] > 10 * _tol(Y)[:, None], axis=1)
    else:
        regular = np.ones(len(Y), dtype=bool)
    # values this small have lost their relative precision
    return regular & (np.max(np.abs(Y), axis=1) > TINY)


def graph_lift(Z, Y, G2: FiniteMatrixGroup, gram_t, edges, rank=None, pins=None,
               tie_rel: float = TIE_REL) -> GraphLift:
    """Lift orbit data Y over a graph on source points Z (aligned coordinates).

    ``edges`` are undirected node pairs, ``rank`` orders candidate seeds (higher
    first) and ``pins`` maps node -> fixed lifted value.  Edges between
    regular nodes whose continuation is a tie are dropped; each remaining
    component is continued from its best seed, then every usable edge is
    re-checked.
    """
    N = len(Y)
    O = G2.act(Y)
    regular = regular_mask(Y, G2)
    E = np.asarray(edges, dtype=int).reshape(-1, 2)
    E = E[regular[E[:, 0]] & regular[E[:, 1]]]
    if len(E):
        # the tie test does not depend on which orbit point represents a node
        _, _, tie_ab = _nearest(O[E[:, 1]], Y[E[:, 0]], gram_t, tie_rel)
        _, _, tie_ba = _nearest(O[E[:, 0]], Y[E[:, 1]], gram_t, tie_rel)
        E = E[~(tie_ab | tie_ba)]
    adj = coo_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(N, N)).tocsr()
    adj = adj + adj.T
    _, comp = connected_components(adj, directed=False)

    values = Y.copy()
    assigned = ~regular
    pins = pins or {}
    for v, val in pins.items():
        values[v] = val
    rank = np.zeros(N) if rank is None else np.asarray(rank, dtype=float)
    reg_nodes = np.nonzero(regular)[0]
    ranked = reg_nodes[np.argsort(-rank[reg_nodes], kind="stable")]
    seeds, seen = [], set()
    for v in [v for v in pins if regular[v]] + list(ranked):
        if comp[v] not in seen:
            seen.add(comp[v])
            seeds.append(int(v))
    nbrs = _neighbour_matrix(adj, N)
    seeds = np.array(seeds, dtype=int)
    assigned[seeds] = True
    # multi-source breadth-first levels; each node remembers one parent
    depth = np.full(N, -1)
    depth[seeds] = 0
    parent = np.arange(N)
    frontier = seeds
    while len(frontier):
        rows = adj[frontier]
        cand = rows.indices
        par = np.repeat(frontier, np.diff(rows.indptr))
        fresh = depth[cand] < 0
        cand, first = np.unique(cand[fresh], return_index=True)
        if len(cand) == 0:
            break
        depth[cand] = depth[frontier[0]] + 1
        parent[cand] = par[fresh][first]
        guess = _best_prediction(values, assigned, Z, nbrs, cand, parent[cand])
        values[cand], _, _ = _nearest(O[cand], guess, gram_t)
        assigned[cand] = True
        frontier = cand
    out = GraphLift(values, regular, comp, E)
    if len(E):
        # check both directions; a direction without an aligned predictor only
        # counts when the other direction has none either
        checks = []
        for a, b in ((E[:, 0], E[:, 1]), (E[:, 1], E[:, 0])):
            guess, has = _predict(values, assigned, Z, nbrs, a, b, with_flag=True)
            cont, _, _ = _nearest(O[b], guess, gram_t)
            bad = np.max(np.abs(cont - values[b]), axis=1) > 10 * _tol(values[b])
            checks.append((a, b, cont, bad, has))
        (_, _, _, bad1, has1), (_, _, _, bad2, has2) = checks
        neither = ~has1 & ~has2
        flags = [(bad1 & (has1 | neither)), (bad2 & has2)]
        bad_a, bad_b, bad_c = [], [], []
        for (a, b, cont, _, _), flag in zip(checks, flags):
            bad_a.append(a[flag])
            bad_b.append(b[flag])
            bad_c.append(cont[flag])
        out.bad = np.stack([np.concatenate(bad_a), np.concatenate(bad_b)], axis=1)
        out.bad_values = np.concatenate(bad_c)
        if len(out.bad):
            a, b = out.bad[0]
            out.bad_edge = (int(a), int(b), out.bad_values[0])
            out.monodromy_index = find_element(G2, values[b], out.bad_values[0])
    return out


def radial_lift_extension(f: QuotientMap, rho: float | None = None, f_rho=None, *,
                          growth: float = GROWTH, substeps: int = SUBSTEPS,
                          base_directions: int = BASE_DIRECTIONS, tie_rel: float = TIE_REL,
                          raise_on_obstruction: bool = False) -> LiftReport:
    """Grow a lift outward over spheres S(0, r), r = rho * growth^(k/substeps).

    Radii are measured in the averaged source Gamma-norm (the Euclidean norm
    for orthogonal groups).  ``f_rho`` (optional) is a lift near the
    innermost sphere that pins the choice of lift; without it the most
    generic regular node keeps the orbit point returned by ``f.rep``.  The
    extension stops at the boundary of ``f.region``.
    """
    G = f.source.group
    G2 = f.target.group
    gram_s = f.source.gram_float / G.order
    gram_t = f.target.gram_float
    dirs, ang_edges, perms = polar_directions(G, gram_s, base_directions)
    r_in, r_out = radial_extent(f.region, dirs)
    if r_out <= r_in:
        raise EvaluationError("region contains no sphere around the origin")
    if rho is None:
        rho = r_in * 1.02 if r_in > 0 else 0.05 * r_out
    rho = max(rho, r_in * 1.005)
    ratio = growth ** (1.0 / substeps)
    radii = [rho]
    while radii[-1] * ratio < r_out * OUTER_MARGIN:
        radii.append(radii[-1] * ratio)
    radii = np.array(radii)
    M, K = len(dirs), len(radii)
    P = (radii[:, None, None] * dirs[None]).reshape(-1, G.dim)
    Y = f.rep_batch(P)
    N = len(P)

    node = np.arange(N).reshape(K, M)
    edges = [np.stack([node[:, a], node[:, b]], axis=-1).reshape(-1, 2) for a, b in ang_edges]
    edges.append(np.stack([node[:-1].ravel(), node[1:].ravel()], axis=1))
    E = np.concatenate(edges)

    # seeds sit as far from the source mirrors/fixed sets as possible, so the
    # first continuation steps never cross a wall without a prediction
    genericity = np.tile(_genericity(G, dirs), K)
    pins = {}
    if f_rho is not None:
        ref = _batch(f_rho, P[:M])
        snapped, _, _ = _nearest(G2.act(Y[:M]), ref, gram_t)
        if np.any(np.max(np.abs(snapped - ref), axis=1) > 1e-6 * (1 + np.abs(ref).max())):
            raise NotOrbitPreserving("f_rho does not lift f on the innermost sphere")
        first = np.nonzero(regular_mask(Y[:M], G2))[0]
        if len(first):
            pin = int(first[np.argmax(genericity[first])])
            pins[pin] = snapped[pin]
    Z = P @ _chol(gram_s).T
    gl = graph_lift(Z, Y, G2, gram_t, E, genericity, pins, tie_rel)
    values, regular, comp = gl.values, gl.regular, gl.comp

    if gl.bad_edge is not None:
        gi = gl.monodromy_index
        elem = G2.elements[gi] if gi is not None else None
        desc = f"monodromy {describe_matrix(elem) if elem is not None else '?'}"
        if raise_on_obstruction:
            raise ObstructionFound(desc)
        return LiftReport("NonLiftable", obstruction=Obstruction("monodromy", desc, elem),
                          pieces=_pieces(comp, regular, P, radii, M, {}))

    homs = _piece_homomorphisms(G, G2, comp, regular, values, perms, K, M)
    pieces = _pieces(comp, regular, P, radii, M, homs)
    labels = sorted(homs, key=lambda c: (-int(np.sum(comp == c)), c))
    pin_comp = [comp[v] for v in pins if regular[v]]
    if pin_comp and pin_comp[0] in homs:
        labels.remove(pin_comp[0])
        labels.insert(0, pin_comp[0])
    determined = [c for c in labels if homs[c] is not None]
    if not determined:
        if np.any(regular):
            return LiftReport("Inconclusive", obstruction=Obstruction(
                "undetermined", "no piece determines a homomorphism"), pieces=pieces)
        lift = SampledLift(f, P, values, np.ones(N, dtype=bool))
        return LiftReport("Lifted", lift=lift, homomorphism=None, pieces=pieces)
    ref = homs[determined[0]]
    corrections = {determined[0]: 0}
    conflicts = []
    for c in determined[1:]:
        g = _aligning_element(G2, homs[c], ref)
        if g is None:
            conflicts.append(c)
        else:
            corrections[c] = g
    if conflicts:
        desc = _conflict_description(pieces)
        if raise_on_obstruction:
            raise ObstructionFound(desc)
        return LiftReport("NonLiftable", obstruction=Obstruction(
            "conflicting-homomorphisms", desc, pieces=pieces), pieces=pieces)
    loose = [c for c in labels if homs[c] is None]
    loose_nodes = int(np.sum(np.isin(comp, loose) & regular))
    if loose_nodes > UNDETERMINED_SHARE * int(np.sum(regular)):
        return LiftReport("Inconclusive", obstruction=Obstruction(
            "undetermined", "some pieces do not determine a homomorphism"), pieces=pieces)
    for c, g in corrections.items():
        if g:
            sel = (comp == c) & regular
            values[sel] = values[sel] @ G2.floats[g].T
    usable = regular & ~np.isin(comp, loose)
    lift = SampledLift(f, P, values, usable if np.any(usable) else np.ones(N, dtype=bool))
    return LiftReport("Lifted", lift=lift, homomorphism=ref, pieces=pieces)


def _genericity(G: FiniteMatrixGroup, dirs) -> np.ndarray:
    """min over g != 1 of |g d - d| for each direction (0 on fixed sets)."""
    if G.order == 1:
        return np.ones(len(dirs))
    imgs = np.einsum("gij,mj->mgi", G.floats[1:], dirs)
    return np.min(np.linalg.norm(imgs - dirs[:, None, :], axis=2), axis=1)


def _neighbour_matrix(adj, N) -> np.ndarray:
    """Padded (N, max degree) neighbour table; -1 marks padding."""
    adj = adj.tocsr()
    deg = np.diff(adj.indptr)
    out = np.full((N, max(int(deg.max(initial=0)), 1)), -1, dtype=int)
    for v in np.nonzero(deg)[0]:
        nb = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        out[v, :len(nb)] = nb
    return out


def _best_prediction(values, assigned, Z, nbrs, vs, parents, min_cos=0.9):
    """Prediction for each v through whichever lifted neighbour a has the best
    aligned predecessor; falls back to the value at ``parents``."""
    cand = nbrs[vs]
    valid = cand >= 0
    valid[valid] = assigned[cand[valid]]
    rows, cols = np.nonzero(valid)
    out = values[parents].copy()
    if len(rows) == 0:
        return out
    A = cand[rows, cols]
    B = vs[rows]
    guess, cos = _predict(values, assigned, Z, nbrs, A, B, min_cos, with_cos=True)
    for k in np.argsort(cos, kind="stable"):  # best alignment written last
        if cos[k] > min_cos:
            out[rows[k]] = guess[k]
    return out


def _predict(values, assigned, Z, nbrs, A, B, min_cos=0.9, with_flag=False, with_cos=False):
    """Linear extrapolation of the lift from a to b through an aligned lifted
    neighbour c of a (c, a, b nearly collinear); falls back to values[a]."""
    cand = nbrs[A]  # (E, d)
    valid = (cand >= 0) & (cand != B[:, None])
    safe = np.where(valid, cand, 0)
    valid &= assigned[safe]
    step = Z[B] - Z[A]
    back = Z[A][:, None, :] - Z[safe]
    blen = np.linalg.norm(back, axis=2)
    slen = np.linalg.norm(step, axis=1)
    with np.errstate(all="ignore"):
        cos = np.einsum("edn,en->ed", back, step) / (blen * slen[:, None])
    cos = np.where(valid & np.isfinite(cos), cos, -np.inf)
    best = np.argmax(cos, axis=1)
    rows = np.arange(len(A))
    c = safe[rows, best]
    va = values[A]
    diff = va - values[c]
    # extrapolate only while the lift changes slowly relative to its size
    smooth = np.linalg.norm(diff, axis=1) <= MAX_RELATIVE_STEP * np.linalg.norm(va, axis=1)
    ok = (cos[rows, best] > min_cos) & smooth
    scale = np.where(ok, np.einsum("en,en->e", back[rows, best], step) /
                     np.where(ok, blen[rows, best] ** 2, 1.0), 0.0)
    guess = va + scale[:, None] * diff
    if with_cos:
        return guess, np.where(smooth, cos[rows, best], -np.inf)
    if with_flag:
        return guess, ok
    return guess


def _piece_homomorphisms(G, G2, comp, regular, values, perms, K, M):
    gens = _generators(G)
    out = {}
    for c in sorted(set(comp[regular].tolist())):
        images = {}
        ok = True
        for g in gens:
            src = np.arange(K * M)
            dst = (src // M) * M + perms[g][src % M]
            sel = regular[src] & regular[dst] & (comp[src] == c) & (comp[dst] == c)
            if not np.any(sel):
                ok = False
                break
            a, b = values[src[sel]], values[dst[sel]]
            cands = None
            for m in _match_indices(G2, a, b):
                cands = set(m) if cands is None else cands & set(m)
            if not cands:
                ok = False
                break
            images[g] = min(cands)
        if not ok:
            out[c] = None
            continue
        try:
            out[c] = homomorphism_from_images(G, G2, images) if gens else GroupHomomorphism(
                G, G2, tuple([0] * G.order))
        except NotHomomorphism:
            out[c] = None
    return out


def _aligning_element(G2, h, ref) -> int | None:
    """g' with g' h(g) g'^-1 = ref(g) for all g, if one exists."""
    t = G2.table
    inv = G2.inverse
    for k in range(G2.order):
        if all(t[t[k, h.map[i]], inv[k]] == ref.map[i] for i in range(len(h.map))):
            return k
    return None


def _pieces(comp, regular, P, radii, M, homs):
    out = []
    r = np.linalg.norm(P, axis=1)
    for c in sorted(set(comp[regular].tolist())):
        sel = (comp == c) & regular
        rs = r[sel]
        mid = float(np.median(rs))
        out.append(Piece(int(c), float(rs.min()), float(rs.max()), int(band_index(mid)),
                         int(sel.sum()), homs.get(c)))
    return out


def _conflict_description(pieces) -> str:
    pieces = [p for p in pieces if p.homomorphism is not None]
    if pieces and all(p.band >= 1 for p in pieces):
        seen = {}
        for p in pieces:
            seen.setdefault(p.band, set()).add(describe_hom(p.homomorphism))
        parts = [f"n={n} ({'/'.join(sorted(h))})" for n, h in sorted(seen.items())]
        return "annuli " + ", ".join(parts)
    parts = [f"r=[{p.r_min:.4g},{p.r_max:.4g}] ({describe_hom(p.homomorphism)})"
             for p in sorted(pieces, key=lambda p: p.r_min)]
    return "pieces " + ", ".join(parts)
