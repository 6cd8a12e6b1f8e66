"""The quotient R^n / Gamma: orbit equality, canonical points, slice charts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import numeric as nm
from .errors import AmbiguousCanonical, DimMismatch
from .expr import Const, Coord, Expr, MapExpr, Region, grid_labels
from .group import (FiniteMatrixGroup, InvariantGram, gamma_norm, invariant_gram, stabilizer,
                    vector_mode)

SAFETY = 0.49
ROUNDOFF = 1e-12


@dataclass(frozen=True)
class LinearQuotient:
    group: FiniteMatrixGroup
    gram: InvariantGram = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gram", invariant_gram(self.group))

    @property
    def dim(self) -> int:
        return self.group.dim

    @property
    def gram_float(self) -> np.ndarray:
        return nm.to_float(self.gram.gram)

    def norm(self, v) -> float:
        """Float Gamma-norm of v (always the norm, never its square)."""
        v = nm.to_float(np.asarray(v))
        return float(math.sqrt(max(v @ self.gram_float @ v, 0.0)))

    def point(self, u) -> "QuotientPoint":
        return QuotientPoint(self, canonical_rep(self, u))


@dataclass(frozen=True)
class QuotientPoint:
    quotient: LinearQuotient
    rep: np.ndarray


def _check(Q: LinearQuotient, *vs):
    for v in vs:
        if np.asarray(v).shape != (Q.dim,):
            raise DimMismatch(f"vector of shape {np.asarray(v).shape} in R^{Q.dim}")


def same_orbit(Q: LinearQuotient, u, v) -> bool:
    _check(Q, u, v)
    ue, mode_u = vector_mode(Q.group, u)
    ve, mode_v = vector_mode(Q.group, v)
    if mode_u.exact and mode_v.exact:
        return any(bool(np.all(g @ ue == ve)) for g in Q.group.elements)
    tol = Q.group.mode.tol
    imgs = Q.group.act(nm.to_float(ue))
    return bool(np.any(np.max(np.abs(imgs - nm.to_float(ve)[None]), axis=1) <= tol))


def _lex_key_exact(v):
    return tuple(v.tolist())


def canonical_rep(Q: LinearQuotient, u) -> np.ndarray:
    """Lexicographically greatest orbit point (first coordinate most significant)."""
    _check(Q, u)
    ue, mode = vector_mode(Q.group, u)
    if mode.exact:
        return max((g @ ue for g in Q.group.elements), key=_lex_key_exact)
    tol = mode.tol
    best = None
    for y in Q.group.act(ue):
        if best is None:
            best = y
            continue
        if _lex_greater(y, best, tol):
            best = y
    return best


def _lex_greater(a, b, tol) -> bool:
    if float(np.max(np.abs(a - b))) <= tol:
        return False
    for ai, bi in zip(a, b):
        d = ai - bi
        noise = ROUNDOFF * (1.0 + abs(ai) + abs(bi))
        if abs(d) <= noise:
            continue
        if abs(d) <= tol:
            raise AmbiguousCanonical(
                f"orbit points {a.tolist()} and {b.tolist()} differ by {abs(d):.2e} <= tol "
                "in the deciding coordinate")
        return d > 0
    return False


def canonical_rep_batch(Q: LinearQuotient, X) -> np.ndarray:
    """Float canonical representatives of many points (no ambiguity check)."""
    X = np.asarray(X, dtype=float)
    imgs = Q.group.act(X)  # (N, |G|, n)
    idx = np.zeros(X.shape[0], dtype=int)
    best = imgs[:, 0]
    for g in range(1, imgs.shape[1]):
        cand = imgs[:, g]
        greater = np.zeros(X.shape[0], dtype=bool)
        decided = np.zeros(X.shape[0], dtype=bool)
        for i in range(X.shape[1]):
            d = cand[:, i] - best[:, i]
            noise = ROUNDOFF * (1.0 + np.abs(cand[:, i]) + np.abs(best[:, i]))
            sig = (np.abs(d) > noise) & ~decided
            greater |= sig & (d > 0)
            decided |= sig
        idx = np.where(greater, g, idx)
        best = np.where(greater[:, None], cand, best)
    return best


def orbit_gaps(Q: LinearQuotient, u) -> tuple[list[int], list[float]]:
    """(indices of elements outside the stabilizer, their ||gu - u||_Gamma)."""
    ue, mode = vector_mode(Q.group, u)
    outside, gaps = [], []
    for i, g in enumerate(Q.group.elements if mode.exact else Q.group.floats):
        d = g @ ue - ue
        if mode.exact:
            if all(x == 0 for x in d):
                continue
            sq = gamma_norm(Q.gram, d)
            gaps.append(math.sqrt(float(sq)))
        else:
            if float(np.max(np.abs(d))) <= mode.tol:
                continue
            gaps.append(Q.norm(d))
        outside.append(i)
    return outside, gaps


def slice_radius(Q: LinearQuotient, u, safety: float = SAFETY) -> float:
    """safety * min over g outside Gamma_u of ||g u - u||_Gamma; inf when Gamma_u = Gamma."""
    _check(Q, u)
    if not 0 < safety < 0.5:
        raise ValueError("safety must lie in (0, 0.5)")
    _, gaps = orbit_gaps(Q, u)
    return math.inf if not gaps else safety * min(gaps)


@dataclass(frozen=True)
class SliceChart:
    center: np.ndarray
    stabilizer: FiniteMatrixGroup
    radius: float
    chart_map: MapExpr
    gram: np.ndarray

    def __call__(self, x):
        return self.chart_map(x)


def squash_map(center, radius: float, gram: np.ndarray) -> MapExpr:
    """x -> center + radius * x / sqrt(1 + x^T gram x); a translate when radius = inf."""
    center = nm.to_float(np.asarray(center))
    n = len(center)
    xs = [Coord(i) for i in range(n)]
    if math.isinf(radius):
        return MapExpr(n, [Const(float(center[i])) + xs[i] for i in range(n)])
    q: Expr = Const(1.0)
    for i in range(n):
        for j in range(n):
            if gram[i, j] != 0:
                q = q + Const(float(gram[i, j])) * xs[i] * xs[j]
    denom = q ** Const(0.5)
    return MapExpr(n, [Const(float(center[i])) + Const(float(radius)) * xs[i] / denom
                       for i in range(n)])


def slice_chart(Q: LinearQuotient, u, safety: float = SAFETY) -> SliceChart:
    """Centred Gamma_u-equivariant chart R^n -> B(u, eps).

    The squash uses the Gamma-norm, which is Gamma_u-invariant as well and
    keeps the image inside the Gamma-norm ball of radius eps.
    """
    _check(Q, u)
    eps = slice_radius(Q, u, safety)
    stab = stabilizer(Q.group, u)
    g = Q.gram_float
    return SliceChart(nm.to_float(np.asarray(u)), stab, eps, squash_map(u, eps, g), g)


def slice_collisions(Q: LinearQuotient, u, eps: float, X: np.ndarray) -> int:
    """Points x in B(u, eps) with some g x in B(u, eps) not reachable by Gamma_u."""
    uf = nm.to_float(np.asarray(u))
    stab = stabilizer(Q.group, u)
    gram = Q.gram_float
    bad = 0
    for x in np.asarray(X, dtype=float):
        d = x - uf
        if math.sqrt(max(d @ gram @ d, 0.0)) >= eps:
            continue
        stab_imgs = stab.act(x)
        for y in Q.group.act(x):
            e = y - uf
            if math.sqrt(max(e @ gram @ e, 0.0)) < eps:
                tol = 1e-9 * (1 + np.abs(y).max())
                if not np.any(np.max(np.abs(stab_imgs - y[None]), axis=1) <= tol):
                    bad += 1
                    break
    return bad


# ---------------------------------------------------------------- connectivity


def quotient_graph_components(region: Region, G: FiniteMatrixGroup, points: int = 64):
    """Component counts (region grid, quotient grid) for a G-invariant region.

    The quotient graph adds an edge between each grid node and the node
    nearest to each of its G-images.
    """
    nodes, h = region.grid(points)
    if len(nodes) == 0:
        return 0, 0
    n_region, _ = grid_labels(nodes, h)
    tree = cKDTree(nodes)
    pairs = tree.query_pairs(r=1.01 * h, output_type="ndarray")
    rows = [pairs[:, 0]] if len(pairs) else []
    cols = [pairs[:, 1]] if len(pairs) else []
    for g in G.floats[1:]:
        d, j = tree.query(nodes @ g.T)
        ok = d <= h
        rows.append(np.nonzero(ok)[0])
        cols.append(j[ok])
    m = len(nodes)
    r = np.concatenate(rows) if rows else np.zeros(0, int)
    c = np.concatenate(cols) if cols else np.zeros(0, int)
    adj = coo_matrix((np.ones(len(r)), (r, c)), shape=(m, m))
    n_quot, _ = connected_components(adj, directed=False)
    return n_region, n_quot
