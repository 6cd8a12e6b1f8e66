"""Finite subgroups of GL(n, R) given by an explicit element list."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import numeric as nm
from .errors import BudgetExceeded, DimMismatch, NonSquare, NotFinite, NotHomomorphism, Singular
from .numeric import Mode

DEFAULT_CAP = 10_000
DEFAULT_BUDGET = 10**6


class FiniteMatrixGroup:
    """Element list (identity first) plus multiplication table.

    ``table[i, j]`` is the index of ``elements[i] @ elements[j]``.  Treat
    instances as immutable.
    """

    def __init__(self, elements, table, mode: Mode, generators=()):
        self.elements = tuple(elements)
        self.table = np.asarray(table, dtype=int)
        self.mode = mode
        self.generators = tuple(int(g) for g in generators)
        self.dim = self.elements[0].shape[0]
        self.floats = np.stack([nm.to_float(g) for g in self.elements])
        n = len(self.elements)
        self.inverse = np.array([int(np.nonzero(self.table[i] == 0)[0][0]) for i in range(n)])
        self._keys = None
        if mode.exact:
            self._keys = {_key(g): i for i, g in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    @property
    def order(self) -> int:
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __repr__(self):
        return f"FiniteMatrixGroup(order={self.order}, dim={self.dim}, mode={self.mode.name})"

    def index_of(self, m) -> int | None:
        m = np.asarray(m)
        if self._keys is not None and nm.is_exact(m):
            return self._keys.get(_key(m))
        d = self.floats - nm.to_float(m)[None]
        dist = np.sqrt(np.sum(d * d, axis=(1, 2)))
        i = int(np.argmin(dist))
        return i if dist[i] <= self.mode.tol * math.sqrt(self.dim) else None

    def element_order(self, i: int) -> int:
        k, j = 1, i
        while j != 0:
            j = self.table[j, i]
            k += 1
        return k

    def subgroup(self, indices) -> "FiniteMatrixGroup":
        """Subgroup on ``indices`` (must be closed; order of indices is kept)."""
        idx = [int(i) for i in indices]
        if 0 not in idx:
            raise ValueError("subgroup must contain the identity")
        idx.remove(0)
        idx.insert(0, 0)
        pos = {g: k for k, g in enumerate(idx)}
        try:
            table = [[pos[int(self.table[a, b])] for b in idx] for a in idx]
        except KeyError:
            raise ValueError("indices are not closed under multiplication") from None
        return FiniteMatrixGroup([self.elements[i] for i in idx], table, self.mode,
                                 generators=range(1, len(idx)))

    def act(self, x) -> np.ndarray:
        """All images gamma @ x (float).  x: (n,) -> (|G|, n); (N, n) -> (N, |G|, n)."""
        x = nm.to_float(np.asarray(x))
        if x.ndim == 1:
            return self.floats @ x
        return np.einsum("gij,nj->ngi", self.floats, x)


def _key(m):
    return tuple(m.ravel().tolist())


def _as_square(g, mode):
    arr = nm.as_array(g, mode)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise NonSquare(f"generator shape {arr.shape}")
    return arr


def close_generators(gens, cap: int = DEFAULT_CAP, mode: Mode | None = None,
                     dim: int | None = None) -> FiniteMatrixGroup:
    """Breadth-first closure of ``gens`` under products.

    The identity comes first, then elements in discovery order.  Raises
    :class:`NotFinite` once more than ``cap`` elements appear.
    """
    gens = list(gens)
    if mode is None:
        mode = nm.infer_mode(*gens) if gens else nm.EXACT
    mats = [_as_square(g, mode) for g in gens]
    if not mats:
        if dim is None:
            raise ValueError("dimension required for an empty generator list")
        n = dim
    else:
        n = mats[0].shape[0]
    for g in mats:
        if g.shape[0] != n:
            raise DimMismatch("generators of unequal dimension")
        det = nm.determinant(g, mode)
        if (det == 0) if mode.exact else abs(det) <= mode.tol:
            raise Singular(f"generator is not invertible: {g.tolist()}")

    elements = [nm.identity(n, mode)]
    keys = {_key(elements[0]): 0} if mode.exact else None
    stack = np.eye(n)[None] if not mode.exact else None

    def lookup(m):
        nonlocal stack
        if mode.exact:
            return keys.get(_key(m))
        d = stack - m[None]
        dist = np.sqrt(np.sum(d * d, axis=(1, 2)))
        i = int(np.argmin(dist))
        return i if dist[i] <= mode.tol * math.sqrt(n) else None

    def add(m):
        nonlocal stack
        elements.append(m)
        if mode.exact:
            keys[_key(m)] = len(elements) - 1
        else:
            stack = np.concatenate([stack, m[None]])
        if len(elements) > cap:
            raise NotFinite(f"closure exceeds {cap} elements")
        return len(elements) - 1

    gen_idx = []
    for g in mats:
        i = lookup(g)
        gen_idx.append(add(g) if i is None else i)
    head = 0
    while head < len(elements):
        e = elements[head]
        for g in mats:
            p = e @ g
            if lookup(p) is None:
                add(p)
        head += 1

    size = len(elements)
    table = np.zeros((size, size), dtype=int)
    for i in range(size):
        for j in range(size):
            k = lookup(elements[i] @ elements[j])
            if k is None:
                raise NotFinite("products leave the element set (tolerance too tight?)")
            table[i, j] = k
    return FiniteMatrixGroup(elements, table, mode, generators=sorted(set(gen_idx) - {0}))


def vector_mode(G: FiniteMatrixGroup, u) -> tuple[np.ndarray, Mode]:
    """Vector in the comparison mode for G: exact only if both are rational."""
    u = np.asarray(u, dtype=object)
    if u.ndim != 1 or u.shape[0] != G.dim:
        raise DimMismatch(f"vector of shape {u.shape} for dimension {G.dim}")
    if G.mode.exact and all(nm._is_rational(x) for x in u):
        return nm.as_array(u, nm.EXACT), G.mode
    approx = G.mode if not G.mode.exact else Mode(False, G.mode.tol)
    return nm.to_float(np.asarray(u, dtype=float) if not nm.is_exact(u) else u), approx


def images(G: FiniteMatrixGroup, u, mode: Mode) -> list[np.ndarray]:
    if mode.exact:
        return [g @ u for g in G.elements]
    return list(G.floats @ u)


def stabilizer(G: FiniteMatrixGroup, u) -> FiniteMatrixGroup:
    u, mode = vector_mode(G, u)
    keep = [i for i, y in enumerate(images(G, u, mode)) if nm.vectors_equal(y, u, mode)]
    return G.subgroup(keep)


def stabilizer_indices(G: FiniteMatrixGroup, u) -> list[int]:
    u, mode = vector_mode(G, u)
    return [i for i, y in enumerate(images(G, u, mode)) if nm.vectors_equal(y, u, mode)]


def orbit(G: FiniteMatrixGroup, u) -> list[np.ndarray]:
    """Distinct points gamma*u, in element order."""
    u, mode = vector_mode(G, u)
    pts: list[np.ndarray] = []
    for y in images(G, u, mode):
        if not any(nm.vectors_equal(y, p, mode) for p in pts):
            pts.append(y)
    return pts


@dataclass(frozen=True)
class InvariantGram:
    group: FiniteMatrixGroup
    gram: np.ndarray


def invariant_gram(G: FiniteMatrixGroup) -> InvariantGram:
    """Gram matrix of the averaged inner product sum_g <g u, g v>."""
    if G.mode.exact:
        gram = nm.zeros((G.dim, G.dim), nm.EXACT)
        for g in G.elements:
            gram = gram + g.T @ g
    else:
        gram = np.einsum("gki,gkj->ij", G.floats, G.floats)
        gram = 0.5 * (gram + gram.T)
    return InvariantGram(G, gram)


def gamma_norm(gr: InvariantGram, v):
    """sqrt(v^T gram v); exact inputs give the *squared* value as a Fraction."""
    v = np.asarray(v, dtype=object)
    if v.shape != (gr.gram.shape[0],):
        raise DimMismatch(f"vector of shape {v.shape}")
    if nm.is_exact(gr.gram) and all(nm._is_rational(x) for x in v):
        ve = nm.as_array(v, nm.EXACT)
        return ve @ gr.gram @ ve
    vf = nm.to_float(v)
    return float(math.sqrt(max(vf @ nm.to_float(gr.gram) @ vf, 0.0)))


def gamma_norm_float(gram: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorised float Gamma-norm over the last axis."""
    g = nm.to_float(gram)
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", v, g, v), 0.0))


def is_reflection(g, mode: Mode | None = None) -> bool:
    g = np.asarray(g)
    if mode is None:
        mode = nm.EXACT if nm.is_exact(g) else nm.APPROX
    return nm.codimension(nm.fixed_subspace(g, mode)) == 1


@dataclass(frozen=True)
class GroupHomomorphism:
    source: FiniteMatrixGroup
    target: FiniteMatrixGroup
    map: tuple

    def __call__(self, i: int) -> int:
        return self.map[i]

    def validate(self) -> None:
        if self.map[0] != 0:
            raise NotHomomorphism("identity not sent to identity")
        ts, tt = self.source.table, self.target.table
        m = np.asarray(self.map)
        if not np.array_equal(m[ts], tt[m[:, None], m[None, :]]):
            raise NotHomomorphism("multiplication table not preserved")

    @property
    def is_injective(self) -> bool:
        return len(set(self.map)) == len(self.map)

    @property
    def is_trivial(self) -> bool:
        return all(k == 0 for k in self.map)


def extend_on_generators(G: FiniteMatrixGroup, H: FiniteMatrixGroup, gens, images_) -> list | None:
    """Extend gen -> image to the subgroup generated by ``gens``; None on conflict."""
    m = {0: 0}
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for g, h in zip(gens, images_):
                j = int(G.table[i, g])
                v = int(H.table[m[i], h])
                if j in m:
                    if m[j] != v:
                        return None
                else:
                    m[j] = v
                    nxt.append(j)
        frontier = nxt
    return m


def _generators(G: FiniteMatrixGroup) -> list[int]:
    gens = list(G.generators)
    if not gens and G.order > 1:
        gens = list(range(1, G.order))
    # drop redundant generators greedily
    out: list[int] = []
    span = {0}
    for g in gens:
        if g in span:
            continue
        out.append(g)
        span = set(extend_on_generators(G, G, out, out).keys())
        if len(span) == G.order:
            break
    return out


def isomorphisms(G: FiniteMatrixGroup, H: FiniteMatrixGroup, budget: int = DEFAULT_BUDGET):
    """Yield every isomorphism G -> H as an index list."""
    if G.order != H.order:
        return
    gens = _generators(G)
    if not gens:
        yield [0]
        return
    h_orders = [H.element_order(j) for j in range(H.order)]
    options = [[j for j in range(H.order) if h_orders[j] == G.element_order(g)] for g in gens]
    count = 0

    def rec(k, chosen):
        nonlocal count
        count += 1
        if count > budget:
            raise BudgetExceeded(f"more than {budget} candidate assignments")
        m = extend_on_generators(G, H, gens[:k], chosen)
        if m is None:
            return
        if k == len(gens):
            if len(m) == G.order and len(set(m.values())) == H.order:
                yield [m[i] for i in range(G.order)]
            return
        for j in options[k]:
            yield from rec(k + 1, chosen + [j])

    yield from rec(0, [])


def _intertwiner_space(G, H, gens, hmap, mode: Mode) -> list[np.ndarray]:
    n = G.dim
    rows = []
    for g in gens:
        A = G.elements[g] if mode.exact else G.floats[g]
        B = H.elements[hmap[g]] if mode.exact else H.floats[hmap[g]]
        cols = []
        for a in range(n):
            for b in range(n):
                E = nm.zeros((n, n), mode)
                E[a, b] = Fraction(1) if mode.exact else 1.0
                cols.append((E @ A - B @ E).ravel())
        rows.append(np.stack(cols, axis=1))
    system = np.concatenate(rows, axis=0)
    return [v.reshape(n, n) for v in nm.kernel(system, mode)]


def conjugate_in_gl(G: FiniteMatrixGroup, H: FiniteMatrixGroup, budget: int = DEFAULT_BUDGET,
                    seed: int = 0):
    """Find invertible L and an isomorphism h with L g L^-1 = h(g), or None."""
    if G.dim != H.dim:
        raise DimMismatch(f"dimensions {G.dim} and {H.dim}")
    if G.order != H.order:
        return None
    mode = nm.EXACT if (G.mode.exact and H.mode.exact) else Mode(False, max(G.mode.tol, H.mode.tol))
    gens = _generators(G)
    rng = np.random.default_rng(seed)
    for hmap in isomorphisms(G, H, budget):
        hom = GroupHomomorphism(G, H, tuple(hmap))
        if not gens:
            return nm.identity(G.dim, mode), hom
        basis = _intertwiner_space(G, H, gens, hmap, mode)
        if not basis:
            continue
        L = _invertible_combination(basis, mode, rng)
        if L is not None:
            return L, hom
    return None


def _invertible_combination(basis, mode: Mode, rng):
    n = basis[0].shape[0]
    candidates = list(basis)
    candidates.append(sum(basis[1:], basis[0]))
    for _ in range(24):
        coeffs = rng.integers(-3, 4, size=len(basis))
        if mode.exact:
            c = [Fraction(int(x)) for x in coeffs]
        else:
            c = [float(x) for x in coeffs]
        candidates.append(sum((ci * b for ci, b in zip(c[1:], basis[1:])), c[0] * basis[0]))
    for L in candidates:
        if mode.exact:
            if nm.determinant(L, mode) != 0:
                return L
        else:
            Lf = nm.to_float(L)
            scale = float(np.max(np.abs(Lf)))
            if scale > 0 and abs(np.linalg.det(Lf / scale)) > 1e-6:
                return Lf / scale
    return None


def homomorphism_from_images(G, H, images_: dict) -> GroupHomomorphism:
    """Assemble a homomorphism from generator images; raises NotHomomorphism."""
    gens = sorted(images_)
    m = extend_on_generators(G, H, gens, [images_[g] for g in gens])
    if m is None or len(m) != G.order:
        raise NotHomomorphism("generator images do not extend to a homomorphism")
    hom = GroupHomomorphism(G, H, tuple(m[i] for i in range(G.order)))
    hom.validate()
    return hom


# ---------------------------------------------------------------- named groups

def rotation(angle_fraction: Fraction | float, exact_ok: bool = True):
    """Rotation by 2*pi*angle_fraction; rational entries when available."""
    q = Fraction(angle_fraction).limit_denominator(1000)
    exact = {Fraction(0): (1, 0), Fraction(1, 4): (0, 1), Fraction(1, 2): (-1, 0),
             Fraction(3, 4): (0, -1)}
    key = q % 1
    if exact_ok and key in exact:
        c, s = exact[key]
        return [[c, -s], [s, c]]
    t = 2 * math.pi * float(angle_fraction)
    return [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]


def cyclic_rotations(m: int) -> FiniteMatrixGroup:
    if m == 1:
        return trivial_group(2)
    return close_generators([rotation(Fraction(1, m))])


def trivial_group(n: int, mode: Mode = nm.EXACT) -> FiniteMatrixGroup:
    return close_generators([], mode=mode, dim=n)


def minus_identity_group(n: int) -> FiniteMatrixGroup:
    return close_generators([[[-1 if i == j else 0 for j in range(n)] for i in range(n)]])


def klein_four() -> FiniteMatrixGroup:
    """{I, -I, diag(1,-1), diag(-1,1)}."""
    return close_generators([[[1, 0], [0, -1]], [[-1, 0], [0, 1]]])


def conjugate_group(G: FiniteMatrixGroup, A) -> FiniteMatrixGroup:
    """A G A^-1 with the same element ordering (element i -> A g_i A^-1)."""
    mode = G.mode
    if mode.exact and all(nm._is_rational(x) for x in np.asarray(A, dtype=object).ravel()):
        Am = nm.as_array(A, nm.EXACT)
        Ai = nm.inverse(Am, nm.EXACT)
        els = [Am @ g @ Ai for g in G.elements]
    else:
        mode = Mode(False, G.mode.tol)
        Am = nm.to_float(np.asarray(A, dtype=object) if not isinstance(A, np.ndarray) else A)
        Ai = np.linalg.inv(Am)
        els = [Am @ g @ Ai for g in G.floats]
    return FiniteMatrixGroup(els, G.table, mode, generators=G.generators)
