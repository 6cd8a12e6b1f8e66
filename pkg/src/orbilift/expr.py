"""Evaluable expression trees for maps between Euclidean domains, and regions.

Expressions are evaluated on batches: ``X`` has shape ``(N, n)`` and every
scalar node returns shape ``(N,)``.  A :class:`MapExpr` stacks scalar
components into a map R^n -> R^k.  Every node has a source form that
:func:`parse_expr` reads back, which is what atlas files store.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DimMismatch, EvaluationError, ParseError

# ---------------------------------------------------------------- scalar nodes


class Expr:
    def ev(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def src(self) -> str:
        raise NotImplementedError

    def __add__(self, o):
        return Binary("+", self, lift(o))

    def __radd__(self, o):
        return Binary("+", lift(o), self)

    def __sub__(self, o):
        return Binary("-", self, lift(o))

    def __rsub__(self, o):
        return Binary("-", lift(o), self)

    def __mul__(self, o):
        return Binary("*", self, lift(o))

    def __rmul__(self, o):
        return Binary("*", lift(o), self)

    def __truediv__(self, o):
        return Binary("/", self, lift(o))

    def __rtruediv__(self, o):
        return Binary("/", lift(o), self)

    def __pow__(self, o):
        return Binary("**", self, lift(o))

    def __mod__(self, o):
        return Binary("%", self, lift(o))

    def __neg__(self):
        return Unary("neg", self)

    # comparisons build predicates
    def lt(self, o):
        return Compare("<", self, lift(o))

    def le(self, o):
        return Compare("<=", self, lift(o))

    def gt(self, o):
        return Compare(">", self, lift(o))

    def ge(self, o):
        return Compare(">=", self, lift(o))

    def eq(self, o):
        return Compare("==", self, lift(o))


def lift(o) -> Expr:
    return o if isinstance(o, Expr) else Const(float(o))


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: float

    def ev(self, X):
        return np.full(X.shape[0], self.value)

    def src(self):
        return repr(float(self.value))


@dataclass(frozen=True, eq=False)
class Coord(Expr):
    index: int

    def ev(self, X):
        return X[:, self.index]

    def src(self):
        return f"x{self.index}"


@dataclass(frozen=True, eq=False)
class Radial(Expr):
    """Euclidean length of the input point."""

    def ev(self, X):
        return np.sqrt(np.sum(X * X, axis=1))

    def src(self):
        return "r"


_UNARY = {
    "neg": np.negative,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "floor": np.floor,
    "sign": np.sign,
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "**": np.power,
    "%": np.mod,
    "atan2": np.arctan2,
}


@dataclass(frozen=True, eq=False)
class Unary(Expr):
    op: str
    arg: Expr

    def ev(self, X):
        return _UNARY[self.op](self.arg.ev(X))

    def src(self):
        if self.op == "neg":
            return f"(-{self.arg.src()})"
        return f"{self.op}({self.arg.src()})"


@dataclass(frozen=True, eq=False)
class Binary(Expr):
    op: str
    a: Expr
    b: Expr

    def ev(self, X):
        return _BINARY[self.op](self.a.ev(X), self.b.ev(X))

    def src(self):
        if self.op == "atan2":
            return f"atan2({self.a.src()}, {self.b.src()})"
        return f"({self.a.src()} {self.op} {self.b.src()})"


class Pred:
    def ev(self, X) -> np.ndarray:
        raise NotImplementedError

    def __and__(self, o):
        return Logic("and", self, o)

    def __or__(self, o):
        return Logic("or", self, o)


_CMP = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
        "==": np.equal}


@dataclass(frozen=True, eq=False)
class Compare(Pred):
    op: str
    a: Expr
    b: Expr

    def ev(self, X):
        return _CMP[self.op](self.a.ev(X), self.b.ev(X))

    def src(self):
        return f"({self.a.src()} {self.op} {self.b.src()})"


@dataclass(frozen=True, eq=False)
class Logic(Pred):
    op: str
    a: Pred
    b: Pred

    def ev(self, X):
        fn = np.logical_and if self.op == "and" else np.logical_or
        return fn(self.a.ev(X), self.b.ev(X))

    def src(self):
        return f"({self.a.src()} {self.op} {self.b.src()})"


@dataclass(frozen=True, eq=False)
class Where(Expr):
    cond: Pred
    then: Expr
    other: Expr

    def ev(self, X):
        return np.where(self.cond.ev(X), self.then.ev(X), self.other.ev(X))

    def src(self):
        return f"where({self.cond.src()}, {self.then.src()}, {self.other.src()})"


def bump_value(n, t):
    """Normalised bump on (1/(n+1), 1/n): exp(4/(b-a)^2 - 1/((t-a)(b-t))), else 0.

    ``n`` may be an array (one index per entry of ``t``); n < 1 gives 0.
    """
    t = np.asarray(t, dtype=float)
    n = np.broadcast_to(np.asarray(n, dtype=float), t.shape)
    ok_n = n >= 1
    nn = np.where(ok_n, n, 1.0)
    a = 1.0 / (nn + 1.0)
    b = 1.0 / nn
    inside = ok_n & (t > a) & (t < b)
    prod = np.where(inside, (t - a) * (b - t), 1.0)
    expo = 4.0 / (b - a) ** 2 - 1.0 / prod
    return np.where(inside, np.exp(np.minimum(expo, 0.0)), 0.0)


@dataclass(frozen=True, eq=False)
class Bump(Expr):
    """rho_n(arg) for a fixed index n."""
    n: int
    arg: Expr

    def ev(self, X):
        return bump_value(self.n, self.arg.ev(X))

    def src(self):
        return f"bump({self.n}, {self.arg.src()})"


@dataclass(frozen=True, eq=False)
class BumpAt(Expr):
    """rho_{n(t)}(t) with n(t) = floor(1/t), the bump whose support holds t."""
    arg: Expr

    def ev(self, X):
        t = self.arg.ev(X)
        return bump_value(band_index(t), t)

    def src(self):
        return f"bumpat({self.arg.src()})"


def band_index(t) -> np.ndarray:
    """n with 1/(n+1) < t <= 1/n; 0 for t <= 0 or t > 1."""
    t = np.asarray(t, dtype=float)
    ok = (t > 0) & (t <= 1)
    safe = np.where(ok, t, 1.0)
    n = np.floor(1.0 / safe)
    # guard floating error at t = 1/n exactly
    n = np.where(1.0 / (n + 1.0) >= safe, n + 1.0, n)
    return np.where(ok, n, 0.0)


@dataclass(frozen=True, eq=False)
class Band(Expr):
    arg: Expr

    def ev(self, X):
        return band_index(self.arg.ev(X))

    def src(self):
        return f"band({self.arg.src()})"


@dataclass(frozen=True, eq=False)
class Table(Expr):
    """values[k-1] for integer k = arg; ``default`` past the end or for k < 1."""
    values: tuple
    arg: Expr
    default: float = 1.0

    def ev(self, X):
        k = np.rint(self.arg.ev(X)).astype(int)
        vals = np.asarray(self.values, dtype=float)
        ok = (k >= 1) & (k <= len(vals))
        return np.where(ok, vals[np.clip(k - 1, 0, max(len(vals) - 1, 0))] if len(vals) else
                        self.default, self.default)

    def src(self):
        vals = ", ".join(repr(float(v)) for v in self.values)
        return f"table([{vals}], {self.arg.src()}, {float(self.default)!r})"


@dataclass(frozen=True, eq=False)
class Subst(Expr):
    """body evaluated at the point given by ``inner`` components."""
    body: Expr
    inner: tuple

    def ev(self, X):
        Y = np.stack([e.ev(X) for e in self.inner], axis=1)
        return self.body.ev(Y)

    def src(self):
        inner = ", ".join(e.src() for e in self.inner)
        return f"subst({self.body.src()}, [{inner}])"


# ---------------------------------------------------------------- maps


class MapExpr:
    """Map R^in_dim -> R^out_dim given by scalar component expressions."""

    def __init__(self, in_dim: int, components: Sequence[Expr], domain: "Region | None" = None):
        self.in_dim = int(in_dim)
        self.components = tuple(lift(c) for c in components)
        self.domain = domain

    @property
    def out_dim(self) -> int:
        return len(self.components)

    def __repr__(self):
        return f"MapExpr({self.in_dim}->{self.out_dim}: {self.sources()})"

    def sources(self) -> list[str]:
        return [c.src() for c in self.components]

    def eval_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise DimMismatch(f"input of shape {X.shape} for a map on R^{self.in_dim}")
        with np.errstate(all="ignore"):
            Y = np.stack([c.ev(X) for c in self.components], axis=1)
        bad = ~np.all(np.isfinite(Y), axis=1)
        if np.any(bad):
            raise EvaluationError(f"map undefined at {X[np.argmax(bad)].tolist()}")
        return Y

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.eval_batch(x[None])[0]
        return self.eval_batch(x)

    def compose(self, inner: "MapExpr") -> "MapExpr":
        """self o inner."""
        if inner.out_dim != self.in_dim:
            raise DimMismatch("composition dimension mismatch")
        return MapExpr(inner.in_dim, [Subst(c, inner.components) for c in self.components],
                       inner.domain)

    def with_domain(self, domain) -> "MapExpr":
        return MapExpr(self.in_dim, self.components, domain)


def coords(n: int) -> list[Expr]:
    return [Coord(i) for i in range(n)]


def linear_map(A, b=None) -> MapExpr:
    A = np.asarray(A, dtype=float)
    k, n = A.shape
    b = np.zeros(k) if b is None else np.asarray(b, dtype=float)
    xs = coords(n)
    comps = []
    for i in range(k):
        e: Expr = Const(float(b[i]))
        for j in range(n):
            if A[i, j] != 0:
                e = e + Const(float(A[i, j])) * xs[j]
        comps.append(e)
    return MapExpr(n, comps)


def identity_map(n: int) -> MapExpr:
    return MapExpr(n, coords(n))


# ---------------------------------------------------------------- parser

_NAMES = {"x": 0, "y": 1, "z": 2}


def parse_expr(text: str, dim: int) -> Expr:
    """Parse the source form of a scalar expression over x0..x{dim-1}."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"bad expression {text!r}: {exc.msg}") from None
    return _build(tree.body, dim, text)


def _build(node, dim, text):
    def fail(msg):
        raise ParseError(f"{msg} in expression {text!r}")

    def sub(n):
        return _build(n, dim, text)

    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        name = node.id
        if name == "r":
            return Radial()
        if name in ("pi",):
            return Const(math.pi)
        if name in _NAMES and _NAMES[name] < dim:
            return Coord(_NAMES[name])
        if name.startswith("x") and name[1:].isdigit() and int(name[1:]) < dim:
            return Coord(int(name[1:]))
        fail(f"unknown name {name!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = sub(node.operand)
        if isinstance(inner, Const):
            return Const(-inner.value)
        return Unary("neg", inner)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.UAdd):
        return sub(node.operand)
    if isinstance(node, ast.BinOp):
        ops = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/", ast.Pow: "**",
               ast.Mod: "%"}
        op = ops.get(type(node.op))
        if op is None:
            fail("unsupported operator")
        return Binary(op, sub(node.left), sub(node.right))
    if isinstance(node, ast.Compare):
        if len(node.ops) != 1:
            fail("chained comparison")
        ops = {ast.Lt: "<", ast.LtE: "<=", ast.Gt: ">", ast.GtE: ">=", ast.Eq: "=="}
        op = ops.get(type(node.ops[0]))
        if op is None:
            fail("unsupported comparison")
        return Compare(op, sub(node.left), sub(node.comparators[0]))
    if isinstance(node, ast.BoolOp):
        op = "and" if isinstance(node.op, ast.And) else "or"
        parts = [sub(v) for v in node.values]
        out = parts[0]
        for p in parts[1:]:
            out = Logic(op, out, p)
        return out
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fn, args = node.func.id, node.args
        if fn in _UNARY and fn != "neg" and len(args) == 1:
            return Unary(fn, sub(args[0]))
        if fn == "atan2" and len(args) == 2:
            return Binary("atan2", sub(args[0]), sub(args[1]))
        if fn == "where" and len(args) == 3:
            return Where(sub(args[0]), sub(args[1]), sub(args[2]))
        if fn == "bump" and len(args) == 2 and isinstance(args[0], ast.Constant):
            return Bump(int(args[0].value), sub(args[1]))
        if fn == "bumpat" and len(args) == 1:
            return BumpAt(sub(args[0]))
        if fn == "band" and len(args) == 1:
            return Band(sub(args[0]))
        if fn == "table" and len(args) in (2, 3) and isinstance(args[0], ast.List):
            vals = tuple(float(ast.literal_eval(v)) for v in args[0].elts)
            default = float(ast.literal_eval(args[2])) if len(args) == 3 else 1.0
            return Table(vals, sub(args[1]), default)
        if fn == "subst" and len(args) == 2 and isinstance(args[1], ast.List):
            inner = tuple(sub(v) for v in args[1].elts)
            return Subst(_build(args[0], len(inner), text), inner)
        fail(f"unsupported call {fn}")
    fail(f"unsupported syntax {type(node).__name__}")


def parse_map(sources: Sequence[str], dim: int) -> MapExpr:
    return MapExpr(dim, [parse_expr(s, dim) for s in sources])


# ---------------------------------------------------------------- regions

FULLSPACE_HALFWIDTH = 2.0
GRID_POINTS = 64
MAX_GRID_NODES = 120_000


class Region:
    dim: int

    def contains(self, X) -> np.ndarray:
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def contains_point(self, x) -> bool:
        return bool(self.contains(np.asarray(x, dtype=float)[None])[0])

    def sample(self, rng: np.random.Generator, k: int, max_tries: int = 200) -> np.ndarray:
        """k uniform points by rejection from the bounding box."""
        lo, hi = self.bbox()
        out = np.empty((0, self.dim))
        for _ in range(max_tries):
            need = k - len(out)
            if need <= 0:
                break
            cand = rng.uniform(lo, hi, size=(max(4 * need, 16), self.dim))
            out = np.concatenate([out, cand[self.contains(cand)]])
        if len(out) < k:
            raise EvaluationError("region too thin to sample")
        return out[:k]

    def grid(self, points: int = GRID_POINTS) -> tuple[np.ndarray, float]:
        """Grid nodes inside the region with spacing diameter/points."""
        lo, hi = self.bbox()
        diam = float(np.max(hi - lo))
        per_axis = points
        while per_axis ** self.dim > MAX_GRID_NODES * 4 and per_axis > 8:
            per_axis //= 2
        h = diam / per_axis
        axes = [np.arange(lo[i] + h / 2, hi[i], h) for i in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return mesh[self.contains(mesh)], h

    def grid_components(self, points: int = GRID_POINTS):
        """(nodes, spacing, labels, count) for axis-adjacent grid connectivity."""
        nodes, h = self.grid(points)
        if len(nodes) == 0:
            return nodes, h, np.zeros(0, dtype=int), 0
        count, labels = grid_labels(nodes, h)
        return nodes, h, labels, count


def grid_labels(nodes: np.ndarray, h: float) -> tuple[int, np.ndarray]:
    pairs = cKDTree(nodes).query_pairs(r=1.01 * h, output_type="ndarray")
    m = len(nodes)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)) \
        if len(pairs) else coo_matrix((m, m))
    return connected_components(adj, directed=False)


def _norm(X, center, gram):
    d = X - center[None]
    if gram is None:
        return np.sqrt(np.sum(d * d, axis=1))
    return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", d, gram, d), 0.0))


def _gram_box(center, radius, gram):
    if gram is None:
        half = np.full(len(center), radius)
    else:
        inv = np.linalg.inv(gram)
        half = radius * np.sqrt(np.diag(inv))
    return center - half, center + half


@dataclass(frozen=True, eq=False)
class FullSpace(Region):
    """All of R^n; sampled inside [-2, 2]^n."""
    dim: int

    def contains(self, X):
        return np.ones(np.asarray(X).shape[0], dtype=bool)

    def bbox(self):
        return np.full(self.dim, -FULLSPACE_HALFWIDTH), np.full(self.dim, FULLSPACE_HALFWIDTH)

    def to_dict(self):
        return {"kind": "full", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Ball(Region):
    """Open ball; ``gram`` (optional) switches to the norm sqrt(d^T gram d)."""
    center: np.ndarray
    radius: float
    gram: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.gram is not None:
            object.__setattr__(self, "gram", np.asarray(self.gram, dtype=float))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self):
        return len(self.center)

    def contains(self, X):
        return _norm(np.asarray(X, dtype=float), self.center, self.gram) < self.radius

    def bbox(self):
        return _gram_box(self.center, self.radius, self.gram)

    def to_dict(self):
        d = {"kind": "ball", "center": [repr(float(c)) for c in self.center],
             "radius": repr(float(self.radius))}
        if self.gram is not None:
            d["gram"] = [[repr(float(v)) for v in row] for row in self.gram]
        return d


@dataclass(frozen=True, eq=False)
class Annulus(Region):
    """inner < |x - center| < outer; inner = 0 gives the punctured ball."""
    inner: float
    outer: float
    center: np.ndarray | None = None
    gram: np.ndarray | None = None
    dim_: int = 2

    def __post_init__(self):
        if not (0 <= self.inner < self.outer):
            raise ValueError("annulus needs 0 <= inner < outer")
        c = np.zeros(self.dim_) if self.center is None else np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dim_", len(c))
        if self.gram is not None:
            object.__setattr__(self, "gram", np.asarray(self.gram, dtype=float))

    @property
    def dim(self):
        return self.dim_

    def contains(self, X):
        d = _norm(np.asarray(X, dtype=float), self.center, self.gram)
        return (d > self.inner) & (d < self.outer)

    def bbox(self):
        return _gram_box(self.center, self.outer, self.gram)

    def to_dict(self):
        d = {"kind": "annulus", "center": [repr(float(c)) for c in self.center],
             "inner": repr(float(self.inner)), "outer": repr(float(self.outer))}
        if self.gram is not None:
            d["gram"] = [[repr(float(v)) for v in row] for row in self.gram]
        return d


@dataclass(frozen=True, eq=False)
class Box(Region):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if np.any(self.lo >= self.hi):
            raise ValueError("empty box")

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        return np.all((X > self.lo) & (X < self.hi), axis=1)

    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def to_dict(self):
        return {"kind": "box", "lo": [repr(float(v)) for v in self.lo],
                "hi": [repr(float(v)) for v in self.hi]}


@dataclass(frozen=True, eq=False)
class Union(Region):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValueError("empty union")
        if len({p.dim for p in self.parts}) != 1:
            raise DimMismatch("union of regions of different dimension")

    @property
    def dim(self):
        return self.parts[0].dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0], dtype=bool)
        for p in self.parts:
            out |= p.contains(X)
        return out

    def bbox(self):
        boxes = [p.bbox() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def to_dict(self):
        return {"kind": "union", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True, eq=False)
class Intersection(Region):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return self.parts[0].dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        out = np.ones(X.shape[0], dtype=bool)
        for p in self.parts:
            out &= p.contains(X)
        return out

    def bbox(self):
        boxes = [p.bbox() for p in self.parts]
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        return lo, np.maximum(hi, lo + 1e-12)

    def to_dict(self):
        return {"kind": "intersection", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True, eq=False)
class GridComponent(Region):
    """One grid-connected component of ``base``: points of base whose
    nearest grid node carries the component label."""
    base: Region
    nodes: np.ndarray
    spacing: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "_tree", cKDTree(self.nodes))

    @property
    def dim(self):
        return self.base.dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        inside = self.base.contains(X)
        d, _ = self._tree.query(X)
        return inside & (d <= self.spacing * math.sqrt(self.dim))

    def bbox(self):
        h = self.spacing
        return self.nodes.min(axis=0) - h, self.nodes.max(axis=0) + h

    def to_dict(self):
        return {"kind": "component", "base": self.base.to_dict(),
                "spacing": repr(float(self.spacing)),
                "nodes": [[repr(float(v)) for v in p] for p in self.nodes]}


@dataclass(frozen=True, eq=False)
class ExprRegion(Region):
    """Points of ``base`` where the scalar expression ``positive`` is > 0."""
    base: Region
    positive: Expr

    @property
    def dim(self):
        return self.base.dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        inside = self.base.contains(X)
        if np.any(inside):
            with np.errstate(all="ignore"):
                v = np.asarray(self.positive.ev(X[inside]), dtype=float)
            inside[inside] = np.nan_to_num(v, nan=-1.0) > 0
        return inside

    def bbox(self):
        return self.base.bbox()

    def to_dict(self):
        return {"kind": "expr", "base": self.base.to_dict(), "positive": self.positive.src()}


@dataclass(frozen=True, eq=False)
class PredicateRegion(Region):
    """Points of ``base`` accepted by a vectorised callable; not serialisable."""
    base: Region
    predicate: Callable
    label: str = "predicate"

    @property
    def dim(self):
        return self.base.dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        inside = self.base.contains(X)
        if np.any(inside):
            inside[inside] = np.asarray(self.predicate(X[inside]), dtype=bool)
        return inside

    def bbox(self):
        return self.base.bbox()

    def to_dict(self):
        raise ParseError(f"region {self.label!r} is defined by code and cannot be serialised",
                         field="region")


def region_from_dict(d: dict, dim: int | None = None) -> Region:
    """Inverse of ``Region.to_dict``; raises ParseError on malformed input."""
    try:
        kind = d["kind"]
        if kind == "full":
            return FullSpace(int(d.get("dim", dim)))
        gram = None
        if "gram" in d:
            gram = np.array([[float(v) for v in row] for row in d["gram"]])
        if kind == "ball":
            return Ball(np.array([float(c) for c in d["center"]]), float(d["radius"]), gram)
        if kind == "annulus":
            center = d.get("center")
            c = np.zeros(dim or 2) if center is None else np.array([float(v) for v in center])
            return Annulus(float(d["inner"]), float(d["outer"]), c, gram)
        if kind == "box":
            return Box([float(v) for v in d["lo"]], [float(v) for v in d["hi"]])
        if kind == "union":
            return Union(tuple(region_from_dict(p, dim) for p in d["parts"]))
        if kind == "intersection":
            return Intersection(tuple(region_from_dict(p, dim) for p in d["parts"]))
        if kind == "expr":
            base = region_from_dict(d["base"], dim)
            return ExprRegion(base, parse_expr(d["positive"], base.dim))
        if kind == "component":
            return GridComponent(region_from_dict(d["base"], dim),
                                 np.array([[float(v) for v in p] for p in d["nodes"]]),
                                 float(d["spacing"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed region: {exc}", field="region") from None
    raise ParseError(f"unknown region kind {d.get('kind')!r}", field="region")
