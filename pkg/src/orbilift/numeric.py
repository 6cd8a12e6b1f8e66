"""Scalar modes, exact/approximate linear algebra and finite differences.

Matrices and vectors are plain numpy arrays.  Exact mode stores
``fractions.Fraction`` entries in ``dtype=object`` arrays (numpy's matmul
works on those unchanged); approximate mode uses float64 together with a
comparison tolerance carried by :class:`Mode`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Integral, Rational
from typing import Callable, Sequence

import numpy as np

from .errors import DimMismatch, EvaluationError, NonSquare, Singular

DEFAULT_TOL = 1e-9
DEFAULT_STEP = 1e-5


@dataclass(frozen=True)
class Mode:
    exact: bool
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.exact and not self.tol > 0:
            raise ValueError("approximate mode needs tol > 0")

    @property
    def name(self) -> str:
        return "exact" if self.exact else "approx"


EXACT = Mode(True)
APPROX = Mode(False)


def parse_scalar(x, exact: bool):
    """Turn an int/Fraction/float/decimal-string into a scalar of the mode."""
    if isinstance(x, str):
        s = x.strip()
        if exact:
            if "/" in s:
                p, q = s.split("/")
                return Fraction(int(p), int(q))
            return Fraction(int(s))
        if "/" in s:
            p, q = s.split("/")
            return float(Fraction(int(p), int(q)))
        return float(s)
    if exact:
        if isinstance(x, (Integral, Rational)):
            return Fraction(x)
        raise TypeError(f"non-rational entry {x!r} in exact mode")
    return float(x)


def _is_rational(x) -> bool:
    if isinstance(x, (bool, np.bool_)):
        return False
    if isinstance(x, (Integral, Rational, np.integer)):
        return True
    if isinstance(x, str):
        try:
            parse_scalar(x, True)
            return True
        except ValueError:
            return False
    return False


def infer_mode(*arrays, tol: float = DEFAULT_TOL) -> Mode:
    """Exact iff every entry of every input is rational (int, Fraction, "p/q")."""
    for a in arrays:
        arr = np.asarray(a, dtype=object)
        if not all(_is_rational(x) for x in arr.ravel()):
            return Mode(False, tol)
    return EXACT if tol == DEFAULT_TOL else Mode(True, tol)


def as_array(data, mode: Mode) -> np.ndarray:
    arr = np.asarray(data, dtype=object)
    if mode.exact:
        out = np.empty(arr.shape, dtype=object)
        for idx, x in np.ndenumerate(arr):
            out[idx] = parse_scalar(int(x) if isinstance(x, np.integer) else x, True)
        return out
    return np.array([parse_scalar(x, False) for x in arr.ravel()], dtype=float).reshape(arr.shape)


def is_exact(a: np.ndarray) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def to_float(a) -> np.ndarray:
    return np.asarray(a, dtype=float) if not is_exact(np.asarray(a)) else np.array(
        [float(x) for x in np.asarray(a).ravel()], dtype=float
    ).reshape(np.asarray(a).shape)


def identity(n: int, mode: Mode) -> np.ndarray:
    if mode.exact:
        out = np.full((n, n), Fraction(0), dtype=object)
        for i in range(n):
            out[i, i] = Fraction(1)
        return out
    return np.eye(n)


def zeros(shape, mode: Mode) -> np.ndarray:
    return np.full(shape, Fraction(0), dtype=object) if mode.exact else np.zeros(shape)


def matrices_equal(a: np.ndarray, b: np.ndarray, mode: Mode) -> bool:
    """Element equality: bit-exact, or Frobenius distance <= tol*sqrt(n)."""
    if a.shape != b.shape:
        return False
    if mode.exact and is_exact(a) and is_exact(b):
        return bool(np.all(a == b))
    d = to_float(a) - to_float(b)
    return float(np.sqrt(np.sum(d * d))) <= mode.tol * np.sqrt(a.shape[0])


def vectors_equal(u, v, mode: Mode) -> bool:
    u = np.asarray(u)
    v = np.asarray(v)
    if mode.exact and is_exact(u) and is_exact(v):
        return bool(np.all(u == v))
    return float(np.max(np.abs(to_float(u) - to_float(v)), initial=0.0)) <= mode.tol


def rref(m: np.ndarray, mode: Mode) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns.

    Approximate mode pivots on the largest remaining entry and treats
    anything below ``tol * max|entry|`` as zero.
    """
    a = np.array(m, dtype=object if mode.exact else float, copy=True)
    rows, cols = a.shape
    if mode.exact:
        thresh = None
    else:
        scale = float(np.max(np.abs(a), initial=0.0))
        thresh = mode.tol * scale
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        if mode.exact:
            p = next((i for i in range(r, rows) if a[i, c] != 0), None)
        else:
            col = np.abs(a[r:, c])
            i = int(np.argmax(col))
            p = r + i if col[i] > thresh and col[i] > 0 else None
        if p is None:
            if not mode.exact:
                a[r:, c] = 0.0
            continue
        if p != r:
            a[[r, p]] = a[[p, r]]
        a[r] = a[r] / a[r, c]
        for i in range(rows):
            if i != r and a[i, c] != 0:
                a[i] = a[i] - a[i, c] * a[r]
        if not mode.exact:
            a[np.abs(a) <= thresh] = 0.0
        pivots.append(c)
        r += 1
    return a, pivots


def kernel(m: np.ndarray, mode: Mode) -> list[np.ndarray]:
    """Basis of the right null space, one vector per free column."""
    rows, cols = m.shape
    red, pivots = rref(m, mode)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = zeros(cols, mode)
        v[f] = Fraction(1) if mode.exact else 1.0
        for i, p in enumerate(pivots):
            v[p] = -red[i, f]
        basis.append(v)
    return basis


def rank(m: np.ndarray, mode: Mode) -> int:
    return len(rref(m, mode)[1])


def inverse(m: np.ndarray, mode: Mode) -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise NonSquare(f"shape {m.shape}")
    n = m.shape[0]
    if not mode.exact:
        mf = to_float(m)
        if rank(mf, mode) < n:
            raise Singular("matrix is not invertible")
        return np.linalg.inv(mf)
    aug = np.concatenate([m, identity(n, mode)], axis=1)
    red, pivots = rref(aug, mode)
    if pivots[:n] != list(range(n)):
        raise Singular("matrix is not invertible")
    return red[:, n:]


def determinant(m: np.ndarray, mode: Mode):
    if m.shape[0] != m.shape[1]:
        raise NonSquare(f"shape {m.shape}")
    if not mode.exact:
        return float(np.linalg.det(to_float(m)))
    a = np.array(m, dtype=object, copy=True)
    n = a.shape[0]
    det = Fraction(1)
    for c in range(n):
        p = next((i for i in range(c, n) if a[i, c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            a[[c, p]] = a[[p, c]]
            det = -det
        det *= a[c, c]
        for i in range(c + 1, n):
            if a[i, c] != 0:
                a[i] = a[i] - (a[i, c] / a[c, c]) * a[c]
    return det


@dataclass(frozen=True)
class Subspace:
    ambient_dim: int
    basis: tuple = field(default_factory=tuple)

    @property
    def rank(self) -> int:
        return len(self.basis)


def fixed_subspace(g: np.ndarray, mode: Mode) -> Subspace:
    """ker(g - I): the eigenvalue-1 eigenspace."""
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise NonSquare(f"shape {g.shape}")
    n = g.shape[0]
    if mode.exact and not is_exact(g):
        mode = Mode(False, mode.tol)
    m = (g if mode.exact else to_float(g)) - identity(n, mode)
    return Subspace(n, tuple(kernel(m, mode)))


def codimension(s: Subspace) -> int:
    return s.ambient_dim - s.rank


def jacobian_fd(f: Callable, u: Sequence[float], step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``f`` at ``u``."""
    if not step > 0:
        raise ValueError("step must be positive")
    u = to_float(np.asarray(u))
    n = u.shape[0]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        try:
            fp = np.atleast_1d(np.asarray(f(u + e), dtype=float))
            fm = np.atleast_1d(np.asarray(f(u - e), dtype=float))
        except (ArithmeticError, ValueError) as exc:
            raise EvaluationError(f"map failed near {u}: {exc}") from exc
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(f"map undefined near {u}")
        cols.append((fp - fm) / (2 * step))
    return np.stack(cols, axis=1)


def check_dim(n: int, v, what: str = "vector") -> None:
    if np.asarray(v).shape[-1] != n:
        raise DimMismatch(f"{what} has dimension {np.asarray(v).shape[-1]}, expected {n}")
