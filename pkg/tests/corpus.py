"""Shared finite-group corpus for tests."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from orbilift import numeric as nm
from orbilift.expr import linear_map
from orbilift.group import (close_generators, conjugate_group, cyclic_rotations, invariant_gram,
                            klein_four, minus_identity_group, trivial_group)
from orbilift.quotient import squash_map


def _random_rational_matrix(n: int, rng) -> list:
    """Small-integer matrix with determinant +-1 or +-2 (rational inverse, mild shear)."""
    while True:
        A = rng.integers(-2, 3, size=(n, n))
        d = round(np.linalg.det(A))
        if d in (1, -1, 2, -2):
            return A.tolist()


def base_groups() -> dict:
    return {
        "trivial": trivial_group(2),
        "pm1": minus_identity_group(1),
        "pm2": minus_identity_group(2),
        "pm3": minus_identity_group(3),
        "cyclic2": cyclic_rotations(2),
        "cyclic3": cyclic_rotations(3),
        "cyclic4": cyclic_rotations(4),
        "cyclic6": cyclic_rotations(6),
        "dihedral4": klein_four(),
    }


def corpus(seed: int = 0) -> dict:
    """Base groups plus a random rational conjugate of each."""
    rng = np.random.default_rng(seed)
    out = dict(base_groups())
    for name, G in base_groups().items():
        out[name + "~"] = conjugate_group(G, _random_rational_matrix(G.dim, rng))
    return out


def rational_point(G, rng, lo: int = -5, hi: int = 6):
    return np.array([Fraction(int(rng.integers(lo, hi)), int(rng.integers(1, 4)))
                     for _ in range(G.dim)], dtype=object)


def swap_group():
    return close_generators([[[0, 1], [1, 0]]])


PLANTED = [
    ("cyclic4", [[1, 1], [0, 1]]),
    ("dihedral4", [[1, 2], [0, 1]]),
    ("cyclic6", [[3, 1], [1, 1]]),
    ("pm2", [[1, 3], [0, 2]]),
    ("cyclic3", [[2, 1], [1, 1]]),
]


def planted_lifts() -> list:
    """(label, G, H, f0) with f0 G-to-H equivariant and H = A G A^-1 in G's element order.

    Half are linear conjugations x -> A x, half compose A with the squash
    x -> x / sqrt(1 + |x|^2_G) of a centred slice chart.
    """
    out = []
    groups = base_groups()
    for name, A in PLANTED:
        G = groups[name]
        H = conjugate_group(G, A)
        lin = linear_map(np.array(A, dtype=float))
        out.append((f"{name}-linear", G, H, lin))
        gram = nm.to_float(invariant_gram(G).gram) / G.order
        out.append((f"{name}-slice", G, H, lin.compose(squash_map(np.zeros(2), 1.0, gram))))
    return out
