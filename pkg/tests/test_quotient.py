import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import corpus, rational_point
from orbilift import numeric as nm
from orbilift.errors import DimMismatch
from orbilift.expr import Annulus, Ball, Union
from orbilift.group import cyclic_rotations, klein_four, minus_identity_group, stabilizer
from orbilift.quotient import (LinearQuotient, canonical_rep, orbit_gaps, quotient_graph_components,
                               same_orbit, slice_chart, slice_collisions, slice_radius)

CORPUS = corpus()
NAMES = sorted(CORPUS)
C4 = LinearQuotient(cyclic_rotations(4))
PM = LinearQuotient(minus_identity_group(2))


def test_same_orbit_examples():
    assert same_orbit(C4, [1, 2], [1, 2])
    assert same_orbit(PM, [1, 2], [-1, -2])
    # oracle: the four rotations of (1,0)
    assert not same_orbit(C4, [1, 0], [1, 1])


def test_same_orbit_dim_mismatch():
    with pytest.raises(DimMismatch):
        same_orbit(C4, [1, 0], [1, 0, 0])


def test_canonical_rep_examples():
    assert list(canonical_rep(C4, [0, 0])) == [0, 0]
    assert [int(x) for x in canonical_rep(PM, [-1, 5])] == [1, -5]
    assert [int(x) for x in canonical_rep(C4, [0, 1])] == [1, 0]


def test_slice_radius_examples():
    assert math.isinf(slice_radius(C4, [0, 0]))
    assert slice_radius(PM, [1, 0], 0.49) == pytest.approx(0.49 * math.sqrt(8))
    # oracle: brute force over the three nontrivial rotations
    gram = 4 * np.eye(2)
    u = np.array([1.0, 0.0])
    gaps = [math.sqrt((g @ u - u) @ gram @ (g @ u - u)) for g in C4.group.floats[1:]]
    assert slice_radius(C4, [1, 0], 0.49) == pytest.approx(0.49 * min(gaps))


def test_slice_chart_centre_and_image():
    ch = slice_chart(PM, [1, 0])
    assert np.allclose(ch([0.0, 0.0]), [1, 0])
    rng = np.random.default_rng(0)
    X = rng.normal(scale=5.0, size=(200, 2))
    Y = ch.chart_map.eval_batch(X) - np.array([1.0, 0.0])
    norms = np.sqrt(np.einsum("ni,ij,nj->n", Y, PM.gram_float, Y))
    assert np.all(norms < ch.radius)


def test_slice_chart_equivariance_dihedral():
    Q = LinearQuotient(klein_four())
    ch = slice_chart(Q, [1, 0])
    assert ch.stabilizer.order == 2
    s = np.diag([1.0, -1.0])
    X = np.random.default_rng(1).normal(size=(100, 2))
    err = ch.chart_map.eval_batch(X @ s.T) - ch.chart_map.eval_batch(X) @ s.T
    assert np.max(np.abs(err)) <= 1e-9


def test_connectivity_transfer_on_annulus():
    n_region, n_quot = quotient_graph_components(Annulus(0.5, 1.0), minus_identity_group(2), 48)
    assert n_region == n_quot == 1


def test_connectivity_negative_control():
    # a +-I-invariant pair of balls away from 0: disconnected upstairs, connected below
    pair = Union((Ball(np.array([1.0, 0.0]), 0.5), Ball(np.array([-1.0, 0.0]), 0.5)))
    n_region, n_quot = quotient_graph_components(pair, minus_identity_group(2), 48)
    assert n_region == 2 and n_quot == 1


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 10 ** 6))
def test_canonical_rep_orbit_invariant(name, seed):
    G = CORPUS[name]
    Q = LinearQuotient(G)
    rng = np.random.default_rng(seed)
    u = rational_point(G, rng)
    base = nm.to_float(canonical_rep(Q, u))
    for g in (G.elements if G.mode.exact else G.floats):
        img = g @ (u if G.mode.exact else nm.to_float(u))
        assert np.allclose(nm.to_float(canonical_rep(Q, img)), base, atol=1e-9)
    assert np.allclose(nm.to_float(canonical_rep(Q, canonical_rep(Q, u))), base, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 10 ** 6))
def test_ball_disjointness(name, seed):
    G = CORPUS[name]
    Q = LinearQuotient(G)
    u = rational_point(G, np.random.default_rng(seed))
    eps = slice_radius(Q, u)
    _, gaps = orbit_gaps(Q, u)
    if gaps:
        assert 2 * eps < min(gaps)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 10 ** 6))
def test_slice_injectivity(name, seed):
    G = CORPUS[name]
    Q = LinearQuotient(G)
    rng = np.random.default_rng(seed)
    u = rational_point(G, rng)
    eps = slice_radius(Q, u)
    if math.isinf(eps):
        eps = 1.0
    uf = nm.to_float(u)
    # sample inside the Gamma-norm ball B(u, eps)
    L = np.linalg.cholesky(Q.gram_float)
    d = rng.normal(size=(80, G.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d *= rng.uniform(0, 1, size=(80, 1)) ** (1 / G.dim) * eps * 0.999
    X = uf + np.linalg.solve(L.T, d.T).T
    assert slice_collisions(Q, u, eps, X) == 0


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 10 ** 6))
def test_slice_chart_equivariant_under_stabilizer(name, seed):
    G = CORPUS[name]
    Q = LinearQuotient(G)
    rng = np.random.default_rng(seed)
    # points on fixed subspaces carry nontrivial stabilizers
    g = G.elements[int(rng.integers(G.order))]
    s = nm.fixed_subspace(g, G.mode)
    u = sum(float(rng.integers(-2, 3)) * nm.to_float(v) for v in s.basis) if s.basis else \
        np.zeros(G.dim)
    ch = slice_chart(Q, np.asarray(u, dtype=float))
    X = rng.normal(size=(30, G.dim))
    for h in stabilizer(G, np.asarray(u, dtype=float)).floats:
        err = ch.chart_map.eval_batch(X @ h.T) - (ch.chart_map.eval_batch(X) - ch.center) @ h.T
        assert np.max(np.abs(err - ch.center)) <= 1e-9
