import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import corpus, planted_lifts
from orbilift import numeric as nm
from orbilift.counterexamples import example2_analysis, halfangle_lift, halfangle_map
from orbilift.errors import (Inconsistent, NotOrbitPreserving, ObstructionFound, SeedOffOrbit,
                             SingularJacobian)
from orbilift.expr import Annulus, Ball, FullSpace, MapExpr, Union, identity_map, linear_map
from orbilift.group import (GroupHomomorphism, conjugate_group, cyclic_rotations, klein_four,
                            minus_identity_group, trivial_group)
from orbilift.lifting import (QuotientMap, circle_loop, conjugation_table, induced_homomorphism,
                              monodromy, path_lift, radial_lift_extension, stabilizer_transport,
                              unique_group_element, unique_group_element_index)
from orbilift.quotient import LinearQuotient, slice_chart

CORPUS = corpus()
NAMES = sorted(CORPUS)
R90 = np.array([[0.0, -1.0], [1.0, 0.0]])
UNIT = Ball(np.zeros(2), 1.0)


def identity_quotient(G, region=FullSpace(2)):
    Q = LinearQuotient(G)
    return QuotientMap.from_lift(Q, region, Q, identity_map(G.dim))


# ---------------------------------------------------------------- unique element


def test_unique_element_identity():
    G = cyclic_rotations(4)
    assert nm.matrices_equal(unique_group_element(identity_map(2), UNIT, G), G.elements[0],
                             nm.EXACT)


def test_unique_element_rotation():
    G = cyclic_rotations(4)
    g = unique_group_element(linear_map(R90), UNIT, G)
    assert np.array_equal(nm.to_float(g), R90)


def test_unique_element_disconnected_domain():
    G = minus_identity_group(2)
    left, right = Ball(np.array([-2.0, 0.0]), 0.5), Ball(np.array([2.0, 0.0]), 0.5)

    def h(X):
        return np.where(X[:, :1] > 0, X, -X)

    with pytest.raises(Inconsistent):
        unique_group_element(h, Union((left, right)), G)


def test_unique_element_off_orbit():
    with pytest.raises(NotOrbitPreserving):
        unique_group_element(linear_map(2 * np.eye(2)), UNIT, cyclic_rotations(4))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 10 ** 6))
def test_unique_element_recovers_planted(name, seed):
    G = CORPUS[name]
    k = seed % G.order
    h = linear_map(G.floats[k])
    U = Ball(np.zeros(G.dim), 1.0)
    assert unique_group_element_index(h, U, G, samples=40, seed=seed) == k


# ---------------------------------------------------------------- path lifting


def test_path_lift_identity():
    f = identity_quotient(cyclic_rotations(4))
    path = circle_loop(0.7, 50)[:30]
    assert np.allclose(path_lift(f, path, path[0]), path)


def test_path_lift_halfangle_arc_is_continuous():
    f = halfangle_map()
    arc = circle_loop(0.75, 200)[:150]
    lifted = path_lift(f, arc, f.rep_batch(arc[:1])[0])
    steps = np.linalg.norm(np.diff(lifted, axis=0), axis=1)
    assert steps.max() < 0.05
    # oracle: the explicit half-angle formula up to one global sign, before its
    # atan2 branch cut at angle pi
    head = arc[:95]
    exact = halfangle_lift().eval_batch(head)
    err = min(np.max(np.abs(lifted[:95] - exact)), np.max(np.abs(lifted[:95] + exact)))
    assert err < 1e-12


def test_path_lift_halfangle_full_circle():
    f = halfangle_map()
    loop = circle_loop(0.75)
    lifted = path_lift(f, loop, f.rep_batch(loop[:1])[0])
    assert np.allclose(lifted[-1], -lifted[0])


def test_path_lift_seed_off_orbit():
    f = identity_quotient(cyclic_rotations(4))
    with pytest.raises(SeedOffOrbit):
        path_lift(f, circle_loop(0.5, 20), np.array([0.3, 0.3]))


def test_monodromy_examples():
    f = identity_quotient(cyclic_rotations(4))
    const = np.repeat([[0.5, 0.2]], 10, axis=0)
    assert np.allclose(nm.to_float(monodromy(f, const, const[0])), np.eye(2))
    loop = circle_loop(0.5)
    assert np.allclose(nm.to_float(monodromy(f, loop, loop[0])), np.eye(2))
    h = halfangle_map()
    loop = circle_loop(0.75)
    assert np.allclose(nm.to_float(monodromy(h, loop, h.rep_batch(loop[:1])[0])), -np.eye(2))


# ---------------------------------------------------------------- radial extension


@pytest.mark.parametrize("case", planted_lifts(), ids=lambda c: c[0])
def test_radial_lift_recovers_planted(case):
    _, G, H, f0 = case
    f = QuotientMap.from_lift(LinearQuotient(G), FullSpace(2), LinearQuotient(H), f0)
    rep = radial_lift_extension(f)
    assert rep.status == "Lifted"
    X = FullSpace(2).sample(np.random.default_rng(3), 150) * 0.95
    L, Y = rep.lift(X), f0.eval_batch(X)
    errs = [np.max(np.abs(L - Y @ g.T)) for g in H.floats]
    assert min(errs) <= 1e-6


@pytest.mark.parametrize("case", planted_lifts()[:4], ids=lambda c: c[0])
def test_lifts_from_different_seeds_differ_by_constant(case):
    _, G, H, f0 = case
    f = QuotientMap.from_lift(LinearQuotient(G), FullSpace(2), LinearQuotient(H), f0)
    g = H.floats[-1]
    a = radial_lift_extension(f, f_rho=f0).lift
    b = radial_lift_extension(f, f_rho=linear_map(g).compose(f0)).lift
    X = FullSpace(2).sample(np.random.default_rng(4), 100) * 0.95
    A, B = a(X), b(X)
    assert min(np.max(np.abs(B - A @ h.T)) for h in H.floats) <= 1e-9


def test_radial_lift_halfangle_annulus():
    f = halfangle_map(region=Annulus(0.55, 0.95))
    rep = radial_lift_extension(f)
    assert rep.status == "NonLiftable"
    assert np.allclose(nm.to_float(rep.obstruction.element), -np.eye(2))
    with pytest.raises(ObstructionFound):
        radial_lift_extension(f, raise_on_obstruction=True)


def test_radial_lift_example2():
    rep = example2_analysis(0.25)
    assert rep.status == "NonLiftable"
    homs = {p.band: p.homomorphism for p in rep.pieces if p.homomorphism is not None}
    assert homs[4].is_trivial and not homs[5].is_trivial


def test_radial_lift_rejects_wrong_pin():
    G = cyclic_rotations(4)
    f = identity_quotient(G)
    with pytest.raises(NotOrbitPreserving):
        radial_lift_extension(f, f_rho=linear_map(2 * np.eye(2)))


# ---------------------------------------------------------------- homomorphisms


def test_induced_identity():
    G = cyclic_rotations(4)
    h = induced_homomorphism(identity_map(2), G, G, UNIT)
    assert h.map == (0, 1, 2, 3)


@pytest.mark.parametrize("case", planted_lifts(), ids=lambda c: c[0])
def test_induced_conjugation(case):
    _, G, H, f0 = case
    # conjugate_group keeps the element order: h(g_i) = h_i
    assert induced_homomorphism(f0, G, H, UNIT).map == tuple(range(G.order))


def test_induced_slice_chart_inclusion():
    G = klein_four()
    ch = slice_chart(LinearQuotient(G), [1, 0])
    h = induced_homomorphism(ch.chart_map, ch.stabilizer, G, FullSpace(2))
    for i, j in enumerate(h.map):
        assert np.array_equal(nm.to_float(ch.stabilizer.elements[i]), G.floats[j])
    assert h.is_injective


@pytest.mark.parametrize("case", planted_lifts()[::2], ids=lambda c: c[0])
def test_jacobian_table_matches_orbit_matching(case):
    _, G, H, f0 = case
    L = nm.jacobian_fd(f0, [0.0, 0.0])
    assert tuple(conjugation_table(L, G, H)) == induced_homomorphism(
        f0, G, H, UNIT, check_jacobian=False).map


def test_homomorphism_validation():
    G = cyclic_rotations(4)
    GroupHomomorphism(G, G, (0, 1, 2, 3)).validate()
    with pytest.raises(Exception):
        GroupHomomorphism(G, G, (0, 1, 1, 3)).validate()


# ---------------------------------------------------------------- stabilizer transport


def test_transport_identity():
    Q = LinearQuotient(cyclic_rotations(4))
    L, ok = stabilizer_transport(identity_map(2), Q, Q, [0.0, 0.0])
    assert ok and np.allclose(L, np.eye(2))


def test_transport_conjugation():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    G = cyclic_rotations(4)
    Q, Q2 = LinearQuotient(G), LinearQuotient(conjugate_group(G, A))
    L, ok = stabilizer_transport(linear_map(A), Q, Q2, [0.0, 0.0])
    assert ok and np.allclose(L, A, atol=1e-9)


def test_transport_halfangle_mismatch():
    Q, Q2 = LinearQuotient(trivial_group(2)), LinearQuotient(minus_identity_group(2))
    _, ok = stabilizer_transport(halfangle_lift(), Q, Q2, [0.3, 0.0])
    assert not ok


def test_transport_singular():
    Q = LinearQuotient(trivial_group(2))
    with pytest.raises(SingularJacobian):
        stabilizer_transport(MapExpr(2, [linear_map(np.eye(2)).components[0], 0.0]), Q, Q,
                             [0.5, 0.5])
