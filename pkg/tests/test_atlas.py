import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import corpus
from orbilift import numeric as nm
from orbilift.atlas import (DIFFEOLOGICAL, HAEFLIGER, SATAKE, Chart, OrbifoldPresentation,
                            Transition, atlases_equivalent, compare_atlases,
                            haefliger_compatible, identity_identifications, image_is_component,
                            injection_unique_factor, relation_map, restrict_family,
                            selection_from, structure_group_at, structure_group_consistency,
                            validate, validate_defining_family, validate_injection,
                            validate_lus)
from orbilift.counterexamples import atlas_fixture, fixture_cross_relations, mirror
from orbilift.errors import EmptyRestriction, IdentificationIncomplete, NoFactor, OutOfChart
from orbilift.expr import Annulus, Ball, FullSpace, Union
from orbilift.group import (close_generators, conjugate_in_gl, cyclic_rotations,
                            minus_identity_group, trivial_group)

CORPUS = corpus()
PLANE = FullSpace(2)
R90 = np.array([[0.0, -1.0], [1.0, 0.0]])
PM = minus_identity_group(2)


def ident(src, tgt, A=np.eye(2), b=np.zeros(2), domain=PLANE):
    return Transition(src, tgt, domain, np.asarray(A, dtype=float), np.asarray(b, dtype=float))


# ---------------------------------------------------------------- charts


def test_lus_ball_trivial():
    assert validate_lus(Chart("a", Ball(np.zeros(2), 1.0), trivial_group(2))).ok


def test_lus_reflection_in_satake_mode():
    c = Chart("a", PLANE, close_generators([[[1, 0], [0, -1]]]))
    rep = validate_lus(c, SATAKE)
    assert rep.messages() == ["reflection present: diag(1,-1)"]
    assert validate_lus(c, DIFFEOLOGICAL).ok


def test_lus_pm_plane():
    assert validate_lus(Chart("a", PLANE, PM), SATAKE).ok


def test_lus_disconnected_and_not_invariant():
    two = Union((Ball(np.array([1.0, 0.0]), 0.3), Ball(np.array([-1.0, 0.0]), 0.3)))
    assert not validate_lus(Chart("a", two, trivial_group(2))).ok
    off = Chart("b", Ball(np.array([1.0, 0.0]), 0.5), PM)
    assert any("not invariant" in m for m in validate_lus(off).messages())


# ---------------------------------------------------------------- injections


def test_injection_identity():
    c = Chart("a", PLANE, cyclic_rotations(4))
    assert validate_injection(ident("a", "a"), c, c).ok


def test_injection_rotation_on_pm():
    a, b = Chart("a", PLANE, PM), Chart("b", PLANE, PM)
    assert validate_injection(ident("a", "b", R90), a, b).ok


def test_injection_translation_into_cyclic4():
    a, b = Chart("a", PLANE, trivial_group(2)), Chart("b", PLANE, cyclic_rotations(4))
    rep = validate_injection(ident("a", "b", b=[1.0, 0.0]), a, b)
    assert not rep.ok
    # oracle: (0,0) and (-2,0) map to (1,0) and (-1,0), one C4 orbit
    assert any("distinct source orbits" in m for m in rep.messages())


def test_injection_singular():
    c = Chart("a", PLANE, trivial_group(2))
    rep = validate_injection(ident("a", "a", np.zeros((2, 2))), c, c)
    assert rep.messages() == ["transition a->a: linear part is singular"]


def test_unique_factor_examples():
    to = Chart("b", PLANE, PM)
    lam = ident("a", "b", R90)
    assert np.allclose(nm.to_float(injection_unique_factor(lam, lam, to)), np.eye(2))
    mu = ident("a", "b", -R90)
    assert np.allclose(nm.to_float(injection_unique_factor(lam, mu, to)), -np.eye(2))
    with pytest.raises(NoFactor):
        injection_unique_factor(lam, ident("a", "b", 2 * R90), to)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(n for n in CORPUS if CORPUS[n].dim == 2)), st.integers(0, 10 ** 6))
def test_unique_factor_recovers_planted(name, seed):
    G = CORPUS[name]
    rng = np.random.default_rng(seed)
    k = int(rng.integers(G.order))
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = rng.normal(size=2)
    lam = ident("a", "b", A, b)
    mu = ident("a", "b", G.floats[k] @ A, G.floats[k] @ b)
    g = injection_unique_factor(lam, mu, Chart("b", PLANE, G), samples=40, seed=seed)
    assert np.allclose(nm.to_float(g), G.floats[k], atol=1e-9)


# ---------------------------------------------------------------- defining families


def test_single_chart_family():
    P = OrbifoldPresentation([Chart("a", PLANE, PM)])
    assert validate_defining_family(P, samples=60).ok


def test_bad_union_rejected():
    rep = validate_defining_family(atlas_fixture("bad-union-F-union-Fprime"))
    assert not rep.ok
    assert any(m.startswith("condition (2)") and "-I" in m for m in rep.messages())


@pytest.mark.parametrize("name", ["bad-union-F-union-Fsecond", "bad-union-Fprime-union-Fsecond"])
def test_good_unions_accepted(name):
    rep = validate_defining_family(atlas_fixture(name))
    assert rep.ok, rep.lines()


def test_transition_images_are_components():
    P = atlas_fixture("bad-union-F-union-Fsecond")
    assert all(image_is_component(P, k) for k in range(len(P.transitions)))


# ---------------------------------------------------------------- Haefliger


def test_haefliger_same_chart():
    P = OrbifoldPresentation([Chart("a", PLANE, cyclic_rotations(4))],
                             [ident("a", "a")], mode=HAEFLIGER)
    assert haefliger_compatible(P, "a", "a", samples=40).ok


def test_haefliger_annulus_halfangle_germs():
    F, Fp = atlas_fixture("bad-union-F"), atlas_fixture("bad-union-Fprime")
    assert compare_atlases(F, Fp, fixture_cross_relations(F, Fp), samples=60).ok


def test_haefliger_stabilizer_mismatch():
    A, B = atlas_fixture("pm-plane"), atlas_fixture("plane")
    rep = compare_atlases(A, B, fixture_cross_relations(A, B), samples=60)
    assert not rep.ok


# ---------------------------------------------------------------- equivalence


def test_equivalence_reflexive():
    P = atlas_fixture("teardrop(3)")
    assert atlases_equivalent(P, P, identity_identifications(P), samples=60)


@pytest.mark.parametrize("a,b", [("F", "Fprime"), ("Fprime", "F"), ("F", "Fsecond"),
                                 ("Fsecond", "Fprime")])
def test_annulus_equivalences(a, b):
    P, Q = atlas_fixture("bad-union-" + a), atlas_fixture("bad-union-" + b)
    assert atlases_equivalent(P, Q, fixture_cross_relations(P, Q), samples=80)


def test_pm_plane_not_plane():
    A, B = atlas_fixture("pm-plane"), atlas_fixture("plane")
    assert not atlases_equivalent(A, B, fixture_cross_relations(A, B), samples=60)


def test_identification_incomplete():
    P = OrbifoldPresentation([Chart("a", PLANE, PM), Chart("b", PLANE, PM)], mode=HAEFLIGER)
    Q = OrbifoldPresentation([Chart("c", PLANE, PM)], mode=HAEFLIGER)
    with pytest.raises(IdentificationIncomplete):
        atlases_equivalent(P, Q, [ident("a", "c")])


# ---------------------------------------------------------------- restriction


def pm_plane_presentation():
    return OrbifoldPresentation([Chart("a", PLANE, PM)], mode=HAEFLIGER, name="pm")


def test_restrict_everything():
    P = pm_plane_presentation()
    R = restrict_family(P, {"a": PLANE})
    assert R.ids == ["a"] and R.chart("a").group.order == 2


def test_restrict_punctured_plane():
    P = pm_plane_presentation()
    R = restrict_family(P, {"a": Annulus(0.1, 3.0)})
    assert len(R.charts) == 1 and R.charts[0].group.order == 2


def test_restrict_ball_pair():
    P = pm_plane_presentation()
    pair = Union((Ball(np.array([1.0, 0.0]), 0.3), Ball(np.array([-1.0, 0.0]), 0.3)))
    R = restrict_family(P, {"a": pair})
    assert len(R.charts) == 1
    c = R.charts[0]
    assert c.group.order == 1 and c.model.contains_point(np.array([1.0, 0.0]))


def test_restrict_empty():
    with pytest.raises(EmptyRestriction):
        restrict_family(pm_plane_presentation(), {"a": Ball(np.array([50.0, 0.0]), 0.1)})


def test_restriction_of_annulus_validates():
    P = atlas_fixture("bad-union-F")
    R = restrict_family(P, selection_from(P, P.ids[0], Ball(np.array([0.5, 0.0]), 0.3)))
    assert validate(R, samples=80).ok


# ---------------------------------------------------------------- structure groups


def test_structure_group_examples():
    P = OrbifoldPresentation([Chart("a", PLANE, cyclic_rotations(4))])
    assert structure_group_at(P, "a", [0.3, 0.1]).order == 1
    assert structure_group_at(P, "a", [0, 0]).order == 4
    with pytest.raises(OutOfChart):
        structure_group_at(P, "b", [0, 0])
    Q = OrbifoldPresentation([Chart("a", Ball(np.zeros(2), 1.0), PM)])
    with pytest.raises(OutOfChart):
        structure_group_at(Q, "a", [2.0, 0.0])


def test_structure_group_identified_point():
    P = atlas_fixture("teardrop(3)")
    a, b = P.ids[0], P.ids[1]
    X = P.chart(a).model.sample(np.random.default_rng(0), 40)
    Y, ok = relation_map(P, a, X, b)
    assert ok.any()
    u, v = X[ok][0], Y[ok][0]
    assert conjugate_in_gl(structure_group_at(P, a, u), structure_group_at(P, b, v)) is not None


@pytest.mark.parametrize("name", ["teardrop(3)", "football(2,3)", "mirror"])
def test_structure_group_consistency(name):
    chk = structure_group_consistency(atlas_fixture(name), samples=30)
    assert chk.checked > 0 and chk.ok


def test_mirror_modes():
    assert not validate(mirror(), samples=60).ok
    assert any("reflection" in m for m in validate(mirror(), samples=60).messages())
    assert validate(mirror(DIFFEOLOGICAL), samples=60).ok
