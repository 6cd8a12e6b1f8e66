import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbilift.counterexamples import (ATLAS_FIXTURES, SignSequence, atlas_fixture, band_midpoint,
                                      bump, constant_sign_relating, example1_map, example1_pairs,
                                      example2_analysis, example2_map, example2_start_radius,
                                      fixture_cross_relations, halfangle_lift,
                                      halfangle_monodromy)
from orbilift.errors import ParseError


def test_bump_examples():
    assert bump(1)([0.75])[0] > 0
    # 0.5 is the closed end of the support of bump(1)
    assert bump(1)([0.5])[0] == 0
    assert bump(2)([0.7])[0] == 0
    assert bump(3)([1 / math.pi])[0] > 0
    with pytest.raises(ValueError):
        bump(0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.floats(-2, 2, allow_nan=False))
def test_bump_support(n, x):
    v = bump(n)([x])[0]
    assert 0 <= v <= 1
    if not 1 / (n + 1) < x < 1 / n:
        assert v == 0


def test_example1_values():
    f = example1_map(SignSequence([1, -1, 1]))
    assert f([-1.0])[0] == 0 and f([2.0])[0] == 0
    assert f([band_midpoint(1)])[0] > 0
    assert f([band_midpoint(2)])[0] < 0
    assert f([band_midpoint(3)])[0] > 0
    # oracle: exp(-1/x) at the band midpoint, where the bump equals 1
    x = band_midpoint(2)
    assert f([x])[0] == pytest.approx(-math.exp(-1 / x), rel=1e-12)


def test_sign_sequence_rejects_zero():
    with pytest.raises(ValueError):
        SignSequence([1, 0])


@pytest.mark.parametrize("n", range(1, 8))
def test_example1_smooth_across_band_ends(n):
    f = example1_map(SignSequence([(-1) ** k for k in range(10)]))
    x, h = 1.0 / n, 1e-4
    left = (f([x])[0] - f([x - h])[0]) / h
    right = (f([x + h])[0] - f([x])[0]) / h
    assert abs(left - right) <= 1e-6


@pytest.mark.parametrize("pair", example1_pairs(), ids=lambda p: f"n{p[2]}")
def test_example1_pairs_have_no_sign(pair):
    a, b, n = pair
    f1, f2 = example1_map(a), example1_map(b)
    assert constant_sign_relating(f1, f2, 1.0 / n) is None
    assert constant_sign_relating(f1, f2, 1.0 / 5) is None
    # beyond the flipped bands the maps agree
    assert constant_sign_relating(f1, f2, 1.0 / (n + 6)) == 1


def test_example2_values():
    f = example2_map()
    assert np.allclose(f([3.0, 4.0]), 0)
    assert np.allclose(f([0.0, 0.0]), 0)
    # band 3 (odd) keeps the direction, band 2 (even) sends it to the x-axis
    r3, r2 = band_midpoint(3), band_midpoint(2)
    p = np.array([0.0, r3])
    assert np.allclose(f(p), math.exp(-r3) * p, rtol=1e-12)
    q = np.array([0.0, r2])
    assert np.allclose(f(q), [math.exp(-r2) * r2, 0.0], rtol=1e-12)


# 0.15 and 0.03 clip their outer band before its midpoint, where the bump
# underflows; the analysis must step one band inwards
@pytest.mark.parametrize("radius", [0.15, 0.09, 0.03, 0.01])
def test_example2_small_balls_alternate(radius):
    rep = example2_analysis(radius)
    assert rep.status == "NonLiftable"
    homs = {p.band: p.homomorphism for p in rep.pieces if p.homomorphism is not None}
    assert len(homs) == 2
    for band, h in homs.items():
        assert h.is_trivial if band % 2 == 0 else h.map == (0, 1, 2, 3)


def test_example2_start_radius():
    # 0.25 lies in band 4; the continuation starts in band 5
    assert example2_start_radius(0.25) == pytest.approx(band_midpoint(5))
    # 0.15 reaches band 6 only below its midpoint
    assert example2_start_radius(0.15) == pytest.approx(band_midpoint(8))


def test_halfangle_well_defined_across_cut():
    f = halfangle_lift()
    a, b = f([-0.75, 1e-9]), f([-0.75, -1e-9])
    assert np.allclose(a, -b, atol=1e-8)


def test_halfangle_monodromy():
    assert np.allclose(np.asarray(halfangle_monodromy(), dtype=float), -np.eye(2))


@pytest.mark.parametrize("name", ["bad-union-F", "bad-union-F-union-Fprime", "teardrop(3)",
                                  "teardrop", "football(2,3)", "mirror", "pm-plane", "plane"])
def test_fixtures_build(name):
    P = atlas_fixture(name)
    assert P.charts


@pytest.mark.parametrize("name", ["nope", "teardrop(1)", "football(2,3,4)", "bad-union-G",
                                  "bad-union-F-union-F"])
def test_fixture_errors(name):
    with pytest.raises(ParseError):
        atlas_fixture(name)


def test_fixture_names_listed():
    assert "mirror" in ATLAS_FIXTURES


def test_cross_relations():
    F, Fp = atlas_fixture("bad-union-F"), atlas_fixture("bad-union-Fprime")
    assert fixture_cross_relations(F, Fp)
    assert fixture_cross_relations(F, atlas_fixture("mirror")) is None
