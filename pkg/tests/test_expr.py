import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbilift.errors import DimMismatch, EvaluationError, ParseError
from orbilift.expr import (Annulus, Ball, Binary, Box, Bump, BumpAt, Const, Coord, ExprRegion,
                           FullSpace, Intersection, MapExpr, Radial, Unary, Union, Where,
                           band_index, linear_map, parse_expr, parse_map, region_from_dict)

leaves = st.one_of(st.builds(Coord, st.integers(0, 1)), st.just(Radial()),
                   st.builds(Const, st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 3))))


def _extend(children):
    return st.one_of(
        st.builds(Binary, st.sampled_from(["+", "-", "*"]), children, children),
        st.builds(Unary, st.sampled_from(["sin", "cos", "exp", "neg"]), children),
        st.builds(lambda a, b: Binary("atan2", a, b), children, children),
        st.builds(lambda a: Bump(2, a), children),
        st.builds(lambda a, b, c: Where(a.gt(0), b, c), children, children, children),
    )


exprs = st.recursive(leaves, _extend, max_leaves=8)


@settings(max_examples=80, deadline=None)
@given(exprs)
def test_source_round_trip(e):
    X = np.random.default_rng(0).uniform(-1, 1, size=(16, 2))
    with np.errstate(all="ignore"):
        a = np.broadcast_to(e.ev(X), (16,))
        b = np.broadcast_to(parse_expr(e.src(), 2).ev(X), (16,))
    assert np.allclose(a, b, equal_nan=True, rtol=1e-12, atol=1e-12)


def test_map_evaluation_and_composition():
    f = parse_map(["x + 2*y", "x*y"], 2)
    g = linear_map(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(f([1.0, 2.0]), [5.0, 2.0])
    assert np.allclose(f.compose(g)([1.0, 2.0]), [4.0, 2.0])


def test_map_errors():
    with pytest.raises(DimMismatch):
        parse_map(["x"], 2).eval_batch(np.zeros((3, 3)))
    with pytest.raises(EvaluationError):
        parse_map(["1/x"], 1)([0.0])
    with pytest.raises(ParseError):
        parse_expr("import os", 2)
    with pytest.raises(ParseError):
        parse_expr("z + 1", 2)


def test_band_index():
    assert list(band_index([1.0, 0.5, 0.4, 1 / 3, 0.0, 1.5])) == [1, 2, 2, 3, 0, 0]


def test_bump_support_and_peak():
    b = Bump(3, Coord(0))
    X = np.array([[0.25], [1 / 3], [0.29], [0.3]])
    v = b.ev(X)
    assert v[0] == 0 and v[1] == 0 and 0 < v[2] <= 1 and 0 < v[3] <= 1
    mid = 0.5 * (0.25 + 1 / 3)
    assert BumpAt(Coord(0)).ev(np.array([[mid]]))[0] == pytest.approx(1.0)


REGIONS = [
    FullSpace(2),
    Ball(np.array([0.5, -1.0]), 0.75),
    Ball(np.zeros(2), 1.0, gram=np.array([[2.0, 1.0], [1.0, 2.0]])),
    Annulus(0.25, 1.0),
    Box([-1.0, 0.0], [1.0, 2.0]),
    Union((Ball(np.array([1.0, 0.0]), 0.5), Ball(np.array([-1.0, 0.0]), 0.5))),
    Intersection((Ball(np.zeros(2), 1.0), Annulus(0.0, 2.0))),
    ExprRegion(Ball(np.zeros(2), 1.0), parse_expr("x - y*y", 2)),
]


@pytest.mark.parametrize("k", range(len(REGIONS)))
def test_region_dict_round_trip(k):
    R = REGIONS[k]
    S = region_from_dict(R.to_dict(), 2)
    X = np.random.default_rng(k).uniform(-2.5, 2.5, size=(500, 2))
    assert np.array_equal(R.contains(X), S.contains(X))
    assert S.to_dict() == R.to_dict()


@pytest.mark.parametrize("k", range(1, len(REGIONS)))
def test_region_samples_inside(k):
    R = REGIONS[k]
    X = R.sample(np.random.default_rng(0), 50)
    assert np.all(R.contains(X))


def test_grid_components():
    two = REGIONS[5]
    _, _, labels, count = two.grid_components(48)
    assert count == 2
    assert Annulus(0.5, 1.0).grid_components(48)[3] == 1


def test_region_parse_errors():
    with pytest.raises(ParseError):
        region_from_dict({"kind": "blob"}, 2)
    with pytest.raises(ParseError):
        region_from_dict({"kind": "ball", "center": ["0", "0"]}, 2)
