import json

import pytest

from orbilift.atlas_io import (atlas_to_dict, dump_atlas, loads_atlas, parse_atlas,
                               presentations_equal)
from orbilift.counterexamples import ATLAS_FIXTURES, atlas_fixture
from orbilift.errors import NotFinite, ParseError

MINIMAL = {"mode": "satake",
           "charts": [{"id": "line", "dim": 1, "region": {"kind": "full", "dim": 1},
                       "group": {"scalarMode": "exact", "generators": []}}]}


def one_chart(generators, scalar_mode="exact"):
    d = json.loads(json.dumps(MINIMAL))
    d["charts"][0].update(dim=2, region={"kind": "full", "dim": 2},
                          group={"scalarMode": scalar_mode, "generators": generators})
    return json.dumps(d)


def test_minimal_file(tmp_path):
    p = tmp_path / "line.json"
    p.write_text(json.dumps(MINIMAL))
    P = parse_atlas(p)
    assert P.ids == ["line"] and P.charts[0].group.order == 1


def test_infinite_generator():
    with pytest.raises(NotFinite):
        loads_atlas(one_chart([[[2, 0], [0, 1]]]))


def test_decimal_in_exact_mode_names_field():
    with pytest.raises(ParseError) as info:
        loads_atlas(one_chart([[["0.5", 0], [0, 1]]]))
    assert info.value.field == "charts[0].group.generators[0][0]"


def test_rational_strings_accepted():
    P = loads_atlas(one_chart([[["-1/2", "-3/4"], [1, "-1/2"]]]))
    assert P.charts[0].group.order == 3


def test_approx_mode_accepts_decimals():
    P = loads_atlas(one_chart([[[0.0, -1.0], [1.0, 0.0]]], "approx"))
    assert P.charts[0].group.order == 4


def test_json_syntax_error_has_position():
    with pytest.raises(ParseError) as info:
        loads_atlas('{"charts": [\n  {"id": }]}')
    assert info.value.field.startswith("line 2")


@pytest.mark.parametrize("text", [
    "{}",
    json.dumps({"mode": "nope", "charts": []}),
    json.dumps({"charts": [{"id": "a", "dim": 0}]}),
    one_chart([[[1, 0]]]),
    one_chart([[[0, 0], [0, 0]]]),
])
def test_schema_errors(text):
    with pytest.raises(ParseError):
        loads_atlas(text)


@pytest.mark.parametrize("name", [n for n in ATLAS_FIXTURES if "(" not in n] +
                         ["teardrop(3)", "football(2,3)", "bad-union-F-union-Fsecond"])
def test_round_trip(name, tmp_path):
    P = atlas_fixture(name)
    path = tmp_path / "atlas.json"
    dump_atlas(P, path)
    Q = parse_atlas(path)
    assert presentations_equal(P, Q)
    assert atlas_to_dict(Q) == atlas_to_dict(P)
