import io
import json

import pytest

from orbilift.atlas_io import dump_atlas
from orbilift.cli import run
from orbilift.counterexamples import atlas_fixture


def call(*argv):
    out = io.StringIO()
    status = run(list(argv), stdout=out)
    return status, out.getvalue()


def records(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def test_validate_bad_union():
    status, text = call("validate", "bad-union-F-union-Fprime")
    assert status == 1
    assert "condition (2): no injection F->Fprime (monodromy -I)" in text
    assert records(text)["status"] == "1"


def test_validate_good_union():
    status, text = call("validate", "bad-union-F-union-Fsecond")
    assert status == 0 and records(text)["verdict"] == "valid"


def test_structure_group_teardrop():
    status, text = call("structure-group", "teardrop(3)", "--point", "0,0", "--chart", "cone")
    assert status == 0
    assert records(text)["group"] == "cyclic of order 3"


def test_demo_example2():
    status, text = call("demo", "example2", "--radius", "0.25")
    assert status == 1
    assert records(text)["verdict"] == "NonLiftable: annuli n=4 (trivial), n=5 (identity)"


def test_monodromy_and_compare():
    assert records(call("monodromy", "halfangle")[1])["monodromy"] == "-I"
    status, text = call("compare", "bad-union-F", "bad-union-Fprime", "--samples", "80")
    assert status == 0 and records(text)["equivalent"] == "yes"


@pytest.mark.parametrize("argv", [
    ("validate", "no-such-fixture"),
    ("validate",),
    ("structure-group", "teardrop(3)", "--point", "0,x"),
    ("compare", "mirror", "teardrop(3)"),
    ("lift", "example1"),
])
def test_usage_errors_exit_2(argv, capsys):
    status, _ = call(*argv)
    assert status == 2
    assert capsys.readouterr().err


def test_bad_file_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"charts": [')
    assert call("validate", str(p))[0] == 2
    assert "line 1" in capsys.readouterr().err


def test_validate_file_and_json_out(tmp_path):
    atlas = tmp_path / "mirror.json"
    dump_atlas(atlas_fixture("mirror"), atlas)
    out = tmp_path / "report.json"
    status, text = call("validate", str(atlas), "--samples", "60", "--out", str(out))
    assert status == 1 and "reflection present" in text
    data = json.loads(out.read_text())
    assert data["status"] == 1 and data["summary"]["verdict"] == "invalid"
    status, _ = call("validate", str(atlas), "--samples", "60", "--mode", "diffeological")
    assert status == 0


def test_reports_are_deterministic():
    argv = ("validate", "bad-union-F-union-Fprime")
    assert call(*argv) == call(*argv)
