import io
import json

from polyfract.cli import run


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_examples_list():
    code, out, _ = _run("examples", "list")
    assert code == 0
    assert out.split() == ["carpet", "folded-square", "folded-triangle", "hexa-d3", "identity-square", "opposite-corners"]


def test_validate_exit_codes(tmp_path):
    good, bad = tmp_path / "carpet.toml", tmp_path / "identity.toml"
    assert _run("examples", "write", "carpet", str(good))[0] == 0
    assert _run("examples", "write", "identity-square", str(bad))[0] == 0

    code, out, _ = _run("validate", str(good))
    assert code == 0
    assert json.loads(out)["passed"]

    code, out, _ = _run("validate", str(bad))
    assert code == 2
    report = json.loads(out)
    assert not report["passed"]
    assert [c["axiom"] for c in report["checks"] if not c["passed"]] == ["A4"]


def test_analyze_json(tmp_path):
    path = tmp_path / "carpet.toml"
    _run("examples", "write", "carpet", str(path))
    code, out, _ = _run("analyze", str(path), "--max-level", "1", "--oracle-depth", "2", "--deterministic", "--json", "-")
    assert code == 0
    report = json.loads(out)
    assert report["schema_version"] == "1"
    assert report["verdict"]["theorem"] == "ZJ_transitive"
    assert report["essential_boundary"] == [0, 1, 2, 3]
    assert report["timing"] is None


def test_analyze_text(tmp_path):
    path = tmp_path / "square.toml"
    _run("examples", "write", "folded-square", str(path))
    code, out, _ = _run("analyze", str(path), "--max-level", "1", "--oracle-depth", "2")
    assert code == 0
    assert "verdict: inconclusive" in out


def test_render_writes_svg(tmp_path):
    path, svg = tmp_path / "carpet.toml", tmp_path / "carpet.svg"
    _run("examples", "write", "carpet", str(path))
    assert _run("render", str(path), "--level", "1", "--out", str(svg))[0] == 0
    assert svg.read_bytes().count(b"<polygon") == 8
    pooled = tmp_path / "pooled.svg"
    assert _run("render", str(path), "--level", "1", "--workers", "2", "--out", str(pooled))[0] == 0
    assert pooled.read_bytes() == svg.read_bytes()


def test_energy_csv(tmp_path):
    path = tmp_path / "square.toml"
    _run("examples", "write", "folded-square", str(path))
    code, out, _ = _run("energy", str(path), "--p", "2", "--m-max", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "system,p,M,m,quantity,value,iterations,residual"
    assert lines[1].startswith("folded-square,2.0,2,1,E,")


def test_errors(tmp_path):
    code, _, err = _run("frobnicate")
    assert code == 1
    assert err.startswith("usage error")

    code, _, err = _run("examples", "show", "nope", "--json")
    assert code == 2
    assert json.loads(err)["error"] == "invalid_input"

    code, _, err = _run("dimar", str(tmp_path / "missing.toml"), "--p-lo", "1.5", "--json")
    assert code == 2
    assert json.loads(err)["details"]["path"].endswith("missing.toml")
