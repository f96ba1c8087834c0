import json
import math
import re
import subprocess
import sys
from pathlib import Path

import pytest

from trendmax.cli import main
from trendmax.data import AnalysisConfig
from trendmax.fixtures import fixture_path
from trendmax.report import Report, build_report, render_json, render_report, render_text

GOLDEN = Path(__file__).parent / "golden"


def run_cli(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--output", str(out)])
    return code, out.read_bytes() if out.exists() else b""


def numbers_close(a, b, rel=1e-9):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(numbers_close(a[k], b[k], rel) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(numbers_close(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, (int, float)):
        return math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)
    return a == b


@pytest.mark.parametrize("name", ["acrylamide", "glyphosate"])
def test_golden_text(tmp_path, name):
    code, out = run_cli(tmp_path, "trend", "--input", str(fixture_path(name)),
                        "--pseudo", "add2", "--link", "logit", "--williams")
    assert code == 0
    assert out.decode() == (GOLDEN / f"{name}.txt").read_text()


@pytest.mark.parametrize("name", ["acrylamide", "glyphosate"])
def test_golden_json(tmp_path, name):
    code, out = run_cli(tmp_path, "trend", "--input", str(fixture_path(name)), "--format", "json")
    assert code == 0
    assert numbers_close(json.loads(out), json.loads((GOLDEN / f"{name}.json").read_text()))


def test_acrylamide_table_layout(tmp_path):
    _, out = run_cli(tmp_path, "trend", "--input", str(fixture_path("acrylamide")))
    text = out.decode()
    rows = [line for line in text.splitlines() if re.match(r"^(arithmetic|ordinal|log|C: )", line)]
    assert len(rows) == 7
    assert re.search(r"^ordinal\s+2\.\d\d\s+0\.\d{4}\s", text, re.M)


def test_glyphosate_json_arithmetic_p(tmp_path):
    _, out = run_cli(tmp_path, "trend", "--input", str(fixture_path("glyphosate")),
                     "--pseudo", "add2", "--link", "logit", "--williams", "--format", "json")
    report = json.loads(out)
    row = next(m for m in report["members"] if m["label"] == "arithmetic")
    assert row["p_adj"] == pytest.approx(0.024, abs=0.004)
    assert report["warnings"] == []
    assert report["shape"] == "arithmetic"
    assert {"config", "members", "shape", "warnings", "mvn_error"} <= report.keys()


def test_json_round_trip(tmp_path):
    _, out = run_cli(tmp_path, "trend", "--input", str(fixture_path("acrylamide")), "--format", "json")
    report = Report.from_dict(json.loads(out))
    assert render_json(report).encode() == out


def test_text_and_json_agree(tmp_path):
    _, js = run_cli(tmp_path, "trend", "--input", str(fixture_path("glyphosate")),
                    "--format", "json", name="a")
    _, txt = run_cli(tmp_path, "trend", "--input", str(fixture_path("glyphosate")), name="b")
    report = Report.from_dict(json.loads(js))
    assert render_text(report).encode() == txt


def test_reruns_are_byte_identical(tmp_path):
    args = ("trend", "--input", str(fixture_path("glyphosate")), "--format", "json", "--seed", "9")
    _, a = run_cli(tmp_path, *args, name="a")
    _, b = run_cli(tmp_path, *args, name="b")
    assert a == b


def test_seed_from_environment(tmp_path, monkeypatch):
    args = ("trend", "--input", str(fixture_path("glyphosate")), "--format", "json")
    monkeypatch.setenv("TRENDMAX_SEED", "5")
    _, env = run_cli(tmp_path, *args, name="a")
    assert json.loads(env)["config"]["mvn_seed"] == 5
    _, flag = run_cli(tmp_path, *args, "--seed", "6", name="b")
    assert json.loads(flag)["config"]["mvn_seed"] == 6
    monkeypatch.delenv("TRENDMAX_SEED")
    _, default = run_cli(tmp_path, *args, name="c")
    assert json.loads(default)["config"]["mvn_seed"] == 42


def test_bad_seed_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TRENDMAX_SEED", "abc")
    code, _ = run_cli(tmp_path, "trend", "--input", str(fixture_path("glyphosate")))
    assert code == 2


@pytest.mark.parametrize("content", ["", "dose,events,n\n", "dose,events,n\n0,5,10\n",
                                     "dose,events\n0,1\n1,2\n", "dose,events,n\n0,x,10\n1,2,10\n"])
def test_invalid_input_exits_2(tmp_path, capsys, content):
    path = tmp_path / "in.csv"
    path.write_text(content)
    code, _ = run_cli(tmp_path, "trend", "--input", str(path))
    assert code == 2
    assert "invalid input" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["trend"],
    ["trend", "--input", "x.csv", "--link", "probit"],
    ["trend", "--input", "x.csv", "--scalings", "ari,cubic"],
    ["trend", "--input", "/nonexistent/x.csv"],
    ["polyk", "--input", "x.csv", "--k", "a,b"],
    ["frobnicate"],
])
def test_bad_options_exit_2(argv, capsys):
    assert main(argv) == 2


def test_numerical_failure_exits_3(tmp_path, capsys):
    path = tmp_path / "sep.csv"
    path.write_text("dose,events,n\n0,0,20\n1,0,20\n2,20,20\n")
    code, _ = run_cli(tmp_path, "trend", "--input", str(path), "--pseudo", "none")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_stdin_input():
    text = fixture_path("glyphosate").read_text()
    proc = subprocess.run([sys.executable, "-m", "trendmax", "trend", "--input", "-",
                           "--scalings", "ari", "--no-williams", "--format", "json"],
                          input=text.encode(), capture_output=True, check=True)
    report = json.loads(proc.stdout)
    assert [m["label"] for m in report["members"]] == ["arithmetic"]


def test_polyk_subcommand(tmp_path):
    lines = ["dose,tumor,death_time"]
    for i in range(30):
        lines.append(f"0,{int(i % 10 == 0)},{104 if i % 3 else 60 + i}")
        lines.append(f"10,{int(i % 4 == 0)},{104 if i % 2 else 50 + i}")
        lines.append(f"30,{int(i % 3 == 0)},{104 if i % 4 else 70 + i}")
    path = tmp_path / "animals.csv"
    path.write_text("\n".join(lines) + "\n")
    code, out = run_cli(tmp_path, "polyk", "--input", str(path), "--k", "3,6", "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["link"] == "identity"
    assert [t["title"] for t in report["tables"]] == ["poly-3 adjusted sizes", "poly-6 adjusted sizes"]
    assert len(report["members"]) == 2 * (3 + 2)
    assert report["members"][0]["label"] == "k=3: arithmetic"
    # identity link: no exponentiated columns
    assert report["members"][0]["exp_estimate"] is None


def test_polyk_rejects_pseudo_counts(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("dose,tumor,death_time\n0,0,10\n1,1,10\n")
    assert main(["polyk", "--input", str(path), "--pseudo", "add2"]) == 2


def test_multi_subcommand(tmp_path):
    lines = ["id,dose,liver,lung"]
    for i in range(60):
        dose = (0, 5, 20)[i % 3]
        lines.append(f"r{i},{dose},{int((i * 7) % 11 < 1 + dose // 5)},{int((i * 5) % 13 < 2)}")
    path = tmp_path / "wide.csv"
    path.write_text("\n".join(lines) + "\n")
    code, out = run_cli(tmp_path, "multi", "--input", str(path), "--endpoints", "liver,lung",
                        "--scalings", "ari,ord", "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert len(report["members"]) == 8
    assert report["members"][4]["label"].startswith("lung: ")
    assert isinstance(report["warnings"], list)


def test_report_without_exp_columns_for_identity(glyphosate):
    from trendmax.family import build_family
    from trendmax.inference import test_family as run_test
    config = AnalysisConfig(link="identity", alternative="two_sided")
    res = run_test(build_family(glyphosate, config), config)
    text = render_report(build_report(res, config), "text").decode()
    assert "exp(" not in text
    assert "lower" in text and "upper" in text
    with pytest.raises(ValueError):
        render_report(build_report(res, config), "xml")
