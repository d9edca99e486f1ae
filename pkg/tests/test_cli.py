import copy
import json
import subprocess
import sys
from pathlib import Path

import pytest

from agm.cli import ScenarioError, load_scenario, main, parse_scenario

ROOT = Path(__file__).resolve().parent.parent
GEN3 = ROOT / "scenarios" / "gen3.json"
ZERO2 = ROOT / "scenarios" / "zero2.json"


def run(tmp_path, *args):
    out = tmp_path / "report.json"
    code = main(list(args) + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def write(tmp_path, obj, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_zero_scenario_passes(tmp_path):
    code, rep = run(tmp_path, "audit", "--scenario", str(ZERO2))
    assert code == 0
    assert rep["meta"]["summary"] == "all pass"
    assert all(c["residual"] == "0" for c in rep["checks"])


def test_check_command(tmp_path):
    code, rep = run(tmp_path, "check", "--scenario", str(GEN3))
    assert code == 0
    assert [c["id"] for c in rep["checks"]] == ["A1", "A2", "A3"]


def test_audit_reports_first_failure(tmp_path):
    code, rep = run(tmp_path, "audit", "--scenario", str(GEN3))
    assert code == 1
    meta = rep["meta"]
    assert meta["summary"] == "first failure: A13"
    assert meta["readings"]["A19"] == "plain" and meta["readings"]["A12"] == "kind1"
    assert len(meta["scenario_digest"]) == 64 and meta["tool"] == "agm"
    by_id = {c["id"]: c for c in rep["checks"]}
    for i in range(1, 8):
        assert by_id[f"A{i}"]["pass"]
    assert by_id["A19"]["pass"]
    # residuals travel as 17-digit decimal strings
    assert isinstance(by_id["A13"]["residual"], str)
    assert float(by_id["A13"]["residual"]) > 1


def test_audit_standard_curvature_flag(tmp_path):
    code, rep = run(tmp_path, "audit", "--scenario", str(GEN3), "--curvature", "standard")
    assert rep["meta"]["curvature"] == "standard"
    assert not {c["id"]: c for c in rep["checks"]}["A19"]["pass"]


def test_fd_mode_flag(tmp_path):
    code, rep = run(tmp_path, "check", "--scenario", str(GEN3), "--mode", "fd")
    assert code == 0
    assert rep["meta"]["mode"] == "fd" and rep["meta"]["fd_step"] == "0.0001"


def test_corrupted_scenario_fails_at_a2(tmp_path):
    raw = json.loads(GEN3.read_text())
    sc = load_scenario(GEN3)
    explicit = json.loads(main_gen(tmp_path))
    explicit["instance"]["mu"][0] = f"({explicit['instance']['mu'][0]}) + 0.1"
    code, rep = run(tmp_path, "audit", "--scenario", write(tmp_path, explicit))
    assert code == 1
    assert rep["meta"]["summary"] == "first failure: A2"
    assert sc.n == raw["n"]


def main_gen(tmp_path):
    out = tmp_path / "explicit.json"
    assert main(["gen", "--scenario", str(GEN3), "--out", str(out)]) == 0
    return out.read_text()


def test_gen_materializes_an_equivalent_scenario(tmp_path):
    explicit = json.loads(main_gen(tmp_path))
    assert "generator" not in explicit and "connection" in explicit
    sc = parse_scenario(explicit)
    assert sc.source == "explicit"
    code, rep = run(tmp_path, "check", "--scenario", write(tmp_path, explicit))
    assert code == 0
    code = main(["gen", "--scenario", write(tmp_path, explicit)])
    assert code == 2


def test_invariants_at_point(tmp_path):
    code, rep = run(tmp_path, "invariants", "--scenario", str(GEN3), "--point", "0.1,-0.2,0.3")
    assert code == 0
    item = rep["invariants"][0]
    assert item["point"] == ["0.10000000000000001", "-0.20000000000000001", "0.29999999999999999"]
    assert float(item["omega_symmetry_residual"]) == 0.0
    assert len(item["thomas_pi2"]) == 3 and len(item["weyl_pi2"][0][0][0]) == 3
    assert item["t1"] is None and item["t1_status"] == "degenerate affinor"


def test_path_command_and_csv(tmp_path):
    csv_path = tmp_path / "curve.csv"
    code = main(["path", "--scenario", str(GEN3), "--out", str(tmp_path / "p.json"), "--csv", str(csv_path)])
    assert code == 0
    rep = json.loads((tmp_path / "p.json").read_text())
    assert rep["paths"][0]["status"] == "pass"
    assert float(rep["paths"][0]["defect_max_interior"]) <= 1e-6
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,lambda1,lambda2,lambda3,defect" and len(lines) == 514


def test_path_vacuous_in_dimension_two(tmp_path):
    code, rep = run(tmp_path, "path", "--scenario", str(ZERO2))
    assert code == 0 and rep["paths"][0]["status"] == "vacuous (N < 3)"


def test_path_chart_exit(tmp_path):
    raw = json.loads(ZERO2.read_text())
    raw["path"] = {"x0": [0, 0], "l0": [5, 0], "bounds": [[-1, 1], [-1, 1]], "steps": 20}
    code, rep = run(tmp_path, "path", "--scenario", write(tmp_path, raw))
    assert code == 1 and rep["paths"][0]["status"] == "chart exit"


def test_load_errors_name_every_field(tmp_path):
    raw = json.loads(GEN3.read_text())
    bad = copy.deepcopy(raw)
    bad["generator"]["p"][1] = "x4 + 1"
    bad["generator"]["F0"][0][0] = 3
    bad["grid"]["count"] = -1
    bad["curvature_mode"] = "riemann"
    bad["colour"] = "blue"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(bad)
    text = str(info.value)
    for path in ("generator.p[1]", "grid.count", "curvature_mode", "colour"):
        assert path in text
    assert len(info.value.errors) >= 4


def test_generator_precondition_reported(tmp_path):
    raw = json.loads(GEN3.read_text())
    raw["generator"]["F0"] = [[2, 0, 0], [0, 1, 0], [0, 0, 1]]
    with pytest.raises(ScenarioError, match="generator.F0"):
        parse_scenario(raw)


def test_explicit_scenario_errors():
    with pytest.raises(ScenarioError, match="connection.1,1,3"):
        parse_scenario({"n": 2, "connection": {"1,1,3": "x1"}, "instance": {}})
    with pytest.raises(ScenarioError, match=r"connection.1,1,2.*x3"):
        parse_scenario({"n": 2, "connection": {"1,1,2": "x3"}, "instance": {}})
    with pytest.raises(ScenarioError, match="instance.e"):
        parse_scenario({"n": 2, "connection": {}, "instance": {"e": 3}})
    with pytest.raises(ScenarioError, match="either"):
        parse_scenario({"n": 2})
    with pytest.raises(ScenarioError, match="n:"):
        parse_scenario({"n": "two"})


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["audit", "--scenario", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{ not json")
    assert main(["audit", "--scenario", str(tmp_path / "bad.json")]) == 2
    assert main(["invariants", "--scenario", str(GEN3), "--point", "0.1,0.2"]) == 2
    assert main(["check", "--scenario", str(GEN3), "--out", str(tmp_path / "no" / "dir" / "r.json")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate", "--scenario", str(GEN3)])
    assert info.value.code == 2
    assert "malformed JSON" in capsys.readouterr().err


def test_module_entry_point_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        proc = subprocess.run([sys.executable, "-m", "agm", "audit", "--scenario", str(GEN3), "--out", str(out)],
                              capture_output=True)
        assert proc.returncode == 1
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
