import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from echelon.cli import main
from echelon.divisors import min_small_divisor
from echelon.series import from_literal

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run(tmp_path, *args):
    res = CliRunner().invoke(main, [*args, "--out", str(tmp_path)])
    out = json.loads(res.output.strip().splitlines()[-1]) if res.output.strip() else None
    return res.exit_code, out


def artifact(out, suffix):
    return Path(next(f for f in out["files"] if f.endswith(suffix)))


def test_diophantine_golden(tmp_path):
    code, out = run(tmp_path, "diophantine", "--lambda", "1,(1+sqrt(5))/2", "--tau", "1", "--cutoff", "30",
                    "--C", "0.3", "--exact")
    assert code == 0 and out["verdict"] == "pass" and out["status"] == "ok"
    summary = json.loads(Path(out["files"][-1]).read_text())
    assert summary["exact"] and summary["witness"]


def test_diophantine_resonant_exit_code(tmp_path):
    code, out = run(tmp_path, "diophantine", "--lambda", "1,1", "--tau", "1", "--cutoff", "5")
    assert code == 4 and out["status"] == "resonant" and out["witness"] == [1, -1]


def test_negative_tau_is_precondition(tmp_path):
    code, out = run(tmp_path, "diophantine", "--lambda", "1,2", "--tau", "-1", "--cutoff", "5")
    assert code == 3 and "error" in json.dumps(out).lower()


def test_bad_lambda_is_parse_error(tmp_path):
    code, _ = run(tmp_path, "diophantine", "--lambda", "1,zz(", "--tau", "1", "--cutoff", "5")
    assert code == 2


def test_divisors_csv(tmp_path):
    code, out = run(tmp_path, "divisors", "--siegel", "--lambda", "1,2", "--cutoff", "2", "--exact")
    assert code == 0
    lines = artifact(out, ".csv").read_text().splitlines()
    assert lines[0] == "j,i,value,resonant"
    assert "2 0,2,0,true" in lines
    assert out["files"][-1].endswith(".json")


def test_linearize_matches_oracle_fixture(tmp_path):
    code, out = run(tmp_path, "linearize", "--field", str(FIXTURES / "siegel1d.json"), "--exact")
    assert code == 0 and out["orders"] == ["inf"]
    h = from_literal(json.loads(artifact(out, ".h.json").read_text())["h"][0])
    oracle = from_literal(json.loads((FIXTURES / "siegel1d_oracle.json").read_text())["h"][0])
    assert h == oracle
    summary = json.loads(Path(out["files"][-1]).read_text())
    assert summary["conjugacy_defect_order"] == "inf"


def test_linearize_resonance_exit_code(tmp_path):
    field = {"field": [
        {"signature": [0, 2], "cap": 3, "coeffs": [{"idx": [1, 0], "re": 1, "im": 0}]},
        {"signature": [0, 2], "cap": 3, "coeffs": [{"idx": [0, 1], "re": 2, "im": 0}, {"idx": [2, 0], "re": 1, "im": 0}]},
    ]}
    path = tmp_path / "field.json"
    path.write_text(json.dumps(field))
    code, out = run(tmp_path, "linearize", "--field", str(path), "--exact")
    assert code == 4 and out["witness"] == {"i": 2, "j": [2, 0]}


def test_morse_orders(tmp_path):
    code, out = run(tmp_path, "morse", "--fn", str(FIXTURES / "x2+x3.json"), "--steps", "4", "--exact")
    assert code == 0 and out["orders"] == [4, 6, 10, 18] and out["lemma_violations"] == []
    trace = artifact(out, ".trace.csv").read_text().splitlines()
    assert len(trace) == 5


def test_morse_picard(tmp_path):
    code, out = run(tmp_path, "morse", "--fn", str(FIXTURES / "x2+x3.json"), "--steps", "4", "--strategy", "picard",
                    "--exact")
    assert code == 0 and out["orders"] == [4, 5, 6, 7]


def test_morse_degenerate_exit_code(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"signature": [0, 2], "cap": 4, "coeffs": [{"idx": [2, 0], "re": 1, "im": 0},
                                                                           {"idx": [3, 0], "re": 1, "im": 0}]}))
    code, _ = run(tmp_path, "morse", "--fn", str(path))
    assert code == 3


def test_unreadable_input_is_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(tmp_path, "morse", "--fn", str(path))[0] == 2
    assert run(tmp_path, "morse", "--fn", str(tmp_path / "missing.json"))[0] == 2


def test_kam_step_fixture(tmp_path):
    code, out = run(tmp_path, "kam-step", "--ham", str(FIXTURES / "kam_phi.json"), "--cutoff", "6", "--t-order", "6",
                    "--steps", "3", "--real", "--exact")
    assert code == 0 and out["grades"] == [2, 5, "inf"]
    summary = json.loads(Path(out["files"][-1]).read_text())
    assert all(summary["annotations"]["reality"].values()) and summary["grading_exact"]


def test_singular_kam_fixture(tmp_path):
    code, out = run(tmp_path, "singular-kam", "--ham", str(FIXTURES / "singular_q3.json"), "--exact")
    assert code == 0 and out["grades"] == ["inf"]


def test_product_demo(tmp_path):
    code, out = run(tmp_path, "product-demo", "--kind", "geometric")
    assert code == 0 and out["verdict"] == "Converged"
    code, out = run(tmp_path, "product-demo", "--kind", "harmonic", "--terms", "16")
    assert out["verdict"] != "Converged"


def test_measure_demo_matches_fixture(tmp_path):
    fx = json.loads((FIXTURES / "measure_tau2.json").read_text())
    code, out = run(tmp_path, "measure-demo", "--tau", str(fx["tau"]), "--C", str(fx["C"]), "--samples",
                    str(fx["samples"]), "--seed", str(fx["seed"]), "--cutoff", str(fx["cutoff"]))
    assert code == 0 and out["fractions"] == [[fx["C"], fx["fraction"]]]


def test_measure_sampler_agrees_with_scalar_scan():
    # same seeded sample, every verdict recomputed through the per-frequency scan
    from echelon.divisors import measure_fractions

    lams = np.random.default_rng(5).random((150, 2))
    passed = [min_small_divisor(tuple(map(float, lam)), 2, 12).C >= 0.01 for lam in lams]
    assert measure_fractions(2, [0.01], 150, 5, 12) == [(0.01, float(np.mean(passed)))]


def test_artifacts_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, _ = run(d, "morse", "--fn", str(FIXTURES / "x2+x3.json"), "--steps", "3", "--exact")
        assert code == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and len(names) == 3
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ECHELON_OUT", str(tmp_path / "env"))
    res = CliRunner().invoke(main, ["diophantine", "--lambda", "1,sqrt(3)", "--tau", "1", "--cutoff", "3"])
    assert res.exit_code == 0
    assert any((tmp_path / "env").iterdir())


@pytest.mark.parametrize("flag", ["--exact", "--float"])
def test_exact_and_float_agree_on_constant(tmp_path, flag):
    code, out = run(tmp_path, "diophantine", "--lambda", "1,sqrt(2)", "--tau", "1", "--cutoff", "12", flag)
    assert code == 0
    # attained at i = (-1, 1): (sqrt(2) - 1) * 2
    assert float(out["C"]) == pytest.approx(2 * 2 ** 0.5 - 2, rel=1e-12)
