import json

import numpy as np
import pytest

from afcmem import cli
from afcmem.cli import ScenarioError, bundled_scenarios, load_scenario, parse_scenario

MINIMAL = """
comb: {delta_hz: 250.0e3, gamma_hz: 100.0e3, d_peak: 1.2}
run: {mode: afc_echo, resolution: fast}
"""

SPINWAVE = """
material: {spin_fwhm_hz: 26.0e3}
comb: {delta_hz: 250.0e3, gamma_hz: 100.0e3, d_peak: 1.2}
pulses: {control: {kind: ideal}}
sequence: {t_prime_s: 1.63e-6, t_s_s: 2.0e-6}
run: {mode: spinwave, resolution: fast}
"""


def _write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _summary(path):
    data = json.loads((path / "summary.json").read_text())
    data.pop("timings")
    return data


def test_bundled_scenarios_all_validate(capsys):
    names = bundled_scenarios()
    for required in ("fig3_inset", "fig3", "fig4_sweep", "fig5_twomode", "opt_control", "opt_comb"):
        assert required in names
    for name in names:
        assert cli.main(["validate", name]) == 0
    assert "ok" in capsys.readouterr().out


def test_defaults_are_filled():
    scen = parse_scenario(MINIMAL)
    assert scen.params["comb"]["n_peaks"] == 9
    assert scen.params["pulses"]["input"]["fwhm_s"] == 450e-9
    assert scen.sequence().control is None


def test_hash_ignores_formatting():
    a = parse_scenario(MINIMAL)
    b = parse_scenario("run: {resolution: fast, mode: afc_echo}\n"
                       "comb: {d_peak: 1.2, gamma_hz: 1.0e5, delta_hz: 2.5e5}\n")
    assert a.hash == b.hash


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("comb: [1, 2\n", "syntax error at line"),
        ("run: {mode: afc_echo}\n", "missing required block"),
        ("comb: {delta_hz: 1.0e6, d_peak: 1}\nrun: {mode: afc_echo}\n", "gamma_hz"),
        (MINIMAL + "extra: 1\n", "unknown key"),
        (MINIMAL.replace("1.2}", "lots}"), "expected a number"),
        (MINIMAL.replace("afc_echo", "teleport"), "run.mode"),
        (MINIMAL.replace("100.0e3", "300.0e3"), "comb"),
        (SPINWAVE.replace("t_s_s: 2.0e-6", "t_s_s: -1.0e-6"), "T_s >= 0"),
        (SPINWAVE.replace("resolution: fast", "resolution: ultra"), "run.resolution"),
    ],
)
def test_invalid_scenarios_exit_one(tmp_path, capsys, text, fragment):
    path = _write(tmp_path, text)
    with pytest.raises(ScenarioError, match=fragment):
        load_scenario(path)
    assert cli.main(["validate", path]) == 1
    assert "invalid scenario" in capsys.readouterr().err


def test_unknown_scenario_reference():
    assert cli.main(["validate", "no_such_scenario"]) == 1


def test_run_bundled_echo(tmp_path, capsys):
    out = tmp_path / "a"
    assert cli.main(["run", "fig3_inset", "--resolution", "fast", "--out", str(out)]) == 0
    summary = _summary(out)
    assert summary["report"]["echo_time"] == pytest.approx(4e-6, rel=0.01)
    assert summary["grid"]["preset"] == "fast"
    rows = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert {f["name"] for f in manifest["files"]} == {"trace.csv", "summary.json"}
    assert "eta_total" in capsys.readouterr().out


def test_reruns_are_identical(tmp_path):
    path = _write(tmp_path, SPINWAVE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", path, "--out", str(a)]) == 0
    assert cli.main(["run", path, "--out", str(b)]) == 0
    assert _summary(a) == _summary(b)
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", _write(tmp_path, MINIMAL)]) == 0
    assert (tmp_path / "env" / "summary.json").is_file()


def test_sweep_writes_decay_table(tmp_path):
    out = tmp_path / "sweep"
    code = cli.main(["sweep", _write(tmp_path, SPINWAVE), "--param", "sequence.t_s_s",
                     "--values", "2.6e-6,7.6e-6,12.6e-6", "--out", str(out)])
    assert code == 0
    rows = np.loadtxt(out / "decay.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 0], [2.6e-6, 7.6e-6, 12.6e-6])
    assert np.all(np.diff(rows[:, 1]) < 0)
    summary = _summary(out)
    for v, rep in zip(rows[:, 0], summary["sweep"]["reports"]):
        assert rep["echo_time"] == pytest.approx(4e-6 + v, rel=0.01)


def test_sweep_needs_a_valid_field(tmp_path):
    path = _write(tmp_path, SPINWAVE)
    assert cli.main(["sweep", path, "--param", "sequence.nope", "--values", "1"]) == 1
    assert cli.main(["sweep", path, "--param", "sequence.t_s_s", "--values", "a,b"]) == 1
    assert cli.main(["sweep", path]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    path = _write(tmp_path, SPINWAVE.replace("t_s_s: 2.0e-6", "t_s_s: 1.0e-3"))
    assert cli.main(["validate", path]) == 0
    assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 2
    assert "run failed" in capsys.readouterr().err


def test_optimize_small_control_search(tmp_path):
    text = """
comb: {delta_hz: 250.0e3, gamma_hz: 100.0e3, d_peak: 1.2}
run: {mode: optimize, seed: 3}
optimize:
  target: control
  budget: 50
  parameters:
    peak_rabi: [0.3e6, 1.2e6, 1.2e6]
    duration: [600.0e-9, 600.0e-9, 600.0e-9]
    chirp_width: [0.5e6, 6.0e6, 2.0e6]
"""
    out = tmp_path / "opt"
    assert cli.main(["optimize", _write(tmp_path, text), "--out", str(out)]) == 0
    opt = _summary(out)["optimization"]
    assert opt["evaluations"] <= 50
    assert opt["best_value"] >= opt["initial_value"]
    assert opt["best"]["duration"] == 600e-9
    trace = np.loadtxt(out / "optimization_trace.csv", delimiter=",", skiprows=1)
    assert trace[-1, 2] == pytest.approx(opt["best_value"])


def test_optimize_requires_block(tmp_path):
    assert cli.main(["optimize", _write(tmp_path, MINIMAL)]) == 1
