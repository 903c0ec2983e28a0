import json

import pytest

from emcomm import __version__
from emcomm.reporting import read_csv
from emcomm.run import STRUCTURAL_FLAG, STRUCTURAL_SHARE, main
from emcomm.scenario import shipped_scenario
from emcomm.types import EXIT_CONFIG, EXIT_OK, EXIT_PRECONDITION

UNITS = {"length": "m", "impedance": "ohm", "angle": "deg"}


def _dipole(center):
    return {"center": center, "axis": [0, 0, 1], "length": 0.5, "wire_radius": 0.001}


def _write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _run(*argv):
    return main([str(a) for a in argv])


def _result(path):
    return json.loads(path.read_text(encoding="utf-8"))


def _table(path):
    frame, _ = read_csv(path)
    return frame


def _assert_identical_reruns(tmp_path, *argv):
    for run in ("a", "b"):
        assert _run(*argv, "--out", tmp_path / run) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    return names


# ── help and argument errors ─────────────────────────────────────────────


def test_help_documents_environment(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--help"])
    assert err.value.code == 0
    text = capsys.readouterr().out
    for needle in ("EMCOMM_WORKERS", "LOG_LEVEL", "--grid-per-lambda", "exit status"):
        assert needle in text


def test_malformed_scenario_exits_config(tmp_path, isolated_workers):
    bad = tmp_path / "bad.json"
    bad.write_text('{"wavelength": 1.0,', encoding="utf-8")
    assert _run("channel", "--scenario", bad, "--out", tmp_path / "out") == EXIT_CONFIG
    assert _run("channel", "--scenario", tmp_path / "missing.json", "--out", tmp_path / "out") == EXIT_CONFIG


def test_out_of_range_overrides_exit_config(tmp_path, isolated_workers):
    scenario = shipped_scenario("reference_modes")
    assert _run("modes", "--scenario", scenario, "--out", tmp_path, "--epsilon", "1.5") == EXIT_CONFIG
    assert _run("modes", "--scenario", scenario, "--out", tmp_path, "--grid-per-lambda", "2") == EXIT_CONFIG
    assert _run("pws", "--scenario", scenario, "--out", tmp_path, "--eta", "1") == EXIT_CONFIG


def test_missing_section_exits_config(tmp_path, isolated_workers):
    assert _run("modes", "--scenario", shipped_scenario("pws_demo"), "--out", tmp_path) == EXIT_CONFIG
    assert _run("report", "--scenario", shipped_scenario("pws_demo"), "--out", tmp_path) == EXIT_CONFIG


def test_precondition_violation_exits_four(tmp_path, isolated_workers):
    thick = _dipole([0.0, 0.0, 0.0])
    thick["wire_radius"] = 0.05
    doc = {"units": UNITS, "wavelength": 1.0, "network": {"tx": [thick], "rx": [_dipole([3.0, 0.0, 0.0])]}}
    assert _run("channel", "--scenario", _write(tmp_path, doc), "--out", tmp_path / "out") == EXIT_PRECONDITION


# ── channel ──────────────────────────────────────────────────────────────


def test_channel_outputs_and_envelope(tmp_path, isolated_workers):
    out = tmp_path / "out"
    assert _run("channel", "--scenario", shipped_scenario("siso_link"), "--out", out) == EXIT_OK
    for name in ("channel_h_z.csv", "channel_h_s.csv", "channel_h_ct.csv", "channel.json"):
        assert (out / name).is_file()
    doc = _result(out / "channel.json")
    assert doc["emcomm_version"] == __version__
    assert doc["command"] == "channel"
    assert len(doc["scenario_sha256"]) == 64
    assert doc["resolved_config"]["wavelength"] == 0.1
    result = doc["result"]
    assert result["ports"] == {"T": 1, "S": 1, "R": 1, "O": 1}
    assert result["impedance_scattering_residual"] <= 1e-10
    assert result["flags"] == []
    frame, meta = read_csv(out / "channel_h_z.csv")
    assert list(frame.columns) == ["row", "col", "Re", "Im"]
    assert len(frame) == 1
    assert meta["emcomm_version"] == __version__
    assert meta["command"] == "channel"
    assert meta["scenario_sha256"] == doc["scenario_sha256"]
    assert meta["resolved_config"] == doc["resolved_config"]


def test_channel_rerun_is_byte_identical(tmp_path, isolated_workers):
    names = _assert_identical_reruns(tmp_path, "channel", "--scenario", shipped_scenario("siso_link"))
    assert "channel.json" in names


def test_structural_scattering_flag(tmp_path, isolated_workers):
    doc = {
        "units": UNITS,
        "wavelength": 1.0,
        "network": {
            "tx": [_dipole([-2.0, 0.0, 3.0])],
            "rx": [_dipole([2.0, 0.5, 3.0])],
            "direct_link": "blocked",
            "ris": {
                "rows": 2,
                "cols": 2,
                "spacing": 0.25,
                "template": {"axis": [0, 0, 1], "length": 0.5, "wire_radius": 0.001},
            },
        },
    }
    out = tmp_path / "out"
    assert _run("channel", "--scenario", _write(tmp_path, doc), "--out", out) == EXIT_OK
    result = _result(out / "channel.json")["result"]
    assert result["flags"] == [STRUCTURAL_FLAG]
    assert result["structural_scattering_norm"] > 0.0
    assert result["structural_scattering_share"] == pytest.approx(1.0)
    assert result["h_s"]["frobenius_gain"] > 0.0


def test_distant_ris_is_not_flagged(tmp_path, isolated_workers):
    doc = {
        "units": UNITS,
        "wavelength": 1.0,
        "network": {
            "tx": [_dipole([-2.0, 0.0, 3.0])],
            "rx": [_dipole([2.0, 0.5, 3.0])],
            "ris": {
                "rows": 1,
                "cols": 1,
                "spacing": 0.25,
                "center": [0.0, 1000.0, 3.0],
                "template": {"axis": [0, 0, 1], "length": 0.5, "wire_radius": 0.001},
            },
        },
    }
    out = tmp_path / "out"
    assert _run("channel", "--scenario", _write(tmp_path, doc), "--out", out) == EXIT_OK
    result = _result(out / "channel.json")["result"]
    assert result["flags"] == []
    assert 0.0 < result["structural_scattering_share"] < STRUCTURAL_SHARE


# ── other commands ───────────────────────────────────────────────────────


def test_pws_outputs(tmp_path, isolated_workers):
    out = tmp_path / "out"
    assert _run("pws", "--scenario", shipped_scenario("pws_demo"), "--out", out, "--eta", "0.01") == EXIT_OK
    doc = _result(out / "pws.json")
    assert doc["resolved_config"]["eta"] == 0.01
    result = doc["result"]
    assert result["propagating_power"] > 0.0
    assert result["evanescent_power"] > 0.0
    assert result["divergence_residual"] <= 1e-12
    assert "periodic_design" in result
    spectrum = _table(out / "pws_spectrum.csv")
    assert len(spectrum) == 64 * 64
    assert (out / "pws_field.csv").is_file()


def _surfaces_doc():
    return {
        "units": UNITS,
        "wavelength": 1.0,
        "surfaces": {
            "tx": {"center": [0.0, 0.0, 0.0], "size": [2.0, 2.0]},
            "rx": {"center": [0.0, 0.0, 3.0], "size": [2.0, 2.0]},
            "export_modes": 2,
        },
    }


def test_modes_outputs(tmp_path, isolated_workers):
    doc = _surfaces_doc()
    out = tmp_path / "out"
    assert _run("modes", "--scenario", _write(tmp_path, doc), "--out", out, "--epsilon", "0.3") == EXIT_OK
    result = _result(out / "modes.json")
    assert result["resolved_config"]["tx_grid"] == [8, 8]
    assert result["result"]["nedof"]["epsilon"] == 0.3
    assert result["result"]["exported_modes"] == 2
    table = _table(out / "modes_spectrum.csv")
    assert list(table.columns) == ["m", "mu", "mu_normalized", "n2_marker"]
    assert table["mu_normalized"].iloc[0] == pytest.approx(1.0)
    assert (out / "modes_phi_1.csv").is_file() and (out / "modes_phi_2.csv").is_file()

    report_out = tmp_path / "report"
    assert _run("report", "--scenario", _write(tmp_path, doc), "--out", report_out) == EXIT_OK
    assert _result(report_out / "report.json")["result"]["tables"] == ["report_eigenvalues.csv"]


def test_optimize_outputs(tmp_path, isolated_workers):
    out = tmp_path / "out"
    assert _run("optimize", "--scenario", shipped_scenario("siso_link"), "--out", out, "--seed", "3") == EXIT_OK
    doc = _result(out / "optimize.json")
    assert doc["resolved_config"]["seed"] == 3
    trace = doc["result"]["result"]["trace"]
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    loads = _table(out / "optimize_loads.csv")
    assert list(loads["element"]) == ["S0"]
    assert (out / "optimize_trace.csv").is_file()


# ── reproducibility ──────────────────────────────────────────────────────


def test_pws_rerun_is_byte_identical(tmp_path, isolated_workers):
    names = _assert_identical_reruns(tmp_path, "pws", "--scenario", shipped_scenario("pws_demo"))
    assert names == ["pws.json", "pws_field.csv", "pws_spectrum.csv"]


def test_seeded_optimize_rerun_is_byte_identical(tmp_path, isolated_workers):
    names = _assert_identical_reruns(tmp_path, "optimize", "--scenario", shipped_scenario("siso_link"), "--seed", "5")
    assert names == ["optimize.json", "optimize_loads.csv", "optimize_trace.csv"]


def test_modes_rerun_is_byte_identical(tmp_path, isolated_workers):
    scenario = _write(tmp_path, _surfaces_doc())
    names = _assert_identical_reruns(tmp_path, "modes", "--scenario", scenario)
    assert names == ["modes.json", "modes_phi_1.csv", "modes_phi_2.csv", "modes_spectrum.csv"]


# ── report ───────────────────────────────────────────────────────────────


def test_report_round_trip_with_sweep(tmp_path, isolated_workers):
    doc = _surfaces_doc()
    doc["network"] = {
        "tx": [_dipole([-2.0, 0.0, 3.0])],
        "rx": [_dipole([2.0, 0.5, 3.0])],
        "direct_link": "blocked",
        "ris": {
            "rows": 1,
            "cols": 2,
            "spacing": 0.5,
            "template": {"axis": [0, 0, 1], "length": 0.5, "wire_radius": 0.001},
        },
    }
    doc["sweep"] = {"size_x": 1.0, "spacings": [0.5, 0.25], "budget": 120}
    out = tmp_path / "out"
    assert _run("report", "--scenario", _write(tmp_path, doc), "--out", out) == EXIT_OK

    envelope = _result(out / "report.json")
    assert envelope["result"]["tables"] == ["report_eigenvalues.csv", "report_coupling_sweep.csv"]
    assert envelope["resolved_config"]["sweep"]["spacings"] == [0.5, 0.25]

    sweep, meta = read_csv(out / "report_coupling_sweep.csv")
    assert meta["command"] == "report"
    assert meta["resolved_config"] == envelope["resolved_config"]
    assert list(sweep["elements"]) == [2, 4]
    assert list(sweep["spacing_over_lambda"]) == [0.5, 0.25]
    assert (sweep["gain_ratio"] >= 1.0 - 1e-12).all()

    eigen, meta = read_csv(out / "report_eigenvalues.csv")
    assert meta["resolved_config"]["sweep"]["budget"] == 120
    assert eigen["mu_normalized"].iloc[0] == pytest.approx(1.0)
    assert eigen["n2_marker"].sum() == 1

    assert _run("report", "--scenario", _write(tmp_path, doc), "--out", tmp_path / "again") == EXIT_OK
    for name in envelope["result"]["tables"] + ["report.json"]:
        assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
