"""End-to-end checks of the command-line front end.

Commands run in-process through cli.main so exit codes and output can be
asserted without subprocess overhead; one test drives `python -m uniflux.cli`
for real to cover the module entry point.
"""

import hashlib
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from uniflux import analysis, cli, pulsec

DATA = pathlib.Path(__file__).parent / "data"
EXAMPLE_PROGRAM = DATA / "example_program.pulse"
EXAMPLE_SHA256 = (DATA / "example_program.sha256").read_text().strip()

FAST_SCENARIO = {
    "channel": {"kind": "gaussian", "f_c": 0.092},
    "levels": 2,
    "time_step_ns": 0.02,
}


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_scenario(tmp_path, scenario=FAST_SCENARIO):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario))
    return str(path)


def load_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


# ---------------------------------------------------------------------------
# top level
# ---------------------------------------------------------------------------


def test_version_provenance(capsys):
    code, out, _ = run_cli(capsys, "--version", "--provenance")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("uniflux ")
    registry = (
        pathlib.Path(cli.__file__).parent / "data" / "devices.json"
    ).read_bytes()
    assert lines[1] == f"device-table sha256 {hashlib.sha256(registry).hexdigest()}"


def test_version_alone(capsys):
    code, out, _ = run_cli(capsys, "--version")
    assert code == 0
    assert len(out.splitlines()) == 1


def test_no_command_is_usage_error(capsys):
    code, _, err = run_cli(capsys)
    assert code == 2
    assert "command is required" in err


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["frobnicate"])
    assert excinfo.value.code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "uniflux.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("uniflux ")


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def test_spectrum_sweep_symmetric_about_half_flux(tmp_path, capsys):
    out_csv = tmp_path / "spectrum.csv"
    code, _, _ = run_cli(
        capsys,
        "spectrum",
        "--ej", "4.5", "--ec", "1.1", "--el", "0.5",
        "--from", "0.3", "--to", "0.7", "-n", "81",
        "-o", str(out_csv),
    )
    assert code == 0
    header = out_csv.read_text().splitlines()[0]
    assert header.startswith("flux_phi0,f01_ghz")
    assert header.endswith("m01_abs")
    table = load_csv(out_csv)
    assert len(table) == 81
    f01 = table["f01_ghz"]
    np.testing.assert_allclose(f01, f01[::-1], rtol=1e-9)
    assert np.argmin(f01) == 40  # the half-flux row
    np.testing.assert_allclose(f01[40], 0.22376881665330772, rtol=1e-9)


def test_spectrum_default_parameters_dip_at_half_flux(tmp_path, capsys):
    out_csv = tmp_path / "spectrum.csv"
    code, _, _ = run_cli(
        capsys, "spectrum", "--from", "0.4", "--to", "0.6", "-n", "21",
        "--levels", "2", "-o", str(out_csv),
    )
    assert code == 0
    table = load_csv(out_csv)
    assert np.argmin(table["f01_ghz"]) == 10
    assert 0.2 <= table["f01_ghz"][10] <= 0.4


def test_spectrum_reversed_range_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "spectrum", "--from", "0.7", "--to", "0.3")
    assert code == 2
    assert "--from" in err


# ---------------------------------------------------------------------------
# tradeoff
# ---------------------------------------------------------------------------


def test_tradeoff_default_grid(tmp_path, capsys):
    out_csv = tmp_path / "tradeoff.csv"
    code, _, _ = run_cli(capsys, "tradeoff", "-o", str(out_csv))
    assert code == 0
    text = out_csv.read_text()
    assert text.splitlines()[0] == "alpha_db,rabi_mhz,t1_line_us,max_excursion_phi0"
    table = load_csv(out_csv)
    assert len(table) == 61
    at_50 = table[table["alpha_db"] == -50.0]
    # Regression pin: this budget normalization crosses 100 us near -54 dB,
    # so the -50 dB row sits below it.
    np.testing.assert_allclose(at_50["t1_line_us"], 39.25520604002662, rtol=1e-9)
    in_excursion_band = (table["alpha_db"] >= -30.0) & (table["alpha_db"] <= -20.0)
    assert np.all(table["max_excursion_phi0"][in_excursion_band] >= 0.3)
    slopes = {
        line.split(" = ")[0]: float(line.split(" = ")[1])
        for line in text.splitlines()
        if line.startswith("# slope_")
    }
    assert slopes["# slope_rabi_mhz_vs_amplitude"] == pytest.approx(1.0, abs=1e-9)
    assert slopes["# slope_t1_line_us_vs_amplitude"] == pytest.approx(-2.0, abs=1e-9)
    assert slopes["# slope_max_excursion_phi0_vs_amplitude"] == pytest.approx(
        1.0, abs=1e-9
    )


def test_tradeoff_empty_grid_is_usage_error(capsys):
    code, _, err = run_cli(capsys, "tradeoff", "-n", "0")
    assert code == 2
    assert "empty" in err


def test_tradeoff_zero_noise_reports_unlimited(capsys):
    code, out, _ = run_cli(capsys, "tradeoff", "-n", "3", "--noise", "-inf")
    assert code == 0
    for line in out.splitlines()[1:4]:
        assert line.split(",")[2] == "unlimited"


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


def test_design_fir_inverse_invariants(capsys):
    code, out, _ = run_cli(
        capsys, "design", "fir",
        "--target", "inverse", "--fq", "0.208", "--rate", "2", "--taps", "16",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "fir"
    taps = doc["taps_int16"]
    assert len(taps) == 16
    assert max(abs(t) for t in taps) == 32767
    assert all(abs(a - b) <= 1 for a, b in zip(taps, taps[::-1]))
    assert doc["sample_rate_gsps"] == 2.0


def test_design_iir_three_sections(capsys):
    code, out, _ = run_cli(
        capsys, "design", "iir",
        "--exp", "-0.0174:34", "--exp", "-0.0189:170", "--exp", "-0.0158:996",
        "--rate", "2",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "iir"
    assert len(doc["parameters"]["sections"]) == 3
    assert doc["parameters"]["source_exponentials"] == [
        [-0.0174, 34.0],
        [-0.0189, 170.0],
        [-0.0158, 996.0],
    ]


def test_design_gauss_document(capsys):
    code, out, _ = run_cli(capsys, "design", "gauss", "--fc", "0.092")
    assert code == 0
    assert json.loads(out)["parameters"]["f_c_ghz"] == 0.092


def test_design_usage_errors(capsys):
    code, _, err = run_cli(capsys, "design", "fir", "--target", "inverse",
                           "--fq", "0.208", "--taps", "16")
    assert code == 2 and "--rate" in err
    code, _, err = run_cli(capsys, "design", "inverse")
    assert code == 2 and "--fq" in err
    code, _, err = run_cli(capsys, "design", "iir", "--rate", "2",
                           "--exp", "oops")
    assert code == 2 and "AMPLITUDE:TAU_NS" in err
    code, _, err = run_cli(capsys, "design", "iir", "--rate", "2")
    assert code == 2 and "--exp" in err


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------


def test_compile_example_program_golden(tmp_path, capsys):
    wave = tmp_path / "wave.bin"
    code, out, _ = run_cli(
        capsys, "compile", str(EXAMPLE_PROGRAM), "--rate", "2", "-o", str(wave)
    )
    assert code == 0
    assert f"sha256 {EXAMPLE_SHA256}" in out
    codes, meta = pulsec.load_waveform_binary(wave)
    assert meta["sha256"] == EXAMPLE_SHA256
    assert len(codes) == 98


def test_compile_is_deterministic(tmp_path, capsys):
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    for target in (first, second):
        code, _, _ = run_cli(
            capsys, "compile", str(EXAMPLE_PROGRAM), "--rate", "2",
            "-o", str(target),
        )
        assert code == 0
    assert first.read_bytes() == second.read_bytes()


def test_compile_report_memory(capsys):
    code, out, _ = run_cli(
        capsys, "compile", str(EXAMPLE_PROGRAM), "--rate", "2", "--report-memory"
    )
    assert code == 0
    report = dict(line.split(" ", 1) for line in out.splitlines())
    assert float(report["stored_ns"]) == 6.5
    assert float(report["sequence_ns"]) == 49.0
    assert float(report["ratio"]) == pytest.approx(49.0 / 6.5)


def test_compile_saturating_program_exits_3_with_peak(tmp_path, capsys):
    program = tmp_path / "hot.pulse"
    program.write_text(
        "prim gate envelope 0.0 0.5 1.0 0.5\n"
        "prim edge edge 0.0 0.5 1.0\n"
        "carrier 0.2238\n"
        "z rise=edge hold=0.8,8.0 fall=edge {\n"
        "  delay 2.0\n"
        "  xy gate amp=0.5\n"
        "  delay 2.0\n"
        "}\n"
    )
    code, _, err = run_cli(capsys, "compile", str(program), "--rate", "2")
    assert code == 3
    assert "peak" in err


def test_compile_parse_error_names_the_line(tmp_path, capsys):
    program = tmp_path / "broken.pulse"
    program.write_text("prim gate envelope 0.0 0.5 1.0 0.5\ncarrier 0.2\nxy gate amp=oops\n")
    code, _, err = run_cli(capsys, "compile", str(program), "--rate", "2")
    assert code == 3
    assert "line 3" in err


def test_compile_with_designed_filters(tmp_path, capsys):
    fir_doc = tmp_path / "fir.json"
    iir_doc = tmp_path / "iir.json"
    code, _, _ = run_cli(
        capsys, "design", "fir", "--target", "inverse", "--fq", "0.2238",
        "--rate", "2", "--taps", "16", "-o", str(fir_doc),
    )
    assert code == 0
    code, _, _ = run_cli(
        capsys, "design", "iir", "--exp", "-0.0174:34", "--rate", "2",
        "-o", str(iir_doc),
    )
    assert code == 0
    wave = tmp_path / "wave.bin"
    code, out, _ = run_cli(
        capsys, "compile", str(EXAMPLE_PROGRAM), "--rate", "2",
        "--fir", str(fir_doc), "--iir", str(iir_doc), "-o", str(wave),
    )
    assert code == 0
    # Conditioning changes the waveform relative to the bare compile.
    assert EXAMPLE_SHA256 not in out


def test_compile_missing_program_is_usage_error(tmp_path, capsys):
    code, _, err = run_cli(
        capsys, "compile", str(tmp_path / "absent.pulse"), "--rate", "2"
    )
    assert code == 2
    assert "cannot read" in err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_rabi_contrast(tmp_path, capsys):
    scenario = write_scenario(tmp_path)
    on_csv = tmp_path / "on.csv"
    off_csv = tmp_path / "off.csv"
    for target, flag in ((on_csv, "--predistort"), (off_csv, "--no-predistort")):
        code, _, _ = run_cli(
            capsys, "simulate", "rabi", "--scenario", scenario,
            "--points", "9", "--amp-max", "0.016", flag, "-o", str(target),
        )
        assert code == 0
    peak_on = load_csv(on_csv)["p1"].max()
    peak_off = load_csv(off_csv)["p1"].max()
    assert peak_on > 0.99
    assert peak_off < 0.15
    assert "# predistortion: on" in on_csv.read_text()
    assert "# predistortion: off" in off_csv.read_text()


def test_simulate_gate_report(tmp_path, capsys):
    scenario = write_scenario(tmp_path)
    report_path = tmp_path / "gate.json"
    code, _, _ = run_cli(
        capsys, "simulate", "gate", "--scenario", scenario,
        "--trim-frequency", "-o", str(report_path),
    )
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["gate"] == "x_pi"
    assert report["population_transfer"] > 0.9999
    assert report["fidelity"] > 0.9999
    assert report["leakage"] < 1e-6
    assert report["drive_frequency_ghz"] > 0.2238  # trimmed above resonance


def test_simulate_rb_seeded_csv_is_byte_identical(tmp_path, capsys):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    for target in (first, second):
        code, _, _ = run_cli(
            capsys, "simulate", "rb", "--lengths", "1,2,4", "--sequences", "2",
            "--seed", "9", "--depolarizing", "0.995", "-o", str(target),
        )
        assert code == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().splitlines()[0] == "length,seq_index,survival"


def test_simulate_rb_interleaved_perfect_gate(capsys):
    code, out, _ = run_cli(
        capsys, "simulate", "rb", "--lengths", "1,4", "--sequences", "2",
        "--seed", "3", "--interleaved", "4",
    )
    assert code == 0
    for line in out.splitlines()[1:]:
        assert float(line.split(",")[2]) == pytest.approx(1.0, abs=1e-12)


def test_simulate_unknown_scenario_key_lists_valid_keys(tmp_path, capsys):
    scenario = write_scenario(tmp_path, {"chanel": {"kind": "flat"}})
    code, _, err = run_cli(capsys, "simulate", "rb", "--scenario", scenario)
    assert code == 2
    assert "chanel" in err
    assert "channel, levels, line, qubit, time_step_ns" in err


def test_simulate_unknown_channel_kind_lists_valid_kinds(tmp_path, capsys):
    scenario = write_scenario(tmp_path, {"channel": {"kind": "bessel"}})
    code, _, err = run_cli(capsys, "simulate", "rb", "--scenario", scenario)
    assert code == 2
    assert "flat, gaussian" in err


def test_simulate_bad_lengths_usage_error(capsys):
    code, _, err = run_cli(capsys, "simulate", "rb", "--lengths", "1,two")
    assert code == 2
    assert "comma-separated" in err


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _write_relaxation_fixture(path):
    t = np.linspace(0.0, 600.0, 121)
    values = analysis.relaxation_model(t, 1.0, 0.0, 150.0, 30.0, 1.0)
    np.savetxt(
        path, np.column_stack([t, values]), delimiter=",",
        header="t_us,p_e", comments="", fmt="%.17g",
    )


def test_fit_t1_recovers_fixture(tmp_path, capsys):
    fixture = tmp_path / "t1.csv"
    _write_relaxation_fixture(fixture)
    code, out, _ = run_cli(capsys, "fit", "t1", str(fixture))
    assert code == 0
    report = json.loads(out)
    assert report["model"] == "RelaxationFit"
    assert report["t_exp"] == pytest.approx(150.0, rel=0.02)
    assert report["t_qp"] == pytest.approx(30.0, rel=0.02)
    assert report["n_qp"] == pytest.approx(1.0, rel=0.02)
    assert report["t1_eff"] == pytest.approx(39.801739957266, rel=1e-3)


def test_fit_dephasing_requires_t1(tmp_path, capsys):
    fixture = tmp_path / "env.csv"
    t = np.linspace(0.0, 400.0, 81)
    values = analysis.dephasing_model(t, 0.95, 0.03, 180.0, 1 / 90.0, 1 / 128.0)
    np.savetxt(
        fixture, np.column_stack([t, values]), delimiter=",",
        header="t_us,p_env", comments="", fmt="%.17g",
    )
    code, _, err = run_cli(capsys, "fit", "dephasing", str(fixture))
    assert code == 2
    assert "--t1-us" in err
    code, out, _ = run_cli(
        capsys, "fit", "dephasing", str(fixture), "--t1-us", "180"
    )
    assert code == 0
    report = json.loads(out)
    assert report["t_phi_exp"] == pytest.approx(90.0, rel=0.02)
    assert report["t_phi_g"] == pytest.approx(128.0, rel=0.02)


def test_fit_rb_roundtrip_through_cli(tmp_path, capsys):
    rb_csv = tmp_path / "rb.csv"
    code, _, _ = run_cli(
        capsys, "simulate", "rb", "--seed", "5", "--sequences", "2",
        "--depolarizing", "0.998", "-o", str(rb_csv),
    )
    assert code == 0
    code, out, _ = run_cli(capsys, "fit", "rb", str(rb_csv))
    assert code == 0
    report = json.loads(out)
    assert report["p"] == pytest.approx(0.998, abs=1e-6)
    assert report["f_avg"] == pytest.approx(0.999, abs=1e-6)


def test_fit_reset_recovers_two_percent(tmp_path, capsys):
    fixture = tmp_path / "reset.csv"
    rng = np.random.default_rng(11)
    n = 10000
    excited = rng.random(n) < 0.02
    samples = np.where(
        excited, rng.normal(1.0, 0.15, n), rng.normal(0.0, 0.15, n)
    )
    np.savetxt(fixture, samples, delimiter=",", header="signal", comments="",
               fmt="%.17g")
    code, out, _ = run_cli(capsys, "fit", "reset", str(fixture))
    assert code == 0
    report = json.loads(out)
    assert report["model"] == "ResetEstimate"
    assert report["weight_e"] == pytest.approx(0.02, abs=0.003)
    assert report["fidelity"] == pytest.approx(0.98, abs=0.003)


def test_fit_malformed_csv_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_us,p1\n0,1.0\n1,bad,extra\n")
    code, _, err = run_cli(capsys, "fit", "t1", str(bad))
    assert code == 3
    assert "Line #3" in err


# ---------------------------------------------------------------------------
# devices
# ---------------------------------------------------------------------------


def test_devices_json_has_explicit_nulls(capsys):
    code, out, _ = run_cli(capsys, "devices")
    assert code == 0
    records = json.loads(out)
    assert [r["name"] for r in records] == list("ABCDEFGH")
    by_name = {r["name"]: r for r in records}
    assert by_name["A"]["fidelity_pct"] == 99.990
    assert by_name["A"]["f_q_mhz"] == 208
    assert by_name["H"]["gate_ns"] == 200
    for name in "FGH":
        assert by_name[name]["fidelity_pct"] is None
    assert '"fidelity_pct": null' in out
    assert all(r["fidelity_pct"] != 0 for r in records)


def test_devices_csv_leaves_missing_fidelity_empty(capsys):
    code, out, _ = run_cli(capsys, "devices", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "name,f_q_mhz,fidelity_pct,gate_ns,t1_us,t2r_us,t2echo_us"
    row_f = next(line for line in lines if line.startswith("F,"))
    assert row_f.split(",")[2] == ""


def test_device_registry_loads_and_validates():
    records = cli.load_devices()
    assert len(records) == 8
    assert len({r.name for r in records}) == 8
    for record in records:
        assert record.t1_us > 0 and record.gate_ns > 0
