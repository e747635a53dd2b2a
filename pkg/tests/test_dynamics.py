import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from uniflux import dynamics, filters, fluxonium, linebudget, pulsec
from uniflux.dynamics import DriveScenario, RbGate
from uniflux.errors import CalibrationError, NumericalError, SaturationError
from uniflux.waveform import Waveform

QUBIT = fluxonium.FluxoniumParams(e_j=4.5, e_c=1.1, e_l=0.5)
LINE = linebudget.LineModel(
    mutual_inductance=2e-12,
    attenuation_db=-30.0,
    awg_noise_dbm_per_hz=-130.0,
    awg_vmax=0.5,
)
F01 = 0.22376881665330772  # GHz, canonical parameters at half flux
V_PI_20NS = 0.00984166340486094  # volt, first-order flat-channel 20 ns pi pulse

FLAT2 = DriveScenario(QUBIT, LINE, filters.identity_response(), levels=2, time_step=0.02)
GAUSS = filters.gaussian_lowpass(0.092)
GAUSS2 = DriveScenario(QUBIT, LINE, GAUSS, levels=2, time_step=0.02)


def _zero_waveform(n=32, rate=1.0):
    return Waveform(np.zeros(n), rate)


# ---------------------------------------------------------------------------
# scenario and evolve basics
# ---------------------------------------------------------------------------


def test_scenario_validation():
    with pytest.raises(ValueError):
        DriveScenario(QUBIT, LINE, filters.identity_response(), levels=1)
    with pytest.raises(ValueError):
        DriveScenario(QUBIT, LINE, filters.identity_response(), time_step=0.0)
    with pytest.raises(ValueError):
        DriveScenario(QUBIT, LINE, channel="gauss")


def test_phase_drive_per_volt_matches_budget():
    c = dynamics.phase_drive_per_volt(LINE)
    assert c == pytest.approx(3.8434764090566715, rel=1e-12)
    assert c == pytest.approx(linebudget.flux_drive_amplitude(LINE, 0.25) / 0.25)


def test_zero_waveform_is_free_evolution():
    scenario = FLAT2.replace(levels=4)
    outcome = dynamics.evolve(scenario, _zero_waveform(40))
    assert outcome.populations.shape == (41, 4)
    np.testing.assert_allclose(outcome.populations[:, 0], 1.0, atol=1e-12)
    levels, _ = dynamics.qubit_frame(scenario)
    expected = np.diag(np.exp(-1j * 2 * np.pi * levels * 40.0))
    np.testing.assert_allclose(outcome.final_unitary, expected, atol=1e-9)
    framed = dynamics.rotating_frame(outcome.final_unitary, levels, 40.0)
    np.testing.assert_allclose(framed, np.eye(4), atol=1e-9)


def test_populations_sum_to_one_under_drive():
    w = dynamics.cosine_drive(20.0, 0.008, F01, lead_ns=8.0, tail_ns=8.0)
    outcome = dynamics.evolve(FLAT2.replace(levels=4), w)
    sums = outcome.populations.sum(axis=1)
    np.testing.assert_allclose(sums, 1.0, atol=1e-8)
    assert outcome.metadata["levels"] == 4
    assert len(outcome.metadata["scenario_sha256"]) == 64


def test_evolve_input_validation():
    with pytest.raises(ValueError):
        dynamics.evolve(FLAT2, Waveform(np.zeros(1), 1.0))
    with pytest.raises(ValueError):
        dynamics.evolve(FLAT2, Waveform(np.zeros(8, dtype=complex), 1.0))
    # sample period not an integer multiple of the time step
    with pytest.raises(ValueError):
        dynamics.evolve(FLAT2, Waveform(np.zeros(8), 3.0))


def test_saturating_drive_rejected():
    w = _zero_waveform(16).with_samples(np.full(16, 0.51))
    with pytest.raises(SaturationError):
        dynamics.evolve(FLAT2, w)


def test_time_step_stability_bound():
    slow = FLAT2.replace(time_step=0.25)  # bound is 1/(20 f01) ~ 0.2235 ns
    with pytest.raises(NumericalError, match="smaller step"):
        dynamics.evolve(slow, _zero_waveform(8, rate=1.0))


def test_rabi_oscillation_matches_line_budget_rate():
    # Rectangular drive at f01: P1 oscillates at the first-order Rabi rate.
    amp = 0.002
    duration = 2000
    t = np.arange(duration + 1)
    w = Waveform(amp * np.cos(2 * np.pi * F01 * t), 1.0)
    outcome = dynamics.evolve(FLAT2, w)
    p1 = outcome.populations[:, 1]
    # zero-padded FFT peak of the population oscillation
    signal = p1 - p1.mean()
    spec = np.abs(np.fft.rfft(signal * np.hanning(len(signal)), n=1 << 18))
    freqs = np.fft.rfftfreq(1 << 18, d=1.0)
    measured_ghz = freqs[np.argmax(spec)]
    dphi = amp * dynamics.phase_drive_per_volt(LINE)
    expected_mhz = linebudget.rabi_frequency(QUBIT.e_l, dphi, 2.643670181847175)
    assert measured_ghz * 1e3 == pytest.approx(expected_mhz, rel=0.02)


def test_unitarity_over_fifty_microseconds():
    # 2.5e-3 flux-drive volts for 50 us at a coarse-but-stable step: the
    # propagator must stay unitary to 1e-8 (evolve raises otherwise).
    scenario = FLAT2.replace(time_step=0.05)
    t = np.arange(50_001, dtype=float)
    w = Waveform(0.0025 * np.cos(2 * np.pi * F01 * t), 1.0)
    outcome = dynamics.evolve(scenario, w)
    assert outcome.metadata["unitarity_drift"] < 1e-8
    np.testing.assert_allclose(outcome.populations.sum(axis=1), 1.0, atol=1e-8)


def test_step_halving_converges_below_1e7():
    # at the default step, halving must move final populations by < 1e-7
    w = dynamics.cosine_drive(20.0, V_PI_20NS, F01, lead_ns=10.0, tail_ns=10.0)
    coarse = dynamics.evolve(FLAT2.replace(time_step=dynamics.DEFAULT_TIME_STEP), w)
    fine = dynamics.evolve(
        FLAT2.replace(time_step=dynamics.DEFAULT_TIME_STEP / 2.0), w
    )
    shift = np.abs(coarse.populations[-1] - fine.populations[-1]).max()
    assert shift < 1e-7


# ---------------------------------------------------------------------------
# drive construction
# ---------------------------------------------------------------------------


def test_cosine_drive_layout():
    w = dynamics.cosine_drive(20.0, 0.01, 0.0, lead_ns=5.0, tail_ns=3.0)
    samples = np.asarray(w.samples)
    assert len(samples) == 28
    np.testing.assert_allclose(samples[:5], 0.0, atol=0)
    np.testing.assert_allclose(samples[25:], 0.0, atol=0)
    # zero-frequency carrier leaves the raised-cosine envelope itself
    assert samples[5 + 10] == pytest.approx(0.01, rel=1e-12)


def test_predistort_drive_requires_gaussian_channel():
    w = dynamics.cosine_drive(20.0, 0.01, F01)
    with pytest.raises(ValueError):
        dynamics.predistort_drive(w, filters.identity_response(), F01)


def test_predistort_drive_unit_carrier_gain():
    # after renormalization the net on-resonance gain is the taper window,
    # within a couple of percent of unity
    w = dynamics.cosine_drive(400.0, 0.01, F01, lead_ns=50.0, tail_ns=50.0)
    pre = dynamics.predistort_drive(w, GAUSS, F01)
    filtered = filters.apply_transfer(pre, GAUSS)
    peak_in = np.abs(np.asarray(w.samples)).max()
    peak_out = np.abs(np.asarray(filtered.samples)).max()
    assert peak_out / peak_in == pytest.approx(1.0, abs=0.03)


# ---------------------------------------------------------------------------
# Rabi experiments and calibration
# ---------------------------------------------------------------------------


def test_rabi_experiment_argument_rules():
    with pytest.raises(ValueError):
        dynamics.rabi_experiment(FLAT2)
    with pytest.raises(ValueError):
        dynamics.rabi_experiment(FLAT2, amplitudes=[0.01], durations=[20.0])
    with pytest.raises(ValueError):
        dynamics.rabi_experiment(FLAT2, durations=[20.0])  # no amplitude_v


def test_rabi_amplitude_sweep_peaks_near_pi_amplitude():
    grid = np.linspace(0.2, 1.6, 8) * V_PI_20NS
    curve = dynamics.rabi_experiment(
        FLAT2, amplitudes=grid, duration_ns=20.0, predistortion=False
    )
    assert curve.axis == "amplitude"
    assert len(curve.populations) == len(grid)
    assert all(0.0 <= p <= 1.0 + 1e-9 for p in curve.populations)
    best = curve.grid[int(np.argmax(curve.populations))]
    assert best == pytest.approx(V_PI_20NS, rel=0.15)


def test_calibrate_pi_matches_rwa_oracle():
    amp = dynamics.calibrate_pi(FLAT2, 20.0, predistortion=False)
    assert amp == pytest.approx(V_PI_20NS, rel=0.01)


def test_calibrate_pi_duration_doubling_halves_amplitude():
    amp20 = dynamics.calibrate_pi(FLAT2, 20.0, predistortion=False)
    amp40 = dynamics.calibrate_pi(FLAT2, 40.0, predistortion=False)
    assert amp40 == pytest.approx(amp20 / 2.0, rel=0.02)


def test_calibrate_pi_with_and_without_predistortion_differ():
    amp_on = dynamics.calibrate_pi(GAUSS2, 20.0, predistortion=True)
    amp_off = dynamics.calibrate_pi(GAUSS2, 20.0, predistortion=False)
    # the raw channel attenuates the carrier ~8x; pre-distortion restores it
    assert amp_off > 5.0 * amp_on
    assert amp_on == pytest.approx(V_PI_20NS, rel=0.05)


def test_calibrate_pi_monotone_bracket_raises():
    with pytest.raises(CalibrationError):
        dynamics.calibrate_pi(
            FLAT2, 20.0, predistortion=False,
            bracket=(0.05 * V_PI_20NS, 0.4 * V_PI_20NS),
        )


def test_calibrate_pi_minimum_duration():
    with pytest.raises(ValueError):
        dynamics.calibrate_pi(FLAT2, 3.0, predistortion=False)


def test_calibrated_pulse_inverts_population():
    amp = dynamics.calibrate_pi(FLAT2, 20.0, predistortion=False)
    p1 = dynamics.rabi_experiment(
        FLAT2, amplitudes=[amp], duration_ns=20.0, predistortion=False
    ).populations[0]
    assert p1 > 0.99


def test_calibrate_drive_frequency_trims_upward():
    f_trim = dynamics.calibrate_drive_frequency(GAUSS2, 20.0, predistortion=True)
    # counter-rotating terms shift the resonance up by ~2 MHz at 20 ns
    assert 5e-4 < f_trim - F01 < 3.5e-3


# ---------------------------------------------------------------------------
# gate fidelity
# ---------------------------------------------------------------------------


X_GATE = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def test_gate_fidelity_identity():
    metrics = dynamics.gate_fidelity(np.eye(2), np.eye(2))
    assert metrics.fidelity == pytest.approx(1.0, abs=1e-12)
    assert metrics.leakage == pytest.approx(0.0, abs=1e-12)


def test_gate_fidelity_orthogonal_gate():
    metrics = dynamics.gate_fidelity(np.eye(4), X_GATE)
    assert metrics.fidelity == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert metrics.leakage == pytest.approx(0.0, abs=1e-12)


def test_gate_fidelity_rejects_non_unitary():
    with pytest.raises(NumericalError):
        dynamics.gate_fidelity(np.eye(2) * 1.001, np.eye(2))
    with pytest.raises(ValueError):
        dynamics.gate_fidelity(np.eye(2), np.eye(3))


def test_gate_fidelity_reports_leakage():
    theta = 0.02
    mixer = np.eye(4, dtype=complex)
    mixer[1, 1] = mixer[2, 2] = math.cos(theta)
    mixer[1, 2] = -math.sin(theta)
    mixer[2, 1] = math.sin(theta)
    metrics = dynamics.gate_fidelity(mixer, np.eye(2))
    assert metrics.leakage == pytest.approx(math.sin(theta) ** 2 / 2.0, rel=1e-6)


# ---------------------------------------------------------------------------
# Clifford table
# ---------------------------------------------------------------------------


def test_clifford_table_shape_and_identity():
    assert dynamics.clifford_ops(0) == ()
    np.testing.assert_allclose(dynamics.clifford_matrix(0), np.eye(2), atol=0)
    pulses = [
        sum(1 for op in dynamics.clifford_ops(i) if op[0] == "x90")
        for i in range(dynamics.CLIFFORD_COUNT)
    ]
    assert pulses.count(0) == 4
    assert pulses.count(1) == 16
    assert pulses.count(2) == 4
    # one physical pulse per Clifford on average: the RB duration unit
    assert sum(pulses) / len(pulses) == 1.0


def test_clifford_matrices_are_unitary():
    for i in range(dynamics.CLIFFORD_COUNT):
        m = dynamics.clifford_matrix(i)
        np.testing.assert_allclose(m @ m.conj().T, np.eye(2), atol=1e-12)


def test_clifford_closure_is_a_latin_square():
    table = dynamics.clifford_closure_table()
    assert table.shape == (24, 24)
    full = set(range(24))
    for i in range(24):
        assert set(table[i]) == full
        assert set(table[:, i]) == full
        assert table[i, 0] == i
        assert table[0, i] == i


def test_every_clifford_has_an_inverse_in_the_table():
    table = dynamics.clifford_closure_table()
    for i in range(24):
        j = int(np.where(table[i] == 0)[0][0])
        assert table[j, i] == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 23), min_size=1, max_size=6))
def test_recovery_index_inverts_any_sequence(seq):
    r = dynamics.recovery_index(seq)
    total = np.eye(2, dtype=complex)
    for i in seq:
        total = dynamics.clifford_matrix(i) @ total
    total = dynamics.clifford_matrix(r) @ total
    assert abs(np.trace(total)) == pytest.approx(2.0, abs=1e-7)


def test_clifford_index_of_rejects_non_clifford():
    with pytest.raises(Exception):
        dynamics.clifford_index_of(np.array([[1.0, 0.0], [0.0, np.exp(0.3j)]]))


# ---------------------------------------------------------------------------
# randomized benchmarking
# ---------------------------------------------------------------------------


def test_rb_ideal_survival_matches_depolarizing_oracle():
    p = 0.97
    result = dynamics.run_rb(
        FLAT2, lengths=[1, 2, 5, 8], sequences_per_length=3, seed=11,
        mode="ideal", depolarizing=p,
    )
    for record in result.records:
        expected = oracles.depolarized_survival(p, record.length)
        assert record.survival == pytest.approx(expected, abs=1e-12)


def test_rb_ideal_interleaved_perfect_gate_survives_exactly():
    result = dynamics.run_rb(
        FLAT2, lengths=[1, 3, 6], sequences_per_length=2, seed=5,
        interleaved=4, mode="ideal",
    )
    for record in result.records:
        assert record.survival == pytest.approx(1.0, abs=1e-9)


def test_rb_seeded_runs_are_identical(tmp_path):
    kwargs = dict(lengths=[1, 2, 4], sequences_per_length=2, seed=42,
                  mode="ideal", depolarizing=0.95)
    a = dynamics.run_rb(FLAT2, **kwargs)
    b = dynamics.run_rb(FLAT2, **kwargs)
    assert a.records == b.records
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    dynamics.write_rb_csv(a, path_a)
    dynamics.write_rb_csv(b, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    lines = path_a.read_text().splitlines()
    assert lines[0] == "length,seq_index,survival"
    assert len(lines) == 1 + len(a.records)


def test_rb_argument_validation():
    with pytest.raises(ValueError):
        dynamics.run_rb(FLAT2, lengths=[], sequences_per_length=1, seed=0)
    with pytest.raises(ValueError):
        dynamics.run_rb(FLAT2, lengths=[0], sequences_per_length=1, seed=0)
    with pytest.raises(ValueError):
        dynamics.run_rb(FLAT2, lengths=[2], sequences_per_length=0, seed=0)
    with pytest.raises(ValueError):
        dynamics.run_rb(FLAT2, lengths=[2], sequences_per_length=1, seed=0,
                        interleaved=24)
    with pytest.raises(ValueError):
        dynamics.run_rb(FLAT2, lengths=[2], sequences_per_length=1, seed=0,
                        mode="montecarlo")


def test_rb_program_structure():
    gate = RbGate(duration_ns=20.0, amplitude_dac=0.01)
    program = dynamics.build_rb_program([4, 0], gate, 1.0, F01)
    # C4 is a bare X90; C0 contributes nothing
    assert len(program.instructions) == 1
    play = program.instructions[0]
    assert isinstance(play, pulsec.PlayXY)
    assert play.phase_offset == pytest.approx(math.pi)
    assert program.initial_carrier == pytest.approx(F01)
    assert set(program.primitives) == {"x90"}


def test_rb_virtual_z_only_sequence_survives_exactly():
    # a sequence whose Cliffords (and recovery) are all virtual-Z compiles to
    # an empty drive: ground-state survival is exactly 1
    gate = RbGate(duration_ns=20.0, amplitude_dac=0.01)
    config = pulsec.SynthesisConfig(sample_rate=1.0)
    indices = [1, dynamics.recovery_index([1])]
    program = dynamics.build_rb_program(indices, gate, 1.0, F01)
    assert all(isinstance(instr, pulsec.VirtualZ) for instr in program.instructions)
    survival = dynamics._waveform_survival(FLAT2, program, config)
    assert survival == 1.0


def test_rb_waveform_mode_with_calibrated_gate():
    # frozen two-pulse calibration of the 20 ns X90 through a flat channel
    gate = RbGate(
        duration_ns=20.0,
        amplitude_dac=0.00984501,
        drive_frequency_ghz=F01 + 2.998e-4,
    )
    result = dynamics.run_rb(
        FLAT2, lengths=[1, 2, 4], sequences_per_length=2, seed=7,
        mode="waveform", gate=gate,
    )
    assert result.mode == "waveform"
    for record in result.records:
        assert record.survival > 0.99


def test_rb_example_program_and_memory_footprint():
    result = dynamics.run_rb(
        FLAT2, lengths=[4, 300], sequences_per_length=1, seed=3, mode="ideal"
    )
    config = pulsec.SynthesisConfig(sample_rate=1.0)
    report = pulsec.memory_report(result.example_program, config)
    assert report["stored_ns"] == pytest.approx(20.0)
    assert report["ratio"] > 200.0
