"""Acceptance criteria, one test per criterion at its stated tolerance.

The terminal summary prints a PASS/FAIL line per criterion (see conftest).
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import brentq

from afcmem.atoms import FrequencyClass, band_averaged_transfer, drive, transfer_efficiency
from afcmem.cli import load_scenario
from afcmem.collective import collective_intensity, dephasing_factor, sample_atoms
from afcmem.medium import Medium1D, afc_echo_efficiency, propagate
from afcmem.optimize import SearchSpace, optimize_comb, optimize_control
from afcmem.protocol import (
    ControlSpec,
    Resolution,
    StorageSequence,
    fit_gaussian_decay,
    run_afc_echo,
    run_multimode,
    run_spinwave_storage,
    storage_sweep,
    timing_sweep,
)
from afcmem.pulses import gaussian_pulse, sech_pulse, sech_tau
from afcmem.spectral import CombSpec, build_comb
from oracles import mc_dephasing, rosen_zener

COMB_250K = CombSpec(250e3, 100e3, 1.2)
SWEEP_TS = [5.6e-6, 7.6e-6, 10.6e-6, 15.6e-6]
SWEEP_TS_8 = [2.6e-6, 5.6e-6, 7.6e-6, 10.6e-6, 12.6e-6, 15.6e-6, 18.6e-6, 21.6e-6]


def _report(label, value, target):
    print(f"{label}: {value!r} (target {target})")


@pytest.mark.criterion(1, "AFC echo timing")
@pytest.mark.parametrize("comb,expected", [
    (COMB_250K, 4.0e-6),
    (CombSpec(1e6, 100e3, 8.0), 1.0e-6),
    (CombSpec(200e3, 80e3, 1.2, n_peaks=10), 5.0e-6),
])
def test_criterion_01_echo_timing(comb, expected):
    rep = run_afc_echo(StorageSequence(comb=comb, resolution="reference"))[1]
    _report(f"echo time at delta={comb.delta:g}", rep.echo_time, expected)
    assert rep.echo_time == pytest.approx(expected, rel=0.01)


@pytest.mark.criterion(2, "Timing invariance T' + T'' = 1/delta")
def test_criterion_02_timing_invariance():
    seq = StorageSequence(comb=COMB_250K, control=ControlSpec(), t_prime=1.63e-6, t_s=2e-6,
                          resolution="reference")
    for t_prime, t2 in timing_sweep(seq, [1.17e-6, 1.63e-6, 2.23e-6]):
        _report(f"T' + T'' at T'={t_prime:g}", t_prime + t2, 4e-6)
        assert t_prime + t2 == pytest.approx(4.0e-6, rel=0.02)


@pytest.mark.criterion(3, "Total storage time 1/delta + T_s")
def test_criterion_03_total_storage_time():
    scen = load_scenario("fig3")
    rep = run_spinwave_storage(scen.sequence())[1]
    _report("fig3 output", rep.echo_time, 11.6e-6)
    assert rep.echo_time == pytest.approx(11.6e-6, rel=0.01)
    seq = scen.sequence()
    for r, t_s in zip(storage_sweep(seq, SWEEP_TS), SWEEP_TS):
        expected = seq.mode_times[0] + seq.period + t_s
        _report(f"output at T_s={t_s:g}", r.echo_time, expected)
        assert r.echo_time == pytest.approx(expected, rel=0.01)


@pytest.mark.criterion(4, "Spin-dephasing decay")
def test_criterion_04_spin_dephasing():
    seq = replace(load_scenario("fig3").sequence(), resolution="fast")
    assert seq.spin_fwhm == 26e3
    eta = [r.eta_total for r in storage_sweep(seq, SWEEP_TS_8)]
    fwhm, _ = fit_gaussian_decay(SWEEP_TS_8, eta)
    _report("fitted spin FWHM", fwhm, 26e3)
    assert fwhm == pytest.approx(26e3, rel=0.05)
    for t_s in SWEEP_TS_8:
        assert dephasing_factor(26e3, t_s) == pytest.approx(mc_dephasing(26e3, t_s, 1_000_000),
                                                            abs=1e-3)


@pytest.mark.criterion(5, "Sech transfer efficiency")
def test_criterion_05_sech_transfer():
    def eta_t(peak_rabi, convention="fwhm"):
        pulse = sech_pulse(600e-9, peak_rabi, 2e6, dt=10e-9, convention=convention)
        return band_averaged_transfer(pulse, 2e6)

    nominal = {c: eta_t(1.2e6, c) for c in ("intensity_1pct", "fwhm", "tau")}
    for c, v in nominal.items():
        _report(f"eta_T at 1.2 MHz, duration convention {c}", v, "0.75 +- 0.05 within bracket")
    # the duration conventions bracket the quoted value at the nominal Rabi frequency
    assert min(nominal.values()) <= 0.75 <= max(nominal.values())
    # and the x2pi Rabi ambiguity window contains a peak Rabi frequency giving 0.75
    lo, hi = 1.2e6 / (2 * math.pi), 1.2e6
    peak = brentq(lambda om: eta_t(om) - 0.75, lo, hi, xtol=1.0)
    _report("retuned peak Rabi frequency", peak, f"within [{lo:.4g}, {hi:.4g}]")
    assert eta_t(peak) == pytest.approx(0.75, abs=0.05)
    assert lo <= peak <= hi
    # unchirped sech against the Rosen-Zener closed form
    for peak_rabi in (0.3e6, 0.5e6, 0.8e6, 1.2e6):
        pulse = sech_pulse(600e-9, peak_rabi, 0.0, dt=1e-9)
        for det in (0.0, 0.3e6, -0.6e6, 1e6):
            got = transfer_efficiency(pulse, FrequencyClass(optical_detuning=det))
            assert got == pytest.approx(rosen_zener(peak_rabi, sech_tau(600e-9), det), abs=1e-3)


@pytest.mark.criterion(6, "Efficiency factorisation")
def test_criterion_06_factorisation():
    echo = run_afc_echo(StorageSequence(comb=COMB_250K, resolution="reference"))[1]
    ideal = StorageSequence(comb=COMB_250K, control=ControlSpec(kind="ideal"), t_prime=1.63e-6,
                            t_s=0.0, resolution="reference")
    rep = run_spinwave_storage(ideal, echo)[1]
    _report("eta_total / eta_e with ideal pi controls", rep.eta_total / rep.eta_e, 1.0)
    assert rep.eta_total == pytest.approx(rep.eta_e, rel=0.05)
    # detuning-independent eta_T = 0.75: area 2pi/3; T_s separates the retrieved output
    # from the unconverted optical echo
    partial = replace(ideal, control=ControlSpec(kind="ideal", area=2 * math.pi / 3), t_s=2e-6)
    rep = run_spinwave_storage(partial, echo)[1]
    assert rep.eta_T == pytest.approx(0.75)
    _report("eta_total with eta_T = 0.75", rep.eta_total, rep.eta_e * 0.75**2)
    assert rep.eta_total == pytest.approx(rep.eta_e * 0.75**2, rel=0.10)


@pytest.mark.criterion(7, "Echo efficiencies as achievable points")
def test_criterion_07_echo_efficiencies():
    scen = load_scenario("opt_comb")
    opt = scen.params["optimize"]
    inp = scen.params["pulses"]["input"]
    pulse = gaussian_pulse(inp["fwhm_s"], 1e3, dt=10e-9)
    result = optimize_comb(SearchSpace.from_dict(opt["parameters"]), opt["delta_hz"], pulse,
                           budget=opt["budget"], seed=0, tradeoff_points=0)
    _report("best eta_e at delta = 1 MHz", result.final_value, ">= 0.15")
    assert result.best["d_peak"] <= 8.0 and result.best["finesse"] <= 10.0
    assert result.final_value >= 0.15
    rep = run_afc_echo(StorageSequence(comb=COMB_250K, resolution="reference"))[1]
    _report("eta_e at delta = 250 kHz, F = 2.5", rep.eta_e, "[0.03, 0.07]")
    assert 0.03 <= rep.eta_e <= 0.07


@pytest.mark.criterion(8, "Optimised transfer with doubled Rabi ceiling")
def test_criterion_08_optimised_transfer():
    scen = load_scenario("opt_control")
    opt = scen.params["optimize"]
    space = SearchSpace.from_dict(opt["parameters"])
    assert max(p.upper for p in space.parameters if p.name == "peak_rabi") == 2.4e6
    result = optimize_control(space, band=opt["band_hz"], budget=opt["budget"], seed=0)
    _report("best eta_T", result.best_value, ">= 0.95")
    assert result.best_value >= 0.95


@pytest.mark.criterion(9, "Two-mode storage")
def test_criterion_09_two_modes():
    seq = replace(load_scenario("fig5_twomode").sequence(), resolution="reference")
    rep = run_multimode(seq)
    expected = np.asarray(seq.mode_times) + 12.6e-6
    _report("output times", rep.output_times, expected.tolist())
    np.testing.assert_allclose(rep.output_times, expected, rtol=0.01)
    ratio = rep.per_mode[0] / rep.per_mode[1]
    _report("per-mode efficiency ratio", ratio, "[0.98, 1.02]")
    assert 0.98 <= ratio <= 1.02


@pytest.mark.criterion(10, "Oracle equivalence in the thin limit")
def test_criterion_10_thin_medium_oracle():
    etas = {}
    for d in (0.025, 0.05, 0.1):
        seq = StorageSequence(comb=CombSpec(250e3, 100e3, d), resolution="reference")
        record = propagate(seq.input_pulse(), [], seq.medium(), seq.t_end())
        window = (4e-6 - 1.5 * seq.input_fwhm, 4e-6 + 1.5 * seq.input_fwhm)
        etas[d] = afc_echo_efficiency(record, window)
        if d == 0.05:
            sample = sample_atoms(build_comb(seq.comb), 0.0, 200_000, seed=0,
                                  input_pulse=seq.input_pulse())
            mask = (record.times > 2.5e-6) & (record.times < 5.5e-6)
            a = record.intensity[mask]
            b = collective_intensity(sample, record.times[mask], weighting="amplitude")
            corr = float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))
            _report("normalised cross-correlation", corr, "> 0.99")
            assert corr > 0.99
    for d in (0.025, 0.1):
        ratio = (etas[d] / etas[0.05]) / (d / 0.05) ** 2
        _report(f"eta_e scaling ratio at d={d}", ratio, "1 +- 0.05")
        assert ratio == pytest.approx(1.0, rel=0.05)


@pytest.mark.criterion(11, "Numerics hygiene")
def test_criterion_11_numerics():
    # Beer's law at tooth centres and anti-tooth midpoints, offset comb (sign-sensitive)
    spec = CombSpec(1e6, 400e3, 2.0, n_peaks=3, center_offset=0.3e6)
    m = Medium1D.from_comb(spec, n_slices=40, class_step=50e3, homogeneous_linewidth=0.0)
    r = propagate(gaussian_pulse(100e-9, 1e3, dt=10e-9), [], m, 0.45 * m.alias_time)
    centres = spec.tooth_centers()
    cal = np.concatenate([centres, centres[:-1] + 0.5e6, [centres[0] - 0.5e6, centres[-1] + 0.5e6]])
    kernel = np.exp(-2j * math.pi * np.outer(cal, r.times))
    transmission = np.abs(kernel @ r.output) ** 2 / np.abs(kernel @ r.input_field) ** 2
    _report("max Beer's-law deviation", np.max(np.abs(transmission - np.exp(-spec.density(cal)))),
            "<= 1e-3")
    np.testing.assert_allclose(transmission, np.exp(-spec.density(cal)), atol=1e-3)

    # norm over 1e4 steps with both fields on
    rng = np.random.default_rng(0)
    n = 2 * 10_000 + 1
    t = np.arange(n) * 1e-9
    ge = 1.5e6 * np.exp(2j * math.pi * (0.3e6 * t + rng.uniform(0, 1)))
    se = 1.0e6 * np.cos(2 * math.pi * 0.2e6 * t)
    c = drive(np.array([1, 1j, 0.5]) / math.sqrt(2.25), np.linspace(-2e6, 2e6, 9), 0.1e6,
              ge, se, 1e-9)
    norm_err = np.max(np.abs(np.sum(np.abs(c) ** 2, axis=-1) - 1))
    _report("norm error after 1e4 steps", norm_err, "<= 1e-9")
    assert norm_err <= 1e-9

    # halving dt and dz together
    coarse = run_afc_echo(StorageSequence(comb=COMB_250K, resolution=Resolution(5e-9, 40, 16, 12)))
    fine = run_afc_echo(StorageSequence(comb=COMB_250K, resolution=Resolution(2.5e-9, 80, 16, 12)))
    change = abs(coarse[1].eta_e - fine[1].eta_e) / fine[1].eta_e
    _report("relative eta_e change on (dt, dz) halving", change, "< 0.01")
    assert change < 0.01

    # bit reproducibility
    again = run_afc_echo(StorageSequence(comb=COMB_250K, resolution=Resolution(5e-9, 40, 16, 12)))
    assert np.array_equal(again[0].output, coarse[0].output)
    assert again[1] == coarse[1]
    s1 = sample_atoms(build_comb(COMB_250K), 26e3, 10_000, seed=11)
    s2 = sample_atoms(build_comb(COMB_250K), 26e3, 10_000, seed=11)
    assert np.array_equal(s1.optical, s2.optical) and np.array_equal(s1.spin, s2.spin)
