"""Storage scenarios: AFC echo, spin-wave storage and multimode storage.

Times are measured from the centre of the first input mode. The first control
is centred at ``t_prime`` and the second at ``t_prime + t_s``; a mode entering
at ``t_m`` is expected back at ``t_m + 1/delta + t_s``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from afcmem.atoms import band_averaged_transfer
from afcmem.collective import dephasing_factor
from afcmem.constants import HOMOGENEOUS_LINEWIDTH_HZ
from afcmem.medium import FieldRecord, Medium1D, find_pulse_peak, propagate
from afcmem.pulses import (
    Direction,
    InstantPulse,
    PulseEnvelope,
    gaussian_pulse,
    gaussian_spectral_fwhm,
    sech_pulse,
)
from afcmem.spectral import CombSpec, multimode_capacity

PEAK_FLOOR = 1e-4
WINDOW_HALF_WIDTHS = 1.5


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class Resolution:
    dt: float
    n_slices: int
    classes_per_tooth: int
    n_spin: int


RESOLUTIONS = {
    "fast": Resolution(dt=10e-9, n_slices=20, classes_per_tooth=8, n_spin=8),
    "reference": Resolution(dt=5e-9, n_slices=40, classes_per_tooth=16, n_spin=12),
    "converged": Resolution(dt=2.5e-9, n_slices=80, classes_per_tooth=32, n_spin=16),
}


def resolve_resolution(res) -> Resolution:
    if isinstance(res, Resolution):
        return res
    try:
        return RESOLUTIONS[res]
    except KeyError:
        raise SequenceError(f"unknown resolution preset {res!r}") from None


@dataclass(frozen=True)
class ControlSpec:
    """Shape of both (identical) control pulses."""

    kind: str = "sech"
    duration: float = 600e-9
    peak_rabi: float = 1.2e6
    chirp_width: float = 2e6
    convention: str = "fwhm"
    area: float = math.pi
    direction: Direction = Direction.BACKWARD

    def __post_init__(self):
        if self.kind not in ("sech", "ideal"):
            raise SequenceError(f"control kind must be 'sech' or 'ideal', got {self.kind!r}")
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def extent(self) -> float:
        """Time the pulse occupies (its duration; zero for instantaneous pulses)."""
        return self.duration if self.kind == "sech" else 0.0

    def build(self, t_center: float, dt: float) -> PulseEnvelope | InstantPulse:
        if self.kind == "ideal":
            return InstantPulse(t_center=t_center, area=self.area, direction=self.direction)
        return sech_pulse(self.duration, self.peak_rabi, self.chirp_width, t_center=t_center,
                          dt=dt, convention=self.convention, direction=self.direction)

    def transfer(self, band: float, decay_linewidth: float = 0.0, dt: float = 10e-9) -> float:
        """Single-atom transfer efficiency averaged over ``band``."""
        return band_averaged_transfer(self.build(0.0, dt), band, decay_linewidth=decay_linewidth)


@dataclass(frozen=True)
class StorageSequence:
    comb: CombSpec
    input_fwhm: float = 450e-9
    input_amplitude: float = 1e3
    mode_times: tuple[float, ...] = (0.0,)
    control: ControlSpec | None = None
    t_prime: float = 0.0
    t_s: float = 0.0
    spin_fwhm: float = 0.0
    homogeneous_linewidth: float = HOMOGENEOUS_LINEWIDTH_HZ
    control_profile: tuple[float, ...] | None = None
    resolution: Resolution | str = "reference"
    readout_window: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "resolution", resolve_resolution(self.resolution))
        object.__setattr__(self, "mode_times", tuple(float(t) for t in self.mode_times))
        modes = np.asarray(self.mode_times)
        if modes.size < 1:
            raise SequenceError("at least one input mode is required")
        if np.any(np.diff(modes) < self.input_fwhm):
            raise SequenceError(
                "invariant mode spacing >= input FWHM violated: modes must be sorted and "
                f"at least {self.input_fwhm:.4g} s apart"
            )
        if self.t_s < 0:
            raise SequenceError(f"invariant T_s >= 0 violated: T_s = {self.t_s:.4g} s")
        if self.spin_fwhm < 0:
            raise SequenceError("invariant spin_fwhm >= 0 violated")
        if self.control is None:
            return
        period = 1.0 / self.comb.delta
        if self.t_prime - modes[0] + self.control.extent >= period:
            raise SequenceError(
                "invariant T' + control duration < 1/delta violated: "
                f"{self.t_prime - modes[0] + self.control.extent:.4g} s >= {period:.4g} s"
            )
        if self.t_prime <= modes[-1]:
            raise SequenceError("first control must follow every input mode")
        reach = 0.5 * (self.input_fwhm + self.control.extent)
        for t in (self.t_prime, self.t_prime + self.t_s):
            if np.any(np.abs(modes - t) < reach):
                raise SequenceError(
                    f"input modes overlap the control pulse centred at {t:.4g} s"
                )

    @property
    def period(self) -> float:
        return 1.0 / self.comb.delta

    @property
    def n_modes(self) -> int:
        return len(self.mode_times)

    def without_controls(self) -> "StorageSequence":
        return replace(self, control=None, t_prime=0.0, t_s=0.0)

    def expected_output_times(self) -> np.ndarray:
        shift = self.period + (self.t_s if self.control is not None else 0.0)
        return np.asarray(self.mode_times) + shift

    def medium(self) -> Medium1D:
        res = self.resolution
        profile = None if self.control_profile is None else np.asarray(self.control_profile)
        if profile is not None and profile.size != res.n_slices + 1:
            # resample a user profile onto the z grid
            profile = np.interp(np.linspace(0, 1, res.n_slices + 1),
                                np.linspace(0, 1, profile.size), profile)
        return Medium1D.from_comb(
            self.comb,
            n_slices=res.n_slices,
            classes_per_tooth=res.classes_per_tooth,
            spin_fwhm=self.spin_fwhm if self.control is not None else 0.0,
            n_spin=res.n_spin,
            homogeneous_linewidth=self.homogeneous_linewidth,
            control_profile=profile,
        )

    def input_pulse(self) -> PulseEnvelope:
        dt = self.resolution.dt
        pulses = [gaussian_pulse(self.input_fwhm, self.input_amplitude, t_center=t, dt=dt)
                  for t in self.mode_times]
        if len(pulses) == 1:
            return pulses[0]
        k0 = int(round(pulses[0].t_start / dt))
        k1 = int(round(pulses[-1].t_end / dt))
        samples = np.zeros(k1 - k0 + 1, complex)
        for p in pulses:
            k = int(round(p.t_start / dt)) - k0
            samples[k : k + p.samples.size] += p.samples
        return PulseEnvelope(samples=samples, t_start=k0 * dt, dt=dt)

    def controls(self) -> list[PulseEnvelope | InstantPulse]:
        if self.control is None:
            return []
        dt = self.resolution.dt
        return [self.control.build(self.t_prime, dt),
                self.control.build(self.t_prime + self.t_s, dt)]

    def t_end(self) -> float:
        return float(self.expected_output_times()[-1] + 3.1 * self.input_fwhm)


@dataclass(frozen=True)
class EfficiencyReport:
    eta_e: float
    eta_T: float
    dephasing: float
    eta_total: float
    echo_time: float | None
    per_mode: tuple[float, ...] = ()
    output_times: tuple[float | None, ...] = ()
    model: float = float("nan")
    discrepancy: float = float("nan")
    transmitted: float = float("nan")

    def __post_init__(self):
        for name in ("eta_e", "eta_T", "dephasing", "eta_total"):
            v = getattr(self, name)
            if not (-1e-12 <= v <= 1 + 1e-9):
                raise SequenceError(f"invariant 0 <= {name} <= 1 violated: {v}")

    def to_dict(self) -> dict:
        return asdict(self)


def _mode_windows(seq: StorageSequence, centers: np.ndarray, lower_bound: float):
    """Search windows around each expected output, split halfway between modes."""
    half = 0.5 * seq.period
    wins = []
    for i, c in enumerate(centers):
        lo = max(c - half, lower_bound)
        hi = c + half
        if i > 0:
            lo = max(lo, 0.5 * (centers[i - 1] + c))
        if i < len(centers) - 1:
            hi = min(hi, 0.5 * (c + centers[i + 1]))
        wins.append((lo, hi))
    return wins


def _measure_modes(record: FieldRecord, seq: StorageSequence, centers, lower_bound):
    """Peak time and window energy of each output mode, per unit input-mode energy."""
    f = seq.input_fwhm
    e_mode = record.input_energy / seq.n_modes
    times, effs = [], []
    for lo, hi in _mode_windows(seq, centers, lower_bound):
        tp = find_pulse_peak(record, (lo, hi), f, floor=PEAK_FLOOR)
        if tp is None:
            times.append(None)
            effs.append(0.0)
            continue
        win = (max(tp - WINDOW_HALF_WIDTHS * f, lo), min(tp + WINDOW_HALF_WIDTHS * f, hi))
        if seq.readout_window is not None and len(centers) == 1:
            win = seq.readout_window
        times.append(tp)
        effs.append(record.energy(win) / e_mode)
    return times, effs


def _transmitted(record: FieldRecord, seq: StorageSequence) -> float:
    t0 = seq.mode_times[0]
    hi = min(t0 + WINDOW_HALF_WIDTHS * seq.input_fwhm, t0 + 0.5 * seq.period)
    return record.energy((t0 - WINDOW_HALF_WIDTHS * seq.input_fwhm, hi)) / record.input_energy


def run_afc_echo(seq: StorageSequence) -> tuple[FieldRecord, EfficiencyReport]:
    """Two-level AFC echo (no controls)."""
    if seq.control is not None:
        raise SequenceError("run_afc_echo takes a sequence without controls")
    record = propagate(seq.input_pulse(), [], seq.medium(), seq.t_end())
    centers = seq.expected_output_times()
    lower = seq.mode_times[-1] + 0.5 * seq.period
    times, effs = _measure_modes(record, seq, centers, lower)
    eta_e = float(np.mean(effs))
    report = EfficiencyReport(
        eta_e=eta_e, eta_T=1.0, dephasing=1.0, eta_total=eta_e, echo_time=times[0],
        per_mode=tuple(effs), output_times=tuple(times), model=eta_e, discrepancy=0.0,
        transmitted=_transmitted(record, seq),
    )
    return record, report


def efficiency_model(eta_e: float, eta_T: float, t_s: float = 0.0, spin_fwhm: float = 0.0,
                     shape: str = "gaussian") -> float:
    """eta_e * eta_T^2 * (spin dephasing over t_s)."""
    if not (0 <= eta_e <= 1 and 0 <= eta_T <= 1):
        raise SequenceError("efficiencies must lie in [0, 1]")
    return eta_e * eta_T**2 * dephasing_factor(spin_fwhm, t_s, shape)


def infer_transfer(eta_total: float, eta_e: float, t_s: float = 0.0,
                   spin_fwhm: float = 0.0) -> float:
    """Transfer efficiency implied by a measured total and echo efficiency."""
    if eta_e <= 0:
        raise SequenceError("eta_e must be positive")
    return math.sqrt(eta_total / (eta_e * dephasing_factor(spin_fwhm, t_s)))


def _spinwave(seq: StorageSequence, echo_report: EfficiencyReport | None = None):
    if seq.control is None:
        raise SequenceError("spin-wave storage needs a control pulse")
    if echo_report is None:
        _, echo_report = run_afc_echo(seq.without_controls())
    record = propagate(seq.input_pulse(), seq.controls(), seq.medium(), seq.t_end())
    centers = seq.expected_output_times()
    lower = seq.t_prime + seq.t_s + 0.5 * seq.control.extent
    times, effs = _measure_modes(record, seq, centers, lower)
    eta_total = float(np.mean(effs))
    eta_t = seq.control.transfer(seq.comb.bandwidth, dt=seq.resolution.dt) \
        if seq.control.kind == "sech" else math.sin(seq.control.area / 2) ** 2
    deph = dephasing_factor(seq.spin_fwhm, seq.t_s)
    model = echo_report.eta_e * eta_t**2 * deph
    report = EfficiencyReport(
        eta_e=echo_report.eta_e, eta_T=eta_t, dephasing=deph, eta_total=eta_total,
        echo_time=times[0], per_mode=tuple(effs), output_times=tuple(times),
        model=model, discrepancy=abs(eta_total - model),
        transmitted=_transmitted(record, seq),
    )
    return record, report


def run_spinwave_storage(seq: StorageSequence, echo_report: EfficiencyReport | None = None
                         ) -> tuple[FieldRecord, EfficiencyReport]:
    """Full storage with two controls; also runs the bare echo unless ``echo_report`` is given."""
    return _spinwave(seq, echo_report)


def check_capacity(seq: StorageSequence) -> int:
    capacity = multimode_capacity(seq.comb, gaussian_spectral_fwhm(seq.input_fwhm))
    if seq.n_modes > capacity:
        raise SequenceError(f"{seq.n_modes} modes exceed the multimode capacity {capacity}")
    return capacity


def run_multimode(seq: StorageSequence, echo_report: EfficiencyReport | None = None
                  ) -> EfficiencyReport:
    """Store every mode of ``seq`` and report per-mode efficiencies."""
    check_capacity(seq)
    if seq.control is None:
        return run_afc_echo(seq)[1]
    return _spinwave(seq, echo_report)[1]


def timing_sweep(seq: StorageSequence, t_primes: Sequence[float]) -> list[tuple[float, float | None]]:
    """(T', T'') pairs, with T'' measured from the second control to the output peak."""
    out = []
    echo = run_afc_echo(seq.without_controls())[1]
    for tp in t_primes:
        _, rep = run_spinwave_storage(replace(seq, t_prime=float(tp)), echo)
        t2 = None if rep.echo_time is None else rep.echo_time - (tp + seq.t_s)
        out.append((float(tp), t2))
    return out


def storage_sweep(seq: StorageSequence, t_s_values: Sequence[float]) -> list[EfficiencyReport]:
    """Spin-wave runs over storage times, sharing one bare-echo reference."""
    echo = run_afc_echo(seq.without_controls())[1]
    return [run_spinwave_storage(replace(seq, t_s=float(ts)), echo)[1] for ts in t_s_values]


def fit_gaussian_decay(t_s: Sequence[float], eta: Sequence[float]) -> tuple[float, float]:
    """Fit eta = A exp(-pi^2 f^2 t^2 / (2 ln 2)); returns (f, A).

    Linear least squares of log(eta) against t^2.
    """
    t = np.asarray(t_s, float)
    y = np.log(np.asarray(eta, float))
    slope, intercept = np.polyfit(t**2, y, 1)
    if slope >= 0:
        raise SequenceError("efficiency does not decay with storage time")
    f = math.sqrt(-slope * 2.0 * math.log(2.0)) / math.pi
    return f, math.exp(intercept)
