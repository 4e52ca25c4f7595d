"""One-dimensional Maxwell-Bloch propagation through a comb-shaped ensemble.

The weak forward field obeys, in the co-moving frame,

    dOmega/dz = (i/pi) * sum_k w_k conj(c_e,k) c_g,k

with class weights ``w_k = d(delta_k) * class_step`` and z in units of the
crystal length, which makes a weak monochromatic probe lose exactly
``exp(-d(nu))`` of its intensity. Controls on s-e are prescribed, undepleted
and uniform in z (optionally scaled by a per-slice overlap profile).

Time stepping is a Lawson (integrating-factor) RK4 whose exponential part
handles the detunings and homogeneous decay exactly; the z integral uses
causal Adams-Moulton weights of order up to four.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from afcmem.atoms import coupling_derivatives, free_rates
from afcmem.constants import HOMOGENEOUS_LINEWIDTH_HZ
from afcmem.pulses import Direction, InstantPulse, PulseEnvelope, Transition
from afcmem.spectral import AbsorptionProfile, CombSpec, PeakShape, build_comb

TWO_PI = 2.0 * math.pi


class PropagationError(ValueError):
    pass


def gauss_hermite_classes(fwhm: float, n: int):
    """Quadrature nodes and weights for a Gaussian spin line of the given FWHM."""
    if fwhm <= 0 or n <= 1:
        return np.zeros(1), np.ones(1)
    x, w = np.polynomial.hermite.hermgauss(n)
    sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return math.sqrt(2.0) * sigma * x, w / math.sqrt(math.pi)


def adams_moulton_weights(n_slices: int) -> np.ndarray:
    """Lower-triangular matrix W with (W @ f)[j] ~ integral_0^{z_j} f dz on z in [0, 1]."""
    h = 1.0 / n_slices
    w = np.zeros((n_slices + 1, n_slices + 1))
    for j in range(1, n_slices + 1):
        w[j] = w[j - 1]
        if j == 1:
            w[j, 1] += h / 2
            w[j, 0] += h / 2
        elif j == 2:
            w[j, 2] += 5 * h / 12
            w[j, 1] += 8 * h / 12
            w[j, 0] -= h / 12
        else:
            w[j, j] += 9 * h / 24
            w[j, j - 1] += 19 * h / 24
            w[j, j - 2] -= 5 * h / 24
            w[j, j - 3] += h / 24
    return w


@dataclass(frozen=True, eq=False)
class Medium1D:
    """Spatially discretised crystal holding per-slice frequency classes."""

    detunings: np.ndarray
    weights: np.ndarray
    class_step: float
    n_slices: int = 40
    spin_detunings: np.ndarray = field(default_factory=lambda: np.zeros(1))
    spin_weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    homogeneous_linewidth: float = HOMOGENEOUS_LINEWIDTH_HZ
    control_profile: np.ndarray | None = None
    spec: CombSpec | None = None

    def __post_init__(self):
        if self.n_slices < 20:
            raise PropagationError(f"invariant n_slices >= 20 violated: {self.n_slices}")
        if self.spec is not None and self.spec.n_peaks > 1:
            if self.class_step > self.spec.delta / 8 * (1 + 1e-9):
                raise PropagationError("invariant >= 8 frequency classes per tooth violated")
        if self.control_profile is not None and len(self.control_profile) != self.n_slices + 1:
            raise PropagationError("control_profile needs one value per z node")

    @classmethod
    def from_comb(
        cls,
        spec: CombSpec,
        n_slices: int = 40,
        classes_per_tooth: int = 16,
        class_step: float | None = None,
        spin_fwhm: float = 0.0,
        n_spin: int = 12,
        homogeneous_linewidth: float = HOMOGENEOUS_LINEWIDTH_HZ,
        control_profile=None,
    ) -> "Medium1D":
        if class_step is None:
            class_step = min(spec.delta / classes_per_tooth, spec.gamma / 8.0)
        profile = build_comb(spec, grid_step=class_step)
        return cls.from_profile(
            profile, n_slices=n_slices, spin_fwhm=spin_fwhm, n_spin=n_spin,
            homogeneous_linewidth=homogeneous_linewidth, control_profile=control_profile,
        )

    @classmethod
    def from_profile(
        cls,
        profile: AbsorptionProfile,
        n_slices: int = 40,
        spin_fwhm: float = 0.0,
        n_spin: int = 12,
        homogeneous_linewidth: float = HOMOGENEOUS_LINEWIDTH_HZ,
        control_profile=None,
    ) -> "Medium1D":
        d = profile.optical_depth
        spec = profile.spec
        keep = d > 1e-9 * max(float(np.max(d)), 1e-300)
        if spec is not None and spec.peak_shape is PeakShape.LORENTZIAN:
            # classes beyond 3x the comb bandwidth contribute below 1e-4
            keep &= np.abs(profile.detunings - spec.center_offset) <= 3 * spec.bandwidth
        eps, sw = gauss_hermite_classes(spin_fwhm, n_spin)
        return cls(
            detunings=profile.detunings[keep].copy(),
            weights=d[keep] * profile.grid_step,
            class_step=profile.grid_step,
            n_slices=n_slices,
            spin_detunings=eps,
            spin_weights=sw,
            homogeneous_linewidth=homogeneous_linewidth,
            control_profile=None if control_profile is None else np.asarray(control_profile, float),
            spec=spec,
        )

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_slices + 1)

    @property
    def dz(self) -> float:
        return 1.0 / self.n_slices

    @property
    def alias_time(self) -> float:
        """Period of the discrete class grid's response (1/class_step)."""
        return 1.0 / self.class_step

    def depth(self, nu) -> np.ndarray:
        if self.spec is not None:
            return self.spec.density(nu)
        return np.interp(nu, self.detunings, self.weights / self.class_step, left=0, right=0)


@dataclass(frozen=True, eq=False)
class FieldRecord:
    """Forward field on the (t, z) grid plus bookkeeping for energy balance."""

    times: np.ndarray
    field: np.ndarray
    input_field: np.ndarray
    z: np.ndarray
    residual_excitation: float
    decay_loss: float = 0.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def output(self) -> np.ndarray:
        return self.field[:, -1]

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.output) ** 2

    @property
    def input_energy(self) -> float:
        return float(np.sum(np.abs(self.input_field) ** 2) * self.dt)

    def energy(self, window: tuple[float, float] | None = None) -> float:
        """Output energy (integral of |Omega|^2 dt) inside a time window."""
        i = self.intensity
        if window is None:
            return float(np.sum(i) * self.dt)
        m = (self.times >= window[0]) & (self.times <= window[1])
        return float(np.sum(i[m]) * self.dt)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "re", "im", "intensity"])
            for t, v in zip(self.times, self.output):
                w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag)),
                            repr(float(abs(v) ** 2))])
        return path


def _embed(pulse: PulseEnvelope, t0: float, n: int, dt: float) -> np.ndarray:
    """Place a pulse on the global fine grid, referenced to its transition frame."""
    if abs(pulse.dt - dt) > 1e-12 * dt:
        raise PropagationError("all pulses must share the same dt")
    offset = (pulse.t_start - t0) / dt
    k0 = int(round(offset))
    if abs(offset - k0) > 1e-6:
        raise PropagationError("pulse grids are not aligned to a common time axis")
    out = np.zeros(n, dtype=complex)
    lo, hi = max(k0, 0), min(k0 + pulse.samples.size, n)
    if hi > lo:
        times = t0 + dt * np.arange(lo, hi)
        out[lo:hi] = pulse.samples[lo - k0 : hi - k0] * np.exp(
            1j * TWO_PI * pulse.frame_detuning * times
        )
    return out


def _check_control_spectrum(control: PulseEnvelope, medium: Medium1D):
    amp = np.abs(control.samples)
    strong = amp > 0.01 * amp.max() if amp.max() > 0 else np.zeros_like(amp, bool)
    if not strong.any():
        return
    phase = np.unwrap(np.angle(control.samples))
    sweep = np.gradient(phase, control.dt)[strong] / TWO_PI
    lo = control.carrier_detuning + sweep.min()
    hi = control.carrier_detuning + sweep.max()
    if hi >= medium.detunings.min() and lo <= medium.detunings.max():
        raise PropagationError(
            "control spectrum overlaps the g-e comb; the s-e frame would be ambiguous"
        )


def propagate(
    input_pulse: PulseEnvelope,
    controls: Sequence[PulseEnvelope | InstantPulse],
    medium: Medium1D,
    t_end: float,
    t_start: float | None = None,
) -> FieldRecord:
    """Propagate a weak g-e input (and prescribed s-e controls) through the medium."""
    if input_pulse.transition is not Transition.GE:
        raise PropagationError("input pulse must drive the g_e transition")
    if input_pulse.direction is not Direction.FORWARD:
        raise PropagationError("only forward-propagating inputs are simulated")
    for c in controls:
        if c.transition is not Transition.SE:
            raise PropagationError("controls must drive the s_e transition")
        if isinstance(c, PulseEnvelope):
            _check_control_spectrum(c, medium)
    dt = input_pulse.dt
    env_controls = [c for c in controls if isinstance(c, PulseEnvelope)]
    instants = [c for c in controls if isinstance(c, InstantPulse)]
    starts = [input_pulse.t_start] + [c.t_start for c in env_controls]
    t0 = min(starts) if t_start is None else t_start
    t0 = round(t0 / dt) * dt
    n_steps = int(math.ceil((t_end - t0) / (2 * dt)))
    if n_steps < 1:
        raise PropagationError("t_end must lie after the start of the pulses")
    # the class grid makes the response periodic in 1/class_step, so a mirror
    # image of the signal at time tau appears at 1/class_step - tau
    if t0 + 2 * dt * n_steps - input_pulse.t_start > 0.5 * medium.alias_time:
        raise PropagationError(
            f"simulation span exceeds 0.5/class_step = {0.5 * medium.alias_time:.3g} s; "
            "refine the frequency-class grid"
        )
    n_fine = 2 * n_steps + 1
    ge = _embed(input_pulse, t0, n_fine, dt)
    se = np.zeros(n_fine, dtype=complex)
    for c in env_controls:
        se += _embed(c, t0, n_fine, dt)

    step = 2 * dt
    rate_fields = max(np.abs(ge).max(), np.abs(se).max())
    if rate_fields > 0 and step > 1.0 / (20.0 * rate_fields):
        raise PropagationError(
            f"time step {step:.3g} s violates the Rabi stability bound 1/(20*{rate_fields:.3g} Hz)"
        )
    wz = adams_moulton_weights(medium.n_slices)
    w_total = float(np.sum(medium.weights))
    if step * wz.diagonal().max() * w_total > 0.5:
        raise PropagationError("time step too large for the medium coupling rate")

    profile = (np.ones(medium.n_slices + 1) if medium.control_profile is None
               else medium.control_profile)
    prof = profile[:, None, None]
    cw = (medium.spin_weights[:, None] * medium.weights[None, :])[None]  # (1, E, C)
    n_nodes, n_eps, n_cls = medium.n_slices + 1, medium.spin_detunings.size, medium.detunings.size
    shape = (n_nodes, n_eps, n_cls)

    rg, rs, re = free_rates(medium.detunings[None, :], medium.spin_detunings[:, None],
                            medium.homogeneous_linewidth)
    ehalf_s, ehalf_e = np.exp(rs * step / 2)[None], np.exp(re * step / 2)[None]
    efull_s, efull_e = ehalf_s**2, ehalf_e**2

    def polarization(cg, ce):
        return np.einsum("zec,zec->z", np.conj(ce) * cg, np.broadcast_to(cw, shape))

    def fields(cg, ce, k):
        return ge[k] + (1j / math.pi) * (wz @ polarization(cg, ce))

    def rhs(y, k):
        cg, cs, ce = y
        om = fields(cg, ce, k)[:, None, None]
        return coupling_derivatives(cg, cs, ce, om, se[k] * prof)

    cg = np.ones(shape, complex)
    cs = np.zeros(shape, complex)
    ce = np.zeros(shape, complex)
    instant_steps = sorted(
        ((int(round((p.t_center - t0) / step)), p) for p in instants), key=lambda x: x[0]
    )

    times = t0 + step * np.arange(n_steps + 1)
    field_rec = np.zeros((n_steps + 1, n_nodes), complex)
    field_rec[0] = fields(cg, ce, 0)
    decay_loss = 0.0
    gamma_e = TWO_PI * medium.homogeneous_linewidth
    zq = np.full(n_nodes, 1.0 / medium.n_slices)
    zq[0] = zq[-1] = 0.5 / medium.n_slices

    def excitation(ce_, cs_=None):
        pop = np.abs(ce_) ** 2 if cs_ is None else np.abs(ce_) ** 2 + np.abs(cs_) ** 2
        return float(np.einsum("z,zec->", zq, pop * cw)) / math.pi**2

    for n in range(n_steps):
        while instant_steps and instant_steps[0][0] == n:
            _, p = instant_steps.pop(0)
            c, s = np.cos(p.area * prof / 2), -1j * np.sin(p.area * prof / 2)
            cs, ce = c * cs + s * ce, s * cs + c * ce
        k = 2 * n
        y = (cg, cs, ce)
        k1 = rhs(y, k)
        y2 = (cg + step / 2 * k1[0], ehalf_s * (cs + step / 2 * k1[1]),
              ehalf_e * (ce + step / 2 * k1[2]))
        k2 = rhs(y2, k + 1)
        y3 = (cg + step / 2 * k2[0], ehalf_s * cs + step / 2 * k2[1],
              ehalf_e * ce + step / 2 * k2[2])
        k3 = rhs(y3, k + 1)
        y4 = (cg + step * k3[0], efull_s * cs + step * ehalf_s * k3[1],
              efull_e * ce + step * ehalf_e * k3[2])
        k4 = rhs(y4, k + 2)
        if gamma_e > 0:
            decay_loss += gamma_e * step * excitation(ce)
        cg = cg + step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        cs = efull_s * cs + step / 6 * (efull_s * k1[1] + 2 * ehalf_s * (k2[1] + k3[1]) + k4[1])
        ce = efull_e * ce + step / 6 * (efull_e * k1[2] + 2 * ehalf_e * (k2[2] + k3[2]) + k4[2])
        field_rec[n + 1] = fields(cg, ce, k + 2)

    return FieldRecord(
        times=times,
        field=field_rec,
        input_field=ge[::2].copy(),
        z=medium.z,
        residual_excitation=excitation(ce, cs),
        decay_loss=decay_loss,
    )


def _window_mask(times, window):
    return (times >= window[0]) & (times <= window[1])


def afc_echo_efficiency(
    record: FieldRecord,
    echo_window: tuple[float, float],
    input_energy: float | None = None,
    input_window: tuple[float, float] | None = None,
) -> float:
    """Output energy in the echo window divided by the input energy."""
    if input_window is not None and echo_window[0] < input_window[1] and input_window[0] < echo_window[1]:
        raise PropagationError("echo window overlaps the transmitted-pulse window")
    e_in = record.input_energy if input_energy is None else input_energy
    if e_in <= 0:
        raise PropagationError("input energy must be positive")
    return record.energy(echo_window) / e_in


def transmitted_fraction(record: FieldRecord, input_window: tuple[float, float]) -> float:
    return record.energy(input_window) / record.input_energy


def phase_match_direction(k_in, k_c1, k_c2) -> Direction:
    """Emission direction from k_out = k_in - k_c1 + k_c2 (sign of the sum)."""
    total = Direction(k_in).sign - Direction(k_c1).sign + Direction(k_c2).sign
    return Direction.FORWARD if total > 0 else Direction.BACKWARD


def is_phase_matched(k_in, k_c1, k_c2) -> bool:
    """True when |k_out| equals the single-photon wavenumber."""
    return abs(Direction(k_in).sign - Direction(k_c1).sign + Direction(k_c2).sign) == 1


def smoothed_intensity(record: FieldRecord, width: float) -> np.ndarray:
    """Boxcar-smoothed output intensity (window ``width`` seconds)."""
    n = max(1, int(round(width / record.dt)))
    if n % 2 == 0:
        n += 1
    return np.convolve(record.intensity, np.ones(n) / n, mode="same")


def find_pulse_peak(record: FieldRecord, window: tuple[float, float], width: float,
                    floor: float = 0.0) -> float | None:
    """Time of the smoothed-intensity maximum inside ``window`` (parabolic refinement).

    Returns None when the maximum sits on the window edge or below ``floor``
    (relative to the peak input intensity).
    """
    s = smoothed_intensity(record, width)
    m = np.flatnonzero(_window_mask(record.times, window))
    if m.size < 3:
        return None
    i = m[np.argmax(s[m])]
    ref = np.max(np.abs(record.input_field) ** 2)
    if s[i] <= floor * ref or i in (m[0], m[-1]):
        return None
    a, b, c = s[i - 1], s[i], s[i + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return float(record.times[i] + shift * record.dt)
