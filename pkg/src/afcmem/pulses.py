"""Time-domain envelopes for input and control pulses.

Rabi frequencies are in Hz with the convention that a resonant square pulse
inverts a two-level atom when ``Omega * T = 1/2`` (pulse area ``2*pi*Omega*T``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from afcmem.constants import DEFAULT_DT, GROUND_SPLITTING_HZ, PREPARATION_WINDOW_HZ

TAIL_LEVEL = 1e-4


class PulseError(ValueError):
    pass


class Transition(str, Enum):
    GE = "g_e"
    SE = "s_e"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"

    @property
    def sign(self) -> int:
        return 1 if self is Direction.FORWARD else -1


class SechConvention(str, Enum):
    """How the quoted sech-pulse duration maps onto the sech width tau."""

    FWHM = "fwhm"  # amplitude FWHM = 2 arccosh(2) tau
    TAU = "tau"  # duration is tau itself
    INTENSITY_1PCT = "intensity_1pct"  # full width where |Omega|^2 falls to 1 %


def sech_tau(duration: float, convention="fwhm") -> float:
    convention = SechConvention(convention)
    if convention is SechConvention.FWHM:
        return duration / (2.0 * math.acosh(2.0))
    if convention is SechConvention.TAU:
        return duration
    return duration / (2.0 * math.acosh(10.0))


@dataclass(frozen=True, eq=False)
class PulseEnvelope:
    """Complex envelope on the uniform grid ``t_start + dt * k``.

    ``carrier_detuning`` is measured from the |g>-|e> line centre, so pulses
    on the s-e transition carry the ground splitting as a negative offset.
    """

    samples: np.ndarray
    t_start: float
    dt: float
    carrier_detuning: float = 0.0
    transition: Transition = Transition.GE
    direction: Direction = Direction.FORWARD

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        object.__setattr__(self, "direction", Direction(self.direction))
        s = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", s)
        if not self.dt > 0:
            raise PulseError(f"dt must be positive, got {self.dt}")
        if s.ndim != 1 or s.size < 3:
            raise PulseError("samples must be a 1-D array with at least 3 points")
        if not np.all(np.isfinite(s)):
            raise PulseError("samples must be finite")
        peak = np.max(np.abs(s))
        if peak > 0 and max(abs(s[0]), abs(s[-1])) > TAIL_LEVEL * peak:
            raise PulseError("envelope is truncated: grid ends exceed 1e-4 of the peak")
        if self.transition is Transition.SE:
            if abs(self.carrier_detuning + GROUND_SPLITTING_HZ) > GROUND_SPLITTING_HZ / 2:
                raise PulseError(
                    "s_e pulses must include the ground splitting in carrier_detuning "
                    f"(got {self.carrier_detuning:.4g} Hz)"
                )

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.samples.size - 1)

    @property
    def frame_detuning(self) -> float:
        """Carrier detuning in the rotating frame of the pulse's own transition."""
        if self.transition is Transition.SE:
            return self.carrier_detuning + GROUND_SPLITTING_HZ
        return self.carrier_detuning

    def scaled(self, factor: complex) -> "PulseEnvelope":
        return replace(self, samples=self.samples * factor)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "re", "im"])
            for t, v in zip(self.times, self.samples):
                w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
        return path


@dataclass(frozen=True)
class InstantPulse:
    """Idealised instantaneous rotation on one transition.

    ``area`` is the rotation angle; population transfer is sin^2(area/2) for
    every detuning.
    """

    t_center: float
    area: float = math.pi
    transition: Transition = Transition.SE
    direction: Direction = Direction.BACKWARD

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition(self.transition))
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def transfer(self) -> float:
        return math.sin(self.area / 2.0) ** 2


def _grid(t_center: float, half_width: float, dt: float):
    k0 = math.floor((t_center - half_width) / dt)
    k1 = math.ceil((t_center + half_width) / dt)
    return k0 * dt, dt * np.arange(k0, k1 + 1)


def _default_carrier(transition: Transition, carrier_detuning):
    if carrier_detuning is not None:
        return carrier_detuning
    return -GROUND_SPLITTING_HZ if Transition(transition) is Transition.SE else 0.0


def gaussian_pulse(
    fwhm: float,
    peak_amplitude: float,
    t_center: float = 0.0,
    transition=Transition.GE,
    direction=Direction.FORWARD,
    dt: float = DEFAULT_DT,
    carrier_detuning: float | None = None,
) -> PulseEnvelope:
    """Real Gaussian envelope whose intensity |Omega|^2 has the given FWHM."""
    if not fwhm > 0:
        raise PulseError(f"fwhm must be positive, got {fwhm}")
    # amplitude falls to ~2e-6 at 3.1 FWHM from the centre
    t0, t = _grid(t_center, 3.1 * fwhm, dt)
    env = peak_amplitude * np.exp(-2.0 * math.log(2.0) * ((t - t_center) / fwhm) ** 2)
    return PulseEnvelope(
        samples=env.astype(complex),
        t_start=t0,
        dt=dt,
        carrier_detuning=_default_carrier(transition, carrier_detuning),
        transition=transition,
        direction=direction,
    )


def gaussian_spectral_fwhm(fwhm: float) -> float:
    """Spectral intensity FWHM of a Gaussian pulse with temporal intensity FWHM."""
    return 2.0 * math.log(2.0) / (math.pi * fwhm)


def sech_pulse(
    duration: float,
    peak_rabi: float,
    chirp_width: float,
    t_center: float = 0.0,
    transition=Transition.SE,
    direction=Direction.BACKWARD,
    dt: float = DEFAULT_DT,
    convention="fwhm",
    carrier_detuning: float | None = None,
    window: float = PREPARATION_WINDOW_HZ,
) -> PulseEnvelope:
    """Complex hyperbolic secant pulse.

    Amplitude ``peak_rabi * sech(s/tau)``, instantaneous frequency
    ``(chirp_width/2) * tanh(s/tau)`` with ``s = t - t_center``.
    """
    if duration <= 0 or peak_rabi < 0 or chirp_width < 0:
        raise PulseError("sech pulse parameters must be positive")
    if chirp_width > window:
        raise PulseError(
            f"chirp width {chirp_width:.4g} Hz exceeds the preparation window {window:.4g} Hz"
        )
    tau = sech_tau(duration, convention)
    # sech(10.6) ~ 5e-5
    t0, t = _grid(t_center, 10.6 * tau, dt)
    x = (t - t_center) / tau
    # log cosh without overflow
    logcosh = np.abs(x) + np.log1p(np.exp(-2.0 * np.abs(x))) - math.log(2.0)
    phase = 2.0 * math.pi * (chirp_width / 2.0) * tau * logcosh
    env = peak_rabi / np.cosh(x) * np.exp(1j * phase)
    return PulseEnvelope(
        samples=env,
        t_start=t0,
        dt=dt,
        carrier_detuning=_default_carrier(transition, carrier_detuning),
        transition=transition,
        direction=direction,
    )


def square_pulse(
    length: float,
    rabi: float,
    t_center: float = 0.0,
    transition=Transition.GE,
    direction=Direction.FORWARD,
    dt: float = DEFAULT_DT,
    carrier_detuning: float | None = None,
) -> PulseEnvelope:
    """Flat-top pulse of the given length, zero-padded on both sides."""
    n = int(round(length / dt))
    if n < 1:
        raise PulseError("square pulse shorter than one time step")
    k0 = int(round((t_center - length / 2) / dt))
    samples = np.zeros(n + 4, dtype=complex)
    samples[2 : 2 + n] = rabi
    return PulseEnvelope(
        samples=samples,
        t_start=(k0 - 2) * dt,
        dt=dt,
        carrier_detuning=_default_carrier(transition, carrier_detuning),
        transition=transition,
        direction=direction,
    )


def ideal_pulse(t_center: float, area: float = math.pi, transition=Transition.SE,
                direction=Direction.BACKWARD) -> InstantPulse:
    return InstantPulse(t_center=t_center, area=area, transition=transition, direction=direction)


def instantaneous_frequency(pulse: PulseEnvelope, t) -> np.ndarray | float:
    """Envelope sweep (1/2pi) d(arg)/dt in Hz, by centred differences."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < pulse.t_start - 1e-15) or np.any(t_arr > pulse.t_end + 1e-15):
        raise PulseError("time outside the pulse grid")
    phase = np.unwrap(np.angle(pulse.samples))
    freq = np.gradient(phase, pulse.dt) / (2.0 * math.pi)
    out = np.interp(t_arr, pulse.times, freq)
    return float(out) if np.ndim(t) == 0 else out


def pulse_area(pulse: PulseEnvelope) -> float:
    """2*pi * integral |Omega(t)| dt (radians)."""
    return float(2.0 * math.pi * np.trapezoid(np.abs(pulse.samples), dx=pulse.dt))
