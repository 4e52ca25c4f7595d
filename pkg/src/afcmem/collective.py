"""Discrete-atom phasor model of the collective emission.

Each atom j carries an optical detuning delta_j, a spin detuning eps_j, a
position z_j and an excitation amplitude c_j. In the forward direction the
spatial phases cancel, so the emitted intensity is the squared magnitude of a
weighted phasor sum over detunings. Valid in the weak-absorption limit; it
says nothing about absolute efficiency.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from afcmem.pulses import PulseEnvelope
from afcmem.spectral import AbsorptionProfile

TWO_PI = 2.0 * math.pi
ECHO_FLOOR = 1e-4
_CHUNK = 4096


class SampleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AtomSample:
    """A finite ensemble drawn from an absorption profile.

    ``storage`` lists (start, duration) intervals during which the optical
    coherence is parked in the spin level: no emission, frozen optical phase,
    accumulating spin phase.
    """

    optical: np.ndarray
    spin: np.ndarray
    z: np.ndarray
    amplitude: np.ndarray
    period: float | None = None
    storage: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        n = np.asarray(self.optical).size
        if n < 1:
            raise SampleError("a sample needs at least one atom")
        for name in ("spin", "z", "amplitude"):
            if np.asarray(getattr(self, name)).size != n:
                raise SampleError(f"{name} must have one entry per atom")
        if np.sum(np.abs(self.amplitude) ** 2) > 1.0 + 1e-9:
            raise SampleError("invariant sum |c_j|^2 <= 1 violated")

    def __len__(self) -> int:
        return int(np.asarray(self.optical).size)

    def weights(self, weighting: str = "intensity") -> np.ndarray:
        if weighting == "intensity":
            return np.abs(self.amplitude) ** 2
        if weighting == "amplitude":
            return np.abs(self.amplitude)
        raise SampleError(f"unknown weighting {weighting!r}")

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["optical_Hz", "spin_Hz", "z", "re", "im"])
            for row in zip(self.optical, self.spin, self.z, self.amplitude):
                d, e, z, c = row
                w.writerow([repr(float(d)), repr(float(e)), repr(float(z)),
                            repr(float(c.real)), repr(float(c.imag))])
        return path


def _input_spectrum(pulse: PulseEnvelope, nu: np.ndarray) -> np.ndarray:
    """|E(nu)| of the pulse at detunings nu (carrier offset included)."""
    n = 1 << int(math.ceil(math.log2(max(pulse.samples.size * 8, 1024))))
    spec = np.abs(np.fft.fftshift(np.fft.ifft(pulse.samples, n)))
    freqs = np.fft.fftshift(np.fft.fftfreq(n, pulse.dt)) + pulse.carrier_detuning
    return np.interp(nu, freqs, spec, left=0.0, right=0.0)


def sample_spin(rng: np.random.Generator, spin_fwhm: float, n: int, shape: str = "gaussian"):
    if spin_fwhm <= 0:
        return np.zeros(n)
    if shape == "gaussian":
        return rng.normal(0.0, spin_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0))), n)
    if shape == "lorentzian":
        return 0.5 * spin_fwhm * rng.standard_cauchy(n)
    raise SampleError(f"unknown spin line shape {shape!r}")


def sample_atoms(
    profile: AbsorptionProfile,
    spin_fwhm: float,
    n: int = 10_000,
    seed: int = 0,
    input_pulse: PulseEnvelope | None = None,
    spin_shape: str = "gaussian",
) -> AtomSample:
    """Draw ``n`` atoms with optical detunings distributed as d(delta).

    A grid cell is chosen with probability proportional to its depth and the
    detuning is placed uniformly inside it. Amplitudes follow the input
    spectrum (flat when no pulse is given) and are normalised to unit total
    excitation.
    """
    if n < 1:
        raise SampleError("n must be at least 1")
    d = np.asarray(profile.optical_depth, float)
    total = d.sum()
    if not total > 0:
        raise SampleError("profile has no absorption to sample from")
    rng = np.random.default_rng(seed)
    idx = rng.choice(d.size, size=n, p=d / total)
    step = profile.grid_step
    optical = profile.detunings[idx] + step * (rng.random(n) - 0.5)
    spin = sample_spin(rng, spin_fwhm, n, spin_shape)
    z = rng.random(n)
    if input_pulse is None:
        amp = np.ones(n)
    else:
        amp = _input_spectrum(input_pulse, optical)
    norm = math.sqrt(float(np.sum(amp**2)))
    if norm == 0:
        raise SampleError("input spectrum does not overlap the profile")
    period = profile.spec.delta if profile.spec is not None and profile.spec.n_peaks > 1 else None
    return AtomSample(optical=optical, spin=spin, z=z, amplitude=(amp / norm).astype(complex),
                      period=period)


def _phases(sample: AtomSample, t: np.ndarray, sl: slice):
    """Accumulated phase (rad) of each atom in ``sl`` at each time, and an emission mask."""
    delta = sample.optical[sl][None, :]
    eps = sample.spin[sl][None, :]
    t_opt = t[:, None].copy()
    t_spin = np.zeros_like(t_opt)
    emitting = np.ones(t.shape, bool)
    for start, dur in sample.storage:
        inside = (t > start) & (t < start + dur)
        emitting &= ~inside
        after = t >= start + dur
        t_opt[:, 0] -= np.where(after, dur, np.where(inside, t - start, 0.0))
        t_spin[:, 0] += np.where(after, dur, np.where(inside, t - start, 0.0))
    return -TWO_PI * (delta * t_opt + eps * t_spin), emitting


def collective_field(sample: AtomSample, t, weighting: str = "intensity") -> np.ndarray:
    """Complex phasor sum normalised to 1 at t = 0."""
    t_arr = np.atleast_1d(np.asarray(t, float))
    w = sample.weights(weighting)
    out = np.zeros(t_arr.size, complex)
    emitting = np.ones(t_arr.size, bool)
    for lo in range(0, len(sample), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        ph, emitting = _phases(sample, t_arr, sl)
        out += np.exp(1j * ph) @ w[sl]
    out = np.where(emitting, out, 0.0) / w.sum()
    return out if np.ndim(t) else out[0]


def collective_intensity(sample: AtomSample, t, weighting: str = "intensity"):
    """|sum_j w_j exp(-2i pi delta_j t)|^2 normalised to its t = 0 value."""
    field = collective_field(sample, t, weighting)
    return np.abs(field) ** 2


def echo_time(
    sample: AtomSample,
    window: tuple[float, float],
    step: float = 1e-9,
    floor: float = ECHO_FLOOR,
    weighting: str = "intensity",
) -> float | None:
    """Time of the strongest revival in ``window``; None when there is no echo.

    The maximum must be a local one (not on a window edge) and exceed
    ``floor``; it is refined by a parabola through the neighbouring samples.
    """
    lo, hi = window
    if lo <= 0 or hi <= lo:
        raise SampleError("search window must be positive and exclude t = 0")
    # coarse scan, then a fine grid around the best coarse point
    coarse = max(step, (hi - lo) / 400)
    t = np.arange(lo, hi + coarse / 2, coarse)
    i_t = collective_intensity(sample, t, weighting)
    k = int(np.argmax(i_t))
    if i_t[k] < floor or k in (0, t.size - 1):
        return None
    t = np.arange(t[k - 1], t[k + 1] + step / 2, step)
    i_t = collective_intensity(sample, t, weighting)
    k = int(np.argmax(i_t))
    if k in (0, t.size - 1):
        return float(t[k])
    a, b, c = i_t[k - 1], i_t[k], i_t[k + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return float(t[k] + shift * step)


def spin_freeze_resume(sample: AtomSample, t_prime: float, t_s: float) -> AtomSample:
    """Park the optical coherence in the spin level from ``t_prime`` for ``t_s``."""
    if t_s < 0:
        raise SampleError("invariant t_s >= 0 violated")
    if sample.period is not None and t_prime >= 1.0 / sample.period:
        raise SampleError(
            f"t_prime = {t_prime:.4g} s is not before the echo at 1/delta = {1 / sample.period:.4g} s"
        )
    if t_s == 0:
        return sample
    return replace(sample, storage=sample.storage + ((float(t_prime), float(t_s)),))


def dephasing_factor(spin_fwhm: float, t_s, shape: str = "gaussian"):
    """Intensity reduction |<exp(-2i pi eps t_s)>|^2 from static spin broadening.

    For a Gaussian line of FWHM f this is exp(-pi^2 f^2 t^2 / (2 ln 2)); for a
    Lorentzian it is exp(-2 pi f |t|).
    """
    if spin_fwhm < 0:
        raise SampleError("spin_fwhm must be nonnegative")
    t = np.asarray(t_s, float)
    if shape == "gaussian":
        out = np.exp(-(math.pi * spin_fwhm * t) ** 2 / (2.0 * math.log(2.0)))
    elif shape == "lorentzian":
        out = np.exp(-TWO_PI * spin_fwhm * np.abs(t))
    else:
        raise SampleError(f"unknown spin line shape {shape!r}")
    return float(out) if out.ndim == 0 else out


def intensity_to_csv(path, times, intensity) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "intensity"])
        for t, v in zip(times, intensity):
            w.writerow([repr(float(t)), repr(float(v))])
    return path
