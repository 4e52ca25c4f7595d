"""Comb-shaped absorption profiles and derived comb quantities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from afcmem.constants import PREPARATION_WINDOW_HZ

GAUSS_AREA = math.sqrt(math.pi / (4.0 * math.log(2.0)))


class CombError(ValueError):
    """Raised for comb specifications that violate their invariants."""


class PeakShape(str, Enum):
    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian"
    SQUARE = "square"


# Tooth area in units of gamma * d_peak.
TOOTH_AREA_FACTOR = {
    PeakShape.GAUSSIAN: GAUSS_AREA,
    PeakShape.LORENTZIAN: math.pi / 2.0,
    PeakShape.SQUARE: 1.0,
}


@dataclass(frozen=True)
class CombSpec:
    """Periodic comb of absorbing teeth inside an emptied transmission hole.

    ``delta`` is the tooth spacing and ``gamma`` the tooth FWHM, both in Hz.
    Depths are natural-log intensity optical depths.
    """

    delta: float
    gamma: float
    d_peak: float
    d_background: float = 0.0
    n_peaks: int = 9
    peak_shape: PeakShape = PeakShape.GAUSSIAN
    center_offset: float = 0.0
    window: float = PREPARATION_WINDOW_HZ

    def __post_init__(self):
        object.__setattr__(self, "peak_shape", PeakShape(self.peak_shape))
        if not self.delta > 0:
            raise CombError(f"invariant delta > 0 violated: delta={self.delta}")
        if not self.gamma > 0:
            raise CombError(f"invariant gamma > 0 violated: gamma={self.gamma}")
        if self.d_peak < 0:
            raise CombError(f"invariant d_peak >= 0 violated: d_peak={self.d_peak}")
        if self.d_background < 0:
            raise CombError(
                f"invariant d_background >= 0 violated: d_background={self.d_background}"
            )
        if int(self.n_peaks) != self.n_peaks or self.n_peaks < 1:
            raise CombError(f"invariant n_peaks >= 1 violated: n_peaks={self.n_peaks}")
        if self.delta / self.gamma < 1.0 - 1e-12:
            raise CombError(
                f"invariant finesse >= 1 violated: delta/gamma={self.delta / self.gamma:.3g}"
            )
        if self.bandwidth > self.window * (1 + 1e-12):
            raise CombError(
                f"invariant n_peaks*delta <= window violated: "
                f"{self.bandwidth:.4g} Hz > {self.window:.4g} Hz"
            )

    @property
    def bandwidth(self) -> float:
        return self.n_peaks * self.delta

    @property
    def finesse(self) -> float:
        return self.delta / self.gamma

    def tooth_centers(self) -> np.ndarray:
        k = np.arange(self.n_peaks) - (self.n_peaks - 1) / 2.0
        return self.center_offset + k * self.delta

    def tooth(self, x):
        """Single tooth of unit height evaluated at offset ``x`` from its center."""
        x = np.asarray(x, dtype=float)
        if self.peak_shape is PeakShape.GAUSSIAN:
            return np.exp(-4.0 * math.log(2.0) * (x / self.gamma) ** 2)
        if self.peak_shape is PeakShape.LORENTZIAN:
            hw = self.gamma / 2.0
            return hw**2 / (x**2 + hw**2)
        return np.where(np.abs(x) < self.gamma / 2.0, 1.0, 0.0)

    def density(self, nu) -> np.ndarray:
        """Point values of d(nu)."""
        nu = np.asarray(nu, dtype=float)
        d = np.zeros_like(nu)
        for c in self.tooth_centers():
            d += self.d_peak * self.tooth(nu - c)
        inside = np.abs(nu - self.center_offset) < self.bandwidth / 2.0
        return d + self.d_background * inside

    def margin(self) -> float:
        if self.peak_shape is PeakShape.GAUSSIAN:
            return 3.0 * self.gamma
        if self.peak_shape is PeakShape.LORENTZIAN:
            # the tail beyond x holds ~gamma/(pi x) of a tooth's area
            return max(self.bandwidth, 100.0 * self.gamma)
        return self.gamma


@dataclass(frozen=True, eq=False)
class AbsorptionProfile:
    detunings: np.ndarray
    optical_depth: np.ndarray
    grid_step: float
    spec: CombSpec | None = None

    def __post_init__(self):
        d = np.asarray(self.optical_depth, dtype=float)
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise CombError("optical_depth must be finite and nonnegative")
        if self.spec is not None and self.grid_step > self.spec.gamma / 8 * (1 + 1e-9):
            raise CombError(
                f"invariant grid_step <= gamma/8 violated: {self.grid_step:.4g} Hz"
            )

    def integral(self) -> float:
        return float(np.sum(self.optical_depth) * self.grid_step)

    def peak_detunings(self) -> np.ndarray:
        """Detunings of the local maxima (plateaus count once, at their middle)."""
        scale = max(float(np.max(self.optical_depth)), 1e-300)
        # quantise so that rounding ripple on flat tops does not split plateaus
        d = np.concatenate([[0.0], np.round(self.optical_depth / scale, 9), [0.0]])
        idx, _ = find_peaks(d)
        return self.detunings[idx - 1]

    def interpolate(self, nu) -> np.ndarray:
        return np.interp(nu, self.detunings, self.optical_depth, left=0.0, right=0.0)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_Hz", "optical_depth"])
            for nu, d in zip(self.detunings, self.optical_depth):
                w.writerow([repr(float(nu)), repr(float(d))])
        return path


def _cell_average_box(nu, step, lo, hi):
    """Fraction of each grid cell [nu-step/2, nu+step/2] covered by [lo, hi]."""
    a = np.maximum(nu - step / 2.0, lo)
    b = np.minimum(nu + step / 2.0, hi)
    return np.clip(b - a, 0.0, None) / step


def build_comb(spec: CombSpec, grid_step: float | None = None) -> AbsorptionProfile:
    """Sample the comb on a uniform detuning grid centred on the comb.

    Gaussian and Lorentzian teeth are point-sampled. Square teeth and the
    background pedestal are cell-averaged so that the grid sum reproduces
    their exact area regardless of where the edges fall.
    """
    step = spec.gamma / 8.0 if grid_step is None else float(grid_step)
    if step > spec.gamma / 8.0 * (1 + 1e-9):
        raise CombError(f"invariant grid_step <= gamma/8 violated: {step:.4g} Hz")
    half = spec.bandwidth / 2.0 + spec.margin()
    k_max = int(math.ceil(half / step)) + 2
    nu = spec.center_offset + step * np.arange(-k_max, k_max + 1)

    if spec.peak_shape is PeakShape.SQUARE:
        d = np.zeros_like(nu)
        for c in spec.tooth_centers():
            d += spec.d_peak * _cell_average_box(nu, step, c - spec.gamma / 2, c + spec.gamma / 2)
    else:
        d = np.zeros_like(nu)
        for c in spec.tooth_centers():
            d += spec.d_peak * spec.tooth(nu - c)
    if spec.d_background > 0:
        lo = spec.center_offset - spec.bandwidth / 2.0
        d = d + spec.d_background * _cell_average_box(nu, step, lo, lo + spec.bandwidth)
    return AbsorptionProfile(detunings=nu, optical_depth=d, grid_step=step, spec=spec)


def finesse(spec: CombSpec) -> float:
    return spec.delta / spec.gamma


def effective_depth(spec: CombSpec) -> float:
    """Coarse-grained depth d/F seen by a pulse spanning many teeth.

    Exact for square teeth. For other shapes multiply by
    ``TOOTH_AREA_FACTOR[shape]`` (see :func:`coarse_grained_depth`).
    """
    return spec.d_peak / finesse(spec)


def coarse_grained_depth(spec: CombSpec) -> float:
    """Period-averaged optical depth including the tooth shape and pedestal."""
    return effective_depth(spec) * TOOTH_AREA_FACTOR[spec.peak_shape] + spec.d_background


def multimode_capacity(spec: CombSpec, mode_bandwidth: float, constant: float = 1.0) -> int:
    """Number of storable temporal modes, ``constant * bandwidth / delta`` floored."""
    if mode_bandwidth > spec.bandwidth * (1 + 1e-12):
        raise CombError(
            f"mode bandwidth {mode_bandwidth:.4g} Hz exceeds comb bandwidth "
            f"{spec.bandwidth:.4g} Hz"
        )
    return int(math.floor(constant * spec.bandwidth / spec.delta + 1e-9))
