"""Bounded, budget-limited derivative-free maximisation of transfer and echo efficiency.

The search runs scipy's Nelder-Mead on the unit cube spanned by the free
parameters and restarts while evaluations remain: first from the incumbent
with a fresh simplex, afterwards from seeded uniform draws. Every objective
call counts against the budget.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from afcmem.atoms import band_averaged_transfer
from afcmem.protocol import StorageSequence, run_afc_echo
from afcmem.pulses import PulseEnvelope, sech_pulse
from afcmem.spectral import CombSpec


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class Parameter:
    name: str
    lower: float
    upper: float
    initial: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SearchError(f"bounds of {self.name!r} must be finite")
        if self.lower > self.upper:
            raise SearchError(f"invariant lower <= upper violated for {self.name!r}")
        if not self.lower <= self.initial <= self.upper:
            raise SearchError(f"initial value of {self.name!r} lies outside its bounds")

    @property
    def fixed(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class SearchSpace:
    parameters: tuple[Parameter, ...]

    @classmethod
    def from_dict(cls, spec: dict) -> "SearchSpace":
        """Build from ``{name: (lower, upper, initial)}``."""
        return cls(tuple(Parameter(k, *map(float, v)) for k, v in spec.items()))

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def free(self) -> list[Parameter]:
        return [p for p in self.parameters if not p.fixed]

    def initial(self) -> dict[str, float]:
        return {p.name: p.initial for p in self.parameters}

    def decode(self, u: np.ndarray) -> dict[str, float]:
        """Map unit-cube coordinates of the free parameters to a full point."""
        point = self.initial()
        for p, x in zip(self.free, np.clip(u, 0.0, 1.0)):
            point[p.name] = float(p.lower + x * (p.upper - p.lower))
        return point

    def encode(self, point: dict[str, float]) -> np.ndarray:
        return np.array([(point[p.name] - p.lower) / (p.upper - p.lower) for p in self.free])


@dataclass
class OptimizationResult:
    best: dict[str, float]
    best_value: float
    evaluations: int
    trace: list[tuple[int, float, float]] = field(default_factory=list)
    initial_value: float = float("nan")
    final_value: float | None = None
    tradeoff: list[tuple[float, float]] = field(default_factory=list)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.array([b for _, _, b in self.trace])

    def trace_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["evaluation", "objective", "best_so_far"])
            for row in self.trace:
                w.writerow([row[0], repr(row[1]), repr(row[2])])
        return path


class _BudgetExhausted(Exception):
    pass


def maximize(
    objective: Callable[[dict[str, float]], float],
    space: SearchSpace,
    budget: int,
    seed: int = 0,
    initial_step: float = 0.2,
    xatol: float = 1e-3,
    fatol: float = 1e-5,
) -> OptimizationResult:
    """Maximise ``objective`` over ``space`` using at most ``budget`` evaluations."""
    if budget < 1:
        raise SearchError("budget must be at least one evaluation")
    rng = np.random.default_rng(seed)
    trace: list[tuple[int, float, float]] = []
    best = {"point": space.initial(), "value": -math.inf}

    def evaluate(point: dict[str, float]) -> float:
        if len(trace) >= budget:
            raise _BudgetExhausted
        v = float(objective(point))
        if not math.isfinite(v):
            v = -math.inf
        if v > best["value"]:
            best["point"], best["value"] = dict(point), v
        trace.append((len(trace) + 1, v, best["value"]))
        return v

    initial_value = evaluate(space.initial())
    n = len(space.free)
    if n == 0:
        return OptimizationResult(best["point"], best["value"], len(trace), trace, initial_value)

    def neg(u):
        return -evaluate(space.decode(u))

    start = space.encode(space.initial())
    step = initial_step
    restart = 0
    while len(trace) + n + 1 <= budget:
        simplex = [start]
        for i in range(n):
            v = start.copy()
            v[i] = v[i] + step if v[i] + step <= 1.0 else v[i] - step
            simplex.append(v)
        try:
            minimize(neg, start, method="Nelder-Mead", bounds=[(0.0, 1.0)] * n,
                     options={"initial_simplex": np.array(simplex), "xatol": xatol,
                              "fatol": fatol, "maxfev": budget - len(trace)})
        except _BudgetExhausted:
            break
        restart += 1
        if restart == 1:
            start = space.encode(best["point"])
        else:
            start = rng.random(n)
            step = initial_step
    return OptimizationResult(best["point"], best["value"], len(trace), trace, initial_value)


CONTROL_SPACE = {
    "peak_rabi": (0.3e6, 1.2e6, 1.2e6),
    "duration": (300e-9, 1.2e-6, 600e-9),
    "chirp_width": (0.5e6, 6e6, 2e6),
}


def control_pulse(point: dict[str, float], dt: float = 10e-9, convention: str = "fwhm") -> PulseEnvelope:
    return sech_pulse(point["duration"], point["peak_rabi"], point["chirp_width"], dt=dt,
                      convention=convention)


def optimize_control(
    space: SearchSpace | None = None,
    band: float = 2e6,
    budget: int = 80,
    seed: int = 0,
    dt: float = 10e-9,
    n_samples: int = 41,
    convention: str = "fwhm",
    decay_linewidth: float = 0.0,
) -> OptimizationResult:
    """Maximise the band-averaged |e> -> |s> transfer over sech-pulse parameters."""
    if budget < 50:
        raise SearchError("optimize_control needs a budget of at least 50 evaluations")
    space = SearchSpace.from_dict(CONTROL_SPACE) if space is None else space

    def objective(point):
        pulse = control_pulse(point, dt=dt, convention=convention)
        return band_averaged_transfer(pulse, band, n_samples, decay_linewidth=decay_linewidth)

    return maximize(objective, space, budget, seed)


COMB_SPACE = {
    "d_peak": (0.5, 8.0, 4.0),
    "finesse": (1.0, 10.0, 4.0),
}


def comb_echo_efficiency(delta: float, d_peak: float, finesse: float, input_pulse: PulseEnvelope,
                         n_peaks: int = 9, resolution="fast") -> float:
    """eta_e of a Gaussian-tooth comb with the given depth and finesse."""
    amp = float(np.max(np.abs(input_pulse.samples)))
    fwhm = _intensity_fwhm(input_pulse)
    spec = CombSpec(delta=delta, gamma=delta / finesse, d_peak=d_peak, n_peaks=n_peaks)
    seq = StorageSequence(comb=spec, input_fwhm=fwhm, input_amplitude=amp, resolution=resolution)
    return run_afc_echo(seq)[1].eta_e


def _intensity_fwhm(pulse: PulseEnvelope) -> float:
    i = np.abs(pulse.samples) ** 2
    above = np.flatnonzero(i >= 0.5 * i.max())
    lo, hi = above[0], above[-1]

    def cross(a, b):
        return a + (0.5 * i.max() - i[a]) / (i[b] - i[a]) * (b - a)

    left = cross(lo - 1, lo) if lo > 0 else lo
    right = cross(hi, hi + 1) if hi + 1 < i.size else hi
    return float((right - left) * pulse.dt)


def optimize_comb(
    space: SearchSpace | None,
    delta: float,
    input_pulse: PulseEnvelope,
    budget: int = 40,
    seed: int = 0,
    n_peaks: int = 9,
    resolution="fast",
    final_resolution="reference",
    tradeoff_points: int = 10,
) -> OptimizationResult:
    """Maximise eta_e over (d_peak, finesse) at fixed tooth spacing.

    The search runs at ``resolution``; the best point is re-evaluated at
    ``final_resolution`` (stored as ``final_value``) and an eta_e-versus-finesse curve at the best depth
    is attached as ``tradeoff``.
    """
    space = SearchSpace.from_dict(COMB_SPACE) if space is None else space

    def objective(point):
        return comb_echo_efficiency(delta, point["d_peak"], point["finesse"], input_pulse,
                                    n_peaks, resolution)

    result = maximize(objective, space, budget, seed)
    result.final_value = comb_echo_efficiency(delta, result.best["d_peak"], result.best["finesse"],
                                             input_pulse, n_peaks, final_resolution)
    if tradeoff_points > 0:
        f_par = next(p for p in space.parameters if p.name == "finesse")
        grid = np.linspace(f_par.lower, f_par.upper, tradeoff_points)
        result.tradeoff = [
            (float(f), comb_echo_efficiency(delta, result.best["d_peak"], float(f), input_pulse,
                                            n_peaks, resolution))
            for f in grid
        ]
    return result
