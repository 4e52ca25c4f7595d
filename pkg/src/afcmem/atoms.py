"""Three-level lambda-system dynamics for a single detuning class.

Levels are ordered (g, s, e). In the rotating frame the Hamiltonian is

    H / 2pi = delta |e><e| + eps |s><s|
              + (Omega_ge/2 |g><e| + Omega_se/2 |s><e| + h.c.)

with Rabi frequencies in Hz, so that free evolution gives c_e ~ exp(-2i pi delta t)
and a resonant square pulse inverts the atom when Omega*T = 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from afcmem.pulses import InstantPulse, PulseEnvelope, Transition

G, S, E = 0, 1, 2
TWO_PI = 2.0 * math.pi


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyClass:
    optical_detuning: float = 0.0
    spin_detuning: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("class weight must be nonnegative")


@dataclass(frozen=True, eq=False)
class AtomState:
    """Pure amplitudes ``(c_g, c_s, c_e)`` or a 3x3 density matrix."""

    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.data, dtype=complex)
        if a.shape not in ((3,), (3, 3)):
            raise ValueError(f"state must have shape (3,) or (3, 3), got {a.shape}")
        object.__setattr__(self, "data", a)

    @classmethod
    def basis(cls, level: int, density: bool = False, time: float = 0.0) -> "AtomState":
        v = np.zeros(3, dtype=complex)
        v[level] = 1.0
        return cls(np.outer(v, v.conj()) if density else v, time)

    @classmethod
    def ground(cls, density=False):
        return cls.basis(G, density)

    @classmethod
    def spin(cls, density=False):
        return cls.basis(S, density)

    @classmethod
    def excited(cls, density=False):
        return cls.basis(E, density)

    @property
    def is_density(self) -> bool:
        return self.data.ndim == 2

    @property
    def populations(self) -> np.ndarray:
        if self.is_density:
            return np.real(np.diag(self.data)).copy()
        return np.abs(self.data) ** 2

    @property
    def norm(self) -> float:
        return float(np.sum(self.populations))

    def as_density(self) -> "AtomState":
        if self.is_density:
            return self
        return AtomState(np.outer(self.data, self.data.conj()), self.time)


def hamiltonian(cls: FrequencyClass, field_ge: complex = 0.0, field_se: complex = 0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian in rad/s."""
    h = np.zeros((3, 3), dtype=complex)
    h[S, S] = cls.spin_detuning
    h[E, E] = cls.optical_detuning
    h[G, E] = field_ge / 2.0
    h[E, G] = np.conj(field_ge) / 2.0
    h[S, E] = field_se / 2.0
    h[E, S] = np.conj(field_se) / 2.0
    return TWO_PI * h


def _batched_hamiltonian(delta, eps, ge, se):
    """Stack of Hamiltonians (rad/s) for arrays of detunings and fields."""
    delta, eps, ge, se = np.broadcast_arrays(
        np.asarray(delta, float), np.asarray(eps, float),
        np.asarray(ge, complex), np.asarray(se, complex),
    )
    h = np.zeros(delta.shape + (3, 3), dtype=complex)
    h[..., S, S] = eps
    h[..., E, E] = delta
    h[..., G, E] = ge / 2.0
    h[..., E, G] = np.conj(ge) / 2.0
    h[..., S, E] = se / 2.0
    h[..., E, S] = np.conj(se) / 2.0
    return TWO_PI * h


def _decay_generator(linewidth: float) -> np.ndarray:
    """Anti-Hermitian part of the no-jump generator: c_e decays at pi*linewidth."""
    k = np.zeros((3, 3), dtype=complex)
    k[E, E] = -math.pi * linewidth
    return k


def _liouvillian(h: np.ndarray, linewidth: float) -> np.ndarray:
    """Row-major vectorised Lindblad generator for d(rho)/dt, with L = sqrt(2 pi gamma)|g><e|."""
    eye = np.eye(3)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    if linewidth > 0:
        rate = TWO_PI * linewidth
        jump = np.zeros((3, 3))
        jump[G, E] = 1.0
        ldl = jump.T @ jump
        lv = lv + rate * (np.kron(jump, jump) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl))
    return lv


def check_stability(dt: float, cls: FrequencyClass, field_ge=0.0, field_se=0.0):
    rate = max(abs(field_ge), abs(field_se), abs(cls.optical_detuning), abs(cls.spin_detuning))
    if rate > 0 and dt > 1.0 / (20.0 * rate) * (1 + 1e-12):
        raise StabilityError(
            f"dt={dt:.3g} s violates dt <= 1/(20*max rate) = {1.0 / (20.0 * rate):.3g} s"
        )


def evolve(
    state: AtomState,
    cls: FrequencyClass,
    field_ge: complex = 0.0,
    field_se: complex = 0.0,
    dt: float = 1e-9,
    decay_linewidth: float = 0.0,
) -> AtomState:
    """Advance one step of length ``dt`` with fields held constant over the step.

    The step propagator is the exact exponential of the (possibly
    non-Hermitian) generator, so norm is conserved to rounding without decay.
    """
    check_stability(dt, cls, field_ge, field_se)
    h = hamiltonian(cls, field_ge, field_se)
    if state.is_density:
        lv = _liouvillian(h, decay_linewidth)
        rho = expm(lv * dt) @ state.data.reshape(9)
        return AtomState(rho.reshape(3, 3), state.time + dt)
    if decay_linewidth > 0:
        u = expm((-1j * h + _decay_generator(decay_linewidth)) * dt)
    else:
        w, v = np.linalg.eigh(h)
        u = (v * np.exp(-1j * w * dt)) @ v.conj().T
    return AtomState(u @ state.data, state.time + dt)


def _unitary_from_hermitian(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(g)
    return np.einsum("...ij,...j,...kj->...ik", v, np.exp(-1j * w), v.conj())


def magnus4_step(h0, hm, h1, step, decay_linewidth=0.0):
    """Fourth-order Magnus propagator from generators at the start, middle and end.

    Uses Simpson's rule for the first Magnus term and the commutator
    correction ``-(step^2/12) [H1, H0]``.
    """
    comm = h1 @ h0 - h0 @ h1
    if decay_linewidth == 0.0:
        g = step / 6.0 * (h0 + 4.0 * hm + h1) - 1j * step**2 / 12.0 * comm
        g = 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
        return _unitary_from_hermitian(g)
    k = _decay_generator(decay_linewidth)
    a0, am, a1 = -1j * h0 + k, -1j * hm + k, -1j * h1 + k
    omega = step / 6.0 * (a0 + 4.0 * am + a1) + step**2 / 12.0 * (a1 @ a0 - a0 @ a1)
    return expm(omega)


def _liouville_magnus4(h0, hm, h1, step, linewidth):
    l0, lm, l1 = (_liouvillian(h, linewidth) for h in (h0, hm, h1))
    omega = step / 6.0 * (l0 + 4.0 * lm + l1) + step**2 / 12.0 * (l1 @ l0 - l0 @ l1)
    return expm(omega)


def _frame_fields(pulse: PulseEnvelope, times: np.ndarray) -> np.ndarray:
    return pulse.samples * np.exp(1j * TWO_PI * pulse.frame_detuning * times)


def drive(
    state: AtomState | np.ndarray,
    delta,
    eps,
    field_ge: np.ndarray,
    field_se: np.ndarray,
    dt: float,
    decay_linewidth: float = 0.0,
) -> np.ndarray:
    """Propagate amplitudes through sampled fields with the Magnus-4 scheme.

    ``field_ge`` and ``field_se`` are frame-referenced samples on a grid of
    spacing ``dt``; steps of ``2*dt`` use the odd samples as midpoints.
    ``delta``/``eps`` may be arrays, giving a batch of independent classes.
    Returns final amplitudes with shape ``batch + (3,)``.
    """
    amps = state.data if isinstance(state, AtomState) else np.asarray(state, complex)
    ge = np.asarray(field_ge, complex)
    se = np.asarray(field_se, complex)
    if ge.size % 2 == 0:
        ge = np.append(ge, 0.0)
        se = np.append(se, 0.0)
    delta = np.asarray(delta, float)
    eps = np.asarray(eps, float)
    batch = np.broadcast(delta, eps).shape
    c = np.broadcast_to(amps, batch + (3,)).astype(complex).copy()
    step = 2.0 * dt
    h_prev = _batched_hamiltonian(delta, eps, ge[0], se[0])
    for k in range(0, ge.size - 2, 2):
        hm = _batched_hamiltonian(delta, eps, ge[k + 1], se[k + 1])
        h1 = _batched_hamiltonian(delta, eps, ge[k + 2], se[k + 2])
        u = magnus4_step(h_prev, hm, h1, step, decay_linewidth)
        c = np.einsum("...ij,...j->...i", u, c)
        h_prev = h1
    return c


def drive_density(rho: np.ndarray, cls: FrequencyClass, field_ge, field_se, dt, decay_linewidth=0.0):
    """Density-matrix counterpart of :func:`drive` for a single class."""
    ge = np.asarray(field_ge, complex)
    se = np.asarray(field_se, complex)
    if ge.size % 2 == 0:
        ge = np.append(ge, 0.0)
        se = np.append(se, 0.0)
    r = np.asarray(rho, complex).reshape(9)
    h_prev = hamiltonian(cls, ge[0], se[0])
    for k in range(0, ge.size - 2, 2):
        hm = hamiltonian(cls, ge[k + 1], se[k + 1])
        h1 = hamiltonian(cls, ge[k + 2], se[k + 2])
        r = _liouville_magnus4(h_prev, hm, h1, 2.0 * dt, decay_linewidth) @ r
        h_prev = h1
    return r.reshape(3, 3)


def _control_fields(control: PulseEnvelope):
    if control.transition is not Transition.SE:
        raise ValueError("control pulses must drive the s_e transition")
    peak = np.max(np.abs(control.samples))
    if peak > 0 and max(abs(control.samples[0]), abs(control.samples[-1])) > 1e-3 * peak:
        raise ValueError("control grid does not cover the pulse support")
    se = _frame_fields(control, control.times)
    return np.zeros_like(se), se


def _target_level(initial: AtomState, target):
    if target is not None:
        return target
    p = initial.populations
    return S if p[E] >= p[S] else E


def transfer_efficiency(
    control: PulseEnvelope | InstantPulse,
    cls: FrequencyClass = FrequencyClass(),
    initial: AtomState | None = None,
    target: int | None = None,
    decay_linewidth: float = 0.0,
) -> float:
    """Population moved into the target level by one control pulse.

    Starts in |e> by default (first control) and reports the |s> population;
    starting in |s> reports the |e> population. Density-matrix initial states
    select the Lindblad backend.
    """
    initial = AtomState.excited() if initial is None else initial
    level = _target_level(initial, target)
    if isinstance(control, InstantPulse):
        return control.transfer * float(initial.populations[E if level == S else S])
    ge, se = _control_fields(control)
    if initial.is_density:
        rho = drive_density(initial.data, cls, ge, se, control.dt, decay_linewidth)
        return float(np.real(rho[level, level]))
    c = drive(initial, cls.optical_detuning, cls.spin_detuning, ge, se, control.dt, decay_linewidth)
    return float(abs(c[level]) ** 2)


def band_detunings(band: float, n_samples: int) -> np.ndarray:
    return np.linspace(-band / 2.0, band / 2.0, n_samples)


def band_averaged_transfer(
    control: PulseEnvelope | InstantPulse,
    band: float,
    n_samples: int = 41,
    decay_linewidth: float = 0.0,
    initial: AtomState | None = None,
) -> float:
    """Uniform (trapezoid-rule) average of the |e> -> |s> transfer over detunings in the band."""
    if n_samples < 11:
        raise ValueError("n_samples must be at least 11")
    if isinstance(control, InstantPulse):
        return control.transfer
    initial = AtomState.excited() if initial is None else initial
    level = _target_level(initial, None)
    ge, se = _control_fields(control)
    deltas = band_detunings(band, n_samples)
    c = drive(initial, deltas, 0.0, ge, se, control.dt, decay_linewidth)
    # trapezoid weights: the band edges count half
    w = np.ones(n_samples)
    w[[0, -1]] = 0.5
    return float(np.dot(w, np.abs(c[:, level]) ** 2) / w.sum())


def free_rates(delta, eps, linewidth: float):
    """Diagonal rates (1/s) of (c_g, c_s, c_e) for free evolution with decay."""
    delta = np.asarray(delta, float)
    eps = np.asarray(eps, float)
    return (
        np.zeros(np.broadcast(delta, eps).shape, complex),
        -1j * TWO_PI * eps + 0 * delta,
        -1j * TWO_PI * delta - math.pi * linewidth + 0 * eps,
    )


def coupling_derivatives(cg, cs, ce, field_ge, field_se):
    """Field-driven part of d(c_g, c_s, c_e)/dt; broadcasting over classes."""
    dg = -1j * math.pi * field_ge * ce
    ds = -1j * math.pi * field_se * ce
    de = -1j * math.pi * (np.conj(field_ge) * cg + np.conj(field_se) * cs)
    return dg, ds, de
