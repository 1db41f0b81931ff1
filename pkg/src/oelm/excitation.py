"""Stochastic ground-motion excitation.

A zero-mean Gaussian acceleration process is represented spectrally: a
filtered white-noise power spectral density is discretized on a uniform
frequency grid and realized as a finite sum of harmonics with independent
standard-normal coefficients,

    a(t) = sum_i sigma_i * (x[2i] * sin(w_i t) + x[2i+1] * cos(w_i t)),

with ``sigma_i = sqrt(2 * S(w_i) * dw)``.  The coefficient vector ``x`` is
the only source of randomness: every record is a deterministic function of
``x``, which is what lets estimators reuse one sample space for the
nonlinear model and any linear surrogate of it.

Optional nonstationarity is a deterministic envelope applied to the
synthesized stationary record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GroundMotionPsd",
    "Modulation",
    "Record",
    "SpectralBasis",
    "discretize_psd",
]


@dataclass(frozen=True)
class GroundMotionPsd:
    """Two-filter (soil layer plus high-pass) acceleration PSD.

    ``s0`` is the white-noise intensity; ``omega_f, zeta_f`` shape the soil
    amplification filter and ``omega_s, zeta_s`` the low-frequency
    suppression filter.  One-sided convention: process variance is
    ``2 * integral over omega >= 0``.
    """

    s0: float
    omega_f: float = 15.0
    zeta_f: float = 0.6
    omega_s: float = 1.5
    zeta_s: float = 0.6

    def __post_init__(self) -> None:
        if self.s0 < 0.0:
            raise ValueError("s0: intensity must be nonnegative")
        if self.omega_f <= 0.0 or self.omega_s <= 0.0:
            raise ValueError("omega_f/omega_s: filter frequencies must be positive")
        if self.zeta_f <= 0.0 or self.zeta_s <= 0.0:
            raise ValueError("zeta_f/zeta_s: filter dampings must be positive")

    def __call__(self, omega):
        """Evaluate the PSD at circular frequency ``omega`` (array ok)."""
        w2 = np.square(np.asarray(omega, dtype=float))
        wf2 = self.omega_f**2
        ws2 = self.omega_s**2
        cf = 4.0 * self.zeta_f**2 * wf2
        cs = 4.0 * self.zeta_s**2 * ws2
        amplify = (wf2**2 + cf * w2) / ((wf2 - w2) ** 2 + cf * w2)
        suppress = w2**2 / ((ws2 - w2) ** 2 + cs * w2)
        return self.s0 * amplify * suppress


@dataclass(frozen=True)
class Modulation:
    """Deterministic amplitude envelope: parabolic rise on ``[0, t_rise]``,
    unit plateau, Gaussian decay after ``t_flat``."""

    t_rise: float = 4.0
    t_flat: float = 7.0

    def __post_init__(self) -> None:
        if not 0.0 < self.t_rise <= self.t_flat:
            raise ValueError("modulation: need 0 < t_rise <= t_flat")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        env = np.ones_like(t)
        rise = t < self.t_rise
        env[rise] = (t[rise] / self.t_rise) ** 2
        decay = t > self.t_flat
        env[decay] = np.exp(-((t[decay] - self.t_flat) ** 2))
        return env


@dataclass(frozen=True)
class Record:
    """One acceleration record on a uniform grid.

    ``a`` holds the grid values; ``a_mid`` the values at the midpoints
    between grid times, used by integrators whose stages fall between grid
    points.  ``fine`` interleaves both (step dt/2).
    """

    t: np.ndarray
    a: np.ndarray
    a_mid: np.ndarray
    dt: float

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    @property
    def fine(self) -> np.ndarray:
        out = np.empty(2 * self.a.size - 1)
        out[0::2] = self.a
        out[1::2] = self.a_mid
        return out


@dataclass(frozen=True)
class SpectralBasis:
    """Frequency grid, per-harmonic amplitudes and cached trig tables.

    The tables are evaluated on the half-step grid so both grid values and
    midpoint values of a record come out of two matrix products.
    """

    omega: np.ndarray
    sigma: np.ndarray
    duration: float
    dt: float
    _sin: np.ndarray = field(repr=False, default=None)
    _cos: np.ndarray = field(repr=False, default=None)

    def __post_init__(self) -> None:
        omega = np.ascontiguousarray(np.asarray(self.omega, dtype=float))
        sigma = np.ascontiguousarray(np.asarray(self.sigma, dtype=float))
        if omega.ndim != 1 or omega.size == 0:
            raise ValueError("omega: need a nonempty 1-d frequency grid")
        if sigma.shape != omega.shape:
            raise ValueError("sigma: amplitude grid must match frequency grid")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "sigma", sigma)
        phase = np.outer(omega, self.t_fine)  # (nf, 2*nt-1)
        object.__setattr__(self, "_sin", np.sin(phase))
        object.__setattr__(self, "_cos", np.cos(phase))

    @property
    def n_terms(self) -> int:
        """Dimension of the standard-normal coefficient vector."""
        return 2 * self.omega.size

    @property
    def nt(self) -> int:
        return round(self.duration / self.dt) + 1

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def t_fine(self) -> np.ndarray:
        return 0.5 * self.dt * np.arange(2 * self.nt - 1)

    def variance(self) -> float:
        """Pointwise process variance of the stationary record: sum sigma_i^2."""
        return float(np.sum(self.sigma**2))

    def envelope(self, modulation: Modulation | None) -> np.ndarray | None:
        if modulation is None:
            return None
        return modulation(self.t_fine)

    def synthesize_batch(self, x: np.ndarray, modulation: Modulation | None = None) -> np.ndarray:
        """Map coefficient rows ``x (N, n_terms)`` to records on the fine grid.

        Returns an ``(N, 2*nt-1)`` array; columns ``0::2`` are the grid
        values, ``1::2`` the midpoint values.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_terms:
            raise ValueError(
                f"x: expected {self.n_terms} coefficients, got {x.shape[1]}"
            )
        a = (x[:, 0::2] * self.sigma) @ self._sin
        a += (x[:, 1::2] * self.sigma) @ self._cos
        if modulation is not None:
            a *= modulation(self.t_fine)
        return a

    def synthesize(self, x: np.ndarray, modulation: Modulation | None = None) -> Record:
        """Map one coefficient vector to a :class:`Record`."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("x: expected a 1-d coefficient vector")
        fine = self.synthesize_batch(x[None, :], modulation)[0]
        return Record(t=self.t, a=fine[0::2], a_mid=fine[1::2], dt=self.dt)


def discretize_psd(
    psd: GroundMotionPsd,
    n_terms: int = 200,
    omega_max: float = 15.0 * np.pi,
    duration: float = 10.0,
    dt: float = 0.005,
) -> SpectralBasis:
    """Uniform frequency grid ``w_i = i * dw`` with ``dw = omega_max / (n_terms/2)``.

    ``n_terms`` counts sine plus cosine coefficients, so the grid has
    ``n_terms / 2`` frequencies and the highest one equals ``omega_max``.
    """
    if n_terms % 2 != 0 or n_terms < 2:
        raise ValueError("n_terms: must be a positive even integer")
    if omega_max <= 0.0:
        raise ValueError("omega_max: must be positive")
    if duration <= 0.0:
        raise ValueError("duration: must be positive")
    if dt <= 0.0:
        raise ValueError("dt: must be positive")
    if dt > np.pi / omega_max:
        raise ValueError(
            f"dt: too coarse for omega_max (need dt <= pi/omega_max = {np.pi / omega_max:.6g})"
        )
    steps = duration / dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ValueError("duration: must be an integer multiple of dt")
    nf = n_terms // 2
    dw = omega_max / nf
    omega = dw * np.arange(1, nf + 1)
    sigma = np.sqrt(2.0 * psd(omega) * dw)
    return SpectralBasis(omega=omega, sigma=sigma, duration=duration, dt=dt)
