"""Parametric linear dynamic systems used as surrogates.

A surrogate is a superposition of underdamped unit oscillators,

    I(t) = b * sum_i a_i / wd_i * exp(-zeta_i w_i t) * sin(wd_i t),

with ``wd_i = w_i sqrt(1 - zeta_i^2)`` and weights normalized to
``sum a_i^2 = 1`` so the overall scale lives in ``b`` alone.  The response
to a record is the convolution of this impulse response with the negated
record (base-excitation sign convention), and the scalar output is the peak
absolute response over the full duration.

Because synthesized records are linear in the coefficient vector ``x``, the
map ``x -> response trajectory`` is a single matrix.  :class:`SurrogateFactory`
precomputes the spectral data of the excitation basis once, so building that
matrix for a new parameter set costs one FFT convolution pass; evaluating
peaks for sample batches is then one matrix product per batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .counting import LINEAR_CALLS
from .excitation import Modulation, Record, SpectralBasis

__all__ = [
    "LinearSystemParams",
    "unit_impulse_response",
    "frequency_response",
    "linear_response",
    "SurrogateFactory",
    "LinearSurrogate",
    "LinearMoments",
    "estimate_linear_moments",
]


@dataclass(frozen=True)
class LinearSystemParams:
    """Modal parameters of a surrogate; weights renormalized on construction."""

    weights: tuple
    omega: tuple
    zeta: tuple
    scale: float = 1.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        om = np.asarray(self.omega, dtype=float)
        ze = np.asarray(self.zeta, dtype=float)
        if not (w.ndim == om.ndim == ze.ndim == 1) or w.size == 0:
            raise ValueError("weights/omega/zeta: need nonempty 1-d sequences")
        if not (w.size == om.size == ze.size):
            raise ValueError("weights/omega/zeta: lengths must match")
        if np.any(om <= 0.0):
            raise ValueError("omega: modal frequencies must be positive")
        if np.any(ze < 0.0) or np.any(ze >= 1.0):
            raise ValueError("zeta: modal dampings must lie in [0, 1)")
        norm = float(np.linalg.norm(w))
        if norm <= 0.0:
            raise ValueError("weights: must not all be zero")
        if not np.isfinite(self.scale) or self.scale <= 0.0:
            raise ValueError("scale: must be positive and finite")
        object.__setattr__(self, "weights", tuple(float(v) for v in w / norm))
        object.__setattr__(self, "omega", tuple(float(v) for v in om))
        object.__setattr__(self, "zeta", tuple(float(v) for v in ze))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def with_scale(self, scale: float) -> "LinearSystemParams":
        return replace(self, scale=scale)

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "omega": list(self.omega),
            "zeta": list(self.zeta),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearSystemParams":
        return cls(
            weights=tuple(d["weights"]),
            omega=tuple(d["omega"]),
            zeta=tuple(d["zeta"]),
            scale=float(d.get("scale", 1.0)),
        )


def unit_impulse_response(params: LinearSystemParams, t: np.ndarray) -> np.ndarray:
    """Superposed modal impulse responses evaluated at times ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for a, w, z in zip(params.weights, params.omega, params.zeta):
        wd = w * np.sqrt(1.0 - z * z)
        out += (a / wd) * np.exp(-z * w * t) * np.sin(wd * t)
    return params.scale * out


def frequency_response(params: LinearSystemParams, omega: np.ndarray) -> np.ndarray:
    """Complex displacement transfer function for unit force input."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape, dtype=complex)
    for a, w, z in zip(params.weights, params.omega, params.zeta):
        out += a / (w * w - omega * omega + 2j * z * w * omega)
    return params.scale * out


def _convolved_response(irf: np.ndarray, forcing: np.ndarray, dt: float, method: str) -> np.ndarray:
    """Trapezoid-weighted discrete convolution ``int irf(t-s) forcing(s) ds``."""
    n = irf.size
    if method == "direct":
        full = np.convolve(irf, forcing)
    elif method == "fft":
        full = fftconvolve(irf, forcing)
    else:
        raise ValueError("method: expected 'direct' or 'fft'")
    y = dt * full[:n]
    # trapezoid end-weight; the irf(0) = 0 end needs no correction
    y -= 0.5 * dt * forcing[0] * irf
    return y


def linear_response(params: LinearSystemParams, record: Record, method: str = "auto") -> np.ndarray:
    """Displacement trajectory of the surrogate driven by ``-record.a``.

    ``method='direct'`` is the quadratic-cost reference path, ``'fft'`` the
    fast path; they agree to round-off and are both kept as a built-in
    cross-check.
    """
    if method == "auto":
        method = "direct" if record.a.size <= 1024 else "fft"
    irf = unit_impulse_response(params, record.t)
    return _convolved_response(irf, -record.a, record.dt, method)


@dataclass(frozen=True)
class LinearMoments:
    """Monte Carlo moments of the surrogate peak response."""

    mean: float
    std: float
    cov_mean: float
    n_samples: int
    status: str
    threshold: float | None = None
    p_exceed: float | None = None
    cov_p: float | None = None


class SurrogateFactory:
    """Shares excitation-basis spectra across many parameter evaluations.

    The optimizer calls :meth:`build` thousands of times with different
    parameters; everything that depends only on the excitation (trig tables,
    FFTs of the basis records, the envelope) is computed once here.
    """

    def __init__(self, basis: SpectralBasis, modulation: Modulation | None = None):
        self.basis = basis
        self.modulation = modulation
        t = basis.t
        self.t = t
        self.dt = basis.dt
        nt = t.size
        env = 1.0 if modulation is None else modulation(t)
        cols = np.empty((nt, basis.n_terms))
        cols[:, 0::2] = basis.sigma * basis._sin[:, ::2].T
        cols[:, 1::2] = basis.sigma * basis._cos[:, ::2].T
        if modulation is not None:
            cols *= np.asarray(env).reshape(-1, 1)
        self._cols = cols
        self._col0 = cols[0].copy()
        self._nfft = sfft.next_fast_len(2 * nt - 1)
        self._cols_spec = sfft.rfft(cols, n=self._nfft, axis=0)

    @property
    def n_terms(self) -> int:
        return self.basis.n_terms

    def build(self, params: LinearSystemParams) -> "LinearSurrogate":
        nt = self.t.size
        irf = unit_impulse_response(params.with_scale(1.0), self.t)
        irf_spec = sfft.rfft(irf, n=self._nfft)
        traj = sfft.irfft(irf_spec[:, None] * self._cols_spec, n=self._nfft, axis=0)[:nt]
        traj *= -self.dt
        traj += 0.5 * self.dt * np.outer(irf, self._col0)
        return LinearSurrogate(self, params, np.ascontiguousarray(traj.T))


class PilotResponse:
    """Surrogate peaks on a fixed sample set, fast across many parameters.

    Parameter searches evaluate thousands of candidate systems on the same
    small pilot sample.  Precomputing each sample's forcing spectrum turns a
    candidate evaluation into one impulse-response FFT and one inverse FFT
    over the pilot columns, instead of a full trajectory-table build.
    Results match ``factory.build(params).peaks(x)`` to round-off.
    """

    def __init__(self, factory: SurrogateFactory, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self.factory = factory
        self.n_samples = x.shape[0]
        self._spec = factory._cols_spec @ x.T
        self._a0 = x @ factory._col0

    def peaks(self, params: LinearSystemParams) -> np.ndarray:
        fac = self.factory
        nt = fac.t.size
        irf = unit_impulse_response(params.with_scale(1.0), fac.t)
        irf_spec = sfft.rfft(irf, n=fac._nfft)
        y = sfft.irfft(irf_spec[:, None] * self._spec, n=fac._nfft, axis=0)[:nt]
        y *= -fac.dt
        y += 0.5 * fac.dt * np.outer(irf, self._a0)
        LINEAR_CALLS.add(self.n_samples)
        return params.scale * np.abs(y).max(axis=0)


class LinearSurrogate:
    """One parameter set bound to an excitation basis.

    ``traj_rows[j]`` is the unit-scale response trajectory to coefficient
    ``x[j]``; the response to ``x`` is ``scale * (x @ traj_rows)`` and the
    scalar output is its peak magnitude.
    """

    def __init__(self, factory: SurrogateFactory, params: LinearSystemParams, traj_rows: np.ndarray):
        self.factory = factory
        self.params = params
        self.traj_rows = traj_rows  # (n_terms, nt), scale excluded
        self.n = factory.n_terms

    @property
    def scale(self) -> float:
        return self.params.scale

    def with_scale(self, scale: float) -> "LinearSurrogate":
        return LinearSurrogate(self.factory, self.params.with_scale(scale), self.traj_rows)

    def response(self, x: np.ndarray) -> np.ndarray:
        """Full displacement trajectory for one coefficient vector."""
        x = np.asarray(x, dtype=float)
        LINEAR_CALLS.add(1)
        return self.scale * (x @ self.traj_rows)

    def peaks(self, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Peak absolute response for a batch of coefficient rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for lo in range(0, x.shape[0], chunk):
            hi = min(lo + chunk, x.shape[0])
            y = x[lo:hi] @ self.traj_rows
            np.abs(y, out=y)
            out[lo:hi] = y.max(axis=1)
        out *= self.scale
        LINEAR_CALLS.add(x.shape[0])
        return out


def estimate_linear_moments(
    surrogate: LinearSurrogate,
    rng: np.random.Generator,
    target_cov: float = 0.005,
    threshold: float | None = None,
    cap: int = 1_000_000,
    batch: int = 20_000,
    min_samples: int = 2_000,
) -> LinearMoments:
    """Plain Monte Carlo moments of the surrogate peak under the input law.

    Runs until the mean estimate (and, if ``threshold`` is given, the
    exceedance probability) reaches ``target_cov``, or ``cap`` samples; a
    capped run is flagged rather than failed, because deep-tail thresholds
    are expected to be out of reach here and handled by tail estimators.
    """
    n = 0
    s1 = 0.0
    s2 = 0.0
    n_exc = 0
    status = "converged"
    while True:
        k = min(batch, cap - n)
        if k <= 0:
            status = "capped"
            break
        x = rng.standard_normal((k, surrogate.n))
        p = surrogate.peaks(x)
        n += k
        s1 += float(p.sum())
        s2 += float(np.square(p).sum())
        if threshold is not None:
            n_exc += int(np.count_nonzero(p > threshold))
        if n < min_samples:
            continue
        mean = s1 / n
        var = max(s2 / n - mean * mean, 0.0)
        cov_mean = np.sqrt(var / n) / mean if mean > 0 else np.inf
        ok = cov_mean <= target_cov
        if threshold is not None:
            pe = n_exc / n
            ok = ok and pe > 0 and np.sqrt((1.0 - pe) / (n * pe)) <= target_cov
        if ok:
            break
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    std = float(np.sqrt(var))
    cov_mean = float(np.sqrt(var / n) / mean) if mean > 0 else np.inf
    pe = cov_p = None
    if threshold is not None:
        pe = n_exc / n
        cov_p = float(np.sqrt((1.0 - pe) / (n * pe))) if pe > 0 else np.inf
    return LinearMoments(
        mean=float(mean),
        std=std,
        cov_mean=cov_mean,
        n_samples=n,
        status=status,
        threshold=threshold,
        p_exceed=pe,
        cov_p=cov_p,
    )
