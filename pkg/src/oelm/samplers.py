"""Markov chain samplers over the standard normal input space.

Weighted targets of the form ``g(M_L(x)) * phi(x)``, where ``M_L`` is a
linear-surrogate peak and ``phi`` the standard normal density, are sampled
with component-wise Metropolis-within-Gibbs; the surrogate response is
maintained incrementally so each coordinate proposal costs one trajectory
scan.  Conditional densities ``phi(x | M(x) > m)``, for either the
surrogate or the full nonlinear model, are sampled with a rotation
proposal that leaves the Gaussian measure invariant, so the acceptance
test reduces to checking the exceedance constraint at the proposed point.

All samplers run several chains and report per-chain structure so that
estimators can compute across-chain error bars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .counting import LINEAR_CALLS
from .errors import ProjectionError, SamplerError
from .linear_system import LinearSurrogate

GIBBS_MODES = {
    "prior": _kernels.MODE_NORMAL,
    "abs_weight": _kernels.MODE_WEIGHT,
    "smooth": _kernels.MODE_SMOOTH,
}

# |M_L| below this is treated as zero weight (log kernel -inf)
WEIGHT_FLOOR = 1e-12

# retained-sample lag-1 autocorrelation target used to fix thinning
AUTOCORR_TARGET = 0.2


def lag1_autocorr(series: np.ndarray) -> float:
    """Lag-1 autocorrelation of a 1-D series (0.0 for degenerate input)."""
    s = np.asarray(series, dtype=float)
    if s.size < 3:
        return 0.0
    d = s - s.mean()
    denom = float(d @ d)
    if denom <= 0.0:
        return 0.0
    return float(d[:-1] @ d[1:]) / denom


def pooled_lag1(series_2d: np.ndarray) -> float:
    """Mean per-chain lag-1 autocorrelation for a (n_chains, n) array."""
    return float(np.mean([lag1_autocorr(row) for row in np.atleast_2d(series_2d)]))


def _thin_from_autocorr(rho1: float, max_thin: int) -> int:
    """Smallest thinning stride with AR(1)-extrapolated lag-1 below target."""
    if rho1 < AUTOCORR_TARGET:
        return 1
    if rho1 >= 1.0:
        return max_thin
    k = math.ceil(math.log(AUTOCORR_TARGET) / math.log(rho1))
    return int(min(max(k, 1), max_thin))


@dataclass
class ChainSamples:
    """Retained MCMC samples with per-chain block structure.

    ``x`` stacks the kept states chain-by-chain: rows
    ``[c * per_chain, (c + 1) * per_chain)`` belong to chain ``c``.
    ``peak`` holds the target model's peak response at each kept state.
    ``final_x`` are the end-of-run chain states, usable as warm starts.
    """

    x: np.ndarray
    peak: np.ndarray
    n_chains: int
    acceptance: float
    thin: int
    burn_in: int
    autocorr: float
    final_x: np.ndarray
    final_step: float

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def per_chain(self) -> int:
        return self.x.shape[0] // self.n_chains

    def chain_values(self, values: np.ndarray | None = None) -> np.ndarray:
        """Reshape per-sample ``values`` (default: peaks) to (n_chains, per_chain)."""
        v = self.peak if values is None else np.asarray(values)
        return v.reshape(self.n_chains, self.per_chain)

    def chain_means(self, values: np.ndarray | None = None) -> np.ndarray:
        return self.chain_values(values).mean(axis=1)


def _run_sweeps(surrogate, x, y, n_sweeps, mode, threshold, sharpness,
                step_state, adapt, window_state, rng, keep):
    """Drive the Gibbs kernel for one chain segment; returns kept arrays."""
    n = x.size
    deltas = rng.uniform(-1.0, 1.0, size=(n_sweeps, n))
    unifs = rng.uniform(0.0, 1.0, size=(n_sweeps, n))
    n_keep = int(keep.sum())
    out_x = np.empty((n_keep, n))
    out_peak = np.empty(n_keep)
    peak_series = np.empty(n_sweeps)
    accepted, kept = _kernels.gibbs_linear_sweeps(
        surrogate.traj_rows, surrogate.scale, x, y, n_sweeps,
        mode, threshold, sharpness, WEIGHT_FLOOR,
        step_state, adapt, window_state,
        deltas, unifs, keep, out_x, out_peak, peak_series,
    )
    LINEAR_CALLS.add(n_sweeps * n)
    return accepted, out_x[:kept], out_peak[:kept], peak_series


def gibbs_sample(
    surrogate: LinearSurrogate,
    rng: np.random.Generator,
    n_samples: int,
    *,
    mode: str = "abs_weight",
    threshold: float | None = None,
    sharpness: float | None = None,
    n_chains: int = 10,
    burn_in: int = 500,
    measure_sweeps: int = 200,
    thin: int | None = None,
    max_thin: int = 64,
    step0: float = 1.0,
    initial: np.ndarray | None = None,
) -> ChainSamples:
    """Sample a surrogate-weighted Gaussian target with Gibbs chains.

    Targets, selected by ``mode``:

    - ``"prior"``: the standard normal density itself,
    - ``"abs_weight"``: density proportional to ``|M_L(x)| phi(x)``,
    - ``"smooth"``: density proportional to ``phi(x) / (1 +
      exp(sharpness * (threshold - M_L(x))))``, a smoothed version of the
      conditional density on the exceedance set ``{M_L > threshold}``.

    Each chain burns in ``burn_in`` full coordinate sweeps with the
    proposal step adapted toward a 30..50% acceptance rate, after which
    the step is frozen.  Unless ``thin`` is given, a measurement segment
    estimates the sweep-level lag-1 autocorrelation of the peak series
    and the thinning stride is fixed so that retained samples have lag-1
    autocorrelation below 0.2.  Returns ``n_samples`` rounded up to a
    multiple of ``n_chains``.
    """
    if mode not in GIBBS_MODES:
        raise SamplerError(f"unknown gibbs mode {mode!r}")
    if mode == "smooth":
        if threshold is None or sharpness is None or sharpness <= 0.0:
            raise SamplerError("smooth mode needs a threshold and positive sharpness")
    kmode = GIBBS_MODES[mode]
    thr = 0.0 if threshold is None else float(threshold)
    shp = 0.0 if sharpness is None else float(sharpness)
    if n_samples < 1 or n_chains < 1:
        raise SamplerError("n_samples and n_chains must be positive")

    dim = surrogate.traj_rows.shape[0]
    if initial is None:
        states = rng.standard_normal((n_chains, dim))
    else:
        states = np.array(initial, dtype=float)
        if states.shape != (n_chains, dim):
            raise SamplerError(
                f"initial states must have shape {(n_chains, dim)}, got {states.shape}")

    per_chain = -(-n_samples // n_chains)
    chains_x = [np.ascontiguousarray(states[c]) for c in range(n_chains)]
    chains_y = [np.ascontiguousarray(x @ surrogate.traj_rows) for x in chains_x]
    step_states = [np.array([step0]) for _ in range(n_chains)]
    no_keep_burn = np.zeros(burn_in, dtype=np.bool_)

    # burn-in with step adaptation, then (optionally) measure autocorrelation
    measured = np.empty((n_chains, measure_sweeps))
    for c in range(n_chains):
        window = np.zeros(2)
        if burn_in > 0:
            _run_sweeps(surrogate, chains_x[c], chains_y[c], burn_in, kmode,
                        thr, shp, step_states[c], True, window, rng, no_keep_burn)
        if thin is None:
            _, _, _, series = _run_sweeps(
                surrogate, chains_x[c], chains_y[c], measure_sweeps, kmode,
                thr, shp, step_states[c], False, window, rng,
                np.zeros(measure_sweeps, dtype=np.bool_))
            measured[c] = series
    if thin is None:
        thin = _thin_from_autocorr(pooled_lag1(measured), max_thin)
    thin = max(int(thin), 1)

    # collection at fixed thinning
    n_sweeps = per_chain * thin
    keep = np.zeros(n_sweeps, dtype=np.bool_)
    keep[thin - 1 :: thin] = True
    xs, peaks = [], []
    total_acc = 0
    for c in range(n_chains):
        acc, out_x, out_peak, _ = _run_sweeps(
            surrogate, chains_x[c], chains_y[c], n_sweeps, kmode,
            thr, shp, step_states[c], False, np.zeros(2), rng, keep)
        total_acc += acc
        xs.append(out_x)
        peaks.append(out_peak)

    peak_arr = np.concatenate(peaks)
    return ChainSamples(
        x=np.concatenate(xs),
        peak=peak_arr,
        n_chains=n_chains,
        acceptance=total_acc / (n_chains * n_sweeps * dim),
        thin=thin,
        burn_in=burn_in,
        autocorr=pooled_lag1(peak_arr.reshape(n_chains, per_chain)),
        final_x=np.stack(chains_x),
        final_step=float(np.mean([s[0] for s in step_states])),
    )


def conditional_sample(
    peaks_fn,
    threshold: float,
    rng: np.random.Generator,
    n_samples: int,
    *,
    initial: np.ndarray,
    initial_peaks: np.ndarray | None = None,
    n_chains: int | None = None,
    burn_in: int = 50,
    measure_steps: int = 50,
    thin: int | None = None,
    max_thin: int = 64,
    angle0: float = 0.5,
    accept_band: tuple[float, float] = (0.3, 0.6),
) -> ChainSamples:
    """Sample ``phi(x | peaks_fn(x) > threshold)`` with rotation proposals.

    The proposal ``x' = x cos(t) + p sin(t)`` with ``p`` standard normal
    and ``t ~ U(0, angle]`` preserves the Gaussian measure, so the
    Metropolis test accepts exactly when the proposed point satisfies the
    constraint.  All chains move in lockstep and the constraint is
    evaluated on the whole batch at once, which keeps the number of
    ``peaks_fn`` batch calls at one per step.

    ``initial`` must hold one feasible state per chain.  The angle is
    adapted toward the ``accept_band`` acceptance range during burn-in
    only.  Continuations can pass ``burn_in=0`` together with the
    previous result's ``final_x`` and ``final_step``.
    """
    states = np.array(initial, dtype=float)
    if states.ndim != 2:
        raise SamplerError("initial must be a (n_chains, dim) array")
    if n_chains is None:
        n_chains = states.shape[0]
    elif states.shape[0] != n_chains:
        raise SamplerError("initial row count must match n_chains")
    if initial_peaks is None:
        cur_peaks = np.asarray(peaks_fn(states), dtype=float)
    else:
        cur_peaks = np.array(initial_peaks, dtype=float)
    if cur_peaks.shape != (n_chains,):
        raise SamplerError("initial peaks must have one value per chain")
    if np.any(cur_peaks <= threshold):
        raise SamplerError("all initial states must satisfy the exceedance constraint")

    angle = float(angle0)
    dim = states.shape[1]

    def advance(n_steps, keep_stride, adapt):
        nonlocal angle
        kept_x, kept_peak = [], []
        series = np.empty((n_steps, n_chains))
        accepted = 0
        window = [0, 0]
        for s in range(n_steps):
            mom = rng.standard_normal((n_chains, dim))
            tau = angle * rng.uniform(0.0, 1.0, size=n_chains)
            ct, st = np.cos(tau)[:, None], np.sin(tau)[:, None]
            prop = states * ct + mom * st
            prop_peaks = np.asarray(peaks_fn(prop), dtype=float)
            acc = prop_peaks > threshold
            states[acc] = prop[acc]
            cur_peaks[acc] = prop_peaks[acc]
            n_acc = int(acc.sum())
            accepted += n_acc
            series[s] = cur_peaks
            if adapt:
                window[0] += n_chains
                window[1] += n_acc
                if window[0] >= 50:
                    rate = window[1] / window[0]
                    if rate > accept_band[1]:
                        angle = min(angle * 1.1, 0.5 * np.pi)
                    elif rate < accept_band[0]:
                        angle = max(angle * 0.9, 1e-3)
                    window[0] = window[1] = 0
            if keep_stride and (s + 1) % keep_stride == 0:
                kept_x.append(states.copy())
                kept_peak.append(cur_peaks.copy())
        return accepted, kept_x, kept_peak, series

    if burn_in > 0:
        advance(burn_in, 0, True)
    if thin is None:
        _, _, _, series = advance(measure_steps, 0, False)
        thin = _thin_from_autocorr(pooled_lag1(series.T), max_thin)
    thin = max(int(thin), 1)

    per_chain = -(-n_samples // n_chains)
    accepted, kept_x, kept_peak, _ = advance(per_chain * thin, thin, False)

    # kept_x is time-major; regroup chain-major to match ChainSamples layout
    x_arr = np.stack(kept_x, axis=1).reshape(n_chains * per_chain, dim)
    peak_arr = np.stack(kept_peak, axis=1).reshape(n_chains * per_chain)
    return ChainSamples(
        x=x_arr,
        peak=peak_arr,
        n_chains=n_chains,
        acceptance=accepted / (n_chains * per_chain * thin),
        thin=thin,
        burn_in=burn_in,
        autocorr=pooled_lag1(peak_arr.reshape(n_chains, per_chain)),
        final_x=states.copy(),
        final_step=angle,
    )


def secant_project(
    peaks_fn,
    x: np.ndarray,
    threshold: float,
    *,
    peaks0: np.ndarray | None = None,
    overshoot: float = 1e-3,
    slack: float = 0.05,
    max_iter: int = 40,
    max_scale: float = 1e6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scale each row of ``x`` radially until its peak exceeds ``threshold``.

    Finds per-row factors ``c`` with ``peaks_fn(c * x) > threshold`` via
    secant iteration on ``g(c) = peak(c x) - m*`` where
    ``m* = threshold * (1 + overshoot)``; the slight overshoot keeps the
    projected states strictly feasible.  Rows already above the threshold
    are returned unchanged.  A row converges once its peak lies in
    ``(threshold, threshold * (1 + slack)]``; otherwise the best feasible
    iterate is kept.  Rows for which no feasible scale is found within
    ``max_iter`` iterations (or below ``max_scale``) raise
    :class:`ProjectionError`.

    Returns ``(x_projected, peaks, scales)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_rows = x.shape[0]
    if peaks0 is None:
        peaks0 = np.asarray(peaks_fn(x), dtype=float)
    else:
        peaks0 = np.asarray(peaks0, dtype=float)
    target = threshold * (1.0 + overshoot)
    hi = threshold * (1.0 + slack)

    scales = np.ones(n_rows)
    peaks = peaks0.copy()
    best_scale = np.where(peaks0 > threshold, 1.0, np.nan)
    best_peak = np.where(peaks0 > threshold, peaks0, np.nan)
    # rows starting above the threshold are left untouched
    active = ~(peaks0 > threshold)
    if np.any(peaks0 <= 0.0):
        bad = int(np.flatnonzero(peaks0 <= 0.0)[0])
        raise ProjectionError(f"row {bad}: nonpositive peak, no radial scale can work")

    c_prev = scales.copy()
    g_prev = peaks0 - target
    c_cur = np.where(active, target / peaks0, 1.0)

    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        trial = x[idx] * c_cur[idx, None]
        pk = np.asarray(peaks_fn(trial), dtype=float)
        g_cur = pk - target

        feas = pk > threshold
        better = feas & (np.isnan(best_peak[idx]) | (pk < best_peak[idx]))
        best_peak[idx[better]] = pk[better]
        best_scale[idx[better]] = c_cur[idx[better]]
        done = feas & (pk <= hi)
        active[idx[done]] = False

        denom = g_cur - g_prev[idx]
        step_ok = denom != 0.0
        c_next = np.where(
            step_ok,
            c_cur[idx] - g_cur * (c_cur[idx] - c_prev[idx]) / np.where(step_ok, denom, 1.0),
            np.where(g_cur < 0.0, c_cur[idx] * 1.5, c_cur[idx] * 0.75),
        )
        c_next = np.where(c_next <= 0.0, c_cur[idx] * 0.5, c_next)
        c_prev[idx] = c_cur[idx]
        g_prev[idx] = g_cur
        c_cur[idx] = np.minimum(c_next, max_scale)
        if np.any(c_prev[idx] >= max_scale):
            bad = int(idx[np.flatnonzero(c_prev[idx] >= max_scale)[0]])
            raise ProjectionError(f"row {bad}: scale exceeded {max_scale:g} before reaching threshold")

    unresolved = np.isnan(best_scale)
    if np.any(unresolved):
        bad = int(np.flatnonzero(unresolved)[0])
        raise ProjectionError(f"row {bad}: no feasible scale within {max_iter} iterations")

    out = x * best_scale[:, None]
    return out, best_peak, best_scale
