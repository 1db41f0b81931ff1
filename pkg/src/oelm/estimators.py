"""Monte Carlo estimators with linear-surrogate variance reduction.

Mean peak responses are estimated three ways: plain Monte Carlo,
control variates (the surrogate peak with its exactly-known mean serves
as the control), and importance sampling from the density proportional
to ``|M_L(x)| phi(x)``.  Rare exceedance probabilities are estimated by
plain Monte Carlo, by importance sampling from a smoothly relaxed
conditional density, and by a conditional-expectation identity that
moves all small-probability content onto the surrogate.

The surrogate-side normalizing constants (the relaxed-indicator mean
``H(lambda)`` and the surrogate exceedance probability ``P_L``) are
computed by a bridge over a ladder of sharpness values; every bridge
stage costs only surrogate evaluations, so the expensive nonlinear
model is reserved for low-variance ratio corrections.

Each estimator reports its own nonlinear/linear call consumption from
the global tallies, so costs stay auditable end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .counting import LINEAR_CALLS, NONLINEAR_CALLS
from .errors import EstimationError
from .linear_system import LinearMoments, LinearSurrogate, estimate_linear_moments
from .samplers import ChainSamples, conditional_sample, gibbs_sample, secant_project

RATIO_FLOOR = 1e-12


class _CallWindow:
    """Snapshot of the call tallies; ``nonlinear``/``linear`` give deltas."""

    def __init__(self):
        self._n0 = NONLINEAR_CALLS.value
        self._l0 = LINEAR_CALLS.value

    @property
    def nonlinear(self) -> int:
        return NONLINEAR_CALLS.value - self._n0

    @property
    def linear(self) -> int:
        return LINEAR_CALLS.value - self._l0


@dataclass
class EstimateResult:
    """Point estimate with squared standard error and cost accounting."""

    method: str
    estimate: float
    variance: float
    n_nonlinear: int
    n_linear: int
    status: str = "converged"
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def std_error(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    @property
    def cov(self) -> float:
        if self.estimate == 0.0:
            return math.inf
        return self.std_error / abs(self.estimate)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "variance": self.variance,
            "std_error": self.std_error,
            "cov": self.cov,
            "n_nonlinear": self.n_nonlinear,
            "n_linear": self.n_linear,
            "status": self.status,
            "diagnostics": self.diagnostics,
            "warnings": list(self.warnings),
        }


def _chain_mean_variance(chain_means: np.ndarray) -> float:
    """Variance of the pooled mean from independent per-chain means."""
    k = chain_means.size
    if k < 2:
        return math.inf
    return float(np.var(chain_means, ddof=1)) / k


def mcs_estimate(
    peaks_fn,
    dim: int,
    rng: np.random.Generator,
    *,
    target_cov: float = 0.01,
    threshold: float | None = None,
    min_samples: int = 200,
    max_samples: int = 2_000_000,
    batch0: int = 200,
) -> EstimateResult:
    """Plain Monte Carlo for a mean peak or an exceedance probability.

    Draws standard normal inputs in batches until the coefficient of
    variation of the estimate drops below ``target_cov`` (or
    ``max_samples`` is hit, reported as status ``"budget"``).  With a
    ``threshold`` the estimand is ``P(peak > threshold)``; otherwise the
    mean peak.
    """
    window = _CallWindow()
    n = 0
    s1 = 0.0
    s2 = 0.0
    hits = 0
    estimate = 0.0
    cov = math.inf
    next_batch = max(min_samples, batch0)
    while n < max_samples:
        size = int(min(next_batch, max_samples - n))
        pk = np.asarray(peaks_fn(rng.standard_normal((size, dim))), dtype=float)
        n += size
        if threshold is None:
            s1 += float(pk.sum())
            s2 += float(pk @ pk)
            estimate = s1 / n
            var_s = max(s2 / n - estimate * estimate, 0.0) * n / max(n - 1, 1)
            se = math.sqrt(var_s / n)
        else:
            hits += int(np.count_nonzero(pk > threshold))
            estimate = hits / n
            se = math.sqrt(max(estimate * (1.0 - estimate), 0.0) / n)
        cov = se / estimate if estimate > 0.0 else math.inf
        if n >= min_samples and cov <= target_cov:
            break
        if math.isfinite(cov) and estimate > 0.0:
            n_need = n * (cov / target_cov) ** 2
            next_batch = int(np.clip(math.ceil(n_need - n), batch0, 4 * n))
        else:
            next_batch = min(4 * max(n, batch0), max_samples - n)
    se = cov * estimate if estimate > 0.0 else math.inf
    return EstimateResult(
        method="mcs",
        estimate=float(estimate),
        variance=float(se * se) if math.isfinite(se) else math.inf,
        n_nonlinear=window.nonlinear,
        n_linear=window.linear,
        status="converged" if cov <= target_cov else "budget",
        diagnostics={"n_samples": n, "threshold": threshold},
    )


def control_variate_estimate(
    peaks_fn,
    surrogate: LinearSurrogate,
    rng: np.random.Generator,
    *,
    target_cov: float = 0.01,
    mu_linear: LinearMoments | None = None,
    n_init: int = 24,
    n_step: int = 16,
    max_nonlinear: int = 20_000,
) -> EstimateResult:
    """Mean peak via the surrogate-peak control variate.

    On common inputs the estimator averages
    ``M_i - alpha (M_L,i - mu_L)`` with ``alpha`` fitted on the same
    pairs, which gives the exact same-sample variance identity
    ``var = (1 - rho^2) var(M) / N`` plus the (small) uncertainty of the
    surrogate mean ``mu_L``, which is estimated to a much tighter
    tolerance from surrogate-only sampling.
    """
    window = _CallWindow()
    warnings: list[str] = []
    if mu_linear is None:
        mu_linear = estimate_linear_moments(surrogate, rng, target_cov=target_cov / 5.0)
    se_mu = mu_linear.cov_mean * mu_linear.mean

    X = rng.standard_normal((n_init, surrogate.traj_rows.shape[0]))
    m_nl = np.asarray(peaks_fn(X), dtype=float)
    m_l = surrogate.peaks(X)
    status = "converged"
    while True:
        n = m_nl.size
        mean_nl = float(m_nl.mean())
        mean_l = float(m_l.mean())
        s_mm = float(np.var(m_nl, ddof=1))
        s_ll = float(np.var(m_l, ddof=1))
        s_ml = float(np.cov(m_nl, m_l, ddof=1)[0, 1])
        if s_ll <= 0.0:
            alpha = 0.0
            rho2 = 0.0
            if not warnings:
                warnings.append("surrogate peak is constant; control variate disabled")
        else:
            alpha = s_ml / s_ll
            rho2 = s_ml * s_ml / (s_mm * s_ll) if s_mm > 0.0 else 0.0
        estimate = mean_nl - alpha * (mean_l - mu_linear.mean)
        var_sampling = (1.0 - rho2) * s_mm / n
        var_mu = alpha * alpha * se_mu * se_mu
        variance = var_sampling + var_mu
        cov = math.sqrt(variance) / abs(estimate) if estimate != 0.0 else math.inf
        if cov <= target_cov:
            break
        if n >= max_nonlinear:
            status = "budget"
            break
        var_target = (target_cov * abs(estimate)) ** 2
        headroom = var_target - var_mu
        if headroom <= 0.0:
            warnings.append("surrogate-mean uncertainty exceeds the error budget")
            status = "budget"
            break
        n_need = (1.0 - rho2) * s_mm / headroom
        grow = int(np.clip(math.ceil(n_need - n), n_step, 3 * n))
        grow = min(grow, max_nonlinear - n)
        X = rng.standard_normal((grow, surrogate.traj_rows.shape[0]))
        m_nl = np.concatenate([m_nl, np.asarray(peaks_fn(X), dtype=float)])
        m_l = np.concatenate([m_l, surrogate.peaks(X)])
    return EstimateResult(
        method="control_variate",
        estimate=float(estimate),
        variance=float(variance),
        n_nonlinear=window.nonlinear,
        n_linear=window.linear,
        status=status,
        diagnostics={
            "n_pairs": int(m_nl.size),
            "rho": math.copysign(math.sqrt(rho2), s_ml) if s_ll > 0.0 else 0.0,
            "alpha": alpha,
            "mu_linear": mu_linear.mean,
            "mu_linear_cov": mu_linear.cov_mean,
            "var_sampling": var_sampling,
            "var_mu": var_mu,
        },
        warnings=warnings,
    )


def importance_sampling_estimate(
    peaks_fn,
    surrogate: LinearSurrogate,
    rng: np.random.Generator,
    *,
    target_cov: float = 0.01,
    abs_mean: LinearMoments | None = None,
    n_init: int = 60,
    n_chains: int = 10,
    burn_in: int = 500,
    max_nonlinear: int = 20_000,
) -> EstimateResult:
    """Mean peak via importance sampling from ``|M_L(x)| phi(x)``.

    The estimate factors as ``E|M_L| * E_h[M / M_L]`` where ``h`` is the
    surrogate-weighted density.  ``E|M_L|`` comes from surrogate-only
    sampling; the ratio mean is computed on weighted Gibbs samples with
    an across-chain error bar.  If the surrogate matches the model up to
    a constant factor the ratio is constant and the estimator variance
    collapses to the (tiny) normalizing-constant uncertainty.
    """
    window = _CallWindow()
    if abs_mean is None:
        abs_mean = estimate_linear_moments(surrogate, rng, target_cov=target_cov / 5.0)
    rel_var_mu = abs_mean.cov_mean**2

    chains = gibbs_sample(
        surrogate, rng, n_init, mode="abs_weight",
        n_chains=n_chains, burn_in=burn_in,
    )
    # (n_chains, per) layout so chain blocks stay aligned across extensions
    ratios = chains.chain_values(_is_ratio(peaks_fn, chains))
    status = "converged"
    while True:
        n = ratios.size
        r_mean = float(ratios.mean())
        var_r = _chain_mean_variance(ratios.mean(axis=1))
        estimate = abs_mean.mean * r_mean
        rel_var_r = var_r / (r_mean * r_mean) if r_mean != 0.0 else math.inf
        rel_var = rel_var_mu + rel_var_r
        cov = math.sqrt(rel_var) if math.isfinite(rel_var) else math.inf
        if cov <= target_cov:
            break
        if n >= max_nonlinear:
            status = "budget"
            break
        rel_target = target_cov * target_cov - rel_var_mu
        if rel_target <= 0.0:
            status = "budget"
            break
        n_need = n * rel_var_r / rel_target
        # the across-chain variance estimate is noisy at small n, so grow by
        # at most a factor of two before re-measuring
        grow = int(np.clip(math.ceil(n_need - n), n_chains, n))
        grow = min(grow, max_nonlinear - n)
        chains = gibbs_sample(
            surrogate, rng, grow, mode="abs_weight",
            n_chains=n_chains, burn_in=0, thin=chains.thin,
            initial=chains.final_x, step0=chains.final_step,
        )
        ratios = np.concatenate(
            [ratios, chains.chain_values(_is_ratio(peaks_fn, chains))], axis=1)
    variance = estimate * estimate * rel_var
    return EstimateResult(
        method="importance_sampling",
        estimate=float(estimate),
        variance=float(variance),
        n_nonlinear=window.nonlinear,
        n_linear=window.linear,
        status=status,
        diagnostics={
            "n_samples": int(ratios.size),
            "ratio_mean": r_mean,
            "ratio_variance": var_r,
            "abs_mean": abs_mean.mean,
            "abs_mean_cov": abs_mean.cov_mean,
            "thin": chains.thin,
            "acceptance": chains.acceptance,
        },
    )


def _is_ratio(peaks_fn, chains: ChainSamples) -> np.ndarray:
    m_l = chains.peak
    if np.any(m_l < RATIO_FLOOR):
        raise EstimationError("weighted chain produced a vanishing surrogate peak")
    m_nl = np.asarray(peaks_fn(chains.x), dtype=float)
    return m_nl / m_l


# ----------------------------------------------------------------------
# rare-event machinery
# ----------------------------------------------------------------------


def smooth_indicator(peaks: np.ndarray, threshold: float, sharpness: float) -> np.ndarray:
    """Smoothed exceedance indicator ``1 / (1 + exp(s (m - M)))``."""
    return expit(sharpness * (np.asarray(peaks, dtype=float) - threshold))


@dataclass
class TailBridge:
    """Surrogate-side normalization for relaxed and hard exceedance sets.

    ``h_mean`` estimates ``E[smooth_indicator]`` at the final sharpness
    under the input density, built as a product of bounded ratios over a
    sharpness ladder; ``p_linear`` adds the final hard-indicator step.
    ``chains`` holds the last rung's Gibbs state so follow-up sampling at
    the final sharpness can warm-start.  Only surrogate evaluations are
    consumed.
    """

    threshold: float
    sharpness: float
    h_mean: float
    h_rel_var: float
    p_linear: float
    p_linear_rel_var: float
    ladder: list
    chains: ChainSamples
    n_linear: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "sharpness": self.sharpness,
            "h_mean": self.h_mean,
            "h_rel_var": self.h_rel_var,
            "p_linear": self.p_linear,
            "p_linear_rel_var": self.p_linear_rel_var,
            "ladder": self.ladder,
            "n_linear": self.n_linear,
        }


def _ratio_to_next(peaks: np.ndarray, threshold: float, lam_next: float, lam: float) -> np.ndarray:
    z = np.asarray(peaks, dtype=float) - threshold
    return np.exp(log_expit(lam_next * z) - log_expit(lam * z))


def _solve_next_sharpness(peaks, threshold, lam, target_ratio, lam_cap):
    """Sharpness whose mean bridge ratio over ``peaks`` hits ``target_ratio``."""

    def mean_ratio(lam_next):
        return float(np.mean(_ratio_to_next(peaks, threshold, lam_next, lam)))

    lo = lam if lam > 0.0 else lam_cap * 1e-12
    if mean_ratio(lam_cap) >= target_ratio:
        return lam_cap
    hi = min(max(lam, 1.0 / max(threshold, 1e-300)) * 2.0, lam_cap)
    while mean_ratio(hi) > target_ratio and hi < lam_cap:
        lo = hi
        hi = min(hi * 4.0, lam_cap)
    for _ in range(60):
        mid = math.sqrt(lo * hi) if lo > 0.0 else 0.5 * (lo + hi)
        if mean_ratio(mid) > target_ratio:
            lo = mid
        else:
            hi = mid
    return hi


def _hard_ratio_stats(chains: ChainSamples, threshold: float, sharpness: float):
    z = chains.peak - threshold
    w = np.where(z > 0.0, np.exp(-log_expit(sharpness * z)), 0.0)
    mean = float(w.mean())
    var = _chain_mean_variance(chains.chain_means(w))
    return mean, var


def tail_bridge(
    surrogate: LinearSurrogate,
    threshold: float,
    rng: np.random.Generator,
    *,
    n_prior: int = 6000,
    n_per_rung: int = 3000,
    n_chains: int = 10,
    burn_in: int = 300,
    target_ratio: float = 0.3,
    hard_cov_tol: float = 0.04,
    min_sharpness: float | None = None,
    max_rungs: int = 60,
) -> TailBridge:
    """Estimate the relaxed-indicator mean by bridging a sharpness ladder.

    At zero sharpness the smooth indicator is exactly one half, so its
    mean is known.  Each rung multiplies in the mean of the bounded
    ratio between consecutive smooth indicators, estimated from samples
    of the current relaxed density (independent draws for the first
    rung, warm-started Gibbs chains after).  Rung spacing is chosen on
    the fly so each ratio lands near ``target_ratio``.  The ladder stops
    at the first sharpness where the hard-step ratio
    ``E[1{M_L > m} / smooth]`` is resolved to ``hard_cov_tol``, which
    also fixes the sharpness recommended for relaxed importance
    sampling.  Raises :class:`EstimationError` if the ladder fails to
    sharpen within ``max_rungs`` rungs.
    """
    window = _CallWindow()
    dim = surrogate.traj_rows.shape[0]
    lam_cap = 1e6 / threshold
    min_lam = 4.0 / threshold if min_sharpness is None else min_sharpness

    X = rng.standard_normal((n_prior, dim))
    peaks = surrogate.peaks(X)
    lam = 0.0
    log_h = math.log(0.5)
    h_rel_var = 0.0
    ladder = []
    chains = None
    for rung in range(max_rungs):
        lam_next = _solve_next_sharpness(peaks, threshold, lam, target_ratio, lam_cap)
        ratios = _ratio_to_next(peaks, threshold, lam_next, lam)
        r_mean = float(ratios.mean())
        if chains is None:
            r_var = float(np.var(ratios, ddof=1)) / ratios.size
        else:
            r_var = _chain_mean_variance(chains.chain_means(ratios))
        if r_mean <= 0.0:
            raise EstimationError("bridge ratio vanished; threshold unreachable for surrogate")
        log_h += math.log(r_mean)
        h_rel_var += r_var / (r_mean * r_mean)
        ladder.append({
            "sharpness": lam_next,
            "ratio": r_mean,
            "ratio_cov": math.sqrt(r_var) / r_mean,
            "h_cum": math.exp(log_h),
            "h_cum_rel_var": h_rel_var,
        })
        lam = lam_next

        if chains is None:
            # warm-start first rung chains from the largest prior peaks
            order = np.argsort(peaks)[-n_chains:]
            init = X[order]
        else:
            init = chains.final_x
        chains = gibbs_sample(
            surrogate, rng, n_per_rung, mode="smooth",
            threshold=threshold, sharpness=lam,
            n_chains=n_chains, burn_in=burn_in,
            initial=init,
            step0=chains.final_step if chains is not None else 1.0,
        )
        peaks = chains.peak

        hard_mean, hard_var = _hard_ratio_stats(chains, threshold, lam)
        hard_cov = math.sqrt(hard_var) / hard_mean if hard_mean > 0.0 else math.inf
        ladder[-1]["hard_ratio"] = hard_mean
        ladder[-1]["hard_cov"] = hard_cov
        if lam >= min_lam and hard_cov <= hard_cov_tol:
            break
    else:
        raise EstimationError(f"sharpness ladder did not resolve within {max_rungs} rungs")

    h_mean = math.exp(log_h)
    p_linear = h_mean * hard_mean
    p_rel_var = h_rel_var + hard_var / (hard_mean * hard_mean)
    return TailBridge(
        threshold=threshold,
        sharpness=lam,
        h_mean=h_mean,
        h_rel_var=h_rel_var,
        p_linear=p_linear,
        p_linear_rel_var=p_rel_var,
        ladder=ladder,
        chains=chains,
        n_linear=window.linear,
    )


def _select_relax_rung(bridge: TailBridge, ml_conditional: np.ndarray,
                       threshold: float) -> dict:
    """Ladder rung minimizing the relaxed estimator's variance proxy.

    For sampling at sharpness ``lam`` the per-sample second moment of the
    relaxed weights is proportional to ``H(lam) * E[1/smooth(M_L)]`` over
    the *model's* conditional density, so surrogate peaks of any
    model-conditional sample set rank the rungs with no additional model
    calls.  Picking the minimizer guards against exploding weights when
    the surrogate misranks part of the exceedance set.
    """
    z = np.asarray(ml_conditional, dtype=float) - threshold
    best = None
    for row in bridge.ladder:
        proxy = row["h_cum"] * float(
            np.mean(np.exp(-log_expit(row["sharpness"] * z))))
        if best is None or proxy < best[0]:
            best = (proxy, row)
    return best[1]


def rare_event_relaxed_is(
    peaks_fn,
    surrogate: LinearSurrogate,
    threshold: float,
    rng: np.random.Generator,
    *,
    target_cov: float = 0.1,
    bridge: TailBridge | None = None,
    reference_chain: ChainSamples | None = None,
    n_init: int = 400,
    n_chains: int = 10,
    max_nonlinear: int = 5000,
    bridge_kwargs: dict | None = None,
) -> EstimateResult:
    """Exceedance probability via relaxed-density importance sampling.

    Samples the smoothly relaxed surrogate density and corrects with the
    weights ``1{M > m} / smooth_indicator(M_L)``; the relaxed density's
    normalizing constant comes from the surrogate-only bridge.  The
    nonlinear model is evaluated once per retained chain sample.

    By default sampling happens at the bridge's final sharpness.  When a
    model-conditional ``reference_chain`` is available (reused from
    surrogate optimization), the sharpness is instead chosen as the
    ladder rung minimizing a weight-variance proxy evaluated on that
    chain, which backs the relaxation off when the surrogate misranks
    part of the exceedance set.
    """
    window = _CallWindow()
    if bridge is None:
        bridge = tail_bridge(surrogate, threshold, rng, n_chains=n_chains,
                             **(bridge_kwargs or {}))
    lam = bridge.sharpness
    h_mean, h_rel_var = bridge.h_mean, bridge.h_rel_var
    burn0 = 0
    if reference_chain is not None:
        row = _select_relax_rung(
            bridge, surrogate.peaks(reference_chain.x), threshold)
        if row["sharpness"] < lam:
            lam = row["sharpness"]
            h_mean, h_rel_var = row["h_cum"], row["h_cum_rel_var"]
            # the bridge chain equilibrated at a sharper relaxation, so
            # re-burn toward the wider one
            burn0 = 150

    first = min(n_init, max_nonlinear)
    first -= first % n_chains
    if first < n_chains:
        raise EstimationError("call budget too small for one relaxed round")
    chains = gibbs_sample(
        surrogate, rng, first, mode="smooth",
        threshold=threshold, sharpness=lam,
        n_chains=n_chains, burn_in=burn0,
        thin=bridge.chains.thin, initial=bridge.chains.final_x,
        step0=bridge.chains.final_step,
    )
    weights = chains.chain_values(_relaxed_weights(peaks_fn, chains, threshold, lam))
    status = "converged"
    while True:
        n = weights.size
        w_mean = float(weights.mean())
        var_w = _chain_mean_variance(weights.mean(axis=1))
        estimate = h_mean * w_mean
        if w_mean <= 0.0:
            status = "degenerate"
            rel_var = math.inf
            break
        rel_var = h_rel_var + var_w / (w_mean * w_mean)
        cov = math.sqrt(rel_var)
        if cov <= target_cov:
            break
        if n >= max_nonlinear:
            status = "budget"
            break
        rel_target = target_cov * target_cov - h_rel_var
        if rel_target <= 0.0:
            status = "budget"
            break
        n_need = n * (var_w / (w_mean * w_mean)) / rel_target
        grow = int(np.clip(math.ceil(n_need - n), n_chains, n))
        grow = min(grow, max_nonlinear - n)
        # chains advance in lockstep, so kept counts are per-chain multiples
        grow -= grow % n_chains
        if grow < n_chains:
            status = "budget"
            break
        chains = gibbs_sample(
            surrogate, rng, grow, mode="smooth",
            threshold=threshold, sharpness=lam,
            n_chains=n_chains, burn_in=0, thin=chains.thin,
            initial=chains.final_x, step0=chains.final_step,
        )
        weights = np.concatenate(
            [weights, chains.chain_values(_relaxed_weights(peaks_fn, chains, threshold, lam))],
            axis=1)
    variance = estimate * estimate * rel_var if math.isfinite(rel_var) else math.inf
    result = EstimateResult(
        method="relaxed_is",
        estimate=float(estimate),
        variance=float(variance),
        n_nonlinear=window.nonlinear,
        n_linear=window.linear,
        status=status,
        diagnostics={
            "n_samples": int(weights.size),
            "sharpness": lam,
            "final_sharpness": bridge.sharpness,
            "h_mean": h_mean,
            "h_rel_var": h_rel_var,
            "weight_mean": w_mean,
            "weight_max": float(weights.max()) if weights.size else 0.0,
            "hit_fraction": float(np.mean(weights > 0.0)),
            "p_linear": bridge.p_linear,
        },
    )
    if status == "degenerate":
        result.warnings.append("no exceedances among relaxed-density samples")
    return result


def _relaxed_weights(peaks_fn, chains: ChainSamples, threshold, sharpness) -> np.ndarray:
    m_nl = np.asarray(peaks_fn(chains.x), dtype=float)
    z = chains.peak - threshold
    inv_smooth = np.exp(-log_expit(sharpness * z))
    return np.where(m_nl > threshold, inv_smooth, 0.0)


def rare_event_conditioning(
    peaks_fn,
    surrogate: LinearSurrogate,
    threshold: float,
    rng: np.random.Generator,
    *,
    target_cov: float = 0.1,
    bridge: TailBridge | None = None,
    n_init: int = 300,
    n_chains: int = 10,
    max_nonlinear: int = 5000,
    bridge_kwargs: dict | None = None,
) -> EstimateResult:
    """Exceedance probability via conditional-expectation factorization.

    Uses the exact identity
    ``P(M > m) = P(M_L > m) * E[1{M > m} | M_L > m] / E[1{M_L > m} | M > m]``.
    The surrogate exceedance probability comes from the bridge, the
    numerator from model checks on samples of the surrogate's conditional
    density, and the denominator from surrogate checks on chains of the
    model's conditional density.

    Both conditional densities are sampled by chains seeded from bridge
    states: those sit at the radius and in the directions typical of the
    conditional laws, unlike radially scaled-up prior draws, whose long
    transient would bias the agreement fractions.  The fractions mix
    slowly along a single chain (a chain tends to stay in a region where
    the surrogate either agrees or disagrees), so each is estimated as an
    unweighted mean of per-chain means with an across-chain error bar,
    and accuracy is grown by seeding *fresh chains* on whichever side
    dominates the error, not by extending existing ones.
    """
    window = _CallWindow()
    warnings: list[str] = []
    if bridge is None:
        bridge = tail_bridge(surrogate, threshold, rng, n_chains=n_chains,
                             **(bridge_kwargs or {}))

    def bridge_seeds(count: int) -> np.ndarray:
        pick = rng.choice(bridge.chains.x.shape[0], size=count, replace=False)
        return bridge.chains.x[pick]

    def spawn_numerator(keep: int) -> None:
        nonlocal n_num
        # fresh surrogate-conditional chains seeded from random bridge states
        # projected onto the exceedance set (surrogate arithmetic only)
        init, init_peaks, _ = secant_project(
            surrogate.peaks, bridge_seeds(n_chains), threshold)
        cond = conditional_sample(
            surrogate.peaks, threshold, rng, keep,
            initial=init, initial_peaks=init_peaks, n_chains=n_chains,
            burn_in=20, thin=1,
        )
        ind = cond.chain_values(
            (np.asarray(peaks_fn(cond.x), dtype=float) > threshold).astype(float))
        num_means.extend(ind.mean(axis=1))
        n_num += cond.x.shape[0]

    def spawn_denominator(keep: int, room: int) -> None:
        nonlocal n_den
        burn = 20
        before = window.nonlinear
        # fresh model-conditional chains; candidate seeds are bridge states
        # on the surrogate's exceedance set, kept if the model exceeds there
        # too, with ray projection filling any shortfall
        cand, _, _ = secant_project(
            surrogate.peaks, bridge_seeds(4 * n_chains), threshold)
        cand_peaks = np.asarray(peaks_fn(cand), dtype=float)
        ok = np.flatnonzero(cand_peaks > threshold)
        if ok.size >= n_chains:
            idx = ok[:n_chains]
            seeds, seed_peaks = cand[idx], cand_peaks[idx]
        else:
            miss = np.flatnonzero(cand_peaks <= threshold)
            miss = miss[np.argsort(cand_peaks[miss])[::-1]][: n_chains - ok.size]
            proj, proj_peaks, _ = secant_project(
                peaks_fn, cand[miss], threshold, peaks0=cand_peaks[miss])
            seeds = np.concatenate([cand[ok], proj])
            seed_peaks = np.concatenate([cand_peaks[ok], proj_peaks])
        # projection cost varies per round; clamp the kept count so the
        # round cannot run past the call budget, and floor it to a chain
        # multiple because chains advance in lockstep
        keep = min(keep, room - (window.nonlinear - before) - burn * n_chains)
        keep -= keep % n_chains
        if keep < n_chains:
            return
        chain = conditional_sample(
            peaks_fn, threshold, rng, keep,
            initial=seeds, initial_peaks=seed_peaks, n_chains=n_chains,
            burn_in=burn, thin=1,
        )
        ind = chain.chain_values(
            (surrogate.peaks(chain.x) > threshold).astype(float))
        den_means.extend(ind.mean(axis=1))
        n_den += chain.x.shape[0]

    num_means: list[float] = []
    den_means: list[float] = []
    n_num = 0
    n_den = 0
    status = "converged"
    # a denominator round pays candidate checks, projection and burn-in on
    # top of the kept states; numerator chains only the kept states.  Chain
    # count, not chain length, drives the across-chain error down, so
    # rounds use short chains.
    den_round = 15 * n_chains
    den_cost = 32 * n_chains + den_round
    first = min(n_init, max(max_nonlinear - den_cost, 0))
    first -= first % n_chains
    if first < n_chains:
        raise EstimationError("call budget too small for one conditional round")
    spawn_numerator(first)
    spawn_denominator(den_round, max_nonlinear - window.nonlinear)
    if not den_means:
        raise EstimationError("call budget too small for one conditional round")
    while True:
        p_den = float(np.mean(den_means))
        if p_den <= 0.0:
            raise EstimationError(
                "model-conditional chains never exceed the threshold under the "
                "surrogate; the surrogate is inconsistent with the model's "
                "exceedance set")
        rel_var_den = _chain_mean_variance(np.asarray(den_means)) / (p_den * p_den)
        p_num = float(np.mean(num_means))
        if p_num <= 0.0:
            status = "degenerate"
            estimate = 0.0
            rel_var = math.inf
            break
        rel_var_num = _chain_mean_variance(np.asarray(num_means)) / (p_num * p_num)
        estimate = bridge.p_linear * p_num / p_den
        rel_var = bridge.p_linear_rel_var + rel_var_num + rel_var_den
        cov = math.sqrt(rel_var)
        if cov <= target_cov:
            break
        if bridge.p_linear_rel_var >= target_cov**2:
            warnings.append("surrogate-side uncertainty exceeds the error budget")
            status = "budget"
            break
        room = max_nonlinear - window.nonlinear
        if rel_var_den > rel_var_num:
            if room < den_cost:
                status = "budget"
                break
            n_before = len(den_means)
            spawn_denominator(den_round, room)
            if len(den_means) == n_before:
                status = "budget"
                break
        else:
            if room < n_chains:
                status = "budget"
                break
            grow = min(max(n_num // 2, n_chains), room)
            spawn_numerator(grow - grow % n_chains)
    variance = estimate * estimate * rel_var if math.isfinite(rel_var) else math.inf
    result = EstimateResult(
        method="conditioning",
        estimate=float(estimate),
        variance=float(variance),
        n_nonlinear=window.nonlinear,
        n_linear=window.linear,
        status=status,
        diagnostics={
            "p_linear": bridge.p_linear,
            "p_linear_rel_var": bridge.p_linear_rel_var,
            "numerator": p_num,
            "denominator": p_den,
            "n_numerator": int(n_num),
            "n_denominator": int(n_den),
            "n_numerator_chains": len(num_means),
            "n_denominator_chains": len(den_means),
        },
        warnings=warnings,
    )
    if status == "degenerate":
        result.warnings.append("no model exceedances on the surrogate-conditional chain")
    return result
