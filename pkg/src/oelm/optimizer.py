"""Identification of optimized linear surrogate parameters.

Four sample-based objectives are provided: squared-correlation
maximization (for the control-variate estimator), a variance-proxy
product objective and a cross-entropy objective for the mean-response
importance sampler (both solved in an adaptive loop whose pilot samples
come from the previous surrogate's weighted density), and the analogous
pair on exceedance-conditioned samples for rare-event estimation.
Searches run a Latin-hypercube multistart of bound-constrained
Nelder-Mead over (weights, frequencies, dampings), with the mode count
chosen by incrementing until the score stops improving.  All objective
evaluations cost only surrogate arithmetic; nonlinear model calls are
confined to the pilot datasets and the conditioned seed chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, minimize
from scipy.stats import qmc

from .counting import LINEAR_CALLS, NONLINEAR_CALLS
from .errors import OptimizationError
from .excitation import Modulation, SpectralBasis
from .linear_system import LinearSystemParams, PilotResponse, SurrogateFactory
from .samplers import ChainSamples, conditional_sample, gibbs_sample, secant_project

OMEGA_MIN = 0.1
ZETA_MIN = 1e-3
ZETA_MAX = 0.999
PEAK_FLOOR = 1e-12

# finite stand-in for an infeasible candidate; keeps the simplex arithmetic sane
REJECT_SCORE = 1e30


@dataclass(frozen=True)
class OptimizationBudget:
    """Cost knobs for surrogate identification.

    ``n_pilot`` nonlinear calls are spent per pilot dataset (one dataset
    per adaptive iteration); ``multistart`` scales the number of search
    starts with the mode count; ``max_iterations`` caps the adaptive
    reweighting loop; mode counts 1..``dof_max`` are considered.  The
    exceedance-conditioned chain used by rare-event optimization keeps
    ``chain_samples`` states from ``n_chains`` lockstep chains after
    ``chain_burn_in`` constraint-preserving steps.
    """

    n_pilot: int = 25
    multistart: int = 3
    max_iterations: int = 5
    dof_max: int = 3
    chain_samples: int = 400
    chain_burn_in: int = 10
    n_chains: int = 20
    max_fit_samples: int = 160

    def __post_init__(self):
        if self.n_pilot < 2:
            raise ValueError("n_pilot: need at least 2 pilot samples")
        if self.multistart < 1:
            raise ValueError("multistart: must be >= 1")
        if self.max_iterations < 1 or self.dof_max < 1:
            raise ValueError("max_iterations and dof_max must be >= 1")
        if self.chain_samples < self.n_chains or self.n_chains < 2:
            raise ValueError("chain_samples must cover >= 1 state per chain, n_chains >= 2")
        if self.max_fit_samples < 2:
            raise ValueError("max_fit_samples: need at least 2")


@dataclass
class PilotDataset:
    """Input samples with their nonlinear QoI values and sampling law.

    ``law`` records how the rows were drawn: ``"f_X"`` for independent
    input-density samples, ``"h_L_star"`` for the surrogate-weighted
    density (then ``linear_values`` holds the generating surrogate's
    peaks), ``"h_star"`` for the model's exceedance-conditioned density.
    """

    x: np.ndarray
    values: np.ndarray
    law: str
    linear_values: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        if self.law not in ("f_X", "h_L_star", "h_star"):
            raise ValueError(f"law: unknown sampling law {self.law!r}")
        if self.values.shape != (self.x.shape[0],):
            raise ValueError("values: need exactly one value per sample row")
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.values)):
            raise ValueError("pilot samples and values must be finite")
        if self.law == "h_L_star" and self.linear_values is None:
            raise ValueError("h_L_star pilots must carry the generating surrogate peaks")

    def __len__(self) -> int:
        return self.x.shape[0]


def draw_pilot(peaks_fn, dim: int, n: int, rng: np.random.Generator) -> PilotDataset:
    """Independent input-density pilot with nonlinear values attached."""
    x = rng.standard_normal((n, dim))
    return PilotDataset(x=x, values=np.asarray(peaks_fn(x), dtype=float), law="f_X")


@dataclass
class MultistartOutcome:
    value: float
    x: np.ndarray
    start_index: int
    local_optima: list


@dataclass
class OptimizationResult:
    """Identified surrogate parameters with search diagnostics."""

    params: LinearSystemParams
    score: float
    objective: str
    dof_scores: dict
    trace: list
    n_nonlinear: int
    n_linear: int
    local_optima: list = field(default_factory=list)
    chain: ChainSamples | None = None

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "score": self.score,
            "objective": self.objective,
            "dof_scores": {str(k): v for k, v in self.dof_scores.items()},
            "trace": self.trace,
            "n_nonlinear": self.n_nonlinear,
            "n_linear": self.n_linear,
            "local_optima": self.local_optima,
        }


# ----------------------------------------------------------------------
# parameter vector encoding
# ----------------------------------------------------------------------


def search_bounds(n_modes: int, omega_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Box for the search vector at a given mode count.

    One mode searches ``[omega, zeta]``; several modes search
    ``[a_1..a_k, omega_1..omega_k, zeta_1..zeta_k]`` with raw weights in
    ``[-1, 1]`` normalized to the unit sphere at decode time.
    """
    if n_modes == 1:
        return (np.array([OMEGA_MIN, ZETA_MIN]),
                np.array([omega_max, ZETA_MAX]))
    k = n_modes
    lower = np.concatenate([-np.ones(k), np.full(k, OMEGA_MIN), np.full(k, ZETA_MIN)])
    upper = np.concatenate([np.ones(k), np.full(k, omega_max), np.full(k, ZETA_MAX)])
    return lower, upper


def decode_vector(vec: np.ndarray, n_modes: int) -> LinearSystemParams | None:
    """Search vector to parameters; ``None`` when the weights degenerate."""
    if n_modes == 1:
        return LinearSystemParams(weights=(1.0,), omega=(float(vec[0]),), zeta=(float(vec[1]),))
    k = n_modes
    a = np.asarray(vec[:k], dtype=float)
    if float(a @ a) < 1e-24:
        return None
    return LinearSystemParams(
        weights=tuple(a),
        omega=tuple(float(w) for w in vec[k:2 * k]),
        zeta=tuple(float(z) for z in vec[2 * k:3 * k]),
    )


def encode_params(params: LinearSystemParams, n_modes: int, omega_max: float) -> np.ndarray:
    """Parameters to a search vector, zero-weight-padded up to ``n_modes``.

    Padding leaves the surrogate response unchanged, so a good k-mode
    solution seeds the (k+1)-mode search at exactly its own score.
    """
    k_have = params.n_modes
    if k_have > n_modes:
        raise ValueError("cannot encode into fewer modes than the parameters have")
    extra = n_modes - k_have
    omega = list(params.omega) + [0.5 * (OMEGA_MIN + omega_max)] * extra
    zeta = list(params.zeta) + [0.05] * extra
    if n_modes == 1:
        return np.array([omega[0], zeta[0]])
    weights = list(params.weights) + [0.0] * extra
    return np.concatenate([weights, omega, zeta])


def truncate_modes(params: LinearSystemParams | None, k: int) -> LinearSystemParams | None:
    """First ``k`` modes of ``params`` (weights renormalize on construction).

    Lets a multimode starting point (e.g. a building's elastic modes) seed
    every rung of the mode-count ladder, not only the rung matching its
    own size.
    """
    if params is None or params.n_modes <= k:
        return params
    return LinearSystemParams(
        weights=params.weights[:k],
        omega=params.omega[:k],
        zeta=params.zeta[:k],
        scale=params.scale,
    )


def theta0_default(basis: SpectralBasis, model=None, dof_max: int = 1) -> LinearSystemParams:
    """Starting surrogate: the model's small-amplitude tangent modes when
    it exposes them, else the excitation's dominant frequency at 5%
    damping."""
    modes = model.tangent_modes() if hasattr(model, "tangent_modes") else None
    if modes:
        modes = modes[:dof_max]
        return LinearSystemParams(
            weights=tuple(1.0 for _ in modes),
            omega=tuple(min(max(w, OMEGA_MIN), float(basis.omega[-1])) for w, _ in modes),
            zeta=tuple(min(max(z, ZETA_MIN), ZETA_MAX) for _, z in modes),
        )
    omega0 = float(basis.omega[np.argmax(basis.sigma)])
    return LinearSystemParams(weights=(1.0,), omega=(omega0,), zeta=(0.05,))


# ----------------------------------------------------------------------
# search engine
# ----------------------------------------------------------------------


def multistart_search(
    objective,
    lower: np.ndarray,
    upper: np.ndarray,
    n_starts: int,
    rng: np.random.Generator,
    *,
    extra_starts=(),
    maxfev: int | None = None,
) -> MultistartOutcome:
    """Latin-hypercube multistart of bound-constrained Nelder-Mead.

    ``extra_starts`` (e.g. the previous solution, or a zero-padded
    lower-mode optimum) are searched first, so the returned value can
    never be worse than the objective at any of them.  The winner is the
    lexicographically first (value, start index) pair, which makes the
    reduction deterministic under a fixed seed.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    starts = [np.clip(np.asarray(s, dtype=float), lower, upper) for s in extra_starts]
    if n_starts > 0:
        lhs = qmc.LatinHypercube(d=dim, seed=rng)
        starts += list(lower + lhs.random(n_starts) * (upper - lower))
    if not starts:
        raise OptimizationError("no starting points supplied")
    budget = maxfev if maxfev is not None else 150 * dim
    best = None
    local_optima = []
    for i, s in enumerate(starts):
        res = minimize(
            objective, s, method="Nelder-Mead", bounds=Bounds(lower, upper),
            options={"maxiter": budget, "maxfev": budget,
                     "xatol": 1e-4, "fatol": 1e-10, "adaptive": dim > 4},
        )
        value = float(res.fun)
        local_optima.append({"start": i, "value": value, "x": [float(v) for v in res.x]})
        if value < REJECT_SCORE and (best is None or value < best.value):
            best = MultistartOutcome(value=value, x=np.asarray(res.x), start_index=i,
                                     local_optima=local_optima)
    if best is None:
        raise OptimizationError("every search start was infeasible")
    best.local_optima = local_optima
    return best


def dof_selection(evaluate, dof_max: int, rel_tol: float = 0.01, loo=None,
                  best_score: float | None = None):
    """Increment the mode count until the score stops improving.

    ``evaluate(k, warm_params)`` must return ``(score, params, local
    optima)`` for a k-mode search seeded with the previous best (so
    scores are non-increasing up to search noise).  A count is accepted
    only while each increment improves the score by at least ``rel_tol``
    relative, so ties resolve to the smaller count.  When the objective
    has a known ideal value ``best_score`` (-1 for squared correlation,
    1 for the variance products), the improvement is measured against
    the remaining gap to that ideal: the gap is what drives the
    downstream estimator's variance, and a mode that closes most of it
    matters even when the raw score moves by less than ``rel_tol``.

    ``loo(params)``, when given, must return the per-sample
    leave-one-out scores of a candidate on the shared score samples.
    Extra modes then also have to improve the score by more than twice
    the jackknife standard error of the paired score difference; with
    few score samples each added mode can chase sample noise, and the
    guard keeps such insignificant gains from inflating the count.

    Returns ``(params, score, per-count scores, local optima of the
    winner)``.
    """
    scores = {}
    selected = None
    prev_score = None
    prev_params = None
    for k in range(1, dof_max + 1):
        score, params, locs = evaluate(k, prev_params)
        scores[k] = score
        if prev_score is not None:
            if best_score is None:
                base = abs(prev_score)
            else:
                base = prev_score - best_score
            improvement = (prev_score - score) / max(base, 1e-300)
            if improvement < rel_tol:
                break
            if loo is not None:
                diff = np.asarray(loo(prev_params)) - np.asarray(loo(params))
                n = diff.size
                var = (n - 1) / n * float(np.sum((diff - diff.mean()) ** 2))
                if prev_score - score < 2.0 * math.sqrt(max(var, 0.0)):
                    break
        selected = (params, score, locs)
        prev_score = score
        prev_params = params
    return selected[0], selected[1], scores, selected[2]


def _one_mode_grid(objective, omega_max: float) -> LinearSystemParams:
    """Best single mode on a coarse (frequency, damping) grid.

    A cheap sweep that hands the local search a start near the right
    resonance; pure surrogate arithmetic.
    """
    omegas = np.geomspace(max(OMEGA_MIN, 0.3), 0.98 * omega_max, 36)
    zetas = (0.02, 0.05, 0.15, 0.4)
    best = (math.inf, None)
    for z in zetas:
        for w in omegas:
            params = LinearSystemParams(weights=(1.0,), omega=(float(w),), zeta=(z,))
            value = objective(params)
            if value < best[0]:
                best = (value, params)
    if best[1] is None:
        raise OptimizationError("every grid candidate was infeasible")
    return best[1]


def _search_at_dof(objective, n_modes, omega_max, budget, rng, warm=()):
    """One multistart solve at a fixed mode count.

    ``warm`` parameters with at most ``n_modes`` modes are zero-padded
    into extra starts; a coarse frequency grid seeds the 1-mode search.
    Random-start growth is kept sublinear in the mode count and the
    per-start budget is capped: in high dimensions the warm starts carry
    the search, and uncapped Nelder-Mead there buys noise, not optima.
    """
    lower, upper = search_bounds(n_modes, omega_max)
    extras = [encode_params(p, n_modes, omega_max)
              for p in warm if p is not None and p.n_modes <= n_modes]
    if n_modes == 1:
        extras.append(encode_params(_one_mode_grid(objective, omega_max), 1, omega_max))

    def vec_objective(vec):
        params = decode_vector(vec, n_modes)
        if params is None:
            return REJECT_SCORE
        value = objective(params)
        if not math.isfinite(value):
            return REJECT_SCORE
        return value

    out = multistart_search(vec_objective, lower, upper,
                            budget.multistart + n_modes - 1, rng,
                            extra_starts=extras,
                            maxfev=min(150 * lower.size, 1200))
    return out.value, decode_vector(out.x, n_modes), out.local_optima


# ----------------------------------------------------------------------
# objectives
# ----------------------------------------------------------------------


def correlation_objective(pilot_values: np.ndarray, presp: PilotResponse):
    """Negative squared sample correlation between model and surrogate peaks."""
    q = pilot_values
    dq = q - q.mean()
    ssq = float(dq @ dq)

    def objective(params: LinearSystemParams) -> float:
        ml = presp.peaks(params)
        dl = ml - ml.mean()
        ssl = float(dl @ dl)
        if ssl <= 0.0 or ssq <= 0.0:
            return REJECT_SCORE
        c = float(dq @ dl)
        return -(c * c) / (ssq * ssl)

    def loo(params: LinearSystemParams) -> np.ndarray:
        ml = presp.peaks(params)
        n = q.size
        m = n - 1
        sq_i = q.sum() - q
        sl_i = ml.sum() - ml
        cov = (float(q @ ml) - q * ml) - sq_i * sl_i / m
        vq = (float(q @ q) - q * q) - sq_i * sq_i / m
        vl = (float(ml @ ml) - ml * ml) - sl_i * sl_i / m
        denom = vq * vl
        return np.where(denom > 0.0, -(cov * cov) / np.maximum(denom, 1e-300),
                        REJECT_SCORE)

    objective.loo = loo
    return objective


def _loo_mean(u: np.ndarray) -> np.ndarray:
    """Leave-one-out means of a per-sample vector."""
    n = u.size
    return (u.sum() - u) / (n - 1)


def is_variance_objective(values, prev_linear, presp: PilotResponse):
    """Normalized variance proxy for mean-response importance sampling.

    Over weighted-density samples with generating peaks ``prev_linear``,
    computes ``<M^2/(M_L m')> <M_L/m'> / <M/m'>^2``; by the Cauchy-Schwarz
    inequality this is at least 1, with equality exactly when ``M_L`` is
    proportional to ``M`` on the sample set.
    """
    m = values
    mp = prev_linear
    norm = float(np.mean(m / mp)) ** 2

    def objective(params: LinearSystemParams) -> float:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return REJECT_SCORE
        first = float(np.mean(m * m / (ml * mp)))
        second = float(np.mean(ml / mp))
        return first * second / norm

    def loo(params: LinearSystemParams) -> np.ndarray:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return np.full(m.shape, REJECT_SCORE)
        norm_i = _loo_mean(m / mp) ** 2
        return _loo_mean(m * m / (ml * mp)) * _loo_mean(ml / mp) / norm_i

    objective.loo = loo
    return objective


def cross_entropy_mean_objective(values, prev_linear, presp: PilotResponse):
    """Negated cross-entropy fit of the weighted surrogate density.

    Over weighted-density samples, maximizes
    ``<w log M_L> - <w> log <M_L/m'>`` with ``w = M/m'``; the second
    term estimates the surrogate density's normalizing constant on the
    same samples, which also makes the objective invariant to the
    surrogate's overall scale.
    """
    w = values / prev_linear
    w_mean = float(w.mean())
    mp = prev_linear

    def objective(params: LinearSystemParams) -> float:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return REJECT_SCORE
        gain = float(np.mean(w * np.log(ml))) - w_mean * math.log(float(np.mean(ml / mp)))
        return -gain

    def loo(params: LinearSystemParams) -> np.ndarray:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return np.full(w.shape, REJECT_SCORE)
        return -(_loo_mean(w * np.log(ml))
                 - _loo_mean(w) * np.log(_loo_mean(ml / mp)))

    objective.loo = loo
    return objective


def rare_variance_objective(values, presp: PilotResponse):
    """Product objective ``<M/M_L> <M_L/M>`` on exceedance-conditioned samples.

    At least 1 on any sample set; equals 1 exactly when the surrogate
    peak is proportional to the model peak across the samples.
    """
    m = values

    def objective(params: LinearSystemParams) -> float:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return REJECT_SCORE
        return float(np.mean(m / ml)) * float(np.mean(ml / m))

    def loo(params: LinearSystemParams) -> np.ndarray:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return np.full(m.shape, REJECT_SCORE)
        return _loo_mean(m / ml) * _loo_mean(ml / m)

    objective.loo = loo
    return objective


def rare_cross_entropy_objective(values, presp: PilotResponse):
    """Negated cross-entropy objective on exceedance-conditioned samples:
    maximizes ``<log M_L> - log <M_L/M>``."""
    m = values

    def objective(params: LinearSystemParams) -> float:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return REJECT_SCORE
        return -(float(np.mean(np.log(ml))) - math.log(float(np.mean(ml / m))))

    def loo(params: LinearSystemParams) -> np.ndarray:
        ml = presp.peaks(params)
        if np.any(ml < PEAK_FLOOR):
            return np.full(m.shape, REJECT_SCORE)
        return -(_loo_mean(np.log(ml)) - np.log(_loo_mean(ml / m)))

    objective.loo = loo
    return objective


# ----------------------------------------------------------------------
# top-level identification routines
# ----------------------------------------------------------------------


def optimize_correlation(
    pilot: PilotDataset,
    basis: SpectralBasis,
    budget: OptimizationBudget,
    rng: np.random.Generator,
    *,
    modulation: Modulation | None = None,
    theta0: LinearSystemParams | None = None,
) -> OptimizationResult:
    """Maximize the squared correlation between model and surrogate peaks.

    The pilot must carry independent input-density samples with their
    model values; the search itself performs no model calls (audited by
    the nonlinear tally).  The returned scale stays at 1: the
    control-variate coefficient absorbs any scaling.
    """
    n0 = NONLINEAR_CALLS.value
    l0 = LINEAR_CALLS.value
    if pilot.law != "f_X":
        raise OptimizationError("correlation pilots must be drawn from the input density")
    if float(np.var(pilot.values)) <= 0.0:
        raise OptimizationError("pilot model values are constant; correlation undefined")
    factory = SurrogateFactory(basis, modulation)
    presp = PilotResponse(factory, pilot.x)
    objective = correlation_objective(pilot.values, presp)
    omega_max = float(basis.omega[-1])

    def evaluate(k, prev):
        return _search_at_dof(objective, k, omega_max, budget, rng,
                              warm=(prev, truncate_modes(theta0, k)))

    params, score, scores, locs = dof_selection(evaluate, budget.dof_max,
                                                loo=objective.loo, best_score=-1.0)
    return OptimizationResult(
        params=params,
        score=score,
        objective="correlation",
        dof_scores=scores,
        trace=[{"iteration": 0, "dof": params.n_modes, "score": score,
                "rho2": -score, "n_pilot": len(pilot)}],
        n_nonlinear=NONLINEAR_CALLS.value - n0,
        n_linear=LINEAR_CALLS.value - l0,
        local_optima=locs,
    )


def _adaptive_mean_optimize(peaks_fn, factory, budget, rng, form, theta0):
    n0 = NONLINEAR_CALLS.value
    l0 = LINEAR_CALLS.value
    omega_max = float(factory.basis.omega[-1])
    theta = theta0
    trace = []
    score = math.inf
    scores = {}
    locs = []
    for j in range(1, budget.max_iterations + 1):
        chains = gibbs_sample(
            factory.build(theta), rng, budget.n_pilot,
            mode="abs_weight", n_chains=min(5, budget.n_pilot),
        )
        pilot = PilotDataset(
            x=chains.x, values=np.asarray(peaks_fn(chains.x), dtype=float),
            law="h_L_star", linear_values=chains.peak,
        )
        presp = PilotResponse(factory, pilot.x)
        if form == "variance":
            objective = is_variance_objective(pilot.values, pilot.linear_values, presp)
        else:
            objective = cross_entropy_mean_objective(pilot.values, pilot.linear_values, presp)
        score_before = objective(theta)

        def evaluate(k, prev, _objective=objective, _theta=theta):
            return _search_at_dof(_objective, k, omega_max, budget, rng,
                                  warm=(prev, truncate_modes(_theta, k)))

        theta, score, scores, locs = dof_selection(
            evaluate, budget.dof_max, loo=objective.loo,
            best_score=1.0 if form == "variance" else None,
        )
        trace.append({
            "iteration": j, "dof": theta.n_modes,
            "score_before": float(score_before), "score_after": float(score),
            "n_pilot": len(pilot),
            "n_nonlinear_cum": NONLINEAR_CALLS.value - n0,
        })
        improvement = (score_before - score) / max(abs(score_before), 1e-300)
        if improvement < 0.01:
            break
    return OptimizationResult(
        params=theta,
        score=score,
        objective=f"is_{form}",
        dof_scores=scores,
        trace=trace,
        n_nonlinear=NONLINEAR_CALLS.value - n0,
        n_linear=LINEAR_CALLS.value - l0,
        local_optima=locs,
    )


def optimize_is_variance(
    peaks_fn,
    basis: SpectralBasis,
    budget: OptimizationBudget,
    rng: np.random.Generator,
    *,
    modulation: Modulation | None = None,
    theta0: LinearSystemParams | None = None,
    model=None,
) -> OptimizationResult:
    """Adaptive variance-proxy identification for the mean-response sampler.

    Each iteration draws a fresh pilot from the current surrogate's
    weighted density, evaluates the model once per pilot sample, and
    refits the surrogate by minimizing the normalized product objective
    on that dataset (both of its sample means share the dataset, so
    their errors partly cancel).  The previous solution seeds the
    search, making the per-dataset score non-increasing within each
    iteration; the loop stops when an iteration improves its dataset
    score by less than 1%.
    """
    factory = SurrogateFactory(basis, modulation)
    if theta0 is None:
        theta0 = theta0_default(basis, model, budget.dof_max)
    return _adaptive_mean_optimize(peaks_fn, factory, budget, rng, "variance", theta0)


def optimize_cross_entropy(
    peaks_fn,
    basis: SpectralBasis,
    budget: OptimizationBudget,
    rng: np.random.Generator,
    *,
    modulation: Modulation | None = None,
    theta0: LinearSystemParams | None = None,
    model=None,
) -> OptimizationResult:
    """Adaptive cross-entropy identification; same scaffold as the
    variance form but maximizing the log-density fit."""
    factory = SurrogateFactory(basis, modulation)
    if theta0 is None:
        theta0 = theta0_default(basis, model, budget.dof_max)
    return _adaptive_mean_optimize(peaks_fn, factory, budget, rng, "cross_entropy", theta0)


def fit_scale_b(factory: SurrogateFactory, params: LinearSystemParams,
                x: np.ndarray, values: np.ndarray) -> float:
    """Scale aligning the mean surrogate peak with the mean model peak.

    Minimizing ``(<M_L(b)> - <M>)^2`` over the stored samples has the
    closed form ``b* = <M> / <M_L(b=1)>``; no model calls are needed
    because the model values are reused.
    """
    ml = PilotResponse(factory, x).peaks(params.with_scale(1.0))
    denom = float(ml.mean())
    if denom <= 0.0:
        raise OptimizationError("surrogate peaks average to zero; scale fit impossible")
    return float(np.mean(values)) / denom


def optimize_rare_event(
    peaks_fn,
    basis: SpectralBasis,
    threshold: float,
    budget: OptimizationBudget,
    rng: np.random.Generator,
    *,
    objective: str = "variance",
    modulation: Modulation | None = None,
    theta0: LinearSystemParams | None = None,
    seed_pool: int = 40,
) -> OptimizationResult:
    """One-step surrogate identification on exceedance-conditioned samples.

    Draws seed states, projects them onto the exceedance set with the
    secant method, runs constraint-preserving rotation chains to sample
    the model's conditional density (the dominant nonlinear cost, set by
    ``chain_samples``), then fits (weights, frequencies, dampings, mode
    count) by the selected objective on those fixed samples and closes
    with the scale fit.  The conditioned chain is returned for reuse by
    the conditioning estimator.
    """
    if objective not in ("variance", "cross_entropy"):
        raise OptimizationError(f"unknown rare-event objective {objective!r}")
    n0 = NONLINEAR_CALLS.value
    l0 = LINEAR_CALLS.value
    factory = SurrogateFactory(basis, modulation)
    omega_max = float(basis.omega[-1])

    pool = rng.standard_normal((seed_pool, basis.n_terms))
    pool_peaks = np.asarray(peaks_fn(pool), dtype=float)
    order = np.argsort(pool_peaks)[-budget.n_chains:]
    seeds, seed_peaks, _ = secant_project(
        peaks_fn, pool[order], threshold, peaks0=pool_peaks[order])

    chain = conditional_sample(
        peaks_fn, threshold, rng, budget.chain_samples,
        initial=seeds, initial_peaks=seed_peaks,
        n_chains=budget.n_chains, burn_in=budget.chain_burn_in, thin=1,
    )
    pilot = PilotDataset(x=chain.x, values=chain.peak, law="h_star")
    # fit on an evenly thinned subset: the unthinned chain is strongly
    # autocorrelated, so this loses little information and caps the cost
    # of each objective evaluation
    stride = max(1, -(-len(pilot) // budget.max_fit_samples))
    fit_idx = np.arange(0, len(pilot), stride)
    presp = PilotResponse(factory, pilot.x[fit_idx])
    if objective == "variance":
        obj = rare_variance_objective(pilot.values[fit_idx], presp)
    else:
        obj = rare_cross_entropy_objective(pilot.values[fit_idx], presp)

    def evaluate(k, prev):
        return _search_at_dof(obj, k, omega_max, budget, rng,
                              warm=(prev, truncate_modes(theta0, k)))

    params, score, scores, locs = dof_selection(
        evaluate, budget.dof_max, loo=obj.loo,
        best_score=1.0 if objective == "variance" else None,
    )
    scale = fit_scale_b(factory, params, pilot.x, pilot.values)
    params = params.with_scale(scale)
    return OptimizationResult(
        params=params,
        score=score,
        objective=f"rare_{objective}",
        dof_scores=scores,
        trace=[{"iteration": 1, "dof": params.n_modes, "score": score,
                "scale": scale, "n_chain": len(pilot),
                "chain_acceptance": chain.acceptance,
                "n_nonlinear_cum": NONLINEAR_CALLS.value - n0}],
        n_nonlinear=NONLINEAR_CALLS.value - n0,
        n_linear=LINEAR_CALLS.value - l0,
        local_optima=locs,
        chain=chain,
    )
