"""Nonlinear structural models and their scalar response functionals.

Each model maps an excitation record to a response history by fixed-step
time integration from rest; the quantity fed to the estimators is the peak
absolute response (a chosen story drift for the frame).  Evaluators here are
the only place nonlinear model calls happen, and every evaluation bumps the
global nonlinear tally, so estimator cost reports are exact.

Sign convention: ground acceleration enters the equations of motion as a
forcing ``-a(t)`` per unit mass (relative-displacement formulation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.optimize import brentq

from . import _kernels
from .counting import LINEAR_CALLS, NONLINEAR_CALLS
from .errors import CalibrationError, IntegrationError
from .excitation import Modulation, Record, SpectralBasis

__all__ = [
    "QoiSpec",
    "CubicOscillator",
    "BoucWenOscillator",
    "ShearBuilding",
    "calibrate_shear_building",
    "SdofTrajectory",
    "FrameTrajectory",
    "integrate",
    "NonlinearResponse",
    "CallableResponse",
]


@dataclass(frozen=True)
class QoiSpec:
    """What scalar to extract from a response: the peak magnitude itself,
    or the indicator of it exceeding ``threshold``."""

    kind: str = "peak_abs"
    threshold: float | None = None
    story: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("peak_abs", "exceedance"):
            raise ValueError("qoi.kind: expected 'peak_abs' or 'exceedance'")
        if self.kind == "exceedance" and self.threshold is None:
            raise ValueError("qoi.threshold: required for exceedance")
        if self.story < 1:
            raise ValueError("qoi.story: 1-based story index must be >= 1")


@dataclass(frozen=True)
class CubicOscillator:
    """Unit-mass oscillator ``z'' + c z' + k3 z^3 + kl z = -a(t)``.

    ``kl`` defaults to zero (pure cubic restoring force); setting ``k3 = 0``
    yields an exactly linear oscillator, used as a closed-loop test hook.
    """

    damping: float = 1.0
    cubic: float = 1.0
    linear: float = 0.0
    name: str = "cubic"

    def __post_init__(self) -> None:
        if self.damping < 0.0 or self.cubic < 0.0 or self.linear < 0.0:
            raise ValueError("cubic oscillator: coefficients must be nonnegative")
        if self.cubic == 0.0 and self.linear == 0.0:
            raise ValueError("cubic oscillator: need a restoring force")

    @classmethod
    def linear_sdof(cls, omega: float, zeta: float) -> "CubicOscillator":
        return cls(damping=2.0 * zeta * omega, cubic=0.0, linear=omega * omega, name="linear_sdof")

    def tangent_modes(self):
        if self.linear <= 0.0:
            return None
        om = float(np.sqrt(self.linear))
        return [(om, self.damping / (2.0 * om))]

    @property
    def n_stories(self) -> int:
        return 1


@dataclass(frozen=True)
class BoucWenOscillator:
    """Smooth hysteretic oscillator with an auxiliary memory displacement.

    ``z'' + 2 zeta_n omega_n z' + omega_n^2 (alpha z + (1-alpha) zh) = -a``
    ``zh' = amp z' - gamma |z'| |zh|^(exponent-1) zh - eta |zh|^exponent z'``
    """

    omega_n: float
    zeta_n: float
    alpha: float = 0.1
    exponent: float = 5.0
    amp: float = 1.0
    gamma: float = 1.0
    eta: float = 1.0
    name: str = "boucwen"

    def __post_init__(self) -> None:
        if self.omega_n <= 0.0 or not 0.0 <= self.zeta_n < 1.0:
            raise ValueError("boucwen: need omega_n > 0 and 0 <= zeta_n < 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("boucwen: alpha must lie in [0, 1]")
        if self.exponent < 1.0:
            raise ValueError("boucwen: exponent must be >= 1")

    @classmethod
    def from_yield(
        cls,
        omega_n: float,
        zeta_n: float,
        alpha: float,
        exponent: float,
        yield_disp: float,
        amp: float = 1.0,
    ) -> "BoucWenOscillator":
        """Symmetric loop coefficients giving ``|zh| <= yield_disp``."""
        g = 1.0 / (2.0 * yield_disp**exponent)
        return cls(
            omega_n=omega_n,
            zeta_n=zeta_n,
            alpha=alpha,
            exponent=exponent,
            amp=amp,
            gamma=g,
            eta=g,
        )

    def tangent_modes(self):
        k_tan = self.alpha + (1.0 - self.alpha) * self.amp
        om = self.omega_n * float(np.sqrt(k_tan))
        ze = self.zeta_n * self.omega_n / om
        return [(om, ze)]

    @property
    def n_stories(self) -> int:
        return 1


class ShearBuilding:
    """Multistory shear frame with bilinear hysteretic story springs.

    Story ``i`` carries force ``r k d + (1-r) k s`` on its drift ``d``,
    where ``s`` is the drift of an elastic-perfectly-plastic component
    clamped at the yield drift; ``r`` is the post-yield stiffness ratio.
    Viscous damping is modal (equal ratio in every initial elastic mode) and
    held constant through yielding.
    """

    name = "shear_building"

    def __init__(
        self,
        stiffness,
        masses=None,
        yield_drift=0.01,
        post_yield_ratio=0.1,
        damping_ratio=0.05,
    ):
        k = np.asarray(stiffness, dtype=float)
        if k.ndim != 1 or k.size < 1 or np.any(k <= 0):
            raise ValueError("stiffness: need positive story stiffnesses")
        ns = k.size
        m = np.ones(ns) if masses is None else np.asarray(masses, dtype=float)
        if m.shape != k.shape or np.any(m <= 0):
            raise ValueError("masses: need positive story masses matching stiffness")
        self.stiffness = k
        self.masses = m
        self.yield_drift = np.broadcast_to(np.asarray(yield_drift, dtype=float), (ns,)).copy()
        self.post_yield_ratio = np.broadcast_to(
            np.asarray(post_yield_ratio, dtype=float), (ns,)
        ).copy()
        if np.any(self.yield_drift <= 0):
            raise ValueError("yield_drift: must be positive")
        if np.any((self.post_yield_ratio < 0) | (self.post_yield_ratio >= 1)):
            raise ValueError("post_yield_ratio: must lie in [0, 1)")
        self.damping_ratio = float(damping_ratio)
        kmat = self.elastic_stiffness_matrix()
        mmat = np.diag(m)
        w2, phi = sla.eigh(kmat, mmat)
        self.modal_omega = np.sqrt(w2)
        # mass-normalize and build the constant modal damping matrix
        norms = np.sqrt(np.einsum("ij,i,ij->j", phi, m, phi))
        phi = phi / norms
        self.mode_shapes = phi
        cgen = phi @ np.diag(2.0 * self.damping_ratio * self.modal_omega) @ phi.T
        self.damping_matrix = mmat @ cgen @ mmat

    @property
    def n_stories(self) -> int:
        return self.stiffness.size

    @property
    def periods(self) -> np.ndarray:
        return 2.0 * np.pi / self.modal_omega

    def elastic_stiffness_matrix(self) -> np.ndarray:
        k = self.stiffness
        ns = k.size
        kmat = np.zeros((ns, ns))
        for i in range(ns):
            kmat[i, i] += k[i]
            if i + 1 < ns:
                kmat[i, i] += k[i + 1]
                kmat[i, i + 1] -= k[i + 1]
                kmat[i + 1, i] -= k[i + 1]
        return kmat

    def tangent_modes(self):
        return [(float(w), self.damping_ratio) for w in self.modal_omega]


def calibrate_shear_building(
    stories: int = 6,
    periods: tuple = (0.58, 0.24),
    yield_drift: float = 0.01,
    post_yield_ratio: float = 0.1,
    damping_ratio: float = 0.05,
    tol: float = 0.01,
) -> ShearBuilding:
    """Choose a one-parameter stiffness profile matching two target periods.

    Story stiffnesses follow a linear taper ``k_i = k0 (1 - s (i-1)/(ns-1))``
    with unit masses; ``s`` sets the second-to-first frequency ratio and
    ``k0`` then scales the fundamental period exactly.
    """
    if stories < 2:
        raise CalibrationError("calibration needs at least two stories")
    t1, t2 = periods
    if not t1 > t2 > 0:
        raise CalibrationError("periods must be positive and decreasing")
    target_ratio = t1 / t2

    def ratio_of(s: float) -> float:
        taper = 1.0 - s * np.arange(stories) / (stories - 1)
        b = ShearBuilding(
            stiffness=taper,
            yield_drift=yield_drift,
            post_yield_ratio=post_yield_ratio,
            damping_ratio=damping_ratio,
        )
        return float(b.modal_omega[1] / b.modal_omega[0])

    grid = np.linspace(-6.0, 0.98, 60)
    vals = np.array([ratio_of(s) - target_ratio for s in grid])
    sign = np.sign(vals)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    if idx.size == 0:
        raise CalibrationError(
            f"no stiffness taper reaches mode ratio {target_ratio:.4g}; "
            f"achievable range [{vals.min() + target_ratio:.4g}, {vals.max() + target_ratio:.4g}]"
        )
    s_star = brentq(lambda s: ratio_of(s) - target_ratio, grid[idx[0]], grid[idx[0] + 1])
    taper = 1.0 - s_star * np.arange(stories) / (stories - 1)
    probe = ShearBuilding(
        stiffness=taper,
        yield_drift=yield_drift,
        post_yield_ratio=post_yield_ratio,
        damping_ratio=damping_ratio,
    )
    k0 = (2.0 * np.pi / t1 / probe.modal_omega[0]) ** 2
    built = ShearBuilding(
        stiffness=k0 * taper,
        yield_drift=yield_drift,
        post_yield_ratio=post_yield_ratio,
        damping_ratio=damping_ratio,
    )
    achieved = built.periods[:2]
    if abs(achieved[0] - t1) > tol * t1 or abs(achieved[1] - t2) > tol * t2:
        raise CalibrationError(
            f"calibrated periods {achieved} miss targets {periods} beyond {tol:.0%}"
        )
    return built


@dataclass
class SdofTrajectory:
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    aux: np.ndarray | None = None

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.z)))


@dataclass
class FrameTrajectory:
    t: np.ndarray
    drifts: np.ndarray  # (nt, stories)

    def peak(self, story: int = 1) -> float:
        return float(np.max(np.abs(self.drifts[:, story - 1])))


def _raise_bad_state(status: int, step: int, name: str) -> None:
    if status == _kernels.STATUS_NONFINITE:
        raise IntegrationError(f"{name}: state blew up", step=step)
    if status == _kernels.STATUS_NEWTON_FAIL:
        raise IntegrationError(f"{name}: Newton iteration failed to converge", step=step)


def integrate(model, record: Record, u0=None, v0=None):
    """Integrate one record from rest (or given initial state for the frame).

    Returns an :class:`SdofTrajectory` or :class:`FrameTrajectory`.  Counts
    one nonlinear model call.
    """
    NONLINEAR_CALLS.add(1)
    if isinstance(model, CubicOscillator):
        nt = record.a.size
        out_z = np.empty(nt)
        out_v = np.empty(nt)
        status, step = _kernels.cubic_traj(
            record.fine, record.dt, model.damping, model.cubic, model.linear, out_z, out_v
        )
        _raise_bad_state(status, step, model.name)
        return SdofTrajectory(t=record.t, z=out_z, v=out_v)
    if isinstance(model, BoucWenOscillator):
        nt = record.a.size
        out_z = np.empty(nt)
        out_v = np.empty(nt)
        out_h = np.empty(nt)
        status, step = _kernels.boucwen_traj(
            record.fine,
            record.dt,
            model.omega_n,
            model.zeta_n,
            model.alpha,
            model.exponent,
            model.amp,
            model.gamma,
            model.eta,
            out_z,
            out_v,
            out_h,
        )
        _raise_bad_state(status, step, model.name)
        return SdofTrajectory(t=record.t, z=out_z, v=out_v, aux=out_h)
    if isinstance(model, ShearBuilding):
        ns = model.n_stories
        nt = record.a.size
        u_init = np.zeros(ns) if u0 is None else np.asarray(u0, dtype=float)
        v_init = np.zeros(ns) if v0 is None else np.asarray(v0, dtype=float)
        peaks = np.empty(ns)
        drift_out = np.empty((nt, ns))
        status, step = _kernels._building_run(
            record.a,
            record.dt,
            model.masses,
            model.stiffness,
            model.post_yield_ratio,
            model.yield_drift,
            model.damping_matrix,
            u_init,
            v_init,
            1e-10,
            50,
            peaks,
            drift_out,
            True,
        )
        _raise_bad_state(status, step, model.name)
        return FrameTrajectory(t=record.t, drifts=drift_out)
    raise TypeError(f"integrate: unsupported model type {type(model).__name__}")


class NonlinearResponse:
    """Batched map from coefficient vectors to peak responses of a model.

    ``peaks(X)`` synthesizes the records for the rows of ``X``, integrates
    the model and returns the peak magnitude of the selected response
    (|z| for oscillators, |drift of story| for the frame).  Each row counts
    as one nonlinear model call.
    """

    label = "nonlinear"

    def __init__(
        self,
        model,
        basis: SpectralBasis,
        modulation: Modulation | None = None,
        story: int = 1,
        chunk: int = 1024,
    ):
        if not 1 <= story <= model.n_stories:
            raise ValueError(f"story: model has {model.n_stories} stories, asked for {story}")
        self.model = model
        self.basis = basis
        self.modulation = modulation
        self.story = story
        self.chunk = chunk
        self.n = basis.n_terms

    def peaks(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        nb = x.shape[0]
        out = np.empty(nb)
        model = self.model
        for lo in range(0, nb, self.chunk):
            hi = min(lo + self.chunk, nb)
            a_fine = self.basis.synthesize_batch(x[lo:hi], self.modulation)
            status = np.empty(hi - lo, dtype=np.int64)
            if isinstance(model, CubicOscillator):
                _kernels.cubic_peaks(
                    a_fine, self.basis.dt, model.damping, model.cubic, model.linear,
                    out[lo:hi], status,
                )
            elif isinstance(model, BoucWenOscillator):
                _kernels.boucwen_peaks(
                    a_fine,
                    self.basis.dt,
                    model.omega_n,
                    model.zeta_n,
                    model.alpha,
                    model.exponent,
                    model.amp,
                    model.gamma,
                    model.eta,
                    out[lo:hi],
                    status,
                )
            elif isinstance(model, ShearBuilding):
                a_grid = np.ascontiguousarray(a_fine[:, ::2])
                drift_peaks = np.empty((hi - lo, model.n_stories))
                _kernels.building_peaks(
                    a_grid,
                    self.basis.dt,
                    model.masses,
                    model.stiffness,
                    model.post_yield_ratio,
                    model.yield_drift,
                    model.damping_matrix,
                    drift_peaks,
                    status,
                )
                out[lo:hi] = drift_peaks[:, self.story - 1]
            else:
                raise TypeError(f"peaks: unsupported model type {type(model).__name__}")
            bad = np.flatnonzero(status != _kernels.STATUS_OK)
            if bad.size:
                NONLINEAR_CALLS.add(lo + int(bad[0]) + 1)
                _raise_bad_state(int(status[bad[0]]), -1, model.name)
        NONLINEAR_CALLS.add(nb)
        return out


class CallableResponse:
    """Adapter giving a plain vectorized function the evaluator interface.

    Used for analytic test problems; bumps the chosen tally so that call
    accounting stays auditable even in toy setups.
    """

    def __init__(self, fn, n: int, label: str = "nonlinear"):
        self.fn = fn
        self.n = n
        self.label = label
        self._counter = NONLINEAR_CALLS if label == "nonlinear" else LINEAR_CALLS

    def peaks(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._counter.add(x.shape[0])
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != (x.shape[0],):
            raise ValueError("CallableResponse: fn must map (N, n) to (N,)")
        return out
