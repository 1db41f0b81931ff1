"""Experiment configuration: parsing, validation, canonical hashing.

An experiment is one JSON file with four blocks (``excitation``, ``model``,
``qoi``, ``method``) plus a mandatory ``seed``.  Parsing materializes every
default, so ``parse -> serialize -> parse`` is the identity and the SHA-256
of the canonical serialization identifies the experiment exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .excitation import GroundMotionPsd, Modulation, SpectralBasis, discretize_psd
from .nonlinear_models import (
    BoucWenOscillator,
    CubicOscillator,
    NonlinearResponse,
    QoiSpec,
    ShearBuilding,
    calibrate_shear_building,
)
from .optimizer import OptimizationBudget

METHODS = ("mcs", "acv", "ais", "ais-relax", "ais-cond")
MODEL_TYPES = ("cubic", "boucwen", "shear_building")
OBJECTIVES = {
    "mcs": (),
    "acv": ("correlation",),
    "ais": ("is_variance", "cross_entropy"),
    "ais-relax": ("variance", "cross_entropy"),
    "ais-cond": ("variance", "cross_entropy"),
}
RARE_METHODS = ("ais-relax", "ais-cond")


_REQUIRED = object()


def _want(block: dict, path: str, key: str, kinds, *, default=_REQUIRED):
    # an explicit null counts as absent, so serialized configs re-parse
    if block.get(key) is None:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = block[key]
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}: expected an integer")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number")
        if not math.isfinite(float(value)):
            raise ConfigError(f"{path}.{key}: must be finite")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}: expected a string")
        return value
    if kinds is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}.{key}: expected an object")
        return value
    if kinds is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}: expected an array")
        return value
    raise AssertionError(kinds)


def _positive(value, path_key: str):
    if value <= 0:
        raise ConfigError(f"{path_key}: must be positive")
    return value


def _no_extras(block: dict, path: str, allowed) -> None:
    extras = sorted(set(block) - set(allowed))
    if extras:
        raise ConfigError(f"{path}.{extras[0]}: unknown field")


@dataclass(frozen=True)
class ExcitationConfig:
    s0: float
    omega_f: float = 15.0
    zeta_f: float = 0.6
    omega_s: float = 1.5
    zeta_s: float = 0.6
    n_terms: int = 200
    omega_max: float = 15.0 * math.pi
    duration: float = 10.0
    dt: float = 0.005
    modulation: dict | None = None

    @classmethod
    def from_dict(cls, block: dict, path: str = "excitation") -> "ExcitationConfig":
        _no_extras(block, path, (
            "s0", "omega_f", "zeta_f", "omega_s", "zeta_s",
            "n_terms", "omega_max", "duration", "dt", "modulation"))
        s0 = _positive(_want(block, path, "s0", float), f"{path}.s0")
        n_terms = _want(block, path, "n_terms", int, default=cls.n_terms)
        if n_terms < 2 or n_terms % 2 != 0:
            raise ConfigError(f"{path}.n_terms: must be a positive even integer")
        mod = _want(block, path, "modulation", dict, default=None)
        if mod is not None:
            _no_extras(mod, f"{path}.modulation", ("t_rise", "t_flat"))
            mod = {
                "t_rise": _positive(_want(mod, f"{path}.modulation", "t_rise", float),
                                    f"{path}.modulation.t_rise"),
                "t_flat": _positive(_want(mod, f"{path}.modulation", "t_flat", float),
                                    f"{path}.modulation.t_flat"),
            }
            if mod["t_rise"] > mod["t_flat"]:
                raise ConfigError(f"{path}.modulation.t_rise: must not exceed t_flat")
        cfg = cls(
            s0=s0,
            omega_f=_positive(_want(block, path, "omega_f", float, default=cls.omega_f),
                              f"{path}.omega_f"),
            zeta_f=_positive(_want(block, path, "zeta_f", float, default=cls.zeta_f),
                             f"{path}.zeta_f"),
            omega_s=_positive(_want(block, path, "omega_s", float, default=cls.omega_s),
                              f"{path}.omega_s"),
            zeta_s=_positive(_want(block, path, "zeta_s", float, default=cls.zeta_s),
                             f"{path}.zeta_s"),
            n_terms=n_terms,
            omega_max=_positive(_want(block, path, "omega_max", float, default=cls.omega_max),
                                f"{path}.omega_max"),
            duration=_positive(_want(block, path, "duration", float, default=cls.duration),
                               f"{path}.duration"),
            dt=_positive(_want(block, path, "dt", float, default=cls.dt), f"{path}.dt"),
            modulation=mod,
        )
        if cfg.dt > math.pi / cfg.omega_max:
            raise ConfigError(f"{path}.dt: must resolve omega_max (dt <= pi / omega_max)")
        steps = cfg.duration / cfg.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"{path}.duration: must be an integer number of dt steps")
        return cfg

    def to_dict(self) -> dict:
        return {
            "s0": self.s0, "omega_f": self.omega_f, "zeta_f": self.zeta_f,
            "omega_s": self.omega_s, "zeta_s": self.zeta_s,
            "n_terms": self.n_terms, "omega_max": self.omega_max,
            "duration": self.duration, "dt": self.dt,
            "modulation": dict(self.modulation) if self.modulation else None,
        }

    def build_basis(self) -> SpectralBasis:
        psd = GroundMotionPsd(s0=self.s0, omega_f=self.omega_f, zeta_f=self.zeta_f,
                              omega_s=self.omega_s, zeta_s=self.zeta_s)
        return discretize_psd(psd, n_terms=self.n_terms, omega_max=self.omega_max,
                              duration=self.duration, dt=self.dt)

    def build_modulation(self) -> Modulation | None:
        if self.modulation is None:
            return None
        return Modulation(t_rise=self.modulation["t_rise"],
                          t_flat=self.modulation["t_flat"])


_MODEL_FIELDS = {
    "cubic": ("damping", "cubic", "linear"),
    "boucwen": ("omega_n", "zeta_n", "alpha", "exponent", "yield_disp", "amp"),
    "shear_building": ("stories", "periods", "yield_drift", "post_yield_ratio",
                       "damping_ratio"),
}


@dataclass(frozen=True)
class ModelConfig:
    type: str
    params: dict

    @classmethod
    def from_dict(cls, block: dict, path: str = "model") -> "ModelConfig":
        kind = _want(block, path, "type", str)
        if kind not in MODEL_TYPES:
            raise ConfigError(f"{path}.type: expected one of {MODEL_TYPES}")
        _no_extras(block, path, ("type",) + _MODEL_FIELDS[kind])
        if kind == "cubic":
            params = {
                "damping": _positive(_want(block, path, "damping", float, default=1.0),
                                     f"{path}.damping"),
                "cubic": _want(block, path, "cubic", float, default=1.0),
                "linear": _want(block, path, "linear", float, default=0.0),
            }
            if params["cubic"] < 0 or params["linear"] < 0:
                raise ConfigError(f"{path}.cubic: stiffness terms must be >= 0")
            if params["cubic"] == 0.0 and params["linear"] == 0.0:
                raise ConfigError(f"{path}.cubic: cubic and linear cannot both vanish")
        elif kind == "boucwen":
            params = {
                "omega_n": _positive(_want(block, path, "omega_n", float), f"{path}.omega_n"),
                "zeta_n": _want(block, path, "zeta_n", float),
                "alpha": _want(block, path, "alpha", float),
                "exponent": _want(block, path, "exponent", float, default=5.0),
                "yield_disp": _positive(_want(block, path, "yield_disp", float),
                                        f"{path}.yield_disp"),
                "amp": _positive(_want(block, path, "amp", float, default=1.0),
                                 f"{path}.amp"),
            }
            if not 0.0 <= params["zeta_n"] < 1.0:
                raise ConfigError(f"{path}.zeta_n: must lie in [0, 1)")
            if not 0.0 <= params["alpha"] <= 1.0:
                raise ConfigError(f"{path}.alpha: must lie in [0, 1]")
            if params["exponent"] < 1.0:
                raise ConfigError(f"{path}.exponent: must be >= 1")
        else:
            periods = _want(block, path, "periods", list, default=[0.58, 0.24])
            if len(periods) != 2 or not all(
                    isinstance(p, (int, float)) and not isinstance(p, bool) for p in periods):
                raise ConfigError(f"{path}.periods: expected two numbers")
            params = {
                "stories": _positive(_want(block, path, "stories", int, default=6),
                                     f"{path}.stories"),
                "periods": [float(periods[0]), float(periods[1])],
                "yield_drift": _positive(
                    _want(block, path, "yield_drift", float, default=0.01),
                    f"{path}.yield_drift"),
                "post_yield_ratio": _want(block, path, "post_yield_ratio", float,
                                          default=0.1),
                "damping_ratio": _positive(
                    _want(block, path, "damping_ratio", float, default=0.05),
                    f"{path}.damping_ratio"),
            }
            if not 0.0 <= params["post_yield_ratio"] < 1.0:
                raise ConfigError(f"{path}.post_yield_ratio: must lie in [0, 1)")
            if not params["periods"][0] > params["periods"][1] > 0.0:
                raise ConfigError(f"{path}.periods: must be positive and decreasing")
        return cls(type=kind, params=params)

    def to_dict(self) -> dict:
        return {"type": self.type, **self.params}

    def build(self):
        p = self.params
        if self.type == "cubic":
            return CubicOscillator(damping=p["damping"], cubic=p["cubic"],
                                   linear=p["linear"])
        if self.type == "boucwen":
            return BoucWenOscillator.from_yield(
                omega_n=p["omega_n"], zeta_n=p["zeta_n"], alpha=p["alpha"],
                exponent=p["exponent"], yield_disp=p["yield_disp"], amp=p["amp"])
        return calibrate_shear_building(
            stories=p["stories"], periods=tuple(p["periods"]),
            yield_drift=p["yield_drift"], post_yield_ratio=p["post_yield_ratio"],
            damping_ratio=p["damping_ratio"])


@dataclass(frozen=True)
class QoiConfig:
    kind: str = "peak_abs"
    threshold: float | None = None
    story: int = 1

    @classmethod
    def from_dict(cls, block: dict, path: str = "qoi") -> "QoiConfig":
        _no_extras(block, path, ("kind", "threshold", "story"))
        kind = _want(block, path, "kind", str, default="peak_abs")
        if kind not in ("peak_abs", "exceedance"):
            raise ConfigError(f"{path}.kind: expected 'peak_abs' or 'exceedance'")
        threshold = _want(block, path, "threshold", float, default=None)
        if kind == "exceedance":
            if threshold is None:
                raise ConfigError(f"{path}.threshold: required for exceedance")
            _positive(threshold, f"{path}.threshold")
        elif threshold is not None:
            raise ConfigError(f"{path}.threshold: only allowed for exceedance")
        story = _want(block, path, "story", int, default=1)
        if story < 1:
            raise ConfigError(f"{path}.story: must be >= 1")
        return cls(kind=kind, threshold=threshold, story=story)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "threshold": self.threshold, "story": self.story}

    def build(self) -> QoiSpec:
        return QoiSpec(kind=self.kind, threshold=self.threshold, story=self.story)


_BUDGET_FIELDS = ("n_pilot", "multistart", "max_iterations", "dof_max",
                  "chain_samples", "chain_burn_in", "n_chains", "max_fit_samples")


@dataclass(frozen=True)
class MethodConfig:
    name: str
    objective: str | None
    target_cov: float
    max_nonlinear: int
    optimizer: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, block: dict, path: str = "method") -> "MethodConfig":
        _no_extras(block, path, ("name", "objective", "target_cov", "max_nonlinear",
                                 "optimizer"))
        name = _want(block, path, "name", str)
        if name not in METHODS:
            raise ConfigError(f"{path}.name: expected one of {METHODS}")
        allowed = OBJECTIVES[name]
        objective = _want(block, path, "objective", str,
                          default=allowed[0] if allowed else None)
        if allowed and objective not in allowed:
            raise ConfigError(f"{path}.objective: {name} supports {allowed}")
        if not allowed and objective is not None:
            raise ConfigError(f"{path}.objective: not applicable to mcs")
        target_cov = _want(block, path, "target_cov", float,
                           default=0.1 if name in RARE_METHODS else 0.01)
        if not 0.0 < target_cov < 1.0:
            raise ConfigError(f"{path}.target_cov: must lie in (0, 1)")
        max_nonlinear = _want(block, path, "max_nonlinear", int,
                              default=2_000_000 if name == "mcs" else 20_000)
        _positive(max_nonlinear, f"{path}.max_nonlinear")
        opt = _want(block, path, "optimizer", dict, default={})
        _no_extras(opt, f"{path}.optimizer", _BUDGET_FIELDS)
        opt = {k: _positive(_want(opt, f"{path}.optimizer", k, int), f"{path}.optimizer.{k}")
               for k in _BUDGET_FIELDS if k in opt}
        return cls(name=name, objective=objective, target_cov=target_cov,
                   max_nonlinear=max_nonlinear, optimizer=opt)

    def to_dict(self) -> dict:
        return {"name": self.name, "objective": self.objective,
                "target_cov": self.target_cov, "max_nonlinear": self.max_nonlinear,
                "optimizer": dict(self.optimizer)}

    def build_budget(self) -> OptimizationBudget:
        return OptimizationBudget(**self.optimizer)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    excitation: ExcitationConfig
    model: ModelConfig
    qoi: QoiConfig
    method: MethodConfig
    output: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object at top level")
        _no_extras(raw, "config", ("seed", "excitation", "model", "qoi", "method",
                                   "output"))
        for key in ("seed", "excitation", "model", "qoi", "method"):
            if key not in raw:
                raise ConfigError(f"config.{key}: required block is missing")
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("config.seed: expected a non-negative integer")
        output = raw.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("config.output: expected a string path")
        cfg = cls(
            seed=seed,
            excitation=ExcitationConfig.from_dict(
                _want(raw, "config", "excitation", dict)),
            model=ModelConfig.from_dict(_want(raw, "config", "model", dict)),
            qoi=QoiConfig.from_dict(_want(raw, "config", "qoi", dict)),
            method=MethodConfig.from_dict(_want(raw, "config", "method", dict)),
            output=output,
        )
        if cfg.method.name in RARE_METHODS and cfg.qoi.kind != "exceedance":
            raise ConfigError("method.name: rare-event methods require qoi.kind "
                              "= 'exceedance'")
        if cfg.method.name in ("acv", "ais") and cfg.qoi.kind != "peak_abs":
            raise ConfigError("method.name: mean-response methods require qoi.kind "
                              "= 'peak_abs'")
        if cfg.qoi.story > 1 and cfg.model.type != "shear_building":
            raise ConfigError("qoi.story: story > 1 needs a shear_building model")
        if cfg.model.type == "shear_building" and \
                cfg.qoi.story > cfg.model.params["stories"]:
            raise ConfigError("qoi.story: exceeds the model's story count")
        return cfg

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "excitation": self.excitation.to_dict(),
            "model": self.model.to_dict(),
            "qoi": self.qoi.to_dict(),
            "method": self.method.to_dict(),
            "output": self.output,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=False)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def build_response(self) -> NonlinearResponse:
        return NonlinearResponse(
            self.model.build(),
            self.excitation.build_basis(),
            modulation=self.excitation.build_modulation(),
            story=self.qoi.story,
        )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}")
    return ExperimentConfig.from_dict(raw)
