"""Experiment configuration: YAML schema, validation, canonical form.

A configuration describes a grid of simulation cells (gammas x outcome
forms x sample sizes), the estimators to run, and the fit options shared by
every cell.  Unknown keys are rejected at every level, and a parsed config
serializes to a canonical YAML document that parses back to an equal
config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .nuisance import FitOptions
from .simulation import OUTCOME_FORMS

_KNOWN_ESTIMATORS = (
    "plug_in_admle",
    "partially_linear_admle",
    "semiparametric_intercept",
    "aipw",
)

_TOP_KEYS = {
    "dgp",
    "sample_sizes",
    "estimators",
    "replications",
    "master_seed",
    "alpha",
    "truth_draws",
    "output",
    "fit",
}
_DGP_KEYS = {"gammas", "outcome_forms", "perturbed", "noise_variance"}
_FIT_KEYS = {
    "knots_per_covariate",
    "n_folds",
    "grid_size",
    "min_lambda_ratio",
    "penalty_ratios",
    "truncation_grid",
}


def _fail(path: str, message: str) -> ConfigError:
    return ConfigError(f"config: {path}: {message}")


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(path, "expected a number")
    return float(value)


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, "expected an integer")
    return int(value)


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise _fail(path, "expected true or false")
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list) or not value:
        raise _fail(path, "expected a nonempty list")
    return value


def _check_keys(mapping: Mapping, known: set[str], path: str) -> None:
    if not isinstance(mapping, dict):
        raise _fail(path, "expected a mapping")
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise _fail(path, f"unknown keys {unknown}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated simulation grid description."""

    gammas: tuple[float, ...] = (0.5,)
    outcome_forms: tuple[str, ...] = ("linear",)
    perturbed: bool = False
    noise_variance: float = 0.5
    sample_sizes: tuple[int, ...] = (1000,)
    estimators: tuple[str, ...] = _KNOWN_ESTIMATORS
    replications: int = 500
    master_seed: int = 0
    alpha: float = 0.05
    truth_draws: int = 1_000_000
    output: str | None = None
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self) -> None:
        if not self.gammas or any(g < 0 for g in self.gammas):
            raise ConfigError("config: dgp.gammas: must be nonnegative numbers")
        bad = [f for f in self.outcome_forms if f not in OUTCOME_FORMS]
        if not self.outcome_forms or bad:
            raise ConfigError(
                f"config: dgp.outcome_forms: must be drawn from {OUTCOME_FORMS}"
            )
        if self.noise_variance <= 0:
            raise ConfigError("config: dgp.noise_variance: must be positive")
        if not self.sample_sizes or any(n < 1 for n in self.sample_sizes):
            raise ConfigError("config: sample_sizes: must be positive integers")
        bad = [e for e in self.estimators if e not in _KNOWN_ESTIMATORS]
        if not self.estimators or bad:
            raise ConfigError(
                f"config: estimators: unknown entries {bad}"
                if bad
                else "config: estimators: must be nonempty"
            )
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("config: estimators: duplicate entries")
        if self.replications < 1:
            raise ConfigError("config: replications: must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("config: alpha: must lie strictly in (0, 1)")
        if self.truth_draws < 1:
            raise ConfigError("config: truth_draws: must be positive")

    def to_mapping(self) -> dict:
        return {
            "dgp": {
                "gammas": list(self.gammas),
                "outcome_forms": list(self.outcome_forms),
                "perturbed": self.perturbed,
                "noise_variance": self.noise_variance,
            },
            "sample_sizes": list(self.sample_sizes),
            "estimators": list(self.estimators),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "alpha": self.alpha,
            "truth_draws": self.truth_draws,
            "output": self.output,
            "fit": {
                "knots_per_covariate": self.fit.knots_per_covariate,
                "n_folds": self.fit.n_folds,
                "grid_size": self.fit.grid_size,
                "min_lambda_ratio": self.fit.min_lambda_ratio,
                "penalty_ratios": list(self.fit.penalty_ratios),
                "truncation_grid": list(self.fit.truncation_grid),
            },
        }

    def canonical(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=True)


def _parse_fit(section: Mapping) -> FitOptions:
    _check_keys(section, _FIT_KEYS, "fit")
    kwargs: dict[str, Any] = {}
    if "knots_per_covariate" in section:
        value = section["knots_per_covariate"]
        kwargs["knots_per_covariate"] = (
            None if value is None else _as_int(value, "fit.knots_per_covariate")
        )
    for key in ("n_folds", "grid_size"):
        if key in section:
            kwargs[key] = _as_int(section[key], f"fit.{key}")
    if "min_lambda_ratio" in section:
        kwargs["min_lambda_ratio"] = _as_float(
            section["min_lambda_ratio"], "fit.min_lambda_ratio"
        )
    for key in ("penalty_ratios", "truncation_grid"):
        if key in section:
            items = _as_list(section[key], f"fit.{key}")
            kwargs[key] = tuple(
                _as_float(v, f"fit.{key}[{i}]") for i, v in enumerate(items)
            )
    try:
        return FitOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"config: fit: {exc}") from None


def config_from_mapping(mapping: Mapping) -> ExperimentConfig:
    _check_keys(mapping, _TOP_KEYS, "top level")
    kwargs: dict[str, Any] = {}
    if "dgp" in mapping:
        dgp = mapping["dgp"]
        _check_keys(dgp, _DGP_KEYS, "dgp")
        if "gammas" in dgp:
            items = _as_list(dgp["gammas"], "dgp.gammas")
            kwargs["gammas"] = tuple(
                _as_float(v, f"dgp.gammas[{i}]") for i, v in enumerate(items)
            )
        if "outcome_forms" in dgp:
            items = _as_list(dgp["outcome_forms"], "dgp.outcome_forms")
            for i, v in enumerate(items):
                if not isinstance(v, str):
                    raise _fail(f"dgp.outcome_forms[{i}]", "expected a string")
            kwargs["outcome_forms"] = tuple(items)
        if "perturbed" in dgp:
            kwargs["perturbed"] = _as_bool(dgp["perturbed"], "dgp.perturbed")
        if "noise_variance" in dgp:
            kwargs["noise_variance"] = _as_float(
                dgp["noise_variance"], "dgp.noise_variance"
            )
    if "sample_sizes" in mapping:
        items = _as_list(mapping["sample_sizes"], "sample_sizes")
        kwargs["sample_sizes"] = tuple(
            _as_int(v, f"sample_sizes[{i}]") for i, v in enumerate(items)
        )
    if "estimators" in mapping:
        items = _as_list(mapping["estimators"], "estimators")
        for i, v in enumerate(items):
            if not isinstance(v, str):
                raise _fail(f"estimators[{i}]", "expected a string")
        kwargs["estimators"] = tuple(items)
    for key in ("replications", "master_seed", "truth_draws"):
        if key in mapping:
            kwargs[key] = _as_int(mapping[key], key)
    if "alpha" in mapping:
        kwargs["alpha"] = _as_float(mapping["alpha"], "alpha")
    if "output" in mapping and mapping["output"] is not None:
        if not isinstance(mapping["output"], str):
            raise _fail("output", "expected a path string")
        kwargs["output"] = mapping["output"]
    if "fit" in mapping:
        kwargs["fit"] = _parse_fit(mapping["fit"])
    return ExperimentConfig(**kwargs)


def loads_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: invalid YAML: {exc}") from None
    if raw is None:
        raw = {}
    return config_from_mapping(raw)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_config(fh.read())
