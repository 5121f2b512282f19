"""Scenario configuration: YAML in, validated library objects out.

Validation is fail-closed: unknown keys, wrong types and structurally
inconsistent designs are all rejected before anything runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from ._exact import as_fraction
from .collaboratorium import ConfigurationSpace, LabConfig
from .estimators import BetaParams, EstimatorSpec, MissingPolicy, estimator_from_dict
from .experiment import ComponentKind, MethodSpec
from .models import (
    ProbabilityModel,
    SamplingMode,
    TrueMechanism,
    check_design,
    model_from_dict,
    parse_sequence,
    rule_from_dict,
)
from .reproducibility import (
    ConfirmationDirection,
    Duplicate,
    EstimateEquivalence,
    Independent,
    Match,
    PreMethod,
    ReplicationSpec,
    ReproductionCriterion,
)

KINDS = ("run", "replicate", "repro-rate", "collaboratorium")


class ConfigError(ValueError):
    pass


def _fields(block: Any, where: str, required=(), optional=()) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    unknown = set(block) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in block]
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    return block


def _number(x, where: str) -> Fraction:
    try:
        return as_fraction(x)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: not a number: {x!r}") from None


def _int(x, where: str, minimum: int | None = None) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"{where}: expected an integer, got {x!r}")
    if minimum is not None and x < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {x}")
    return x


def _wrap(fn, where: str, *args):
    try:
        return fn(*args)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# -- blocks -----------------------------------------------------------------------


def parse_mechanism(block) -> TrueMechanism:
    b = _fields(block, "mechanism", optional=("pi", "population", "black"))
    if "pi" in b:
        if "population" in b or "black" in b:
            raise ConfigError("mechanism: give either pi or population/black, not both")
        return _wrap(TrueMechanism.infinite, "mechanism", _number(b["pi"], "mechanism.pi"))
    if "population" in b and "black" in b:
        return _wrap(
            TrueMechanism.finite,
            "mechanism",
            _int(b["black"], "mechanism.black"),
            _int(b["population"], "mechanism.population"),
        )
    raise ConfigError("mechanism: needs pi, or population and black")


def parse_prior(block, where: str) -> BetaParams:
    b = _fields(block, where, required=("alpha", "beta"))
    return _wrap(BetaParams, where, _number(b["alpha"], where), _number(b["beta"], where))


def _enum(cls, value, where: str):
    try:
        return cls(value)
    except ValueError:
        raise ConfigError(
            f"{where}: invalid value {value!r}; expected one of {[m.value for m in cls]}"
        ) from None


def parse_model(block, where: str) -> ProbabilityModel:
    _fields(block, where, optional=("family", "n", "w", "N"))
    return _wrap(model_from_dict, where, block)


def parse_rule(block, where: str):
    _fields(block, where, optional=("kind", "n", "w"))
    return _wrap(rule_from_dict, where, block)


def parse_estimator(block, where: str) -> EstimatorSpec:
    b = _fields(block, where, required=("kind",), optional=("prior", "c"))
    return _wrap(estimator_from_dict, where, b)


def parse_theta(x, where: str):
    if x is None:
        return None
    theta = _number(x, where)
    if not 0 < theta < 1:
        raise ConfigError(f"{where}: must lie strictly inside (0, 1)")
    return theta


@dataclass(frozen=True)
class ExperimentConfig:
    model: ProbabilityModel
    method: MethodSpec
    prior: BetaParams
    theta_star: Fraction | None = None
    forced_values: tuple | None = None

    def lab_config(self) -> LabConfig:
        return LabConfig(self.model, self.method, self.prior)


_EXPERIMENT_KEYS = (
    "model",
    "stopping_rule",
    "estimator",
    "sampling",
    "missing_rate",
    "missing_policy",
    "prior",
    "theta_star",
    "forced_values",
)


def parse_experiment(block, where: str, mechanism: TrueMechanism | None = None) -> ExperimentConfig:
    b = _fields(block, where, required=("model", "stopping_rule", "estimator"), optional=_EXPERIMENT_KEYS)
    model = parse_model(b["model"], f"{where}.model")
    method = _wrap(
        MethodSpec,
        where,
        parse_rule(b["stopping_rule"], f"{where}.stopping_rule"),
        parse_estimator(b["estimator"], f"{where}.estimator"),
        _enum(SamplingMode, b.get("sampling", "with-replacement"), f"{where}.sampling"),
        float(_number(b.get("missing_rate", 0), f"{where}.missing_rate")),
        _enum(MissingPolicy, b.get("missing_policy", "exclude-missing"), f"{where}.missing_policy"),
    )
    try:
        check_design(model, method.stopping_rule, method.sampling, mechanism)
    except ValueError as exc:
        raise ConfigError(f"{where}: model/stopping_rule mismatch: {exc}") from None
    prior = parse_prior(b["prior"], f"{where}.prior") if "prior" in b else BetaParams(1, 1)
    forced = b.get("forced_values")
    if forced is not None:
        forced = _wrap(parse_sequence, f"{where}.forced_values", str(forced))
    return ExperimentConfig(model, method, prior, parse_theta(b.get("theta_star"), f"{where}.theta_star"), forced)


def parse_criterion(block) -> ReproductionCriterion:
    b = _fields(block, "criterion", required=("kind",), optional=("theta_star", "tolerance"))
    if b["kind"] == "confirmation-direction":
        if "tolerance" in b:
            raise ConfigError("criterion: tolerance is not used by confirmation-direction")
        return ConfirmationDirection(parse_theta(b.get("theta_star"), "criterion.theta_star"))
    if b["kind"] == "estimate-equivalence":
        if "theta_star" in b:
            raise ConfigError("criterion: theta_star is not used by estimate-equivalence")
        tol = _number(b.get("tolerance", 0), "criterion.tolerance")
        return _wrap(EstimateEquivalence, "criterion", tol)
    raise ConfigError(f"criterion: unknown kind {b['kind']!r}")


def _parse_pre(block, where):
    b = _fields(block, where, required=("stopping_rule",), optional=("sampling", "missing_rate"))
    return PreMethod(
        parse_rule(b["stopping_rule"], f"{where}.stopping_rule"),
        _enum(SamplingMode, b.get("sampling", "with-replacement"), f"{where}.sampling"),
        float(_number(b.get("missing_rate", 0), f"{where}.missing_rate")),
    )


def _parse_policy(x, where):
    return _enum(MissingPolicy, x, where)


_PAYLOAD_PARSERS = {
    "model": parse_model,
    "s_pre": _parse_pre,
    "s_post": parse_estimator,
    "d_s": _parse_policy,
}


def parse_directive(x, component: str):
    where = f"replication.{component}"
    if x == "duplicate":
        return Duplicate()
    parse = _PAYLOAD_PARSERS[component]
    if isinstance(x, dict) and len(x) == 1:
        (key, val), = x.items()
        if key == "match":
            return Match(parse(val, f"{where}.match"))
        if key == "independent":
            if not isinstance(val, list) or not val:
                raise ConfigError(f"{where}.independent: expected a non-empty list")
            return Independent(tuple(parse(v, f"{where}.independent[{i}]") for i, v in enumerate(val)))
    raise ConfigError(f"{where}: expected 'duplicate', {{match: ...}} or {{independent: [...]}}")


def parse_replication(block) -> ReplicationSpec:
    b = _fields(
        block,
        "replication",
        optional=("model", "s_pre", "s_post", "d_s", "transmitted_result", "prior", "forced_values"),
    )
    kwargs = {c: parse_directive(b.get(c, "duplicate"), c) for c in _PAYLOAD_PARSERS}
    transmitted = b.get("transmitted_result", True)
    if not isinstance(transmitted, bool):
        raise ConfigError("replication.transmitted_result: expected true or false")
    prior = parse_prior(b["prior"], "replication.prior") if "prior" in b else None
    return ReplicationSpec(transmitted_result=transmitted, prior=prior, **kwargs)


@dataclass(frozen=True)
class CollabConfig:
    mode: str
    lab1: ExperimentConfig
    lab2_forced_values: tuple | None = None
    space: ConfigurationSpace | None = None
    transmitted: tuple = ()
    observer_prior: BetaParams | None = None
    mc_draws: int = 0


def parse_collaboratorium(block, mechanism) -> CollabConfig:
    b = _fields(
        block,
        "collaboratorium",
        required=("mode", "lab1"),
        optional=("lab2_forced_values", "space", "transmitted", "observer_prior", "mc_draws"),
    )
    mode = b["mode"]
    if mode not in ("open", "closed"):
        raise ConfigError(f"collaboratorium.mode: expected open or closed, got {mode!r}")
    lab1 = parse_experiment(b["lab1"], "collaboratorium.lab1", mechanism)
    forced2 = b.get("lab2_forced_values")
    if forced2 is not None:
        forced2 = _wrap(parse_sequence, "collaboratorium.lab2_forced_values", str(forced2))
    space = None
    transmitted: tuple = ()
    if mode == "closed":
        if "transmitted" in b:
            raise ConfigError("collaboratorium.transmitted: closed labs transmit nothing")
        space = parse_space(b.get("space"), lab1, mechanism)
        if lab1.lab_config() not in space:
            raise ConfigError("collaboratorium.space: lab1's configuration is not in the space")
    else:
        if "space" in b or "mc_draws" in b:
            raise ConfigError("collaboratorium: space/mc_draws only apply to closed mode")
        names = b.get("transmitted", [k.value for k in ComponentKind if k is not ComponentKind.REPLICATION_OF])
        if not isinstance(names, list):
            raise ConfigError("collaboratorium.transmitted: expected a list")
        transmitted = tuple(_enum(ComponentKind, n, "collaboratorium.transmitted") for n in names)
    observer = parse_prior(b["observer_prior"], "collaboratorium.observer_prior") if "observer_prior" in b else None
    return CollabConfig(
        mode,
        lab1,
        forced2,
        space,
        transmitted,
        observer,
        _int(b.get("mc_draws", 0), "collaboratorium.mc_draws", 0),
    )


def parse_space(block, lab1: ExperimentConfig, mechanism) -> ConfigurationSpace:
    if block is None:
        return ConfigurationSpace([lab1.lab_config()])
    if isinstance(block, list):
        configs = [
            parse_experiment(e, f"collaboratorium.space[{i}]", mechanism).lab_config()
            for i, e in enumerate(block)
        ]
        return _wrap(ConfigurationSpace, "collaboratorium.space", configs)
    b = _fields(block, "collaboratorium.space", required=("models", "estimators"), optional=("priors",))
    models = [parse_model(m, f"collaboratorium.space.models[{i}]") for i, m in enumerate(b["models"])]
    ests = [parse_estimator(e, f"collaboratorium.space.estimators[{i}]") for i, e in enumerate(b["estimators"])]
    priors = [
        parse_prior(p, f"collaboratorium.space.priors[{i}]") for i, p in enumerate(b.get("priors", [{"alpha": 1, "beta": 1}]))
    ]
    return _wrap(ConfigurationSpace.product, "collaboratorium.space", models, ests, priors, lab1.method.sampling)


# -- whole scenarios -----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    master_seed: int
    raw: dict
    mechanism: TrueMechanism | None = None
    experiment: ExperimentConfig | None = None
    replication: ReplicationSpec | None = None
    criterion: ReproductionCriterion | None = None
    pairs: int | None = None
    collaboratorium: CollabConfig | None = None
    original_record: str | None = None
    replication_forced_values: tuple | None = None
    output_dir: str | None = None
    extra: dict = field(default_factory=dict)


_TOP = {
    "run": (("kind", "mechanism", "experiment"), ("master_seed", "output_dir", "description")),
    "replicate": (
        ("kind", "mechanism", "replication"),
        ("experiment", "original_record", "criterion", "master_seed", "output_dir", "description"),
    ),
    "repro-rate": (
        ("kind", "mechanism", "experiment", "pairs"),
        ("replication", "criterion", "master_seed", "output_dir", "description"),
    ),
    "collaboratorium": (
        ("kind", "mechanism", "collaboratorium"),
        ("criterion", "master_seed", "output_dir", "description"),
    ),
}


def parse_scenario(raw: Any) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario: expected a mapping at the top level")
    kind = raw.get("kind")
    if kind not in _TOP:
        raise ConfigError(f"kind: expected one of {list(KINDS)}, got {kind!r}")
    required, optional = _TOP[kind]
    _fields(raw, "scenario", required, optional)
    seed = _int(raw.get("master_seed", 0), "master_seed", 0)
    if seed >= 2**64:
        raise ConfigError("master_seed: must fit in 64 bits")
    mechanism = parse_mechanism(raw["mechanism"])
    out = raw.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir: expected a string")
    criterion = parse_criterion(raw["criterion"]) if "criterion" in raw else ConfirmationDirection()
    common = dict(kind=kind, master_seed=seed, raw=raw, mechanism=mechanism, criterion=criterion, output_dir=out)

    if kind == "run":
        return ScenarioConfig(**common, experiment=parse_experiment(raw["experiment"], "experiment", mechanism))
    if kind == "replicate":
        if ("experiment" in raw) == ("original_record" in raw):
            raise ConfigError("replicate: give exactly one of experiment or original_record")
        exp = parse_experiment(raw["experiment"], "experiment", mechanism) if "experiment" in raw else None
        rec = raw.get("original_record")
        if rec is not None and not isinstance(rec, str):
            raise ConfigError("original_record: expected a path string")
        forced = raw["replication"].get("forced_values") if isinstance(raw["replication"], dict) else None
        if forced is not None:
            forced = _wrap(parse_sequence, "replication.forced_values", str(forced))
        return ScenarioConfig(
            **common,
            experiment=exp,
            replication=parse_replication(raw["replication"]),
            original_record=rec,
            replication_forced_values=forced,
        )
    if kind == "repro-rate":
        exp = parse_experiment(raw["experiment"], "experiment", mechanism)
        if exp.forced_values is not None:
            raise ConfigError("experiment.forced_values: not allowed for repro-rate")
        if "forced_values" in (raw.get("replication") or {}):
            raise ConfigError("replication.forced_values: not allowed for repro-rate")
        return ScenarioConfig(
            **common,
            experiment=exp,
            replication=parse_replication(raw.get("replication", {})),
            pairs=_int(raw["pairs"], "pairs", 1),
        )
    return ScenarioConfig(**common, collaboratorium=parse_collaboratorium(raw["collaboratorium"], mechanism))


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_scenario(raw)


def shipped_scenarios() -> list[str]:
    files = resources.files("reprosim") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in files.iterdir() if p.name.endswith(".yaml"))


def shipped_scenario_path(name: str):
    # "figure2.open" and "figure2-open" name the same fixture
    path = resources.files("reprosim") / "scenarios" / f"{name.replace('.', '-')}.yaml"
    if not path.is_file():
        raise ConfigError(f"no shipped scenario {name!r}; available: {shipped_scenarios()}")
    return path
