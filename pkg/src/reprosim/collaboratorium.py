"""Two labs, with and without information flow between them.

In a *closed* run Lab 2 picks its design from a finite configuration space
with no knowledge of Lab 1, so a match between the labs happens only by
chance, and Lab 2 can never itself judge whether it reproduced Lab 1. An
external observer who sees both records can still chain the two updates.

In an *open* run Lab 1 transmits components to Lab 2. When the result is
among them Lab 2 starts from Lab 1's posterior and can make the
reproduction judgment itself.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ._exact import as_fraction
from .estimators import (
    BetaParams,
    EstimatorSpec,
    Verdict,
    confirmation_verdict,
    effective_counts,
    posterior_update,
)
from .experiment import (
    BackgroundKnowledge,
    ComponentKind,
    ExperimentRecord,
    MethodSpec,
    derive_seed,
    run_experiment,
)
from .models import ProbabilityModel, SamplingMode, TrueMechanism, model_to_dict
from .reproducibility import (
    ConfirmationDirection,
    EpistemicUnavailabilityError,
    EstimateEquivalence,
    ReproductionCriterion,
    _same_estimate,
    is_reproduced,
    transmit,
)


class IncompleteRecordError(ValueError):
    pass


class Mode(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


class EpistemicStatus(str, enum.Enum):
    ESTABLISHED_BY_LAB2 = "established-by-lab2"
    ESTABLISHED_BY_EXTERNAL_OBSERVER = "established-by-external-observer"
    NOT_REPRODUCED = "not-reproduced"
    UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class LabConfig:
    model: ProbabilityModel
    method: MethodSpec
    prior: BetaParams = BetaParams(1, 1)

    def to_dict(self) -> dict:
        return {
            "model": model_to_dict(self.model),
            "method": self.method.to_dict(),
            "prior": self.prior.to_dict(),
        }


@dataclass(frozen=True)
class Lab:
    id: str
    knowledge: BackgroundKnowledge
    config: LabConfig

    @classmethod
    def from_record(cls, record: ExperimentRecord) -> "Lab":
        config = LabConfig(record.model, record.method, record.knowledge.prior)
        return cls(record.id, record.knowledge, config)


class ConfigurationSpace:
    """A finite, ordered set of lab configurations drawn from uniformly."""

    def __init__(self, configs: Iterable[LabConfig]):
        self.configs = tuple(configs)
        if not self.configs:
            raise ValueError("configuration space is empty")
        if len(set(self.configs)) != len(self.configs):
            raise ValueError("configuration space lists the same configuration twice")

    @classmethod
    def product(
        cls,
        models: Sequence[ProbabilityModel],
        estimators: Sequence[EstimatorSpec],
        priors: Sequence[BetaParams] = (BetaParams(1, 1),),
        sampling: SamplingMode = SamplingMode.WITH_REPLACEMENT,
    ) -> "ConfigurationSpace":
        """Every model (with its own stopping rule) x estimator x prior."""
        return cls(
            LabConfig(m, MethodSpec(m.stopping_rule(), e, sampling), p)
            for m, e, p in itertools.product(models, estimators, priors)
        )

    def __len__(self) -> int:
        return len(self.configs)

    def __contains__(self, config) -> bool:
        return config in self.configs

    def __iter__(self):
        return iter(self.configs)

    def draw(self, rng: np.random.Generator) -> LabConfig:
        return self.configs[int(rng.integers(len(self.configs)))]

    def match_probability(self, config: LabConfig) -> Fraction:
        return Fraction(sum(c == config for c in self.configs), len(self.configs))

    def to_dict(self) -> list:
        return [c.to_dict() for c in self.configs]


@dataclass(frozen=True)
class ObserverVerdict:
    connected_verdict: bool
    chained_posterior: BetaParams
    intermediate_posterior: BetaParams
    theta_star: Fraction | None
    verdict_1: Verdict | None
    verdict_2: Verdict | None

    @property
    def status(self) -> EpistemicStatus:
        if self.connected_verdict:
            return EpistemicStatus.ESTABLISHED_BY_EXTERNAL_OBSERVER
        return EpistemicStatus.NOT_REPRODUCED

    def to_dict(self) -> dict:
        return {
            "connected_verdict": self.connected_verdict,
            "status": self.status.value,
            "chained_posterior": self.chained_posterior.to_dict(),
            "intermediate_posterior": self.intermediate_posterior.to_dict(),
            "theta_star": None if self.theta_star is None else str(self.theta_star),
            "verdict_1": None if self.verdict_1 is None else self.verdict_1.value,
            "verdict_2": None if self.verdict_2 is None else self.verdict_2.value,
        }


def _counts(record: ExperimentRecord) -> tuple[int, int]:
    if record is None or record.data is None or record.data.structure is None:
        raise IncompleteRecordError("record carries no data structure counts")
    return effective_counts(record.data, record.method.missing_policy)


def external_observer(
    lab1_record: ExperimentRecord,
    lab2_record: ExperimentRecord,
    observer_prior: BetaParams | None = None,
    criterion: ReproductionCriterion = ConfirmationDirection(),
) -> ObserverVerdict:
    """Chain both labs' counts through one prior and judge the connection.

    Only the counts in each data structure are used, never the ordered
    values. The observer's prior defaults to Lab 1's declared prior, and its
    evaluation point to the criterion's ``theta_star`` or else Lab 1's.
    """
    b1, w1 = _counts(lab1_record)
    b2, w2 = _counts(lab2_record)
    prior = observer_prior or lab1_record.knowledge.prior
    middle = posterior_update(prior, b1, w1)
    chained = posterior_update(middle, b2, w2)

    if isinstance(criterion, EstimateEquivalence):
        same = _same_estimate(
            lab1_record.result.estimate.value,
            lab2_record.result.estimate.value,
            criterion.tolerance,
        )
        return ObserverVerdict(same, chained, middle, None, None, None)

    theta = criterion.theta_star or lab1_record.result.theta_star
    if theta is None:
        return ObserverVerdict(False, chained, middle, None, None, None)
    v1 = confirmation_verdict(prior, middle, theta)
    v2 = confirmation_verdict(middle, chained, theta)
    connected = v1 == v2 and v1 in (Verdict.CONFIRMS, Verdict.DISCONFIRMS)
    return ObserverVerdict(connected, chained, middle, as_fraction(theta), v1, v2)


@dataclass(frozen=True)
class CollaboratoriumReport:
    mode: Mode
    lab_records: tuple[ExperimentRecord, ExperimentRecord]
    configs_matched: bool
    epistemic_reproduction: EpistemicStatus
    chained_posterior: BetaParams
    explanation: str = ""
    chance_match_probability: Fraction | None = None
    chance_match_estimate: float | None = None
    chance_match_se: float | None = None
    observer: ObserverVerdict | None = None
    space: ConfigurationSpace | None = None

    @property
    def labs(self) -> tuple[Lab, Lab]:
        return tuple(Lab.from_record(r) for r in self.lab_records)

    def to_dict(self) -> dict:
        p = self.chance_match_probability
        return {
            "mode": self.mode.value,
            "lab_records": [r.to_dict() for r in self.lab_records],
            "configs_matched": self.configs_matched,
            "epistemic_reproduction": self.epistemic_reproduction.value,
            "explanation": self.explanation,
            "chained_posterior": self.chained_posterior.to_dict(),
            "chained_posterior_mean": str(self.chained_posterior.mean),
            "posterior_means": [str(r.result.prior.mean) for r in self.lab_records[:1]]
            + [str(r.result.posterior.mean) for r in self.lab_records],
            "chance_match_probability": None if p is None else str(p),
            "chance_match_estimate": self.chance_match_estimate,
            "chance_match_se": self.chance_match_se,
            "observer": None if self.observer is None else self.observer.to_dict(),
            "space": None if self.space is None else self.space.to_dict(),
        }


def _run_lab(mechanism, config: LabConfig, knowledge, seed, lab_id, forced, theta_star):
    return run_experiment(
        mechanism,
        config.model,
        config.method,
        knowledge,
        seed,
        experiment_id=lab_id,
        forced_values=forced,
        theta_star=theta_star,
    )


def run_closed(
    mechanism: TrueMechanism,
    space: ConfigurationSpace,
    lab1_config: LabConfig,
    seed: int,
    *,
    forced_values: tuple = (None, None),
    criterion: ReproductionCriterion = ConfirmationDirection(),
    observer_prior: BetaParams | None = None,
    theta_star=None,
    mc_draws: int = 0,
) -> CollaboratoriumReport:
    """Two isolated labs; Lab 2's design is a uniform draw from ``space``."""
    if lab1_config not in space:
        raise ValueError("Lab 1's configuration is not in the configuration space")
    lab2_config = space.draw(np.random.default_rng(derive_seed(seed, 3)))
    lab1 = _run_lab(
        mechanism,
        lab1_config,
        BackgroundKnowledge(lab1_config.prior),
        derive_seed(seed, 1),
        "lab1",
        forced_values[0],
        theta_star,
    )
    lab2 = _run_lab(
        mechanism,
        lab2_config,
        BackgroundKnowledge(lab2_config.prior),
        derive_seed(seed, 2),
        "lab2",
        forced_values[1],
        theta_star,
    )
    try:
        is_reproduced(lab1.result, lab2.result, criterion, lab2.knowledge)
    except EpistemicUnavailabilityError as exc:
        explanation = f"lab 2 cannot judge reproduction: {exc}"
    else:  # pragma: no cover
        raise AssertionError("a closed lab 2 must not hold Lab 1's result")

    observer = external_observer(lab1, lab2, observer_prior, criterion)
    estimate = se = None
    if mc_draws > 0:
        rng = np.random.default_rng(derive_seed(seed, 4))
        hits = sum(space.draw(rng) == lab1_config for _ in range(mc_draws))
        estimate = hits / mc_draws
        se = math.sqrt(estimate * (1 - estimate) / mc_draws)
    return CollaboratoriumReport(
        Mode.CLOSED,
        (lab1, lab2),
        lab2_config == lab1_config,
        EpistemicStatus.UNAVAILABLE,
        observer.chained_posterior,
        explanation,
        space.match_probability(lab1_config),
        estimate,
        se,
        observer,
        space,
    )


def run_open(
    mechanism: TrueMechanism,
    lab1_config: LabConfig,
    transmitted_components: Iterable[ComponentKind | str],
    seed: int,
    *,
    forced_values: tuple = (None, None),
    criterion: ReproductionCriterion = ConfirmationDirection(),
    theta_star=None,
) -> CollaboratoriumReport:
    """Lab 1 reports to Lab 2, which builds on what it receives.

    When the result is transmitted, Lab 2's prior is Lab 1's posterior.
    Otherwise Lab 2 starts from Lab 1's declared prior and the report is
    downgraded to ``UNAVAILABLE``.
    """
    kinds = {ComponentKind(k) for k in transmitted_components}
    lab1 = _run_lab(
        mechanism,
        lab1_config,
        BackgroundKnowledge(lab1_config.prior),
        derive_seed(seed, 1),
        "lab1",
        forced_values[0],
        theta_star,
    )
    got_result = ComponentKind.RESULT in kinds
    prior2 = lab1.result.posterior if got_result else lab1_config.prior
    knowledge2 = BackgroundKnowledge(prior2, transmit(lab1, kinds))
    lab2_config = LabConfig(lab1_config.model, lab1_config.method, prior2)
    theta2 = lab1.result.theta_star if got_result else theta_star
    lab2 = _run_lab(
        mechanism, lab2_config, knowledge2, derive_seed(seed, 2), "lab2", forced_values[1], theta2
    )
    try:
        ok = is_reproduced(lab1.result, lab2.result, criterion, knowledge2)
    except EpistemicUnavailabilityError as exc:
        status = EpistemicStatus.UNAVAILABLE
        explanation = f"result not transmitted, so lab 2 cannot judge reproduction: {exc}"
    else:
        status = EpistemicStatus.ESTABLISHED_BY_LAB2 if ok else EpistemicStatus.NOT_REPRODUCED
        explanation = "lab 2 judged reproduction from the transmitted result"
    return CollaboratoriumReport(
        Mode.OPEN,
        (lab1, lab2),
        (lab1.model, lab1.method) == (lab2.model, lab2.method),
        status,
        lab2.result.posterior,
        explanation,
    )
