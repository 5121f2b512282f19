"""Replication experiments and reproducibility rates.

A replication is built from an original :class:`ExperimentRecord` and a
:class:`ReplicationSpec` saying, for each component, whether it is copied
(:class:`Duplicate`), replaced by a compatible alternative (:class:`Match`)
or chosen without reference to the original (:class:`Independent`).
Whatever is copied or matched is recorded as transmitted in the
replication's background knowledge; the original's observed values are
never read.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence, Union

import numpy as np

from ._exact import as_fraction
from .estimators import (
    BetaParams,
    BiasedIndicator,
    EstimatorSpec,
    Verdict,
    confirmation_verdict,
)
from .experiment import (
    BackgroundKnowledge,
    ComponentKind,
    ExperimentRecord,
    MethodSpec,
    ResultRecord,
    TransmittedComponent,
    derive_seed,
    run_experiment,
)
from .models import (
    Observation,
    ProbabilityModel,
    SamplingMode,
    StoppingRule,
    TrueMechanism,
    check_design,
    model_to_dict,
)

__all__ = [
    "CompatibilityError",
    "ConfirmationDirection",
    "Duplicate",
    "EpistemicUnavailabilityError",
    "EstimateEquivalence",
    "Independent",
    "Match",
    "PairRow",
    "PreMethod",
    "ReplicationSpec",
    "ReproducibilityReport",
    "Scenario",
    "Verdict",
    "confirmation_verdict",
    "is_reproduced",
    "replicate",
    "reproducibility_rate",
    "transmit",
]

#: Absolute tolerance for "equal estimates" when either side is a float.
FLOAT_EQ_TOL = 1e-12


class CompatibilityError(ValueError):
    """A matched component does not carry the parameter the result is about."""


class EpistemicUnavailabilityError(RuntimeError):
    """The replicating side was never told the original result."""


class ReproducibilityError(RuntimeError):
    pass


# -- replication specs ------------------------------------------------------------


@dataclass(frozen=True)
class Duplicate:
    pass


@dataclass(frozen=True)
class Match:
    payload: Any


@dataclass(frozen=True)
class Independent:
    """Pick uniformly from ``options`` with the replication's own randomness."""

    options: tuple

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if not self.options:
            raise ValueError("Independent needs at least one option")


Directive = Union[Duplicate, Match, Independent]


@dataclass(frozen=True)
class PreMethod:
    """The pre-data half of a :class:`MethodSpec`."""

    stopping_rule: StoppingRule
    sampling: SamplingMode = SamplingMode.WITH_REPLACEMENT
    missing_rate: float = 0.0


@dataclass(frozen=True)
class ReplicationSpec:
    """How each component of the replication relates to the original.

    Payload types: ``model`` takes a probability model, ``s_pre`` a
    :class:`PreMethod`, ``s_post`` an estimator and ``d_s`` a
    :class:`~reprosim.estimators.MissingPolicy`. ``prior`` overrides the
    replication's starting prior; by default it copies the original's.
    """

    model: Directive = Duplicate()
    s_pre: Directive = Duplicate()
    s_post: Directive = Duplicate()
    d_s: Directive = Duplicate()
    transmitted_result: bool = True
    prior: BetaParams | None = None


@dataclass(frozen=True)
class ConfirmationDirection:
    """Both results confirm, or both disconfirm, the value ``theta_star``.

    With ``theta_star=None`` the verdicts stored on the results are used.
    """

    theta_star: Fraction | None = None

    def __post_init__(self):
        if self.theta_star is not None:
            object.__setattr__(self, "theta_star", as_fraction(self.theta_star))
            if not 0 < self.theta_star < 1:
                raise ValueError("theta_star must lie strictly inside (0, 1)")

    def to_dict(self) -> dict:
        theta = None if self.theta_star is None else str(self.theta_star)
        return {"kind": "confirmation-direction", "theta_star": theta}


@dataclass(frozen=True)
class EstimateEquivalence:
    """Estimates agree within ``tolerance`` (0 means exact equality)."""

    tolerance: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "tolerance", as_fraction(self.tolerance))
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    def to_dict(self) -> dict:
        return {"kind": "estimate-equivalence", "tolerance": str(self.tolerance)}


ReproductionCriterion = Union[ConfirmationDirection, EstimateEquivalence]


# -- transmission ----------------------------------------------------------------


def component_payload(record: ExperimentRecord, kind: ComponentKind) -> dict:
    """Plain-dict payload describing one component of ``record``.

    Built from the model, methods, data structure and results only; the
    observed values are not part of any payload.
    """
    if kind is ComponentKind.MODEL:
        return model_to_dict(record.model)
    if kind is ComponentKind.METHOD_PRE:
        return record.method.pre_dict()
    if kind is ComponentKind.METHOD_POST:
        return record.method.post_dict()
    if kind is ComponentKind.DATA_STRUCTURE:
        return record.data.structure.to_dict()
    if kind is ComponentKind.RESULT:
        return record.result.to_dict()
    return {"experiment_id": record.id}


def transmit(record: ExperimentRecord, kinds) -> tuple[TransmittedComponent, ...]:
    """Components of ``record`` to hand to another experiment.

    The replication marker is always included, so the receiving knowledge
    differs from the sender's even when nothing else is sent.
    """
    kinds = [ComponentKind(k) for k in kinds]
    order = list(ComponentKind)
    wanted = sorted(set(kinds) | {ComponentKind.REPLICATION_OF}, key=order.index)
    return tuple(TransmittedComponent(k, component_payload(record, k), record.id) for k in wanted)


def _resolve(directive: Directive, original, rng_factory):
    if isinstance(directive, Duplicate):
        return original
    if isinstance(directive, Match):
        return directive.payload
    return directive.options[int(rng_factory().integers(len(directive.options)))]


def _check_target(original: ProbabilityModel, candidate: ProbabilityModel) -> None:
    if candidate.target != original.target:
        raise CompatibilityError(
            f"{type(candidate).__name__} estimates {candidate.target!r}, not "
            f"{original.target!r}; the inferential value for {original.target!r} is lost"
        )


def _check_compatibility(original: ExperimentRecord, spec: ReplicationSpec) -> None:
    d = spec.model
    candidates = [d.payload] if isinstance(d, Match) else list(getattr(d, "options", ()))
    for model in candidates:
        _check_target(original.model, model)
    d = spec.s_post
    candidates = [d.payload] if isinstance(d, Match) else list(getattr(d, "options", ()))
    for est in candidates:
        if not isinstance(est, EstimatorSpec):
            raise CompatibilityError(f"s_post payload {est!r} is not an estimator")


def replicate(
    original: ExperimentRecord,
    spec: ReplicationSpec,
    mechanism: TrueMechanism,
    seed: int,
    *,
    experiment_id: str | None = None,
    forced_values=None,
) -> ExperimentRecord:
    """Run a replication of ``original`` on fresh data from ``mechanism``."""
    _check_compatibility(original, spec)
    rng = None

    def choice_rng():
        nonlocal rng
        if rng is None:
            rng = np.random.default_rng(derive_seed(seed, 1))
        return rng

    m = original.method
    model = _resolve(spec.model, original.model, choice_rng)
    pre = _resolve(spec.s_pre, PreMethod(m.stopping_rule, m.sampling, m.missing_rate), choice_rng)
    estimator = _resolve(spec.s_post, m.estimator, choice_rng)
    policy = _resolve(spec.d_s, m.missing_policy, choice_rng)
    method = MethodSpec(pre.stopping_rule, estimator, pre.sampling, pre.missing_rate, policy)
    check_design(model, method.stopping_rule, method.sampling, mechanism)

    kinds = [
        kind
        for kind, directive in (
            (ComponentKind.MODEL, spec.model),
            (ComponentKind.METHOD_PRE, spec.s_pre),
            (ComponentKind.METHOD_POST, spec.s_post),
            (ComponentKind.DATA_STRUCTURE, spec.d_s),
        )
        if not isinstance(directive, Independent)
    ]
    if spec.transmitted_result:
        kinds.append(ComponentKind.RESULT)
    prior = spec.prior if spec.prior is not None else original.knowledge.prior
    knowledge = BackgroundKnowledge(prior, transmit(original, kinds))
    # evaluate at the same point as the original when its result is known
    theta_star = original.result.theta_star if spec.transmitted_result else None
    return run_experiment(
        mechanism,
        model,
        method,
        knowledge,
        seed,
        experiment_id=experiment_id,
        forced_values=forced_values,
        theta_star=theta_star,
    )


# -- the reproduction judgment -------------------------------------------------------


def _same_estimate(a, b, tolerance: Fraction) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return abs(a - b) <= tolerance
    return abs(float(a) - float(b)) <= max(float(tolerance), FLOAT_EQ_TOL)


def _verdict_at(result: ResultRecord, theta_star) -> Verdict:
    return confirmation_verdict(result.prior, result.posterior, theta_star)


def is_reproduced(
    original: ResultRecord,
    replication: ResultRecord,
    criterion: ReproductionCriterion,
    knowledge_of_replication: BackgroundKnowledge,
) -> bool:
    """Does ``replication`` reproduce ``original`` under ``criterion``?

    Raises :class:`EpistemicUnavailabilityError` when the replicating side
    holds no transmitted copy of the original result: the judgment cannot
    be made from where it stands.
    """
    received = [
        c
        for c in knowledge_of_replication.find(ComponentKind.RESULT)
        if c.payload.get("result_id") == original.result_id
    ]
    if not received:
        raise EpistemicUnavailabilityError(
            f"result {original.result_id} was never transmitted to the replication"
        )
    if isinstance(criterion, EstimateEquivalence):
        return _same_estimate(original.estimate.value, replication.estimate.value, criterion.tolerance)
    if criterion.theta_star is not None:
        v1 = _verdict_at(original, criterion.theta_star)
        v2 = _verdict_at(replication, criterion.theta_star)
    else:
        v1, v2 = original.confirmation, replication.confirmation
    return v1 == v2 and v1 in (Verdict.CONFIRMS, Verdict.DISCONFIRMS)


# -- Monte Carlo rate --------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """An original design plus how it is to be replicated and judged."""

    mechanism: TrueMechanism
    model: ProbabilityModel
    method: MethodSpec
    replication: ReplicationSpec = ReplicationSpec()
    criterion: ReproductionCriterion = ConfirmationDirection()
    prior: BetaParams = BetaParams(1, 1)
    theta_star: Fraction | None = None


@dataclass(frozen=True)
class PairRow:
    pair_index: int
    estimate_1: Any
    estimate_2: Any
    verdict_1: Verdict | None
    verdict_2: Verdict | None
    reproduced: bool
    first_black: bool


def run_pair(scenario: Scenario, master_seed: int, index: int) -> PairRow:
    s = scenario
    original = run_experiment(
        s.mechanism,
        s.model,
        s.method,
        BackgroundKnowledge(s.prior),
        derive_seed(master_seed, index, 0),
        experiment_id=f"pair{index}/original",
        theta_star=s.theta_star,
    )
    replication = replicate(
        original,
        s.replication,
        s.mechanism,
        derive_seed(master_seed, index, 1),
        experiment_id=f"pair{index}/replication",
    )
    ok = is_reproduced(original.result, replication.result, s.criterion, replication.knowledge)
    values = original.data.values
    return PairRow(
        index,
        original.result.estimate.value,
        replication.result.estimate.value,
        original.result.confirmation,
        replication.result.confirmation,
        ok,
        bool(values) and values[0] is Observation.BLACK,
    )


def _run_block(args) -> list[PairRow]:
    scenario, master_seed, start, stop = args
    rows = []
    for i in range(start, stop):
        try:
            rows.append(run_pair(scenario, master_seed, i))
        except Exception as exc:
            raise ReproducibilityError(f"pair {i} (master seed {master_seed}): {exc}") from exc
    return rows


@dataclass(frozen=True)
class ReproducibilityReport:
    pairs_run: int
    reproduced: int
    rate: float
    mc_std_error: float
    criterion: ReproductionCriterion
    diagnostics: dict = field(default_factory=dict)
    rows: tuple[PairRow, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "pairs_run": self.pairs_run,
            "reproduced": self.reproduced,
            "rate": self.rate,
            "mc_std_error": self.mc_std_error,
            "criterion": self.criterion.to_dict(),
            "diagnostics": dict(self.diagnostics),
        }

    def pair_table(self) -> str:
        """Per-pair rows as CSV text (empty header-only table when not logged)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["pair_index", "estimate_1", "estimate_2", "verdict_1", "verdict_2", "reproduced"]
        )
        for r in self.rows or ():
            writer.writerow(
                [
                    r.pair_index,
                    r.estimate_1,
                    r.estimate_2,
                    "" if r.verdict_1 is None else r.verdict_1.value,
                    "" if r.verdict_2 is None else r.verdict_2.value,
                    int(r.reproduced),
                ]
            )
        return buf.getvalue()


def _diagnostics(scenario: Scenario, rows: Sequence[PairRow]) -> dict:
    n = len(rows)
    exact = all(isinstance(r.estimate_1, Fraction) for r in rows)
    if exact:
        total = sum((r.estimate_1 for r in rows), Fraction(0))
        sq = sum((r.estimate_1 * r.estimate_1 for r in rows), Fraction(0))
        mean = float(total / n)
        var = float((sq - total * total / n) / (n - 1)) if n > 1 else 0.0
    else:
        vals = [float(r.estimate_1) for r in rows]
        mean = math.fsum(vals) / n
        var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1) if n > 1 else 0.0
    out = {
        "pi_true": float(scenario.mechanism.pi_true),
        "mean_estimate": mean,
        "mean_estimate_se": math.sqrt(var / n),
    }
    if isinstance(scenario.method.estimator, BiasedIndicator):
        fired = sum(r.first_black for r in rows)
        p = fired / n
        out["indicator_fire_rate"] = p
        out["indicator_fire_rate_se"] = math.sqrt(p * (1 - p) / n)
    return out


def reproducibility_rate(
    scenario: Scenario,
    pairs: int,
    master_seed: int,
    *,
    workers: int = 1,
    log_pairs: bool = False,
) -> ReproducibilityReport:
    """Fraction of independent (original, replication) pairs that reproduce.

    Pair ``i`` uses seeds derived from ``(master_seed, i)``, so the report is
    the same whatever the number of worker processes.
    """
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    if workers > 1 and pairs > 1:
        step = math.ceil(pairs / (4 * workers))
        blocks = [(scenario, master_seed, a, min(a + step, pairs)) for a in range(0, pairs, step)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [row for block in pool.map(_run_block, blocks) for row in block]
    else:
        rows = _run_block((scenario, master_seed, 0, pairs))
    reproduced = sum(r.reproduced for r in rows)
    rate = reproduced / pairs
    return ReproducibilityReport(
        pairs_run=pairs,
        reproduced=reproduced,
        rate=rate,
        mc_std_error=math.sqrt(rate * (1 - rate) / pairs),
        criterion=scenario.criterion,
        diagnostics=_diagnostics(scenario, rows),
        rows=tuple(rows) if log_pairs else None,
    )
