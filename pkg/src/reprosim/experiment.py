"""Idealized experiments: assembly, execution, audit and persistence.

An :class:`ExperimentRecord` bundles the assumed model, the data (ordered
values plus their structural summary), the methods used before and after
data collection, and the background knowledge the experiment started from.
Records are immutable; :func:`serialize` writes them as canonical JSON.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ._exact import as_fraction
from .estimators import (
    UNIFORM,
    BetaParams,
    Estimate,
    EstimatorSpec,
    MissingPolicy,
    Verdict,
    confirmation_verdict,
    effective_counts,
    estimate,
    estimator_from_dict,
    posterior_update,
)
from .models import (
    Binomial,
    FixedSampleSize,
    NegativeBinomial,
    Observation,
    ProbabilityModel,
    SamplingMode,
    StoppingRule,
    StructuralMismatchError,
    TrueMechanism,
    check_design,
    format_sequence,
    model_from_dict,
    model_to_dict,
    parse_sequence,
    rule_from_dict,
    rule_to_dict,
    sample_sequence,
    tally,
)

RECORD_FORMAT = "reprosim/experiment-record"
RECORD_VERSION = 1


class RecordFormatError(ValueError):
    """A serialized record could not be parsed."""


class RecordVersionError(RecordFormatError):
    pass


# -- seeds --------------------------------------------------------------------


def derive_seed(master_seed: int, *path: int) -> int:
    """64-bit seed for the stream at ``path`` under ``master_seed``.

    Derivation hashes ``(master_seed, path)`` so the seed of a run does not
    depend on which other runs were executed, or in what order.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, np.uint64)[0])


# -- methods and data -----------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """Pre-data procedure (stopping rule, sampling, missingness) and post-data analysis."""

    stopping_rule: StoppingRule
    estimator: EstimatorSpec
    sampling: SamplingMode = SamplingMode.WITH_REPLACEMENT
    missing_rate: float = 0.0
    missing_policy: MissingPolicy = MissingPolicy.EXCLUDE

    def __post_init__(self):
        object.__setattr__(self, "sampling", SamplingMode(self.sampling))
        object.__setattr__(self, "missing_policy", MissingPolicy(self.missing_policy))
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must lie in [0, 1)")

    def pre_dict(self) -> dict:
        return {
            "stopping_rule": rule_to_dict(self.stopping_rule),
            "sampling": self.sampling.value,
            "missing_rate": float(self.missing_rate),
        }

    def post_dict(self) -> dict:
        return {"estimator": self.estimator.to_dict(), "missing_policy": self.missing_policy.value}

    def to_dict(self) -> dict:
        return {"pre": self.pre_dict(), "post": self.post_dict()}

    @classmethod
    def from_parts(cls, pre: dict, post: dict) -> "MethodSpec":
        return cls(
            stopping_rule=rule_from_dict(pre["stopping_rule"]),
            estimator=estimator_from_dict(post["estimator"]),
            sampling=SamplingMode(pre.get("sampling", SamplingMode.WITH_REPLACEMENT.value)),
            missing_rate=float(pre.get("missing_rate", 0.0)),
            missing_policy=MissingPolicy(post.get("missing_policy", MissingPolicy.EXCLUDE.value)),
        )

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        return cls.from_parts(d["pre"], d["post"])


@dataclass(frozen=True)
class DataStructure:
    """Structural summary of a dataset: sizes, counts and metadata."""

    sample_size: int
    black_count: int
    white_count: int
    missing_count: int
    stopping_rule: StoppingRule
    sampling: SamplingMode = SamplingMode.WITH_REPLACEMENT
    missing_policy: MissingPolicy = MissingPolicy.EXCLUDE
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sampling", SamplingMode(self.sampling))
        object.__setattr__(self, "missing_policy", MissingPolicy(self.missing_policy))
        object.__setattr__(self, "metadata", dict(sorted(self.metadata.items())))
        counts = (self.black_count, self.white_count, self.missing_count)
        if min(counts) < 0:
            raise ValueError("counts must be non-negative")
        if self.sample_size != sum(counts):
            raise ValueError(
                f"sample_size {self.sample_size} != black + white + missing = {sum(counts)}"
            )
        for k, v in self.metadata.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ValueError("metadata must map strings to strings")

    def to_dict(self) -> dict:
        return {
            "sample_size": self.sample_size,
            "black_count": self.black_count,
            "white_count": self.white_count,
            "missing_count": self.missing_count,
            "stopping_rule": rule_to_dict(self.stopping_rule),
            "sampling": self.sampling.value,
            "missing_policy": self.missing_policy.value,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataStructure":
        return cls(
            sample_size=d["sample_size"],
            black_count=d["black_count"],
            white_count=d["white_count"],
            missing_count=d["missing_count"],
            stopping_rule=rule_from_dict(d["stopping_rule"]),
            sampling=SamplingMode(d["sampling"]),
            missing_policy=MissingPolicy(d["missing_policy"]),
            metadata=d.get("metadata", {}),
        )


@dataclass(frozen=True)
class Dataset:
    """Observed values (optional, may be withheld) and their structure."""

    values: tuple[Observation, ...] | None
    structure: DataStructure

    def __post_init__(self):
        if self.values is not None:
            object.__setattr__(self, "values", tuple(Observation(v) for v in self.values))
            s = self.structure
            if tally(self.values) != (s.black_count, s.white_count, s.missing_count):
                raise ValueError("structure counts do not match the observed values")

    @classmethod
    def from_values(
        cls,
        values: Sequence[Observation] | str,
        stopping_rule: StoppingRule,
        sampling: SamplingMode = SamplingMode.WITH_REPLACEMENT,
        missing_policy: MissingPolicy = MissingPolicy.EXCLUDE,
        metadata: Mapping[str, str] | None = None,
    ) -> "Dataset":
        if isinstance(values, str):
            values = parse_sequence(values)
        values = tuple(values)
        b, w, m = tally(values)
        structure = DataStructure(
            len(values), b, w, m, stopping_rule, sampling, missing_policy, metadata or {}
        )
        return cls(values, structure)

    @classmethod
    def from_counts(
        cls,
        black: int,
        white: int,
        missing: int = 0,
        stopping_rule: StoppingRule | None = None,
        missing_policy: MissingPolicy = MissingPolicy.EXCLUDE,
    ) -> "Dataset":
        """Counts-only dataset (no ordered values)."""
        n = black + white + missing
        rule = stopping_rule or FixedSampleSize(n)
        return cls(None, DataStructure(n, black, white, missing, rule, missing_policy=missing_policy))

    def withhold_values(self) -> "Dataset":
        return Dataset(None, self.structure)

    def with_policy(self, policy: MissingPolicy) -> "Dataset":
        return Dataset(self.values, replace(self.structure, missing_policy=MissingPolicy(policy)))

    def to_dict(self) -> dict:
        values = None if self.values is None else format_sequence(self.values)
        return {"values": values, "structure": self.structure.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        values = d.get("values")
        values = None if values is None else parse_sequence(values)
        return cls(values, DataStructure.from_dict(d["structure"]))


# -- knowledge ------------------------------------------------------------------


class ComponentKind(str, enum.Enum):
    MODEL = "model"
    METHOD_PRE = "method-pre"
    METHOD_POST = "method-post"
    DATA_STRUCTURE = "data-structure"
    RESULT = "result"
    #: marks that a record was built from another experiment at all
    REPLICATION_OF = "replication-of"


@dataclass(frozen=True)
class TransmittedComponent:
    kind: ComponentKind
    payload: Mapping
    source: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ComponentKind(self.kind))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "payload": dict(self.payload), "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "TransmittedComponent":
        return cls(ComponentKind(d["kind"]), d["payload"], d["source"])


@dataclass(frozen=True)
class BackgroundKnowledge:
    prior: BetaParams = UNIFORM
    transmitted: tuple[TransmittedComponent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transmitted", tuple(self.transmitted))

    def find(self, kind: ComponentKind, source: str | None = None) -> list[TransmittedComponent]:
        return [
            c for c in self.transmitted if c.kind is kind and (source is None or c.source == source)
        ]

    def has(self, kind: ComponentKind, source: str | None = None) -> bool:
        return bool(self.find(kind, source))

    def to_dict(self) -> dict:
        return {
            "prior": self.prior.to_dict(),
            "transmitted": [c.to_dict() for c in self.transmitted],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackgroundKnowledge":
        return cls(
            BetaParams.from_dict(d["prior"]),
            tuple(TransmittedComponent.from_dict(c) for c in d["transmitted"]),
        )


# -- results and records ----------------------------------------------------------


@dataclass(frozen=True)
class ResultRecord:
    """One result: the estimate, the Beta update it implies and its verdict.

    ``theta_star`` is where confirmation was evaluated; ``confirmation`` is
    ``None`` when no interior evaluation point was available.
    """

    result_id: str
    estimate: Estimate
    prior: BetaParams
    posterior: BetaParams
    theta_star: Fraction | None
    confirmation: Verdict | None

    def to_dict(self) -> dict:
        return {
            "result_id": self.result_id,
            "estimate": self.estimate.to_dict(),
            "prior": self.prior.to_dict(),
            "posterior": self.posterior.to_dict(),
            "theta_star": None if self.theta_star is None else str(self.theta_star),
            "confirmation": None if self.confirmation is None else self.confirmation.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        theta = d["theta_star"]
        verdict = d["confirmation"]
        return cls(
            d["result_id"],
            Estimate.from_dict(d["estimate"]),
            BetaParams.from_dict(d["prior"]),
            BetaParams.from_dict(d["posterior"]),
            None if theta is None else Fraction(theta),
            None if verdict is None else Verdict(verdict),
        )


def compute_result(
    model: ProbabilityModel,
    data: Dataset,
    method: MethodSpec,
    prior: BetaParams,
    theta_star=None,
    result_id: str = "R1",
) -> ResultRecord:
    """Apply the post-data method to ``data`` and judge confirmation.

    Without an explicit ``theta_star`` the point estimate itself is the
    evaluation point, provided it lies strictly inside (0, 1).
    """
    est = estimate(method.estimator, model, data, method.missing_policy, prior)
    b, w = effective_counts(data, method.missing_policy)
    posterior = posterior_update(prior, b, w)
    if theta_star is None and 0 < est.value < 1:
        theta_star = est.value
    if theta_star is not None:
        theta_star = as_fraction(theta_star)
        verdict = confirmation_verdict(prior, posterior, theta_star)
    else:
        verdict = None
    return ResultRecord(result_id, est, prior, posterior, theta_star, verdict)


@dataclass(frozen=True)
class ExperimentRecord:
    id: str
    model: ProbabilityModel
    data: Dataset
    method: MethodSpec
    knowledge: BackgroundKnowledge
    seed: int
    results: tuple[ResultRecord, ...]

    @property
    def result(self) -> ResultRecord:
        return self.results[0]

    def withhold_values(self) -> "ExperimentRecord":
        return replace(self, data=self.data.withhold_values())

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "model": model_to_dict(self.model),
            "data": self.data.to_dict(),
            "method": self.method.to_dict(),
            "knowledge": self.knowledge.to_dict(),
            "seed": self.seed,
            "results": [r.to_dict() for r in self.results],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(
            d["id"],
            model_from_dict(d["model"]),
            Dataset.from_dict(d["data"]),
            MethodSpec.from_dict(d["method"]),
            BackgroundKnowledge.from_dict(d["knowledge"]),
            int(d["seed"]),
            tuple(ResultRecord.from_dict(r) for r in d["results"]),
        )


def default_model(rule: StoppingRule) -> ProbabilityModel:
    """The with-replacement model implied by a stopping rule."""
    if isinstance(rule, FixedSampleSize):
        return Binomial(rule.n)
    return NegativeBinomial(rule.w)


def _check_forced(values: tuple[Observation, ...], rule: StoppingRule) -> None:
    if isinstance(rule, FixedSampleSize):
        if len(values) != rule.n:
            raise StructuralMismatchError(
                f"forced values have length {len(values)}, stopping rule needs {rule.n}"
            )
        return
    whites = [i for i, v in enumerate(values) if v is Observation.WHITE]
    if len(whites) != rule.w or whites[-1] != len(values) - 1:
        raise StructuralMismatchError(
            f"forced values must end at the {rule.w}-th white raven"
        )


def run_experiment(
    mechanism: TrueMechanism,
    model: ProbabilityModel,
    method: MethodSpec,
    knowledge: BackgroundKnowledge | None = None,
    seed: int = 0,
    *,
    experiment_id: str | None = None,
    forced_values: Sequence[Observation] | str | None = None,
    theta_star=None,
    metadata: Mapping[str, str] | None = None,
) -> ExperimentRecord:
    """Collect data from ``mechanism`` and analyse it.

    ``forced_values`` pins the observed sequence instead of sampling it; the
    data structure then carries ``forced_data = "true"`` in its metadata.
    """
    knowledge = knowledge or BackgroundKnowledge()
    check_design(model, method.stopping_rule, method.sampling, mechanism)
    meta = dict(metadata or {})
    if forced_values is not None:
        values = parse_sequence(forced_values) if isinstance(forced_values, str) else tuple(forced_values)
        _check_forced(values, method.stopping_rule)
        meta["forced_data"] = "true"
    else:
        rng = np.random.default_rng(seed)
        values = sample_sequence(
            mechanism, method.stopping_rule, rng, method.sampling, method.missing_rate
        )
    data = Dataset.from_values(
        values, method.stopping_rule, method.sampling, method.missing_policy, meta
    )
    experiment_id = experiment_id or f"xi-{seed:016x}"
    result = compute_result(
        model, data, method, knowledge.prior, theta_star, f"{experiment_id}/R1"
    )
    return ExperimentRecord(experiment_id, model, data, method, knowledge, seed, (result,))


# -- audit and reliability ------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Outcome of recomputing a record's results from its own components.

    ``matches`` is ``None`` when the audit is indeterminate.
    """

    recomputed: tuple[ResultRecord, ...]
    matches: bool | None
    missing_components: tuple[str, ...] = ()
    mismatches: tuple[str, ...] = ()


def _brief(x) -> str:
    if isinstance(x, Estimate):
        return str(x.value)
    if isinstance(x, BetaParams):
        return f"Beta({x.alpha}, {x.beta})"
    return "none" if x is None else str(getattr(x, "value", x))


def audit(record: ExperimentRecord) -> AuditReport:
    """Recompute every stored result from the record's data and methods.

    Never samples new data and never raises on incomplete records.
    """
    missing = []
    if record.data.values is None:
        missing.append("D_v")
    if record.method is None or record.method.estimator is None:
        missing.append("S_post")
    if missing:
        return AuditReport((), None, tuple(missing))

    recomputed, mismatches = [], []
    for stored in record.results:
        try:
            fresh = compute_result(
                record.model,
                record.data,
                record.method,
                record.knowledge.prior,
                stored.theta_star,
                stored.result_id,
            )
        except ValueError as exc:
            mismatches.append(f"{stored.result_id}: recomputation failed ({exc})")
            continue
        recomputed.append(fresh)
        for name in ("estimate", "prior", "posterior", "confirmation"):
            a, b = getattr(stored, name), getattr(fresh, name)
            if a != b:
                mismatches.append(
                    f"{stored.result_id}.{name}: stored {_brief(a)}, recomputed {_brief(b)}"
                )
    return AuditReport(tuple(recomputed), not mismatches, (), tuple(mismatches))


@dataclass(frozen=True)
class ReliabilityReport:
    consistent: bool
    distinct_outputs: int


def reliability_check(
    method: MethodSpec,
    fixed_input: Dataset,
    repetitions: int,
    model: ProbabilityModel | None = None,
    prior: BetaParams = UNIFORM,
) -> ReliabilityReport:
    """Apply the post-data method to one dataset repeatedly and compare outputs."""
    if repetitions < 2:
        raise ValueError("repetitions must be at least 2")
    model = model or default_model(fixed_input.structure.stopping_rule)
    outputs = {
        estimate(method.estimator, model, fixed_input, method.missing_policy, prior).value
        for _ in range(repetitions)
    }
    return ReliabilityReport(len(outputs) == 1, len(outputs))


# -- serialization ----------------------------------------------------------------


def dumps_canonical(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def serialize(record: ExperimentRecord) -> bytes:
    return dumps_canonical(
        {"format": RECORD_FORMAT, "version": RECORD_VERSION, "record": record.to_dict()}
    )


def deserialize(blob: bytes | str) -> ExperimentRecord:
    try:
        doc = json.loads(blob)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise RecordFormatError(f"not a valid record file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != RECORD_FORMAT:
        raise RecordFormatError("missing or wrong format tag")
    if doc.get("version") != RECORD_VERSION:
        raise RecordVersionError(
            f"record version {doc.get('version')!r}, this reader handles {RECORD_VERSION}"
        )
    try:
        return ExperimentRecord.from_dict(doc["record"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordFormatError(f"malformed record: {exc!r}") from None
