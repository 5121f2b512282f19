"""Simulate reproducibility of results in a Bernoulli toy model."""

from .collaboratorium import (
    CollaboratoriumReport,
    ConfigurationSpace,
    EpistemicStatus,
    LabConfig,
    Mode,
    external_observer,
    run_closed,
    run_open,
)
from .config import ConfigError, load_scenario
from .estimators import (
    BayesPosteriorMean,
    BayesPosteriorMode,
    BetaParams,
    BiasedIndicator,
    Constant,
    Estimate,
    MaximumLikelihood,
    MethodOfMoments,
    MissingPolicy,
    Verdict,
    confirmation_verdict,
    estimate,
    posterior_update,
    standard_error,
)
from .experiment import (
    BackgroundKnowledge,
    ComponentKind,
    Dataset,
    ExperimentRecord,
    MethodSpec,
    audit,
    derive_seed,
    deserialize,
    reliability_check,
    run_experiment,
    serialize,
)
from .models import (
    Binomial,
    FixedSampleSize,
    FixedWhiteCount,
    Hypergeometric,
    NegativeBinomial,
    Observation,
    SamplingMode,
    TrueMechanism,
    likelihood,
    sample_sequence,
)
from .reproducibility import (
    ConfirmationDirection,
    Duplicate,
    EstimateEquivalence,
    Independent,
    Match,
    PreMethod,
    ReplicationSpec,
    Scenario,
    is_reproduced,
    replicate,
    reproducibility_rate,
)

__version__ = "0.1.0"

__all__ = [
    "BackgroundKnowledge",
    "BayesPosteriorMean",
    "BayesPosteriorMode",
    "BetaParams",
    "BiasedIndicator",
    "Binomial",
    "CollaboratoriumReport",
    "ComponentKind",
    "ConfigError",
    "ConfigurationSpace",
    "ConfirmationDirection",
    "Constant",
    "Dataset",
    "Duplicate",
    "EpistemicStatus",
    "Estimate",
    "EstimateEquivalence",
    "ExperimentRecord",
    "FixedSampleSize",
    "FixedWhiteCount",
    "Hypergeometric",
    "Independent",
    "LabConfig",
    "Match",
    "MaximumLikelihood",
    "MethodOfMoments",
    "MethodSpec",
    "MissingPolicy",
    "Mode",
    "NegativeBinomial",
    "Observation",
    "PreMethod",
    "ReplicationSpec",
    "SamplingMode",
    "Scenario",
    "TrueMechanism",
    "Verdict",
    "audit",
    "confirmation_verdict",
    "derive_seed",
    "deserialize",
    "estimate",
    "external_observer",
    "is_reproduced",
    "likelihood",
    "load_scenario",
    "posterior_update",
    "reliability_check",
    "replicate",
    "reproducibility_rate",
    "run_closed",
    "run_experiment",
    "run_open",
    "sample_sequence",
    "serialize",
    "standard_error",
]
