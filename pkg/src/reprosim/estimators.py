"""Point estimators for the proportion of black ravens.

Each estimator is a small frozen dataclass with an ``evaluate`` method; the
module-level :func:`estimate` adds the structural checks every estimator
shares. Ratio-type estimators return :class:`~fractions.Fraction` values so
that "the same estimate" can be decided by exact comparison.

Missing observations are handled by an explicit :class:`MissingPolicy`:
``EXCLUDE`` drops them from the denominator, ``COUNT_IN_N`` keeps them in
it (equivalently, treats them as not black).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, ClassVar

from ._exact import as_fraction
from .models import (
    Binomial,
    Hypergeometric,
    NegativeBinomial,
    Observation,
    ProbabilityModel,
    Real,
    StructuralMismatchError,
)

if TYPE_CHECKING:
    from .experiment import Dataset


class EstimationError(ValueError):
    pass


class MissingOrderingError(EstimationError):
    """The estimator needs the ordered values, but only counts were given."""


class UnsupportedCombinationError(ValueError):
    pass


class MissingPolicy(str, enum.Enum):
    EXCLUDE = "exclude-missing"
    COUNT_IN_N = "count-in-n"


# -- Beta distribution --------------------------------------------------------


@dataclass(frozen=True)
class BetaParams:
    """A Beta(alpha, beta) distribution, stored exactly."""

    alpha: Fraction
    beta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_fraction(self.alpha))
        object.__setattr__(self, "beta", as_fraction(self.beta))
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> Fraction:
        return self.alpha / (self.alpha + self.beta)

    def log_density(self, theta: float) -> float:
        a, b = float(self.alpha), float(self.beta)
        log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        return log_norm + (a - 1) * math.log(theta) + (b - 1) * math.log1p(-theta)

    def density(self, theta: float) -> float:
        return math.exp(self.log_density(theta))

    def to_dict(self) -> dict:
        return {"alpha": str(self.alpha), "beta": str(self.beta)}

    @classmethod
    def from_dict(cls, d: dict) -> "BetaParams":
        return cls(as_fraction(d["alpha"]), as_fraction(d["beta"]))


UNIFORM = BetaParams(1, 1)

#: Relative tolerance under which prior and posterior densities count as equal.
NEUTRAL_RTOL = 1e-12


class Verdict(str, enum.Enum):
    CONFIRMS = "confirms"
    DISCONFIRMS = "disconfirms"
    NEUTRAL = "neutral"


def confirmation_verdict(prior: BetaParams, posterior: BetaParams, theta_star) -> Verdict:
    """Did the data raise or lower the density at ``theta_star``?"""
    if not 0 < theta_star < 1:
        raise ValueError(f"theta_star must lie strictly inside (0, 1), got {theta_star}")
    if prior == posterior:
        return Verdict.NEUTRAL
    theta = float(theta_star)
    lp, lq = prior.log_density(theta), posterior.log_density(theta)
    # log-space comparison; |log ratio| <= rtol is a relative tolerance on densities
    if abs(lq - lp) <= NEUTRAL_RTOL:
        return Verdict.NEUTRAL
    return Verdict.CONFIRMS if lq > lp else Verdict.DISCONFIRMS


def posterior_update(prior: BetaParams, b: int, w: int) -> BetaParams:
    """Conjugate update of a Beta prior with ``b`` black and ``w`` white ravens.

    Binomial and negative-binomial likelihoods are both proportional to
    ``pi**b * (1 - pi)**w``, so the update is the same under either
    stopping rule.
    """
    if b < 0 or w < 0:
        raise ValueError("counts must be non-negative")
    return BetaParams(prior.alpha + b, prior.beta + w)


# -- estimates ----------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: Real
    estimator: "EstimatorSpec"
    target: str = "pi"
    boundary: bool = False

    def to_dict(self) -> dict:
        value = str(self.value) if isinstance(self.value, Fraction) else float(self.value)
        return {
            "value": value,
            "estimator": self.estimator.to_dict(),
            "target": self.target,
            "boundary": self.boundary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Estimate":
        value = d["value"]
        value = Fraction(value) if isinstance(value, str) else float(value)
        return cls(value, estimator_from_dict(d["estimator"]), d["target"], bool(d["boundary"]))


def effective_counts(data: "Dataset", policy: MissingPolicy) -> tuple[int, int]:
    """``(black, non_black)`` counts after applying the missing-data policy."""
    s = data.structure
    if policy is MissingPolicy.COUNT_IN_N:
        return s.black_count, s.white_count + s.missing_count
    return s.black_count, s.white_count


def _ratio(b: int, n: int) -> Fraction:
    if n == 0:
        raise EstimationError("no usable observations: every raven is missing")
    return Fraction(b, n)


# -- estimator specs ----------------------------------------------------------


class EstimatorSpec:
    """Base for the post-data analysis method."""

    kind: ClassVar[str]

    def evaluate(
        self,
        model: ProbabilityModel,
        data: "Dataset",
        policy: MissingPolicy,
        prior: BetaParams = UNIFORM,
    ) -> Estimate:
        """``prior`` is the experiment's background prior; only Bayes estimators use it."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class MaximumLikelihood(EstimatorSpec):
    kind: ClassVar[str] = "ml"

    def evaluate(self, model, data, policy, prior=UNIFORM):
        b, w = effective_counts(data, policy)
        if isinstance(model, Hypergeometric):
            B = hypergeometric_ml(model.N, b, w)
            return Estimate(Fraction(B, model.N), self, "B", B in (0, model.N))
        value = _ratio(b, b + w)
        return Estimate(value, self, "pi", value in (0, 1))


@dataclass(frozen=True)
class MethodOfMoments(EstimatorSpec):
    """Match the expected black count to the observed one.

    Binomial: ``n * pi = b``. Negative binomial: ``w * pi / (1 - pi) = b``.
    Hypergeometric: ``n * B / N = b``. All three give ``b / (b + w)`` as a
    proportion.
    """

    kind: ClassVar[str] = "mm"

    def evaluate(self, model, data, policy, prior=UNIFORM):
        b, w = effective_counts(data, policy)
        value = _ratio(b, b + w)
        return Estimate(value, self, model.target, value in (0, 1))


class _Bayes(EstimatorSpec):
    # prior=None defers to the experiment's background prior
    prior: BetaParams | None

    def _posterior(self, data, policy, prior) -> BetaParams:
        b, w = effective_counts(data, policy)
        return posterior_update(self.prior or prior, b, w)

    def to_dict(self):
        if self.prior is None:
            return {"kind": self.kind}
        return {"kind": self.kind, "prior": self.prior.to_dict()}


@dataclass(frozen=True)
class BayesPosteriorMean(_Bayes):
    prior: BetaParams | None = None
    kind: ClassVar[str] = "posterior-mean"

    def evaluate(self, model, data, policy, prior=UNIFORM):
        return Estimate(self._posterior(data, policy, prior).mean, self)


@dataclass(frozen=True)
class BayesPosteriorMode(_Bayes):
    prior: BetaParams | None = None
    kind: ClassVar[str] = "posterior-mode"

    def evaluate(self, model, data, policy, prior=UNIFORM):
        post = self._posterior(data, policy, prior)
        a, c = post.alpha, post.beta
        if a >= 1 and c >= 1:
            if a + c == 2:
                raise EstimationError("posterior is uniform; its mode is undefined")
            value = (a - 1) / (a + c - 2)
            return Estimate(value, self, "pi", value in (0, 1))
        # density unbounded at an edge: clamp to the heavier edge
        if a < 1 and c < 1:
            value = Fraction(0) if a <= c else Fraction(1)
        else:
            value = Fraction(0) if a < 1 else Fraction(1)
        return Estimate(value, self, "pi", True)


@dataclass(frozen=True)
class BiasedIndicator(EstimatorSpec):
    """``b / n`` plus one when the first raven seen is black."""

    kind: ClassVar[str] = "biased-indicator"

    def evaluate(self, model, data, policy, prior=UNIFORM):
        if data.values is None:
            raise MissingOrderingError("biased-indicator needs the ordered observations")
        b, w = effective_counts(data, policy)
        fired = bool(data.values) and data.values[0] is Observation.BLACK
        return Estimate(_ratio(b, b + w) + int(fired), self)


@dataclass(frozen=True)
class Constant(EstimatorSpec):
    c: Fraction = Fraction(1, 2)
    kind: ClassVar[str] = "constant"

    def __post_init__(self):
        object.__setattr__(self, "c", as_fraction(self.c))
        if not 0 <= self.c <= 1:
            raise ValueError("constant estimate must lie in [0, 1]")

    def evaluate(self, model, data, policy, prior=UNIFORM):
        return Estimate(self.c, self)

    def to_dict(self):
        return {"kind": self.kind, "c": str(self.c)}


_REGISTRY: dict[str, type] = {
    cls.kind: cls
    for cls in (
        MaximumLikelihood,
        MethodOfMoments,
        BayesPosteriorMean,
        BayesPosteriorMode,
        BiasedIndicator,
        Constant,
    )
}


def estimator_from_dict(d: dict) -> EstimatorSpec:
    try:
        cls = _REGISTRY[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown estimator kind {d.get('kind')!r}") from None
    extra = set(d) - {"kind", "prior", "c"}
    if extra:
        raise ValueError(f"unknown estimator fields: {sorted(extra)}")
    if cls in (BayesPosteriorMean, BayesPosteriorMode):
        return cls(BetaParams.from_dict(d["prior"])) if "prior" in d else cls()
    if cls is Constant:
        return cls(as_fraction(d["c"])) if "c" in d else cls()
    return cls()


# -- the public entry point ---------------------------------------------------


def check_data(model: ProbabilityModel, data: "Dataset") -> None:
    s = data.structure
    if isinstance(model, NegativeBinomial):
        if s.white_count != model.w:
            raise StructuralMismatchError(
                f"NegativeBinomial(w={model.w}) data must hold {model.w} whites, got {s.white_count}"
            )
        if data.values is not None and data.values[-1] is not Observation.WHITE:
            raise StructuralMismatchError("NegativeBinomial data must end with a white raven")
    elif s.sample_size != model.n:
        raise StructuralMismatchError(
            f"{model} expects sample_size {model.n}, data has {s.sample_size}"
        )


def estimate(
    spec: EstimatorSpec,
    model: ProbabilityModel,
    data: "Dataset",
    policy: MissingPolicy | None = None,
    prior: BetaParams = UNIFORM,
) -> Estimate:
    """Apply ``spec`` to ``data`` under ``model``.

    ``policy`` defaults to the policy recorded in the data structure;
    ``prior`` is the background prior used by Bayes estimators that do not
    carry their own.
    """
    check_data(model, data)
    if policy is None:
        policy = data.structure.missing_policy
    return spec.evaluate(model, data, MissingPolicy(policy), prior)


def hypergeometric_ml(N: int, b: int, w: int) -> int:
    """Black count ``B`` maximising ``C(B, b) * C(N - B, w)``.

    Direct scan over ``B = b .. N - w`` in exact integers; ties go to the
    smaller ``B``.
    """
    if b < 0 or w < 0 or b + w > N:
        raise StructuralMismatchError(f"cannot draw {b} black and {w} white from {N}")
    best, best_val = b, -1
    for B in range(b, N - w + 1):
        val = math.comb(B, b) * math.comb(N - B, w)
        if val > best_val:
            best, best_val = B, val
    return best


def standard_error(model: ProbabilityModel, pi: float, estimator: EstimatorSpec) -> float:
    """Sampling standard deviation of the ML/MM proportion estimate.

    Binomial: ``sqrt(pi (1 - pi) / n)``. Hypergeometric adds the
    finite-population correction ``sqrt((N - n) / (N - 1))``.
    """
    if not isinstance(estimator, (MaximumLikelihood, MethodOfMoments)):
        raise UnsupportedCombinationError(f"no closed-form error for {estimator.kind}")
    if not 0 <= pi <= 1:
        raise ValueError("pi must lie in [0, 1]")
    if isinstance(model, Binomial):
        return math.sqrt(pi * (1 - pi) / model.n)
    if isinstance(model, Hypergeometric):
        if model.N == 1:
            return 0.0
        fpc = (model.N - model.n) / (model.N - 1)
        return math.sqrt(pi * (1 - pi) / model.n) * math.sqrt(fpc)
    raise UnsupportedCombinationError(f"no closed-form error for {type(model).__name__}")
