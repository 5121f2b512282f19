"""Probability models for the raven population and data generation.

Three model families are supported, each tied to a way of collecting ravens:

- ``Binomial(n)``: a fixed sample of ``n`` ravens.
- ``NegativeBinomial(w)``: sample until the ``w``-th white raven.
- ``Hypergeometric(N, n)``: ``n`` ravens drawn without replacement from a
  finite population of ``N``, with the black count ``B`` as the unknown.

Likelihoods use exact integer combinatorics up to ``n = 30`` and log-gamma
arithmetic above that.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence, Union

import numpy as np

Real = Union[float, Fraction]

#: Largest sample size for which likelihoods use exact combinatorics.
EXACT_LIMIT = 30

#: Hard cap on draws for a ``FixedWhiteCount`` stopping rule.
MAX_DRAWS = 10_000_000


class StructuralMismatchError(ValueError):
    """Counts, model and stopping rule do not describe the same design."""


class TruncationError(RuntimeError):
    """Sequential sampling hit the draw cap before the stopping rule fired."""


class Observation(str, enum.Enum):
    BLACK = "B"
    WHITE = "W"
    MISSING = "M"


def parse_sequence(text: str) -> tuple[Observation, ...]:
    """Parse a compact sequence such as ``"BBWM"``."""
    try:
        return tuple(Observation(ch) for ch in text.strip().upper())
    except ValueError:
        raise ValueError(f"sequence {text!r} may only contain B, W and M") from None


def format_sequence(values: Iterable[Observation]) -> str:
    return "".join(v.value for v in values)


def tally(values: Iterable[Observation]) -> tuple[int, int, int]:
    """Return ``(black, white, missing)`` counts."""
    b = w = m = 0
    for v in values:
        if v is Observation.BLACK:
            b += 1
        elif v is Observation.WHITE:
            w += 1
        else:
            m += 1
    return b, w, m


@dataclass(frozen=True)
class TrueMechanism:
    """The data-generating truth.

    Use :meth:`infinite` for an i.i.d. Bernoulli population and
    :meth:`finite` for an urn of ``population`` ravens of which ``black``
    are black. A finite mechanism is always built from integer counts so
    that ``pi_true == black / population`` holds exactly.
    """

    pi_true: Real
    population: int | None = None
    black: int | None = None

    def __post_init__(self):
        if not 0 <= self.pi_true <= 1:
            raise ValueError(f"pi_true must lie in [0, 1], got {self.pi_true}")
        if (self.population is None) != (self.black is None):
            raise ValueError("population and black must be given together")
        if self.population is not None:
            if self.population < 1 or not 0 <= self.black <= self.population:
                raise ValueError("need 0 <= black <= population and population >= 1")
            if Fraction(self.pi_true) != Fraction(self.black, self.population):
                raise ValueError("pi_true must equal black / population exactly")

    @classmethod
    def infinite(cls, pi_true: Real) -> "TrueMechanism":
        return cls(pi_true=pi_true)

    @classmethod
    def finite(cls, black: int, population: int) -> "TrueMechanism":
        if population < 1 or not 0 <= black <= population:
            raise ValueError("need 0 <= black <= population and population >= 1")
        return cls(pi_true=Fraction(black, population), population=population, black=black)

    @property
    def is_finite(self) -> bool:
        return self.population is not None


# -- stopping rules ---------------------------------------------------------


@dataclass(frozen=True)
class FixedSampleSize:
    """Stop after ``n`` ravens."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("FixedSampleSize needs n >= 1")


@dataclass(frozen=True)
class FixedWhiteCount:
    """Stop at the ``w``-th white raven."""

    w: int

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("FixedWhiteCount needs w >= 1")


StoppingRule = Union[FixedSampleSize, FixedWhiteCount]


class SamplingMode(str, enum.Enum):
    WITH_REPLACEMENT = "with-replacement"
    WITHOUT_REPLACEMENT = "without-replacement"


# -- model families ---------------------------------------------------------


@dataclass(frozen=True)
class Binomial:
    n: int

    target = "pi"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Binomial needs n >= 1")

    def stopping_rule(self) -> StoppingRule:
        return FixedSampleSize(self.n)


@dataclass(frozen=True)
class NegativeBinomial:
    w: int

    target = "pi"

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("NegativeBinomial needs w >= 1")

    def stopping_rule(self) -> StoppingRule:
        return FixedWhiteCount(self.w)


@dataclass(frozen=True)
class Hypergeometric:
    N: int
    n: int

    target = "B"

    def __post_init__(self):
        if not 1 <= self.n <= self.N:
            raise ValueError("Hypergeometric needs 1 <= n <= N")

    def stopping_rule(self) -> StoppingRule:
        return FixedSampleSize(self.n)


ProbabilityModel = Union[Binomial, NegativeBinomial, Hypergeometric]


def check_design(
    model: ProbabilityModel,
    rule: StoppingRule,
    mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
    mechanism: TrueMechanism | None = None,
) -> None:
    """Raise :class:`StructuralMismatchError` unless model, rule and mode agree."""
    if isinstance(model, NegativeBinomial):
        if rule != FixedWhiteCount(model.w):
            raise StructuralMismatchError(
                f"model NegativeBinomial(w={model.w}) requires stopping_rule "
                f"FixedWhiteCount(w={model.w}), got {rule}"
            )
    elif rule != FixedSampleSize(model.n):
        raise StructuralMismatchError(
            f"model {model} requires stopping_rule FixedSampleSize(n={model.n}), got {rule}"
        )
    if isinstance(model, Hypergeometric) and mode is not SamplingMode.WITHOUT_REPLACEMENT:
        raise StructuralMismatchError("model Hypergeometric requires sampling without-replacement")
    if mode is SamplingMode.WITHOUT_REPLACEMENT:
        if not isinstance(rule, FixedSampleSize):
            raise StructuralMismatchError("sampling without-replacement requires FixedSampleSize")
        if mechanism is not None:
            if not mechanism.is_finite:
                raise StructuralMismatchError(
                    "sampling without-replacement requires a finite mechanism"
                )
            if rule.n > mechanism.population:
                raise StructuralMismatchError(
                    f"sample size {rule.n} exceeds population {mechanism.population}"
                )
            if isinstance(model, Hypergeometric) and model.N != mechanism.population:
                raise StructuralMismatchError(
                    f"model Hypergeometric(N={model.N}) does not match "
                    f"population {mechanism.population}"
                )


# -- likelihood -------------------------------------------------------------


def _check_counts(model: ProbabilityModel, b: int, w: int) -> None:
    if b < 0 or w < 0:
        raise StructuralMismatchError("counts must be non-negative")
    if isinstance(model, NegativeBinomial):
        if w != model.w:
            raise StructuralMismatchError(
                f"NegativeBinomial(w={model.w}) data must contain exactly {model.w} whites, got {w}"
            )
    elif b + w != model.n:
        raise StructuralMismatchError(f"{model} data must have b + w = {model.n}, got {b + w}")


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _bernoulli_part(pi: Real, b: int, w: int, coef: int) -> Real:
    # degenerate proportions: contradictory counts have probability zero
    if pi == 0:
        return coef if b == 0 else 0
    if pi == 1:
        return coef if w == 0 else 0
    return coef * pi**b * (1 - pi) ** w


def likelihood(model: ProbabilityModel, param: Real, b: int, w: int) -> Real:
    """Probability of observing ``b`` black and ``w`` white ravens.

    ``param`` is the proportion ``pi`` for the binomial and negative-binomial
    families and the integer black count ``B`` for the hypergeometric one.
    Passing ``pi`` as a :class:`~fractions.Fraction` with ``n <= 30`` yields
    an exact rational result.
    """
    _check_counts(model, b, w)
    n = b + w
    if isinstance(model, Hypergeometric):
        B, N = param, model.N
        if B != int(B) or not 0 <= B <= N:
            raise ValueError(f"black count must be an integer in [0, {N}], got {B}")
        B = int(B)
        if b > B or w > N - B:
            return 0.0
        if n <= EXACT_LIMIT:
            num = math.comb(B, b) * math.comb(N - B, w)
            den = math.comb(N, n)
            return float(Fraction(num, den))
        return math.exp(_log_comb(B, b) + _log_comb(N - B, w) - _log_comb(N, n))

    if not 0 <= param <= 1:
        raise ValueError(f"pi must lie in [0, 1], got {param}")
    if isinstance(model, Binomial):
        k_top, k = n, b
    else:
        # the final draw is white; the rest are arranged freely
        k_top, k = n - 1, model.w - 1
    if n <= EXACT_LIMIT:
        result = _bernoulli_part(param, b, w, math.comb(k_top, k))
        return Fraction(result) if isinstance(param, Rational) else float(result)
    if param in (0, 1):
        return float(_bernoulli_part(param, b, w, 1))
    pi = float(param)
    return math.exp(_log_comb(k_top, k) + b * math.log(pi) + w * math.log1p(-pi))


# -- sampling ---------------------------------------------------------------


def _mark_missing(colors: Sequence[Observation], flags: np.ndarray) -> list[Observation]:
    return [Observation.MISSING if f else c for c, f in zip(colors, flags)]


def sample_sequence(
    mechanism: TrueMechanism,
    rule: StoppingRule,
    rng: np.random.Generator,
    mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
    missing_rate: float = 0.0,
    max_draws: int = MAX_DRAWS,
) -> tuple[Observation, ...]:
    """Draw an ordered sequence of observations until ``rule`` fires.

    With ``missing_rate > 0`` each draw is independently recorded as
    :attr:`Observation.MISSING`; a missing raven never counts towards a
    ``FixedWhiteCount`` target.
    """
    if not 0 <= missing_rate < 1:
        raise ValueError("missing_rate must lie in [0, 1)")
    pi = float(mechanism.pi_true)

    if mode is SamplingMode.WITHOUT_REPLACEMENT:
        if not isinstance(rule, FixedSampleSize):
            raise StructuralMismatchError("sampling without-replacement requires FixedSampleSize")
        if not mechanism.is_finite:
            raise StructuralMismatchError("sampling without-replacement requires a finite mechanism")
        if rule.n > mechanism.population:
            raise StructuralMismatchError(
                f"sample size {rule.n} exceeds population {mechanism.population}"
            )
        # an ordered draw without replacement is a sequential urn
        picks = rng.choice(mechanism.population, size=rule.n, replace=False)
        colors = [Observation.BLACK if p < mechanism.black else Observation.WHITE for p in picks]
        flags = rng.random(rule.n) < missing_rate
        return tuple(_mark_missing(colors, flags))

    if isinstance(rule, FixedSampleSize):
        u = rng.random((2, rule.n))
        colors = [Observation.BLACK if x else Observation.WHITE for x in u[0] < pi]
        return tuple(_mark_missing(colors, u[1] < missing_rate))

    if pi >= 1:
        raise TruncationError(
            f"FixedWhiteCount(w={rule.w}) cannot terminate when every raven is black"
        )
    out: list[Observation] = []
    whites = 0
    chunk = max(16, 4 * rule.w)
    while True:
        u = rng.random((2, chunk))
        for is_black, is_missing in zip(u[0] < pi, u[1] < missing_rate):
            if len(out) >= max_draws:
                raise TruncationError(f"no stop after {max_draws} draws")
            if is_missing:
                out.append(Observation.MISSING)
            elif is_black:
                out.append(Observation.BLACK)
            else:
                out.append(Observation.WHITE)
                whites += 1
                if whites == rule.w:
                    return tuple(out)
        chunk = min(2 * chunk, 1 << 20)


def sample_counts(
    mechanism: TrueMechanism,
    model: ProbabilityModel,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """Vectorised draw of black counts for ``size`` independent experiments.

    Intended for large Monte Carlo checks where the ordering of draws is not
    needed. Returns an integer array of black counts; the white count is
    implied by the model (``n - b`` or ``w``).
    """
    pi = float(mechanism.pi_true)
    if isinstance(model, Binomial):
        return rng.binomial(model.n, pi, size=size)
    if isinstance(model, NegativeBinomial):
        if pi >= 1:
            raise TruncationError("NegativeBinomial sampling cannot terminate at pi = 1")
        # numpy counts failures (black) before the w-th success (white)
        return rng.negative_binomial(model.w, 1 - pi, size=size)
    if not mechanism.is_finite or mechanism.population != model.N:
        raise StructuralMismatchError("Hypergeometric sampling needs a finite mechanism of size N")
    return rng.hypergeometric(mechanism.black, model.N - mechanism.black, model.n, size=size)


# -- plain-dict codecs --------------------------------------------------------


def model_to_dict(model: ProbabilityModel) -> dict:
    if isinstance(model, Binomial):
        return {"family": "binomial", "n": model.n}
    if isinstance(model, NegativeBinomial):
        return {"family": "negative-binomial", "w": model.w}
    return {"family": "hypergeometric", "N": model.N, "n": model.n}


def model_from_dict(d: dict) -> ProbabilityModel:
    family = d.get("family")
    fields = {
        "binomial": (Binomial, ("n",)),
        "negative-binomial": (NegativeBinomial, ("w",)),
        "hypergeometric": (Hypergeometric, ("N", "n")),
    }
    if family not in fields:
        raise ValueError(f"unknown model family {family!r}")
    cls, names = fields[family]
    extra = set(d) - {"family", *names}
    if extra:
        raise ValueError(f"unknown fields for {family} model: {sorted(extra)}")
    return cls(*(_int_field(d, k) for k in names))


def rule_to_dict(rule: StoppingRule) -> dict:
    if isinstance(rule, FixedSampleSize):
        return {"kind": "fixed-sample-size", "n": rule.n}
    return {"kind": "fixed-white-count", "w": rule.w}


def rule_from_dict(d: dict) -> StoppingRule:
    kind = d.get("kind")
    if kind == "fixed-sample-size":
        cls, name = FixedSampleSize, "n"
    elif kind == "fixed-white-count":
        cls, name = FixedWhiteCount, "w"
    else:
        raise ValueError(f"unknown stopping rule {kind!r}")
    extra = set(d) - {"kind", name}
    if extra:
        raise ValueError(f"unknown fields for {kind}: {sorted(extra)}")
    return cls(_int_field(d, name))


def _int_field(d: dict, key: str) -> int:
    if key not in d:
        raise ValueError(f"missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"field {key!r} must be an integer, got {v!r}")
    return v
