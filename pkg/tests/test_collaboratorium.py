from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from reprosim.collaboratorium import (
    ConfigurationSpace,
    EpistemicStatus,
    IncompleteRecordError,
    LabConfig,
    Mode,
    external_observer,
    run_closed,
    run_open,
)
from reprosim.estimators import (
    BayesPosteriorMean,
    BetaParams,
    MaximumLikelihood,
    MethodOfMoments,
)
from reprosim.experiment import BackgroundKnowledge, ComponentKind, MethodSpec, run_experiment
from reprosim.models import Binomial, FixedSampleSize, NegativeBinomial, TrueMechanism
from reprosim.reproducibility import ConfirmationDirection, EstimateEquivalence

PI08 = TrueMechanism.infinite(0.8)
NINE_TENTHS = ConfirmationDirection(Fraction(9, 10))
FIG2 = LabConfig(Binomial(2), MethodSpec(FixedSampleSize(2), BayesPosteriorMean()), BetaParams(1, 1))
EVERYTHING = [k for k in ComponentKind if k is not ComponentKind.REPLICATION_OF]


def big_space():
    return ConfigurationSpace.product(
        [Binomial(10), Binomial(20), NegativeBinomial(2), NegativeBinomial(4)],
        [MaximumLikelihood(), MethodOfMoments(), BayesPosteriorMean()],
        [BetaParams(1, 1), BetaParams(2, 2)],
    )


def test_open_figure2_chain():
    rep = run_open(PI08, FIG2, EVERYTHING, seed=0, forced_values=("BB", "BB"), criterion=NINE_TENTHS)
    lab1, lab2 = rep.lab_records
    assert lab1.result.prior.mean == Fraction(1, 2)
    assert lab1.result.posterior == BetaParams(3, 1)
    assert lab2.knowledge.prior == BetaParams(3, 1)
    assert rep.chained_posterior == BetaParams(5, 1)
    assert lab2.result.estimate.value == Fraction(5, 6)
    assert rep.epistemic_reproduction is EpistemicStatus.ESTABLISHED_BY_LAB2
    assert rep.to_dict()["posterior_means"] == ["1/2", "3/4", "5/6"]


def test_open_without_result_is_unavailable():
    kinds = [ComponentKind.MODEL, ComponentKind.METHOD_PRE, ComponentKind.METHOD_POST]
    rep = run_open(PI08, FIG2, kinds, seed=0, forced_values=("BB", "BB"))
    assert rep.epistemic_reproduction is EpistemicStatus.UNAVAILABLE
    assert "not transmitted" in rep.explanation


def test_open_chain_at_default_theta_is_not_reproduced():
    # at theta* = 3/4, Beta(5,1) has density 1.58 below Beta(3,1)'s 1.69
    rep = run_open(PI08, FIG2, EVERYTHING, seed=0, forced_values=("BB", "BB"))
    assert rep.epistemic_reproduction is EpistemicStatus.NOT_REPRODUCED


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63))
def test_open_mode_prior_is_lab1_posterior(seed):
    cfg = LabConfig(Binomial(10), MethodSpec(FixedSampleSize(10), MaximumLikelihood()))
    rep = run_open(PI08, cfg, EVERYTHING, seed)
    lab1, lab2 = rep.lab_records
    assert lab2.knowledge.prior == lab1.result.posterior
    assert rep.mode is Mode.OPEN


def test_closed_figure2():
    space = ConfigurationSpace([FIG2])
    rep = run_closed(PI08, space, FIG2, seed=0, forced_values=("BB", "BB"), criterion=NINE_TENTHS)
    assert rep.epistemic_reproduction is EpistemicStatus.UNAVAILABLE
    assert rep.configs_matched
    assert rep.chance_match_probability == 1
    assert rep.observer.connected_verdict
    assert rep.observer.status is EpistemicStatus.ESTABLISHED_BY_EXTERNAL_OBSERVER
    assert rep.chained_posterior == BetaParams(5, 1)
    # each lab only sees its own update
    assert [r.result.posterior for r in rep.lab_records] == [BetaParams(3, 1)] * 2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63))
def test_closed_firewall(seed):
    space = big_space()
    lab1 = next(iter(space))
    rep = run_closed(PI08, space, lab1, seed)
    lab2 = rep.lab_records[1]
    assert lab2.knowledge.transmitted == ()
    assert rep.epistemic_reproduction is not EpistemicStatus.ESTABLISHED_BY_LAB2
    assert rep.configs_matched == (rep.labs[1].config == lab1)


def test_space_size_and_exact_match_probability():
    space = big_space()
    assert len(space) == 24
    assert space.match_probability(next(iter(space))) == Fraction(1, 24)


def test_chance_match_monte_carlo():
    space = big_space()
    lab1 = next(iter(space))
    rep = run_closed(PI08, space, lab1, seed=17, mc_draws=20_000)
    assert abs(rep.chance_match_estimate - 1 / 24) < 3 * rep.chance_match_se


def test_space_validation():
    with pytest.raises(ValueError):
        ConfigurationSpace([])
    with pytest.raises(ValueError):
        ConfigurationSpace([FIG2, FIG2])
    other = replace(FIG2, prior=BetaParams(2, 2))
    with pytest.raises(ValueError):
        run_closed(PI08, ConfigurationSpace([other]), FIG2, seed=0)


def test_space_order_is_serialized():
    space = big_space()
    listed = space.to_dict()
    assert len(listed) == 24
    assert listed[0]["model"] == {"family": "binomial", "n": 10}
    assert listed[1]["prior"] == {"alpha": "2", "beta": "2"}


# -- external observer --------------------------------------------------------


def _lab(values, prior=BetaParams(1, 1)):
    n = len(values)
    method = MethodSpec(FixedSampleSize(n), MaximumLikelihood())
    return run_experiment(PI08, Binomial(n), method, BackgroundKnowledge(prior), forced_values=values)


def test_observer_chains_counts():
    v = external_observer(_lab("BB"), _lab("BB"), BetaParams(1, 1), NINE_TENTHS)
    assert v.intermediate_posterior == BetaParams(3, 1)
    assert v.chained_posterior == BetaParams(5, 1)
    assert v.connected_verdict


def test_observer_does_not_need_values():
    a, b = _lab("BWBB"), _lab("BBWB")
    with_values = external_observer(a, b, criterion=NINE_TENTHS)
    without = external_observer(a.withhold_values(), b.withhold_values(), criterion=NINE_TENTHS)
    assert with_values == without


def test_observer_contradictory_labs():
    # all white then all black: Beta(1,6) at 0.95 is 6 * 0.05^5, a disconfirmation
    v = external_observer(_lab("WWWWW"), _lab("BBBBB"), criterion=ConfirmationDirection(Fraction(19, 20)))
    assert not v.connected_verdict


def test_observer_prior_defaults_to_lab1():
    v = external_observer(_lab("BB", BetaParams(2, 5)), _lab("BB"), criterion=NINE_TENTHS)
    assert v.chained_posterior == BetaParams(6, 5)


def test_observer_estimate_equivalence():
    v = external_observer(_lab("BWBB"), _lab("BBBW"), criterion=EstimateEquivalence(0))
    assert v.connected_verdict


def test_observer_rejects_incomplete_record():
    with pytest.raises(IncompleteRecordError):
        external_observer(_lab("BB"), replace(_lab("BB"), data=None))


@given(
    b1=st.integers(0, 30), w1=st.integers(0, 30), b2=st.integers(0, 30), w2=st.integers(0, 30)
)
def test_observer_equals_pooled_update(b1, w1, b2, w2):
    assume(b1 + w1 > 0 and b2 + w2 > 0)
    v = external_observer(_lab("B" * b1 + "W" * w1), _lab("B" * b2 + "W" * w2), BetaParams(1, 1), NINE_TENTHS)
    assert v.chained_posterior == BetaParams(1 + b1 + b2, 1 + w1 + w2)
