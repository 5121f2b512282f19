import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from reprosim.estimators import (
    BetaParams,
    BiasedIndicator,
    Constant,
    MaximumLikelihood,
    MethodOfMoments,
    MissingPolicy,
    Verdict,
    estimate,
)
from reprosim.experiment import (
    BackgroundKnowledge,
    ComponentKind,
    Dataset,
    MethodSpec,
    audit,
    run_experiment,
)
from reprosim.models import (
    Binomial,
    FixedSampleSize,
    FixedWhiteCount,
    Hypergeometric,
    NegativeBinomial,
    TrueMechanism,
)
from reprosim.reproducibility import (
    CompatibilityError,
    ConfirmationDirection,
    Duplicate,
    EpistemicUnavailabilityError,
    EstimateEquivalence,
    Independent,
    Match,
    PreMethod,
    ReplicationSpec,
    ReproducibilityError,
    Scenario,
    is_reproduced,
    replicate,
    reproducibility_rate,
    run_pair,
)

ML, MM = MaximumLikelihood(), MethodOfMoments()
PI08 = TrueMechanism.infinite(0.8)
EXACT = EstimateEquivalence(0)

# sum_b P(b)^2 for Binomial(10, 0.8), by exhaustive sum with scipy.stats.binom.pmf
ML_COLLISION_N10_PI08 = 0.22380441531141046
# same, over the joint (b, first raven black) outcomes of the biased-indicator estimator
INDICATOR_COLLISION_N10_PI08 = 0.16053927729288983


def original(seed=1, n=10, est=ML, forced=None, mech=PI08, **kw):
    return run_experiment(
        mech, Binomial(n), MethodSpec(FixedSampleSize(n), est), seed=seed, forced_values=forced, **kw
    )


# -- replicate ----------------------------------------------------------------


def test_duplicate_everything_changes_only_data_and_knowledge():
    xi = original()
    rep = replicate(xi, ReplicationSpec(), PI08, seed=99)
    assert rep.model == xi.model and rep.method == xi.method
    assert rep.knowledge != xi.knowledge
    assert rep.knowledge.prior == xi.knowledge.prior
    assert rep.knowledge.has(ComponentKind.RESULT, xi.id)


def test_model_matching_gives_same_functional_form():
    xi = original(n=3)
    spec = ReplicationSpec(
        model=Match(NegativeBinomial(1)),
        s_pre=Match(PreMethod(FixedWhiteCount(1))),
        s_post=Match(MM),
    )
    for seed in range(30):
        rep = replicate(xi, spec, PI08, seed)
        s = rep.data.structure
        assert rep.result.estimate.value == Fraction(s.black_count, s.black_count + s.white_count)
    s = xi.data.structure
    assert xi.result.estimate.value == Fraction(s.black_count, s.black_count + s.white_count)


def test_match_must_keep_target_parameter():
    xi = original(n=5)
    spec = ReplicationSpec(model=Match(Hypergeometric(50, 5)))
    with pytest.raises(CompatibilityError, match="inferential value"):
        replicate(xi, spec, TrueMechanism.finite(40, 50), 0)


def test_independent_options_are_checked_too():
    xi = original(n=5)
    spec = ReplicationSpec(model=Independent([Binomial(5), Hypergeometric(50, 5)]))
    with pytest.raises(CompatibilityError):
        replicate(xi, spec, PI08, 0)


def test_independent_components_are_not_transmitted():
    xi = original(n=10, forced="BBBBBBWWMM")
    spec = ReplicationSpec(d_s=Independent([MissingPolicy.EXCLUDE, MissingPolicy.COUNT_IN_N]))
    rep = replicate(xi, spec, PI08, 5)
    assert not rep.knowledge.has(ComponentKind.DATA_STRUCTURE)
    assert rep.knowledge.has(ComponentKind.MODEL)


def test_replication_never_reads_values():
    xi = original(seed=3)
    full = replicate(xi, ReplicationSpec(), PI08, 11)
    blind = replicate(xi.withhold_values(), ReplicationSpec(), PI08, 11)
    assert full == blind


def test_result_withheld_makes_judgment_unavailable():
    xi = original()
    rep = replicate(xi, ReplicationSpec(transmitted_result=False), PI08, 2)
    assert rep.knowledge.has(ComponentKind.REPLICATION_OF)
    assert not rep.knowledge.has(ComponentKind.RESULT)
    with pytest.raises(EpistemicUnavailabilityError):
        is_reproduced(xi.result, rep.result, EXACT, rep.knowledge)


def test_knowledge_always_differs_from_original():
    xi = original()
    spec = ReplicationSpec(
        model=Independent([Binomial(10)]),
        s_pre=Independent([PreMethod(FixedSampleSize(10))]),
        s_post=Independent([ML]),
        d_s=Independent([MissingPolicy.EXCLUDE]),
        transmitted_result=False,
    )
    rep = replicate(xi, spec, PI08, 3)
    assert [c.kind for c in rep.knowledge.transmitted] == [ComponentKind.REPLICATION_OF]
    assert rep.knowledge != xi.knowledge


def test_replication_is_deterministic():
    xi = original()
    spec = ReplicationSpec(s_post=Independent([ML, MM, Constant()]))
    assert replicate(xi, spec, PI08, 8) == replicate(xi, spec, PI08, 8)


# -- is_reproduced ------------------------------------------------------------


def _pair(v1, v2, est=ML):
    xi = original(n=4, forced=v1, est=est)
    rep = replicate(xi, ReplicationSpec(), PI08, 0, forced_values=v2)
    return xi, rep


def test_equal_estimates_reproduce():
    xi, rep = _pair("BBWB", "WBBB")
    assert is_reproduced(xi.result, rep.result, EXACT, rep.knowledge)


def test_confirms_vs_disconfirms_fails():
    xi, rep = _pair("BBBW", "BWWW")
    crit = ConfirmationDirection(Fraction(3, 4))
    # Beta(4,2) vs Beta(2,4) at 3/4: 20 x^3 (1-x) = 2.109 > 1 and 20 x (1-x)^3 = 0.234 < 1
    assert rep.result.confirmation is not None
    assert not is_reproduced(xi.result, rep.result, crit, rep.knowledge)


def test_confirmation_direction_uses_stored_verdicts_by_default():
    xi, rep = _pair("BBBW", "BBWB")
    assert xi.result.confirmation is Verdict.CONFIRMS
    assert rep.result.theta_star == xi.result.theta_star == Fraction(3, 4)
    assert is_reproduced(xi.result, rep.result, ConfirmationDirection(), rep.knowledge)


def test_auditable_pair_need_not_reproduce():
    xi, rep = _pair("BBBW", "BWWW")
    assert audit(xi).matches and audit(rep).matches
    assert not is_reproduced(xi.result, rep.result, EXACT, rep.knowledge)


@given(a=st.integers(0, 12), b=st.integers(0, 12), tol=st.fractions(0, 1, max_denominator=12))
def test_estimate_equivalence_is_symmetric(a, b, tol):
    v1 = "B" * a + "W" * (12 - a)
    v2 = "B" * b + "W" * (12 - b)
    xi = original(n=12, forced=v1)
    rep = replicate(xi, ReplicationSpec(), PI08, 0, forced_values=v2)
    back = replicate(rep, ReplicationSpec(), PI08, 0, forced_values=v1)
    crit = EstimateEquivalence(tol)
    fwd = is_reproduced(xi.result, rep.result, crit, rep.knowledge)
    rev = is_reproduced(rep.result, back.result, crit, back.knowledge)
    assert fwd == rev == (abs(Fraction(a - b, 12)) <= tol)


def test_criterion_validation():
    with pytest.raises(ValueError):
        ConfirmationDirection(1)
    with pytest.raises(ValueError):
        EstimateEquivalence(-0.1)


# -- Monte Carlo rates --------------------------------------------------------


def test_constant_rate_is_exactly_one():
    sc = Scenario(PI08, Binomial(10), MethodSpec(FixedSampleSize(10), Constant()), criterion=EXACT)
    rep = reproducibility_rate(sc, 500, master_seed=4)
    assert rep.rate == 1.0 and rep.mc_std_error == 0.0
    assert rep.diagnostics["mean_estimate"] == 0.5


def test_collision_oracle():
    p = stats.binom.pmf(np.arange(11), 10, 0.8)
    assert math.fsum(p**2) == pytest.approx(ML_COLLISION_N10_PI08, rel=1e-14)


def test_ml_collision_rate_small():
    sc = Scenario(PI08, Binomial(10), MethodSpec(FixedSampleSize(10), ML), criterion=EXACT)
    rep = reproducibility_rate(sc, 4000, master_seed=77)
    assert abs(rep.rate - ML_COLLISION_N10_PI08) < 3 * rep.mc_std_error


def test_indicator_collision_oracle_by_brute_force():
    # enumerate all 2^10 sequences and collect the law of the estimate
    law = {}
    for mask in range(1 << 10):
        seq = [(mask >> i) & 1 for i in range(10)]
        b = sum(seq)
        est = Fraction(b, 10) + seq[0]
        law[est] = law.get(est, 0) + 0.8**b * 0.2 ** (10 - b)
    assert math.fsum(p * p for p in law.values()) == pytest.approx(INDICATOR_COLLISION_N10_PI08, rel=1e-12)
    assert INDICATOR_COLLISION_N10_PI08 < ML_COLLISION_N10_PI08


def test_indicator_rate_below_ml_rate():
    common = dict(criterion=EXACT)
    ml = Scenario(PI08, Binomial(10), MethodSpec(FixedSampleSize(10), ML), **common)
    bi = Scenario(PI08, Binomial(10), MethodSpec(FixedSampleSize(10), BiasedIndicator()), **common)
    r_ml = reproducibility_rate(ml, 5000, 1)
    r_bi = reproducibility_rate(bi, 5000, 1)
    assert r_bi.rate < r_ml.rate
    assert abs(r_bi.rate - INDICATOR_COLLISION_N10_PI08) < 3 * r_bi.mc_std_error
    assert "indicator_fire_rate" in r_bi.diagnostics


def test_report_invariants():
    sc = Scenario(PI08, Binomial(5), MethodSpec(FixedSampleSize(5), ML), criterion=EXACT)
    rep = reproducibility_rate(sc, 300, 9, log_pairs=True)
    assert rep.rate == rep.reproduced / rep.pairs_run
    assert rep.mc_std_error == pytest.approx(math.sqrt(rep.rate * (1 - rep.rate) / 300))
    assert len(rep.rows) == 300
    header = rep.pair_table().splitlines()[0]
    assert header == "pair_index,estimate_1,estimate_2,verdict_1,verdict_2,reproduced"


def test_pairs_must_be_positive():
    sc = Scenario(PI08, Binomial(5), MethodSpec(FixedSampleSize(5), ML))
    with pytest.raises(ValueError):
        reproducibility_rate(sc, 0, 1)


def test_pair_errors_carry_context():
    sc = Scenario(
        TrueMechanism.infinite(1), NegativeBinomial(1), MethodSpec(FixedWhiteCount(1), ML)
    )
    with pytest.raises(ReproducibilityError, match="pair 0"):
        reproducibility_rate(sc, 3, 1)


def test_worker_count_does_not_change_report():
    sc = Scenario(PI08, Binomial(6), MethodSpec(FixedSampleSize(6), BiasedIndicator()), criterion=EXACT)
    one = reproducibility_rate(sc, 200, 5, log_pairs=True)
    two = reproducibility_rate(sc, 200, 5, workers=2, log_pairs=True)
    assert one == two


def test_replication_data_independent_of_original():
    sc = Scenario(PI08, Binomial(10), MethodSpec(FixedSampleSize(10), ML), criterion=EXACT)
    rows = [run_pair(sc, 31, i) for i in range(3000)]
    x = np.array([float(r.estimate_1) for r in rows])
    y = np.array([float(r.estimate_2) for r in rows])
    r = np.corrcoef(x, y)[0, 1]
    # sampling sd of a null correlation is about 1/sqrt(n)
    assert abs(r) < 3 / math.sqrt(len(rows))


@settings(max_examples=15, deadline=None)
@given(pi=st.floats(0.05, 0.95), seed=st.integers(0, 2**32))
def test_constant_beats_ml_at_any_interior_pi(pi, seed):
    mech = TrueMechanism.infinite(pi)
    const = Scenario(mech, Binomial(8), MethodSpec(FixedSampleSize(8), Constant()), criterion=EXACT)
    ml = Scenario(mech, Binomial(8), MethodSpec(FixedSampleSize(8), ML), criterion=EXACT)
    assert reproducibility_rate(const, 50, seed).rate == 1.0
    # the collision probability is below 0.53 on this range, so 50 straight hits is ~1e-14
    assert reproducibility_rate(ml, 50, seed).rate < 1.0


# -- equivalence table ----------------------------------------------------------


def test_estimator_equivalence_table_small():
    for n in range(1, 21):
        for b in range(n + 1):
            w = n - b
            d = Dataset.from_counts(b, w)
            assert estimate(ML, Binomial(n), d).value == estimate(MM, Binomial(n), d).value
            if w >= 1:
                nb = Dataset.from_counts(b, w, stopping_rule=FixedWhiteCount(w))
                assert estimate(ML, NegativeBinomial(w), nb).value == Fraction(b, n)


def test_replication_prior_override():
    xi = original()
    rep = replicate(xi, ReplicationSpec(prior=BetaParams(4, 4)), PI08, 1)
    assert rep.knowledge == BackgroundKnowledge(BetaParams(4, 4), rep.knowledge.transmitted)
    assert rep.result.prior == BetaParams(4, 4)


def test_duplicate_directive_is_default():
    assert ReplicationSpec().model == Duplicate()
