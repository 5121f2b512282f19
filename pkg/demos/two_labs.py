"""Two labs study the same population of ravens, once openly and once behind closed doors.

In the open run Lab 2 inherits Lab 1's posterior as its prior and can judge
the original result itself. In the closed run neither lab sees the other, so
only an outside observer holding both records can connect them.

    python3 demos/two_labs.py
"""

from fractions import Fraction

from reprosim import (
    BayesPosteriorMean,
    BetaParams,
    Binomial,
    ComponentKind,
    ConfigurationSpace,
    FixedSampleSize,
    LabConfig,
    MethodSpec,
    TrueMechanism,
    run_closed,
    run_open,
)
from reprosim.reproducibility import ConfirmationDirection

mech = TrueMechanism.infinite(0.8)
lab = LabConfig(Binomial(2), MethodSpec(FixedSampleSize(2), BayesPosteriorMean()), BetaParams(1, 1))
criterion = ConfirmationDirection(Fraction(9, 10))


def beta(p):
    return f"Beta({p.alpha}, {p.beta})"


# both labs happen to see two black ravens
seen = ("BB", "BB")

share_all = [k for k in ComponentKind if k is not ComponentKind.REPLICATION_OF]
opened = run_open(mech, lab, share_all, seed=0, forced_values=seen, criterion=criterion)
first, second = opened.lab_records
print("open collaboration")
print(f"  lab 1: {beta(first.result.prior)} -> {beta(first.result.posterior)}")
print(f"  lab 2: {beta(second.knowledge.prior)} -> {beta(opened.chained_posterior)}")
print(f"  posterior means: {' -> '.join(opened.to_dict()['posterior_means'])}")
print(f"  reproduction: {opened.epistemic_reproduction.value}")

closed = run_closed(mech, ConfigurationSpace([lab]), lab, seed=0, forced_values=seen, criterion=criterion)
print("closed collaboration")
for i, rec in enumerate(closed.lab_records, 1):
    print(f"  lab {i}: {beta(rec.result.prior)} -> {beta(rec.result.posterior)}")
print(f"  reproduction seen by the labs: {closed.epistemic_reproduction.value}")
obs = closed.observer
print(f"  observer chains to {beta(obs.chained_posterior)}, connected={obs.connected_verdict}")
