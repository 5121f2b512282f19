"""How often do two independent labs agree exactly, depending on the estimator?

A constant estimator agrees every time while ignoring the data. Maximum
likelihood agrees only when both samples happen to contain the same number of
black ravens. High agreement is no evidence of a good estimate.

    python3 demos/estimator_choice.py
"""

import math

from reprosim import (
    BiasedIndicator,
    Binomial,
    Constant,
    EstimateEquivalence,
    FixedSampleSize,
    MaximumLikelihood,
    MethodSpec,
    Scenario,
    TrueMechanism,
    reproducibility_rate,
)

PI, N, PAIRS = 0.8, 10, 5000

mech = TrueMechanism.infinite(PI)
# chance that two Binomial(N, PI) draws coincide
collide = math.fsum(math.comb(N, b) ** 2 * PI ** (2 * b) * (1 - PI) ** (2 * (N - b)) for b in range(N + 1))

print(f"pi = {PI}, n = {N}, {PAIRS} pairs each")
print(f"{'estimator':<18}{'agree':>8}{'mean est.':>11}")
for est in (Constant(), MaximumLikelihood(), BiasedIndicator()):
    sc = Scenario(mech, Binomial(N), MethodSpec(FixedSampleSize(N), est), criterion=EstimateEquivalence(0))
    rep = reproducibility_rate(sc, PAIRS, master_seed=1)
    print(f"{est.kind:<18}{rep.rate:>8.3f}{rep.diagnostics['mean_estimate']:>11.3f}")
print(f"exact ML agreement for comparison: {collide:.3f}")
