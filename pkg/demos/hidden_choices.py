"""Undisclosed analysis choices can break a replication on identical data.

The original lab drops missing observations before estimating. A replicating
lab that is told the data but not this convention picks one at random.
"""

from reprosim import (
    Binomial,
    FixedSampleSize,
    Independent,
    MaximumLikelihood,
    MethodSpec,
    MissingPolicy,
    ReplicationSpec,
    TrueMechanism,
    audit,
    replicate,
    run_experiment,
)

mech = TrueMechanism.infinite(0.8)
values = "BBBBBBWWMM"  # M marks a raven whose colour was not recorded
original = run_experiment(mech, Binomial(10), MethodSpec(FixedSampleSize(10), MaximumLikelihood()), forced_values=values)
print(f"original estimate {original.result.estimate.value} from {values}")

blind = ReplicationSpec(d_s=Independent([MissingPolicy.EXCLUDE, MissingPolicy.COUNT_IN_N]))
for seed in range(6):
    rep = replicate(original, blind, mech, seed, forced_values=values)
    print(f"  replication {seed}: {rep.result.estimate.value}  (audit ok: {audit(rep).matches})")

# without the raw values nobody can recheck the arithmetic
print(f"audit of withheld record: {audit(original.withhold_values()).matches}")
