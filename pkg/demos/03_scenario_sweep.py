"""The four test scenarios at a reduced size.

High contrast (A, B) makes infection times obvious from each series alone.
Low contrast (C, D) is where the network structure earns its keep. For the
full-size comparison use ``hiddencascade eval --scenarios A,B,C,D``.
"""
from hiddencascade.evaluate import DEGRADATION_RULE, run_scenarios, scenario

specs = [scenario(label, replications=8, total_iters=5_000) for label in "ABCD"]
report = run_scenarios(specs, seed=0,
                       progress=lambda s, k, n: k == n and print(f"scenario {s}: {n} replications done"))

print(f"{'':4}{'D_t joint':>11}{'D_t solo':>10}{'D_z joint':>11}{'D_z known t':>13}")
for spec in specs:
    m = report.means(spec.label)
    print(f"{spec.label:4}{m[('D_t', 'joint')]:11.2f}{m[('D_t', 'baseline')]:10.2f}"
          f"{m[('D_z', 'joint')]:11.2f}{m[('D_z', 'known_t')]:13.2f}")

# Parent errors in A and B are not zero even though times are exact: with
# twenty nodes and dense candidate sets, several candidates are usually
# infected in time to be the parent and the likelihood barely separates them.
#
# The bound below is an operational reading of "mild loss", not a measured
# quantity, and its margin in C and D is thin. With eight replications the
# known-time error happens to come out low, so the bound can fail here even
# though the 30-replication run at 2e4 sweeps satisfies it.
print("\nrule of thumb for a mild loss when times are unknown:", DEGRADATION_RULE)
for label, ok in report.degradation().items():
    print(f"  {label}: {'holds' if ok else 'violated'}")
