"""Detection counts of the two sequential LP heuristics on random finitely correlated chains."""

import sys

from connectors.mpctn import fcs_identity_value, fcs_trials

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 30
for m in (2, 3, 4):
    print(f"identity channels, m={m}: {fcs_identity_value(m):+.6f}")
for m in (3, 5):
    counts, _ = fcs_trials(m, trials, seed=0)
    print(f"m={m}, {trials} trials: method I {counts['I']}, method II {counts['II']}")
