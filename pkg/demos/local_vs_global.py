"""Many sparse channels, a few of which change: local FDR testing next to a global test."""

import numpy as np

from exactcpd.multichannel import (
    ChannelMatrix,
    TruthSpec,
    evaluate_metrics,
    global_permutation_test,
    local_test,
)

rng = np.random.default_rng(11)
m, T, tau, changed = 100, 40, 20, range(8)
X = rng.binomial(1, 0.05, size=(m, T))
for j in changed:
    X[j, tau:] = rng.binomial(1, 0.5, T - tau)
matrix = ChannelMatrix(X, "binary")
truth = TruthSpec(frozenset(changed), tau)

for fdr in ("bh", "abh", "sts"):
    res = local_test(matrix, "minp", fdr, alpha=0.1, mc_count=10_000, seed=2, cache=False)
    met = evaluate_metrics([res], truth)
    print(f"minP-{fdr.upper():3s}: {len(res.rejections):2d} rejections, "
          f"TPR {met.tpr:.2f}, FDP {met.fdr:.2f}")

g = global_permutation_test(matrix, delta=1.0, B=999, alpha=0.1, seed=2)
print(f"global CUSUM: statistic {g.statistic:.3f}, permutation p = {g.p_value:.4f}")
