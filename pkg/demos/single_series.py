"""Exact versus bridge-based testing on one short binary series.

Run with ``python demos/single_series.py``.
"""

import numpy as np

from exactcpd.asymptotic import asymptotic_cusum_test, default_window, simulate_bridge_null
from exactcpd.exact import exact_test, minp_multiplicity_test
from exactcpd.statistics import ChannelSeries

rng = np.random.default_rng(3)
T, tau = 30, 24
x = np.concatenate([rng.binomial(1, 0.1, tau), rng.binomial(1, 0.8, T - tau)])
series = ChannelSeries(x, "binary")
print("series:", "".join(map(str, x)))

for method in ("lr", "cu1"):
    out = exact_test(series, method, alpha=0.1, mc_count=20_000, seed=1, cache=False)
    print(f"exact {method:5s} p = {out.p_value:.4f}  t_hat = {out.changepoint_estimate}")

out = minp_multiplicity_test(series, alpha=0.1, mc_count=20_000, seed=1, cache=False)
print(f"exact minP  min p = {out.statistic:.2e}  reject = {out.reject}  t_hat = {out.changepoint_estimate}")

# the bridge approximation only looks at a window away from the ends
a, b = default_window(T)
null = simulate_bridge_null(1.0, a, b, mc_count=20_000, seed=1)
out = asymptotic_cusum_test(series, 1.0, 0.1, null)
print(f"bridge BB1  p = {out.p_value:.4f}  t_hat = {out.changepoint_estimate}  window = ({a:.3f}, {b:.3f})")
