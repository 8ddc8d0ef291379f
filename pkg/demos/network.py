"""Edge channels from a synthetic network where two groups merge halfway through.

The network is written to a temporary snapshot file and read back, the same
path the ``exactcpd network`` command takes.
"""

import tempfile
from pathlib import Path

import numpy as np

from exactcpd.ingest import (
    NetworkSeries,
    edge_channels,
    filter_channels,
    load_network_series,
    write_network_series,
)
from exactcpd.multichannel import local_test

rng = np.random.default_rng(5)
n, T, tau = 16, 50, 25
group = np.arange(n) < n // 2
snapshots = []
for t in range(T):
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            same = group[u] == group[v]
            p = 0.4 if same else (0.02 if t < tau else 0.4)
            if rng.random() < p:
                edges.append((u, v))
    snapshots.append(edges)
net = NetworkSeries(tuple(snapshots), tuple(f"n{i}" for i in range(n)))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "toy.net"
    write_network_series(net, path)
    net = load_network_series(path)

matrix = edge_channels(net)
kept, dropped = filter_channels(matrix, T - 3)
res = local_test(kept, "minp", "bh", alpha=0.1, mc_count=10_000, seed=4, cache=False)
between = {f"n{u}-n{v}" for u in range(n) for v in range(u + 1, n) if group[u] != group[v]}
hits = {kept.channel_ids[j] for j in res.rejections.rejected}
print(f"{matrix.m} edge channels, {len(dropped)} dropped as nearly constant")
print(f"{len(hits)} flagged, {len(hits & between)} of them between groups "
      f"(of {len(between)} between-group pairs)")
taus = np.array(list(res.changepoint_estimates.values()))
if taus.size:
    print(f"median estimated changepoint {np.median(taus):.0f} (true {tau})")
