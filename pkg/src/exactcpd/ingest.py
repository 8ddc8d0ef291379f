"""Reading channel matrices and building channels from network snapshots.

Channel matrix files
--------------------
Plain text, one channel per line: the channel id followed by ``T`` non-negative
integers, separated by commas, tabs or spaces. Blank lines and lines starting
with ``#`` are ignored. An optional header line whose first field is
``channel`` lists epoch labels and is skipped::

    channel,1,2,3
    a,0,1,1
    b,1,1,0

Network snapshot files
----------------------
A node roster, the number of epochs, then one line per edge and epoch::

    # exactcpd-network v1
    nodes 1 2 3 4
    epochs 50
    1 1 2 3        # epoch node_u node_v [weight]

Epochs run from 1 to ``T``. The weight defaults to 1. Repeated lines for the
same pair and epoch add up. Nodes absent from every edge line are still
channels, which is why the roster is explicit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ParseError
from .multichannel import ChannelMatrix
from .statistics import BINARY, COUNT, KINDS

__all__ = [
    "NetworkSeries",
    "ChannelFilter",
    "load_channel_matrix",
    "write_channel_matrix",
    "load_network_series",
    "write_network_series",
    "edge_channels",
    "degree_channels",
    "filter_channels",
]

NETWORK_MAGIC = "# exactcpd-network v1"
_SPLIT = re.compile(r"[,\t ]+")


def _fields(line):
    return [f for f in _SPLIT.split(line.strip()) if f]


def load_channel_matrix(path, kind):
    """Parse a channel matrix file into a validated :class:`ChannelMatrix`."""
    if kind not in KINDS:
        raise ParseError(f"unknown kind {kind!r}")
    ids, rows = [], []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.lstrip().startswith("#"):
                continue
            fields = _fields(line)
            if not fields:
                continue
            if not rows and not ids and fields[0].lower() == "channel":
                continue
            if len(fields) < 3:
                raise ParseError("need a channel id and at least two values", row=lineno)
            values = []
            for col, text in enumerate(fields[1:], start=2):
                try:
                    v = int(text)
                except ValueError:
                    raise ParseError(f"non-integer entry {text!r}", row=lineno, column=col) from None
                if v < 0:
                    raise ParseError(f"negative entry {v}", row=lineno, column=col)
                if kind == BINARY and v > 1:
                    raise ParseError(f"entry {v} is not binary", row=lineno, column=col)
                values.append(v)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"ragged row: {len(values)} values, expected {width}", row=lineno
                )
            ids.append(fields[0])
            rows.append(values)
    if not rows:
        raise ParseError("no channels found")
    return ChannelMatrix(np.array(rows, dtype=np.int64), kind, tuple(ids))


def write_channel_matrix(matrix, path, delimiter=","):
    with open(path, "w") as fh:
        fh.write(delimiter.join(["channel"] + [str(t) for t in range(1, matrix.T + 1)]) + "\n")
        for cid, row in zip(matrix.channel_ids, matrix.data):
            fh.write(delimiter.join([str(cid)] + [str(int(v)) for v in row]) + "\n")


@dataclass(frozen=True)
class NetworkSeries:
    """``T`` weighted snapshots over a fixed node roster.

    ``snapshots[k]`` maps an unordered node-index pair ``(i, j)`` with ``i < j``
    to a positive integer weight.
    """

    snapshots: tuple
    node_ids: tuple

    def __post_init__(self):
        n = len(self.node_ids)
        clean = []
        for k, snap in enumerate(self.snapshots):
            edges = {}
            items = snap.items() if isinstance(snap, dict) else snap
            for item in items:
                if isinstance(snap, dict):
                    (u, v), w = item
                else:
                    u, v, w = item if len(item) == 3 else (*item, 1)
                u, v, w = int(u), int(v), int(w)
                if u == v:
                    raise ParseError(f"self-loop on node {u} in snapshot {k + 1}")
                if not (0 <= u < n and 0 <= v < n):
                    raise ParseError(f"edge ({u}, {v}) outside the node roster in snapshot {k + 1}")
                if w < 0:
                    raise ParseError(f"negative weight in snapshot {k + 1}")
                key = (min(u, v), max(u, v))
                edges[key] = edges.get(key, 0) + w
            clean.append({e: w for e, w in edges.items() if w > 0})
        object.__setattr__(self, "snapshots", tuple(clean))
        object.__setattr__(self, "node_ids", tuple(str(x) for x in self.node_ids))

    @property
    def n(self):
        return len(self.node_ids)

    @property
    def T(self):
        return len(self.snapshots)


def load_network_series(path):
    """Read a snapshot file (see module docstring)."""
    nodes = None
    T = None
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0]
            fields = _fields(line)
            if not fields:
                continue
            head = fields[0].lower()
            if head == "nodes":
                nodes = fields[1:]
                if len(set(nodes)) != len(nodes):
                    raise ParseError("duplicate node ids in roster", row=lineno)
                continue
            if head == "epochs":
                try:
                    T = int(fields[1])
                except (IndexError, ValueError):
                    raise ParseError("epochs needs an integer", row=lineno) from None
                continue
            if nodes is None or T is None:
                raise ParseError("edge line before the nodes/epochs header", row=lineno)
            if len(fields) not in (3, 4):
                raise ParseError("edge lines are 'epoch node_u node_v [weight]'", row=lineno)
            try:
                epoch = int(fields[0])
                weight = int(fields[3]) if len(fields) == 4 else 1
            except ValueError:
                raise ParseError("epoch and weight must be integers", row=lineno) from None
            if not 1 <= epoch <= T:
                raise ParseError(f"epoch {epoch} outside 1..{T}", row=lineno, column=1)
            edges.append((lineno, epoch, fields[1], fields[2], weight))
    if nodes is None or T is None:
        raise ParseError("missing 'nodes' or 'epochs' header")
    index = {name: i for i, name in enumerate(nodes)}
    snaps = [[] for _ in range(T)]
    for lineno, epoch, u, v, w in edges:
        for col, name in ((2, u), (3, v)):
            if name not in index:
                raise ParseError(f"unknown node {name!r}", row=lineno, column=col)
        if w < 0:
            raise ParseError("negative weight", row=lineno, column=4)
        if u == v:
            raise ParseError("self-loop", row=lineno)
        snaps[epoch - 1].append((index[u], index[v], w))
    return NetworkSeries(tuple(snaps), tuple(nodes))


def write_network_series(series, path):
    with open(path, "w") as fh:
        fh.write(NETWORK_MAGIC + "\n")
        fh.write("nodes " + " ".join(series.node_ids) + "\n")
        fh.write(f"epochs {series.T}\n")
        for k, snap in enumerate(series.snapshots, start=1):
            for (u, v), w in sorted(snap.items()):
                fh.write(f"{k} {series.node_ids[u]} {series.node_ids[v]} {w}\n")


def edge_channels(series, mode="binary"):
    """One channel per unordered node pair, in lexicographic order of node index.

    ``mode="binary"`` records edge presence; ``mode="weighted"`` the weight.
    """
    if mode not in ("binary", "weighted"):
        raise ValueError(f"mode must be 'binary' or 'weighted', got {mode!r}")
    n, T = series.n, series.T
    pairs = list(combinations(range(n), 2))
    row_of = {p: r for r, p in enumerate(pairs)}
    data = np.zeros((len(pairs), T), dtype=np.int64)
    for k, snap in enumerate(series.snapshots):
        for pair, w in snap.items():
            data[row_of[pair], k] = 1 if mode == "binary" else w
    ids = tuple(f"{series.node_ids[u]}-{series.node_ids[v]}" for u, v in pairs)
    return ChannelMatrix(data, BINARY if mode == "binary" else COUNT, ids)


def degree_channels(series):
    """One count channel per node: the total incident edge weight in each snapshot."""
    data = np.zeros((series.n, series.T), dtype=np.int64)
    for k, snap in enumerate(series.snapshots):
        for (u, v), w in snap.items():
            data[u, k] += w
            data[v, k] += w
    return ChannelMatrix(data, COUNT, series.node_ids)


@dataclass(frozen=True)
class ChannelFilter:
    """Drop channels with more than ``max_constant`` zeros (or ones, for binary data)."""

    max_constant: int

    def __post_init__(self):
        if self.max_constant < 0:
            raise ValueError("max_constant must be non-negative")


def filter_channels(matrix, filt):
    """Return ``(kept_matrix, dropped_ids)``; surviving rows keep their order and values."""
    if isinstance(filt, int):
        filt = ChannelFilter(filt)
    zeros = np.count_nonzero(matrix.data == 0, axis=1)
    drop = zeros > filt.max_constant
    if matrix.kind == BINARY:
        drop |= np.count_nonzero(matrix.data == 1, axis=1) > filt.max_constant
    keep = np.flatnonzero(~drop)
    dropped = [matrix.channel_ids[j] for j in np.flatnonzero(drop)]
    return matrix.subset(keep), dropped
