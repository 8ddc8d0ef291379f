import numpy as np
import pytest

from exactcpd.errors import ParseError
from exactcpd.ingest import (
    ChannelFilter,
    NetworkSeries,
    degree_channels,
    edge_channels,
    filter_channels,
    load_channel_matrix,
    load_network_series,
    write_channel_matrix,
    write_network_series,
)
from exactcpd.multichannel import ChannelMatrix


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestChannelMatrixFiles:
    def test_well_formed_binary(self, tmp_path):
        M = load_channel_matrix(write(tmp_path, "a,0,1,1\nb,1,0,0\n"), "binary")
        assert (M.m, M.T) == (2, 3) and M.channel_ids == ("a", "b")
        assert M.data.tolist() == [[0, 1, 1], [1, 0, 0]]

    def test_header_comments_and_whitespace(self, tmp_path):
        text = "# exported\nchannel\t1\t2\t3\n\nx 3 0 2\n# tail\ny\t0\t0\t7\n"
        M = load_channel_matrix(write(tmp_path, text), "count")
        assert M.channel_ids == ("x", "y") and M.data[1, 2] == 7

    def test_binary_violation_reports_position(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_channel_matrix(write(tmp_path, "a,0,1,1\nb,1,2,0\n"), "binary")
        assert (err.value.row, err.value.column) == (2, 3)
        assert "row 2" in str(err.value) and "column 3" in str(err.value)

    @pytest.mark.parametrize(
        "text, row, col",
        [("a,0,1\nb,0,1,1\n", 2, None), ("a,0,x,1\n", 1, 3), ("a,0,-1\n", 1, 3), ("a,1.5,0\n", 1, 2),
         ("a,1\n", 1, None)],
    )
    def test_malformed(self, tmp_path, text, row, col):
        with pytest.raises(ParseError) as err:
            load_channel_matrix(write(tmp_path, text), "count")
        assert err.value.row == row and err.value.column == col

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_channel_matrix(write(tmp_path, "# nothing\n"), "count")

    @pytest.mark.parametrize("delimiter", [",", "\t", " "])
    def test_round_trip(self, tmp_path, rng, delimiter):
        M = ChannelMatrix(rng.poisson(2, size=(7, 11)), "count", tuple(f"c{j}" for j in range(7)))
        p = tmp_path / "m.txt"
        write_channel_matrix(M, p, delimiter)
        back = load_channel_matrix(p, "count")
        assert np.array_equal(back.data, M.data) and back.channel_ids == M.channel_ids


NETWORK = """# exactcpd-network v1
nodes a b c d
epochs 3
1 a b
1 a c 2
2 b c 5   # heavy
2 b c 1
3 c d
"""


class TestNetworkFiles:
    def test_parse(self, tmp_path):
        s = load_network_series(write(tmp_path, NETWORK, "net.txt"))
        assert s.n == 4 and s.T == 3
        assert s.snapshots[0] == {(0, 1): 1, (0, 2): 2}
        assert s.snapshots[1] == {(1, 2): 6}

    def test_round_trip(self, tmp_path):
        s = load_network_series(write(tmp_path, NETWORK, "net.txt"))
        write_network_series(s, tmp_path / "out.txt")
        back = load_network_series(tmp_path / "out.txt")
        assert back == s

    @pytest.mark.parametrize(
        "body, row",
        [("1 a z\n", 4), ("4 a b\n", 4), ("1 a a\n", 4), ("1 a b x\n", 4), ("1 a\n", 4)],
    )
    def test_errors(self, tmp_path, body, row):
        text = "# exactcpd-network v1\nnodes a b c\nepochs 3\n" + body
        with pytest.raises(ParseError) as err:
            load_network_series(write(tmp_path, text, "bad.txt"))
        assert err.value.row == row

    def test_missing_header(self, tmp_path):
        with pytest.raises(ParseError):
            load_network_series(write(tmp_path, "1 a b\n", "bad.txt"))
        with pytest.raises(ParseError):
            load_network_series(write(tmp_path, "nodes a b\n", "bad.txt"))


class TestChannels:
    def test_edge_count(self):
        assert edge_channels(NetworkSeries(((),), tuple("abc"))).m == 3
        big = NetworkSeries(((), ()), tuple(str(i) for i in range(100)))
        M = edge_channels(big)
        assert (M.m, M.T) == (4950, 2)

    def test_weighted_single_edge(self):
        s = NetworkSeries(({(1, 3): 5},), tuple("abcd"))
        M = edge_channels(s, "weighted")
        assert M.kind == "count" and M.channel_ids[M.channel_ids.index("b-d")] == "b-d"
        col = M.data[:, 0]
        assert col[M.channel_ids.index("b-d")] == 5 and col.sum() == 5
        assert edge_channels(s, "binary").data.sum() == 1

    def test_lexicographic_order(self):
        M = edge_channels(NetworkSeries(((),), tuple("abcd")))
        assert M.channel_ids == ("a-b", "a-c", "a-d", "b-c", "b-d", "c-d")

    def test_degrees(self):
        empty = degree_channels(NetworkSeries(((), ()), tuple("abc")))
        assert empty.m == 3 and not empty.data.any()
        tri = degree_channels(NetworkSeries(([(0, 1, 1), (1, 2, 1), (0, 2, 1)],), tuple("abc")))
        assert tri.data[:, 0].tolist() == [2, 2, 2]
        star = degree_channels(NetworkSeries(([(0, 1, 1), (0, 2, 2), (3, 0, 3)],), tuple("abcd")))
        assert star.data[:, 0].tolist() == [6, 1, 2, 3]

    def test_edge_order_does_not_matter(self, rng):
        edges = [(int(u), int(v), int(w)) for u, v, w in zip(rng.integers(0, 5, 30), rng.integers(0, 5, 30),
                                                             rng.integers(1, 4, 30)) if u != v]
        a = NetworkSeries((edges,), tuple("abcde"))
        b = NetworkSeries((edges[::-1],), tuple("abcde"))
        assert np.array_equal(edge_channels(a, "weighted").data, edge_channels(b, "weighted").data)
        assert np.array_equal(degree_channels(a).data, degree_channels(b).data)

    def test_invalid_network(self):
        with pytest.raises(ParseError):
            NetworkSeries(([(0, 5, 1)],), tuple("ab"))


class TestFilter:
    def test_binary_thresholds(self):
        x46 = np.r_[np.zeros(46, int), np.ones(4, int)]
        x45 = np.r_[np.zeros(45, int), np.ones(5, int)]
        ones46 = 1 - x46
        M = ChannelMatrix(np.vstack([x46, x45, ones46]), "binary", ("z46", "z45", "o46"))
        kept, dropped = filter_channels(M, ChannelFilter(45))
        assert kept.channel_ids == ("z45",) and dropped == ["z46", "o46"]

    def test_count_strict(self):
        x = np.r_[np.zeros(44, int), np.full(4, 3)]
        M = ChannelMatrix(np.vstack([x, np.r_[0, x[:-1]]]), "count", ("keep", "drop"))
        kept, dropped = filter_channels(M, 44)
        assert kept.channel_ids == ("keep",) and dropped == ["drop"]

    def test_survivors_unchanged(self, rng):
        M = ChannelMatrix(rng.binomial(1, 0.5, size=(20, 10)), "binary")
        kept, dropped = filter_channels(M, 7)
        rows = [M.channel_ids.index(c) for c in kept.channel_ids]
        assert rows == sorted(rows)
        assert np.array_equal(kept.data, M.data[rows])
        assert len(dropped) + kept.m == M.m

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            ChannelFilter(-1)
