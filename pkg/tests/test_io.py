import numpy as np
import pytest

from imbalance_lab import fixtures
from imbalance_lab.io import (FormatError, load_checkpoint, read_csv, read_dataset,
                              save_checkpoint, write_csv, write_dataset)
from imbalance_lab.numerics import rng_stream
from imbalance_lab.taskgen import MixedPropVar, generate
from imbalance_lab.trainer import Model


def _same(a, b):
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.labels, b.labels) and a.n_classes == b.n_classes
    if a.edges is None:
        assert b.edges is None
    else:
        assert np.array_equal(a.edges, b.edges)


class TestDatasetRoundTrip:
    @pytest.mark.parametrize("name", ["d.csv", "d.bin"])
    def test_features(self, tmp_path, name):
        data = generate(MixedPropVar(d=3, K=2.0, V=2.0), 50, rng_stream(0, "t"))
        write_dataset(data, tmp_path / name)
        _same(data, read_dataset(tmp_path / name))

    @pytest.mark.parametrize("name", ["g.csv", "g.bin"])
    def test_graph(self, tmp_path, name):
        g = fixtures.neighbourhood_graph()
        written = write_dataset(g, tmp_path / name)
        assert len(written) == (2 if name.endswith(".csv") else 1)
        _same(g, read_dataset(tmp_path / name))

    def test_truncated_binary(self, tmp_path):
        data = generate(MixedPropVar(d=2), 10, rng_stream(0, "t"))
        write_dataset(data, tmp_path / "d.bin")
        blob = (tmp_path / "d.bin").read_bytes()
        (tmp_path / "d.bin").write_bytes(blob[:-3])
        with pytest.raises(FormatError):
            read_dataset(tmp_path / "d.bin")

    def test_not_a_dataset(self, tmp_path):
        write_csv(tmp_path / "x.csv", "other", ["a"], [[1]])
        with pytest.raises(FormatError):
            read_dataset(tmp_path / "x.csv")


class TestCsv:
    def test_schema_header(self, tmp_path):
        write_csv(tmp_path / "a.csv", "thing", ["x", "y"], [[1, 0.1]])
        meta, header, rows = read_csv(tmp_path / "a.csv")
        assert meta == {"schema": "thing", "version": "1"}
        assert header == ["x", "y"] and rows == [["1", "0.1"]]

    def test_timestamp_only_when_not_deterministic(self, tmp_path):
        write_csv(tmp_path / "a.csv", "thing", ["x"], [], deterministic=False)
        assert (tmp_path / "a.csv").read_text().splitlines()[1].startswith("# generated=")

    def test_float_repr_exact(self, tmp_path):
        v = 0.1 + 0.2
        write_csv(tmp_path / "a.csv", "t", ["v"], [[v]])
        assert float(read_csv(tmp_path / "a.csv")[2][0][0]) == v


class TestCheckpoint:
    @pytest.mark.parametrize("hidden", [None, 6])
    def test_round_trip(self, tmp_path, hidden):
        m = Model.init(4, 3, hidden, "tanh", seed=2)
        save_checkpoint(m, tmp_path / "m.ckpt", {"seed": 2})
        m2, extra = load_checkpoint(tmp_path / "m.ckpt")
        assert m2.params.tobytes() == m.params.tobytes()
        assert (m2.hidden, m2.activation, m2.variant) == (hidden, "tanh", m.variant)
        assert extra == {"seed": 2}

    def test_bad_magic(self, tmp_path):
        (tmp_path / "m.ckpt").write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "m.ckpt")
