import json

import numpy as np
import pytest

from eqprop_lif.core import (NetworkParams, RngSpec, TopologyError, build_topology, init_weights,
                             load_checkpoint, save_checkpoint)


class TestBuildTopology:
    def test_232_counts(self):
        t = build_topology([2, 3, 2], bias=False)
        assert t.n_neurons == 7
        assert t.mask.sum() == 18

    @pytest.mark.parametrize("sizes", [[2, 0, 2], [], [3]])
    def test_degenerate(self, sizes):
        with pytest.raises(TopologyError):
            build_topology(sizes)

    def test_spiking_indegree(self):
        t = build_topology([40, 300, 40], bias=True)
        assert np.all(t.indegree[t.hidden_set()] == 81)
        assert np.all(t.indegree[t.output_set] == 301)
        assert np.all(t.indegree[t.input_set] == 0)

    def test_structure(self):
        t = build_topology([2, 3, 4, 2], bias=True)
        m = t.mask
        assert not m.diagonal().any()
        assert not m[t.input_set].any()  # nothing projects onto inputs
        assert set(t.input_set).isdisjoint(t.output_set)
        l0, l1, l2, l3 = t.layer_slices()
        assert m[l1, l0].all() and not m[l0, l1].any()
        assert m[l2, l1].all() and m[l1, l2].all()
        assert m[l3, l2].all() and m[l2, l3].all()
        assert not m[l3, l1].any()
        b = t.bias_index
        assert m[3:b, b].all() and not m[b].any()

    def test_csr_matches_mask(self):
        t = build_topology([3, 5, 2], bias=True)
        dense = np.zeros(t.mask.shape, dtype=bool)
        for i in range(t.n_neurons):
            dense[i, t.indices[t.indptr[i]:t.indptr[i + 1]]] = True
        assert np.array_equal(dense, t.mask)

    def test_mask_read_only(self):
        t = build_topology([2, 2])
        with pytest.raises(ValueError):
            t.mask[0, 0] = True


class TestInitWeights:
    def test_scale_zero_rejected(self):
        with pytest.raises(ValueError):
            init_weights(build_topology([2, 3, 2]), np.random.default_rng(0), 0.0)

    def test_deterministic(self):
        t = build_topology([2, 3, 2], bias=True)
        a = init_weights(t, RngSpec(7, 0), 0.1)
        b = init_weights(t, RngSpec(7, 0), 0.1)
        c = init_weights(t, RngSpec(7, 1), 0.1)
        assert np.array_equal(a.w, b.w)
        assert not np.array_equal(a.w, c.w)

    def test_bounds_per_row(self):
        t = build_topology([2, 3, 2], bias=True)
        p = init_weights(t, np.random.default_rng(1), 0.1)
        half = 0.1 / np.sqrt(np.maximum(t.indegree, 1))
        assert np.all(np.abs(p.w) <= half[:, None])
        assert np.all(np.abs(p.w) <= 0.1 / np.sqrt(t.indegree[t.indegree > 0].min()))
        assert p.respects_mask()
        assert np.all(p.w[t.mask] != 0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            NetworkParams(build_topology([2, 2]), np.zeros((3, 3)))


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, small_net):
        save_checkpoint(tmp_path / "c.json", small_net, {"note": 1})
        p, doc = load_checkpoint(tmp_path / "c.json")
        assert np.array_equal(p.w, small_net.w)
        assert p.topology.layer_sizes == (2, 3, 2) and p.topology.has_bias
        assert doc["note"] == 1
        assert set(doc) >= {"layer_sizes", "weights", "mask_hash"}

    def test_hash_mismatch(self, tmp_path, small_net):
        save_checkpoint(tmp_path / "c.json", small_net)
        doc = json.loads((tmp_path / "c.json").read_text())
        doc["mask_hash"] = "0" * 64
        (tmp_path / "c.json").write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="mask hash"):
            load_checkpoint(tmp_path / "c.json")

    def test_stray_weight(self, tmp_path, small_net):
        w = small_net.w.copy()
        w[0, 1] = 1.0
        save_checkpoint(tmp_path / "c.json", NetworkParams(small_net.topology, w))
        with pytest.raises(ValueError, match="mask"):
            load_checkpoint(tmp_path / "c.json")
