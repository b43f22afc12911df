import numpy as np
import pytest

from eqprop_lif import task
from eqprop_lif.core import NetworkParams, build_topology, init_weights
from eqprop_lif.energy import RateState
from eqprop_lif.eqprop_rate import (LearningRates, PhaseSchedule, SampleDivergence, backward_phase,
                                    contrastive_update, evaluate, forward_phase, hebbian_term, predict,
                                    read_output, train_epoch, train_step)
from eqprop_lif.nonlinearity import Activation

RELU = Activation()
SCH = PhaseSchedule()


def chain(w_fb=0.5):
    topo = build_topology([1, 1, 1])
    w = np.zeros((3, 3))
    w[1, 0] = 1.0
    w[2, 1] = w[1, 2] = w_fb
    return NetworkParams(topo, w)


def fixed_point_oracle(x, w_fb, n_iter=100_000, damp=0.5):
    sh = so = 0.0
    for _ in range(n_iter):
        sh_new = max(0.0, 1.0 * x + w_fb * so)
        so_new = max(0.0, w_fb * sh_new)
        sh, so = (1 - damp) * sh + damp * sh_new, (1 - damp) * so + damp * so_new
    return sh, so


class TestForward:
    def test_zero_weights(self, small_net):
        p = NetworkParams(small_net.topology, np.zeros_like(small_net.w))
        s, _ = forward_phase(p, [0.4, 0.8], SCH, RELU)
        assert not s.s[p.topology.output_set].any()

    def test_chain(self):
        s, rep = forward_phase(chain(), [2.0], SCH, RELU)
        sh, so = fixed_point_oracle(2.0, 0.5)
        assert s.s[1] == pytest.approx(sh, abs=1e-8)
        assert s.s[2] == pytest.approx(so, abs=1e-8)
        assert rep.final_residual < 1e-6

    def test_wrong_input_length(self, small_net):
        with pytest.raises(ValueError):
            forward_phase(small_net, [0.1], SCH, RELU)


class TestBackward:
    def test_zero_nudge(self, small_net):
        s, _ = forward_phase(small_net, [0.5, 0.5], SCH, RELU)
        y = s.s[small_net.topology.output_set]
        sb, _ = backward_phase(small_net, s, y, SCH, RELU)
        assert np.allclose(sb.s, s.s, atol=1e-12)

    def test_beta_zero(self, small_net):
        s, _ = forward_phase(small_net, [0.5, 0.5], SCH, RELU)
        with pytest.raises(ValueError):
            backward_phase(small_net, s, [0.1, 0.1], SCH, RELU, beta=0.0)
        with pytest.raises(ValueError):
            PhaseSchedule(beta=0.0)

    def test_linear_in_beta(self):
        p = chain(0.3)
        s, _ = forward_phase(p, [1.0], SCH, RELU)
        d = []
        for b in (1e-2, 5e-3):
            sb, _ = backward_phase(p, s, [0.1], SCH, RELU, beta=b)
            d.append(np.linalg.norm(sb.s - s.s))
        assert d[0] / d[1] == pytest.approx(2.0, rel=0.2)

    @pytest.mark.parametrize("seed", range(10))
    def test_nudge_direction(self, seed):
        rng = np.random.default_rng(seed)
        p = init_weights(build_topology([2, 4, 2], bias=True), rng, 1.0)
        s, _ = forward_phase(p, rng.uniform(0, 1, 2), SCH, RELU)
        y = rng.uniform(0, 1, 2)
        sb, _ = backward_phase(p, s, y, SCH, RELU, beta=0.05)
        o = p.topology.output_set
        assert np.all(np.abs(y - sb.s[o]) <= np.abs(y - s.s[o]) + 1e-9)


class TestUpdate:
    def _states(self, fwd, bwd):
        topo = build_topology([1, 1])
        a = RateState(np.array(fwd, float), np.zeros(2))
        b = RateState(np.array(bwd, float), np.zeros(2))
        return NetworkParams(topo, np.zeros((2, 2))), a, b

    def test_formula(self):
        p, a, b = self._states([1, 1], [2, 3])
        # indegree of the output neuron is 1, so eta = eta_base
        out = contrastive_update(p, a, b, RELU, LearningRates(0.1))
        assert out.w[1, 0] == pytest.approx(0.5)
        assert out.w[0, 1] == 0.0

    def test_no_change(self, small_net):
        s, _ = forward_phase(small_net, [0.2, 0.7], SCH, RELU)
        out = contrastive_update(small_net, s, s, RELU, LearningRates(0.1))
        assert np.array_equal(out.w, small_net.w)

    def test_symmetric_uniform_eta(self):
        # [1, 3, 2]: hidden and output neurons all have indegree 3
        topo = build_topology([1, 3, 2])
        assert len(set(topo.indegree[1:])) == 1
        p = NetworkParams(topo, np.zeros(topo.mask.shape))
        rng = np.random.default_rng(0)
        a = RateState(rng.uniform(0, 1, 6), np.zeros(6))
        b = RateState(rng.uniform(0, 1, 6), np.zeros(6))
        dw = contrastive_update(p, a, b, RELU, LearningRates(0.1)).w
        both = topo.mask & topo.mask.T
        assert np.array_equal(dw[both], dw.T[both])

    def test_row_scaling(self, small_net):
        topo = small_net.topology
        s, _ = forward_phase(small_net, [0.6, 0.9], SCH, RELU)
        sb, _ = backward_phase(small_net, s, [0.0, 1.0], SCH, RELU)
        dw = contrastive_update(small_net, s, sb, RELU, LearningRates(0.3)).w - small_net.w
        r0 = np.maximum(s.s, 0)
        r1 = np.maximum(sb.s, 0)
        r0[topo.bias_index] = r1[topo.bias_index] = 1.0
        raw = np.outer(r1, r1) - np.outer(r0, r0)
        sel = topo.mask & (np.abs(raw) > 1e-9)
        ratio = np.where(sel, dw / np.where(sel, raw, 1.0), np.nan)
        for i in np.flatnonzero(sel.any(axis=1)):
            assert np.allclose(ratio[i][sel[i]], 0.3 / np.sqrt(topo.indegree[i]), rtol=1e-9)

    def test_online_equals_batched(self, small_net):
        topo = small_net.topology
        lr = LearningRates(0.1)
        eta = lr.per_neuron(topo)
        s, _ = forward_phase(small_net, [0.3, 0.8], SCH, RELU)
        sb, _ = backward_phase(small_net, s, [0.2, 0.6], SCH, RELU)
        batched = contrastive_update(small_net, s, sb, RELU, lr).w
        online = small_net.w - hebbian_term(small_net, s, RELU, eta)
        online = online + hebbian_term(small_net, sb, RELU, eta)
        assert np.allclose(online, batched, rtol=0, atol=1e-12)

    def test_mask_preserved(self, small_net):
        rng = np.random.default_rng(0)
        p, _ = train_epoch(small_net, lambda: task.sample_uniform(rng, 1)[0], SCH, LearningRates(0.1), 5)
        p2, _ = train_epoch(small_net, lambda: task.sample_uniform(rng, 1)[0], SCH, LearningRates(0.1), 5,
                            update_mode="online")
        assert p.respects_mask() and p2.respects_mask()


class TestTrain:
    def test_zero_samples(self, small_net):
        with pytest.raises(ValueError):
            train_epoch(small_net, task.grid(2), SCH, LearningRates(0.1), 0)

    def test_eta_zero(self, small_net):
        p, log = train_epoch(small_net, task.grid(2) * 2, SCH, LearningRates(0.0), 8)
        assert np.array_equal(p.w, small_net.w)
        errs = [m.train_error for m in log]
        assert errs[:4] == errs[4:]

    def test_bad_mode(self, small_net):
        with pytest.raises(ValueError):
            train_step(small_net, task.make_sample(0, 0), SCH, RELU, LearningRates(0.1), "minibatch")

    def test_divergence_names_sample(self):
        topo = build_topology([2, 1, 2], bias=True)
        w = np.where(topo.mask, 3.0, 0.0)
        with pytest.raises(SampleDivergence) as exc:
            train_step(NetworkParams(topo, w), task.make_sample(0.5, 0.5), PhaseSchedule(t_forward=5000),
                       RELU, LearningRates(0.1), sample_index=17)
        assert exc.value.sample_index == 17 and "sample 17" in str(exc.value)

    def test_learns_single_point(self, small_net):
        smp = task.make_sample(0.3, 0.6)
        p, log = train_epoch(small_net, [smp] * 200, SCH, LearningRates(0.1), 200)
        assert log[-1].train_error < 0.2 * log[0].train_error


class TestEvaluate:
    def test_constant_predictor(self):
        assert task.euclid_error([(0.5, 0.5)], [(1.0, 0.5)]) == pytest.approx(0.5)

    def test_empty(self, small_net):
        with pytest.raises(ValueError):
            evaluate(small_net, [], SCH)

    def test_matches_one_line_oracle(self):
        p = init_weights(build_topology([2, 20, 2], bias=True), np.random.default_rng(5), 0.1)
        g = task.grid(16)
        preds = predict(p, g, SCH, RELU)
        oracle = np.mean([np.hypot(px - s.x, py - s.y) for (px, py), s in zip(preds, g)])
        assert evaluate(p, g, SCH, RELU) == pytest.approx(oracle, rel=1e-14)

    def test_population_readout(self):
        topo = build_topology([4, 3, 4])
        s = np.zeros(topo.n_neurons)
        s[topo.output_set] = [0.1, 0.3, 0.5, 0.9]
        assert np.allclose(read_output(s, topo), [0.2, 0.7])
