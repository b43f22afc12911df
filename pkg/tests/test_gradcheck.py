import numpy as np
import pytest

from eqprop_lif.core import NetworkParams, build_topology
from eqprop_lif.gradcheck import (HessianError, contrastive_estimate, cosine, cost, cost_grad, dumps, free_phase,
                                  lambda_check, oracle_grad, random_instance, relative_error, run_suite, symmetrize,
                                  TightSchedule, weight_groups)
from eqprop_lif.nonlinearity import Activation

EXACT = Activation("relu", "exact")


@pytest.fixture(scope="module")
def inst():
    return random_instance(np.random.default_rng(11))


class TestCost:
    def test_zero(self):
        t = build_topology([1, 1])
        assert cost(np.array([0.0, 0.4]), [0.4], t) == 0

    def test_value(self):
        t = build_topology([1, 1])
        assert cost(np.array([0.0, 1.0]), [3.0], t) == pytest.approx(2.0)

    def test_gradient(self):
        t = build_topology([1, 2])
        s = np.array([0.0, 0.3, 0.9])
        y = np.array([0.5, 0.1])
        h = 1e-6
        for i in (1, 2):
            e = np.zeros(3)
            e[i] = h
            fd = (cost(s + e, y, t) - cost(s - e, y, t)) / (2 * h)
            assert cost_grad(s, y, t)[i] == pytest.approx(fd, abs=1e-9)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            cost(np.zeros(3), [0.1], build_topology([1, 2]))


def test_symmetrize(small_net):
    p = symmetrize(small_net)
    both = p.topology.mask & p.topology.mask.T
    assert np.array_equal(p.w[both], p.w.T[both])
    one = p.topology.mask & ~p.topology.mask.T
    assert np.array_equal(p.w[one], small_net.w[one])


def test_weight_groups():
    t = build_topology([2, 3, 2], bias=True)
    g = weight_groups(t)
    assert sum(len(x) for x in g) == t.mask.sum()
    assert sum(len(x) == 2 for x in g) == 6


class TestOracle:
    def test_disconnected_weight(self, inst):
        p = inst.params
        h = p.topology.hidden_set()[0]
        w = p.w.copy()
        w[p.topology.output_set, h] = 0.0
        w[h, p.topology.output_set] = 0.0
        p = NetworkParams(p.topology, w)
        g = oracle_grad(p, inst.x, inst.y_hat)
        assert np.all(np.abs(g[h, p.topology.input_set]) < 1e-7)

    def test_perfect_prediction(self, inst):
        s = free_phase(inst.params, inst.x, EXACT, TightSchedule())
        y = s.s[inst.params.topology.output_set]
        assert np.abs(oracle_grad(inst.params, inst.x, y)).max() < 1e-8
        assert np.abs(contrastive_estimate(inst.params, inst.x, y, 1e-2)).max() < 1e-7

    def test_richardson(self, inst):
        g1 = oracle_grad(inst.params, inst.x, inst.y_hat, h=1e-3)
        g2 = oracle_grad(inst.params, inst.x, inst.y_hat, h=5e-4)
        g3 = oracle_grad(inst.params, inst.x, inst.y_hat, h=2.5e-4)
        # central differences: successive differences shrink about fourfold, bounded by round-off
        d1, d2 = np.abs(g1 - g2).max(), np.abs(g2 - g3).max()
        assert d2 < 0.4 * d1 + 1e-8


class TestContrastive:
    def test_beta_trend(self, inst):
        ref = -oracle_grad(inst.params, inst.x, inst.y_hat)
        errs = [relative_error(contrastive_estimate(inst.params, inst.x, inst.y_hat, b), ref)
                for b in (1e-1, 1e-2, 1e-3)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 0.05
        est = contrastive_estimate(inst.params, inst.x, inst.y_hat, 1e-2)
        assert cosine(est, ref) >= 0.99

    def test_beta_positive(self, inst):
        with pytest.raises(ValueError):
            contrastive_estimate(inst.params, inst.x, inst.y_hat, 0.0)

    def test_halving(self, inst):
        ref = -oracle_grad(inst.params, inst.x, inst.y_hat)
        e = [relative_error(contrastive_estimate(inst.params, inst.x, inst.y_hat, b), ref) for b in (2e-2, 1e-2)]
        assert 1.5 <= e[0] / e[1] <= 3.0


class TestLambda:
    def test_matches_hessian(self, inst):
        rep = lambda_check(inst.params, inst.x, inst.y_hat, 1e-4)
        assert rep.lambda_residual <= 1e-3 * rep.cost_grad_norm

    def test_scalar_closed_form(self):
        t = build_topology([1, 1], bias=True)
        w = np.zeros(t.mask.shape)
        w[1, 0], w[1, 2] = 0.8, 0.3
        p = NetworkParams(t, w)
        x, y = [0.5], [1.2]
        s_star = 0.8 * 0.5 + 0.3
        lam_closed = -(-(1.2 - s_star)) / 1.0  # -(dC/ds)/H with H = 1
        rep = lambda_check(p, x, y, 1e-4)
        assert rep.lambda_hat[0] == pytest.approx(lam_closed, rel=0.01)
        assert rep.hessian_cond == pytest.approx(1.0)

    def test_target_at_output(self, inst):
        s = free_phase(inst.params, inst.x, EXACT, TightSchedule())
        rep = lambda_check(inst.params, inst.x, s.s[inst.params.topology.output_set], 1e-4)
        assert rep.cost_grad_norm < 1e-9 and np.abs(rep.lambda_hat).max() < 1e-6

    def test_ill_conditioned(self, inst):
        with pytest.raises(HessianError):
            lambda_check(inst.params, inst.x, inst.y_hat, 1e-4, max_cond=1.0)


def test_suite_report():
    rep = run_suite(3, seed=5)
    assert rep["passed"], rep["failures"]
    assert len(rep["instances"]) == 3
    doc = dumps(rep)
    assert '"beta_values"' in doc
    for r in rep["instances"]:
        assert all(e >= 0 for e in r["rel_errors"])
        assert all(-1 <= c <= 1 for c in r["cosine_similarity"])
