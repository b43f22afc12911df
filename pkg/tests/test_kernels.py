import numpy as np
import pytest

from eqprop_lif import task
from eqprop_lif.core import build_topology, init_weights
from eqprop_lif.energy import RateState, relax
from eqprop_lif.harness.config import FIG5
from eqprop_lif.kernels import BACKENDS, get_backend
from eqprop_lif.lif import PopulationCode, SpikingModel, run_trial
from eqprop_lif.eqprop_rate import LearningRates, PhaseSchedule
from eqprop_lif.nonlinearity import Activation

compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")


def test_fallback_always_available():
    assert get_backend("python").NAME == "python"


@compiled
@pytest.mark.parametrize("act", [Activation("relu"), Activation("liffi", "surrogate"), Activation("liffi", "exact")],
                         ids=["relu", "liffi-s", "liffi-e"])
@pytest.mark.parametrize("seed", range(3))
def test_rate_parity(act, seed):
    rng = np.random.default_rng(seed)
    p = init_weights(build_topology([2, 12, 2], bias=True), rng, 1.0)
    st_ = RateState.zeros(p.topology.n_neurons, beta_y=0.5)
    st_.s_hat[:2] = rng.uniform(0, 1, 2)
    st_.s_hat[-3:-1] = rng.uniform(0, 1, 2)
    a, ra = relax(st_, p, act, duration=300, backend="python")
    b, rb = relax(st_, p, act, duration=300, backend="cython")
    assert np.allclose(a.s, b.s, rtol=1e-12, atol=1e-14)
    assert ra.final_residual == pytest.approx(rb.final_residual, rel=1e-9, abs=1e-14)
    assert ra.steps_taken == rb.steps_taken


@compiled
def test_rate_parity_early_stop():
    p = init_weights(build_topology([2, 5, 2], bias=True), np.random.default_rng(3), 0.5)
    st_ = RateState.zeros(p.topology.n_neurons)
    st_.s_hat[:2] = [0.4, 0.6]
    _, ra = relax(st_, p, Activation(), duration=5000, residual_tol=1e-9, backend="python")
    _, rb = relax(st_, p, Activation(), duration=5000, residual_tol=1e-9, backend="cython")
    assert ra.steps_taken == rb.steps_taken < 5000


@compiled
def test_spiking_parity():
    code = PopulationCode(3)
    topo = build_topology(code.layer_sizes([10]), bias=True)
    p = init_weights(topo, np.random.default_rng(0), 1.0)
    out = {}
    for name in ("python", "cython"):
        model = SpikingModel(FIG5, code, PhaseSchedule(150.0, 150.0), LearningRates(1e-4), backend=name)
        state = model.new_state(topo, record_spikes=True)
        params, m, state, trace = run_trial(p, task.make_sample(0.3, 0.8), model, state, probe=7)
        out[name] = (params.w, state, trace)
    (wa, sa, ta), (wb, sb, tb) = out["python"], out["cython"]
    assert np.allclose(wa, wb, rtol=1e-12, atol=1e-15)
    assert np.allclose(ta, tb, rtol=1e-12, atol=1e-12)
    for x, y in zip(sa.spikes, sb.spikes):
        assert np.array_equal(x, y)
    assert sum(len(x) for x in sa.spikes) > 20
