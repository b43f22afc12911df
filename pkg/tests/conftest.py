import numpy as np
import pytest

from eqprop_lif.core import build_topology, init_weights
from eqprop_lif.nonlinearity import NeuronConstants


@pytest.fixture
def k():
    return NeuronConstants()


@pytest.fixture
def small_net():
    topo = build_topology([2, 3, 2], bias=True)
    return init_weights(topo, np.random.default_rng(0), 0.5)
