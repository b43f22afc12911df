"""Equilibrium propagation with rate-based and leaky integrate-and-fire neurons."""

from .core import NetworkParams, NetworkTopology, RngSpec, build_topology, init_weights
from .nonlinearity import Activation, NeuronConstants, liffi, relu, relu_prime
from .kernels import backend

__all__ = [
    "Activation",
    "NetworkParams",
    "NetworkTopology",
    "NeuronConstants",
    "RngSpec",
    "backend",
    "build_topology",
    "init_weights",
    "liffi",
    "relu",
    "relu_prime",
]
