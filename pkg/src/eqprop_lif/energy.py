"""Energy of the rate network, its state gradient, and Euler relaxation.

With the layered topologies of :mod:`eqprop_lif.core` some connections exist in
one direction only (input -> hidden, bias -> everything).  The energy counts
such a connection as if its reverse weight were equal, which is what the
clamped-input limit of a fully symmetric network amounts to; bidirectional
connections enter as ``(w_ij + w_ji) / 2``.  Under this convention the
dynamics is the negative energy gradient over free neurons whenever the
bidirectional weights are symmetric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import NetworkParams
from .kernels import get_backend
from .nonlinearity import Activation

CLAMPED = math.inf
DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, step: int, what: str = "state"):
        super().__init__(f"{what} diverged at step {step}")
        self.step = step


@dataclass
class RateState:
    s: np.ndarray
    s_hat: np.ndarray
    beta_x: float = CLAMPED
    beta_y: float = 0.0

    @classmethod
    def zeros(cls, n: int, **kw) -> "RateState":
        return cls(np.zeros(n), np.zeros(n), **kw)

    @property
    def clamped(self) -> bool:
        return math.isinf(self.beta_x)

    def copy(self) -> "RateState":
        return replace(self, s=self.s.copy(), s_hat=self.s_hat.copy())


@dataclass
class RelaxReport:
    steps_taken: int
    final_residual: float
    energy_trace: list[float] | None = None
    residual_trace: list[float] | None = field(default=None, repr=False)

    def write_csv(self, path: str | Path) -> None:
        if self.energy_trace is None:
            raise ValueError("relaxation was run without an energy trace")
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "energy", "residual"])
            for k, (e, r) in enumerate(zip(self.energy_trace, self.residual_trace)):
                wr.writerow([k, repr(e), repr(r)])


def _check(state: RateState, params: NetworkParams):
    n = params.topology.n_neurons
    if state.s.shape != (n,) or state.s_hat.shape != (n,):
        raise ValueError(f"state vectors must have length {n}, got {state.s.shape} and {state.s_hat.shape}")


def rates(s: np.ndarray, params: NetworkParams, act: Activation, bias_value: float = 1.0) -> np.ndarray:
    r = np.asarray(act.rho(s), dtype=np.float64).copy()
    for b in params.topology.bias_units:
        r[b] = bias_value
    return r


def energy_coupling(params: NetworkParams) -> np.ndarray:
    """Effective symmetric coupling used by :func:`energy`."""
    w, mask = params.w, params.topology.mask
    one_way = mask & ~mask.T
    w_full = w + np.where(one_way, w, 0.0).T
    return 0.5 * (w_full + w_full.T)


def energy(state: RateState, params: NetworkParams, act: Activation, bias_value: float = 1.0) -> float:
    _check(state, params)
    topo = params.topology
    s = state.s
    r = rates(s, params, act, bias_value)
    nonbias = np.ones(topo.n_neurons, dtype=bool)
    nonbias[list(topo.bias_units)] = False
    J = energy_coupling(params)
    np.fill_diagonal(J, 0.0)
    e = 0.5 * np.sum(s[nonbias] ** 2) - 0.5 * r @ J @ r
    if not state.clamped and state.beta_x:
        x = topo.input_set
        e += 0.5 * state.beta_x * np.sum((state.s_hat[x] - s[x]) ** 2)
    if state.beta_y:
        y = topo.output_set
        e += 0.5 * state.beta_y * np.sum((state.s_hat[y] - s[y]) ** 2)
    return float(e)


def dynamics_rhs(state: RateState, params: NetworkParams, act: Activation, bias_value: float = 1.0) -> np.ndarray:
    """``tau * ds/dt``; zero on bias units and on clamped inputs."""
    _check(state, params)
    topo = params.topology
    s = state.s
    r = rates(s, params, act, bias_value)
    out = -s + act.rho_prime(s) * (params.w @ r)
    x, y = topo.input_set, topo.output_set
    if state.clamped:
        out[x] = 0.0
    else:
        out[x] += state.beta_x * (state.s_hat[x] - s[x])
    out[y] += state.beta_y * (state.s_hat[y] - s[y])
    out[list(topo.bias_units)] = 0.0
    return out


def _kernel_args(state: RateState, params: NetworkParams):
    topo = params.topology
    mode = np.zeros(topo.n_neurons, dtype=np.int8)
    beta = np.zeros(topo.n_neurons)
    if state.clamped:
        mode[topo.input_set] = 1
    else:
        beta[topo.input_set] = state.beta_x
    beta[topo.output_set] = state.beta_y
    for b in topo.bias_units:
        mode[b] = 2
        beta[b] = 0.0
    return mode, beta


def relax(
    state: RateState,
    params: NetworkParams,
    act: Activation,
    dt: float = 1.0,
    duration: float = 600.0,
    residual_tol: float = 0.0,
    *,
    tau: float | None = None,
    bias_value: float = 1.0,
    trace: bool = False,
    backend: str | None = None,
) -> tuple[RateState, RelaxReport]:
    """Relax to a fixed point with projected forward-Euler steps.

    Free states are kept non-negative: both activations are flat below zero,
    so zero is where the continuous dynamics stops a decaying neuron, and a
    neuron sitting at zero with positive drive leaves it with unit slope.
    Stops early once the projected residual drops below ``residual_tol``
    (``0`` disables early stopping).
    """
    _check(state, params)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not duration >= dt:
        raise ValueError("duration must be >= dt")
    tau = act.k.tau if tau is None else tau
    kern = get_backend(backend)
    out = state.copy()
    topo = params.topology
    if out.clamped:
        out.s[topo.input_set] = out.s_hat[topo.input_set]
    mode, beta = _kernel_args(out, params)
    n_steps = int(round(duration / dt))
    lp = (act.k.tau, act.k.u_rest, act.k.u_reset, act.k.theta, act.k.delta, act.norm)
    args = (params.w, topo.indptr, topo.indices, out.s, mode, beta, out.s_hat, act.code, lp, bias_value, dt / tau)

    if not trace:
        steps, res, status = kern.rate_relax(*args, n_steps, residual_tol, DIVERGENCE_LIMIT)
        if status:
            raise DivergenceError(status)
        return out, RelaxReport(int(steps), float(res))

    energies = [energy(out, params, act, bias_value)]
    _, res, _ = kern.rate_relax(*args, 0, 0.0, DIVERGENCE_LIMIT)
    residuals = [float(res)]
    steps = 0
    while steps < n_steps and not (residual_tol > 0 and res < residual_tol):
        _, res, status = kern.rate_relax(*args, 1, 0.0, DIVERGENCE_LIMIT)
        steps += 1
        if status:
            raise DivergenceError(steps)
        energies.append(energy(out, params, act, bias_value))
        residuals.append(float(res))
    return out, RelaxReport(steps, float(res), energies, residuals)
