"""Two-phase equilibrium propagation for the rate network."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import NetworkParams, NetworkTopology
from .energy import CLAMPED, DivergenceError, RateState, RelaxReport, rates, relax
from .nonlinearity import Activation
from .task import TaskSample, euclid_error


@dataclass(frozen=True)
class PhaseSchedule:
    t_forward: float = 600.0
    t_backward: float = 600.0
    beta: float = 1.0
    dt: float = 1.0
    residual_tol: float = 0.0

    def __post_init__(self):
        if not self.t_forward > 0 or not self.t_backward > 0:
            raise ValueError("phase durations must be > 0")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")


@dataclass(frozen=True)
class LearningRates:
    eta_base: float

    def __post_init__(self):
        if not self.eta_base >= 0:
            raise ValueError("eta_base must be >= 0")

    def per_neuron(self, topology: NetworkTopology) -> np.ndarray:
        """eta_i = eta_base / sqrt(indegree_i); zero for neurons without inputs."""
        indeg = topology.indegree
        return np.where(indeg > 0, self.eta_base / np.sqrt(np.maximum(indeg, 1)), 0.0)


class SampleDivergence(DivergenceError):
    def __init__(self, sample_index: int, cause: DivergenceError):
        RuntimeError.__init__(self, f"sample {sample_index}: {cause}")
        self.step = cause.step
        self.sample_index = sample_index


def group_size(topology: NetworkTopology, dims: int = 2) -> int:
    n_in, n_out = len(topology.input_set), len(topology.output_set)
    if n_in % dims or n_out % dims or n_in // dims != n_out // dims:
        raise ValueError("input/output layers must split into equal groups per dimension")
    return n_in // dims


def expand(values: Sequence[float], per_dim: int) -> np.ndarray:
    """Repeat each value over its population group."""
    return np.repeat(np.asarray(values, dtype=np.float64), per_dim)


def read_output(s: np.ndarray, topology: NetworkTopology, dims: int = 2) -> np.ndarray:
    """Prediction: mean output state over each population group."""
    out = s[topology.output_set]
    return out.reshape(dims, -1).mean(axis=1)


def forward_phase(
    params: NetworkParams,
    x: Sequence[float],
    schedule: PhaseSchedule,
    act: Activation | None = None,
    *,
    bias_value: float = 1.0,
    backend: str | None = None,
) -> tuple[RateState, RelaxReport]:
    """Clamp the inputs to ``x`` and relax freely (no target) for ``t_forward``."""
    act = act or Activation()
    topo = params.topology
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(topo.input_set),):
        raise ValueError(f"x must have length {len(topo.input_set)}, got {x.shape}")
    state = RateState.zeros(topo.n_neurons, beta_x=CLAMPED, beta_y=0.0)
    state.s_hat[topo.input_set] = x
    return relax(state, params, act, schedule.dt, schedule.t_forward, schedule.residual_tol,
                 bias_value=bias_value, backend=backend)


def backward_phase(
    params: NetworkParams,
    s_star: RateState,
    y_hat: Sequence[float],
    schedule: PhaseSchedule,
    act: Activation | None = None,
    *,
    beta: float | None = None,
    bias_value: float = 1.0,
    backend: str | None = None,
) -> tuple[RateState, RelaxReport]:
    """Nudge the outputs towards ``y_hat`` with strength beta, starting from ``s_star``."""
    act = act or Activation()
    beta = schedule.beta if beta is None else beta
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    topo = params.topology
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.shape != (len(topo.output_set),):
        raise ValueError(f"target must have length {len(topo.output_set)}, got {y_hat.shape}")
    state = s_star.copy()
    state.beta_y = beta
    state.s_hat[topo.output_set] = y_hat
    return relax(state, params, act, schedule.dt, schedule.t_backward, schedule.residual_tol,
                 bias_value=bias_value, backend=backend)


def hebbian_term(params: NetworkParams, state: RateState, act: Activation, eta: np.ndarray,
                 bias_value: float = 1.0) -> np.ndarray:
    """eta_i * rho(s_i) * rho(s_j) on allowed connections, zero elsewhere."""
    r = rates(state.s, params, act, bias_value)
    return np.where(params.topology.mask, eta[:, None] * np.outer(r, r), 0.0)


def contrastive_update(
    params: NetworkParams,
    s_star: RateState,
    s_beta: RateState,
    act: Activation,
    learning: LearningRates,
    *,
    bias_value: float = 1.0,
) -> NetworkParams:
    """Apply dw_ij = eta_i (rho_i^beta rho_j^beta - rho_i^* rho_j^*) in one go."""
    eta = learning.per_neuron(params.topology)
    r_star = rates(s_star.s, params, act, bias_value)
    r_beta = rates(s_beta.s, params, act, bias_value)
    dw = eta[:, None] * (np.outer(r_beta, r_beta) - np.outer(r_star, r_star))
    return NetworkParams(params.topology, params.w + np.where(params.topology.mask, dw, 0.0))


@dataclass
class StepMetrics:
    sample_index: int
    forward_residual: float
    train_error: float
    prediction: tuple[float, float]


def train_step(
    params: NetworkParams,
    sample: TaskSample,
    schedule: PhaseSchedule,
    act: Activation,
    learning: LearningRates,
    update_mode: str = "batched",
    *,
    sample_index: int = 0,
    bias_value: float = 1.0,
    backend: str | None = None,
) -> tuple[NetworkParams, StepMetrics]:
    if update_mode not in ("batched", "online"):
        raise ValueError(f"update_mode must be 'batched' or 'online', got {update_mode!r}")
    topo = params.topology
    per_dim = group_size(topo)
    try:
        s_star, rep = forward_phase(params, expand(sample.inputs, per_dim), schedule, act,
                                    bias_value=bias_value, backend=backend)
        pred = read_output(s_star.s, topo)
        target = expand(sample.target, per_dim)
        if update_mode == "batched":
            s_beta, _ = backward_phase(params, s_star, target, schedule, act, bias_value=bias_value, backend=backend)
            params = contrastive_update(params, s_star, s_beta, act, learning, bias_value=bias_value)
        else:
            eta = learning.per_neuron(topo)
            params = NetworkParams(topo, params.w - hebbian_term(params, s_star, act, eta, bias_value))
            s_beta, _ = backward_phase(params, s_star, target, schedule, act, bias_value=bias_value, backend=backend)
            params = NetworkParams(topo, params.w + hebbian_term(params, s_beta, act, eta, bias_value))
    except DivergenceError as exc:
        raise SampleDivergence(sample_index, exc) from exc
    err = euclid_error([pred], [sample.target])
    return params, StepMetrics(sample_index, rep.final_residual, err, (float(pred[0]), float(pred[1])))


def train_epoch(
    params: NetworkParams,
    sampler: Callable[[], TaskSample] | Iterable[TaskSample],
    schedule: PhaseSchedule,
    learning: LearningRates,
    n_samples: int,
    update_mode: str = "batched",
    act: Activation | None = None,
    **kw,
) -> tuple[NetworkParams, list[StepMetrics]]:
    """Run ``n_samples`` forward/backward/update iterations."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    act = act or Activation()
    draw = sampler if callable(sampler) else iter(sampler).__next__
    log = []
    for k in range(1, n_samples + 1):
        params, m = train_step(params, draw(), schedule, act, learning, update_mode, sample_index=k, **kw)
        log.append(m)
    return params, log


def predict(params: NetworkParams, samples: Sequence[TaskSample], schedule: PhaseSchedule,
            act: Activation | None = None, **kw) -> np.ndarray:
    act = act or Activation()
    per_dim = group_size(params.topology)
    out = np.empty((len(samples), 2))
    for n, smp in enumerate(samples):
        s_star, _ = forward_phase(params, expand(smp.inputs, per_dim), schedule, act, **kw)
        out[n] = read_output(s_star.s, params.topology)
    return out


def evaluate(params: NetworkParams, eval_set: Sequence[TaskSample], schedule: PhaseSchedule,
             act: Activation | None = None, **kw) -> float:
    if not eval_set:
        raise ValueError("eval set must be non-empty")
    preds = predict(params, eval_set, schedule, act, **kw)
    return euclid_error(preds, [smp.target for smp in eval_set])
