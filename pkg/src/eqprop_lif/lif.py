"""Leaky integrate-and-fire network trained with the online contrastive rule.

Each neuron integrates ``tau du/dt = -u + u_rest + (1 - lam) A + lam R I``
where ``A = sum_j w_ij syn_j`` is the synaptic drive, ``I`` an external
current and ``lam = R I / (R I + A)`` the nudging factor.  Spikes feed a
synaptic trace ``syn`` (time constant tau_s, area u_psp per spike) which is
low-pass filtered again into the rate estimate ``rate_est`` (tau_r) used by
the plasticity rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import NetworkParams, NetworkTopology
from .eqprop_rate import LearningRates, PhaseSchedule
from .energy import DivergenceError
from .kernels import get_backend
from .nonlinearity import NeuronConstants, liffi
from .task import TaskSample, euclid_error


@dataclass(frozen=True)
class PopulationCode:
    neurons_per_dim: int = 20
    input_dims: int = 2
    output_dims: int = 2

    def __post_init__(self):
        if self.neurons_per_dim < 1:
            raise ValueError("neurons_per_dim must be >= 1")

    @property
    def n_inputs(self) -> int:
        return self.input_dims * self.neurons_per_dim

    @property
    def n_outputs(self) -> int:
        return self.output_dims * self.neurons_per_dim

    def layer_sizes(self, hidden: Sequence[int]) -> list[int]:
        return [self.n_inputs, *hidden, self.n_outputs]


@dataclass
class SpikingState:
    u: np.ndarray
    syn: np.ndarray
    rate_est: np.ndarray
    refract_left: np.ndarray
    t_now: float = 0.0
    dt: float = 1.0
    record_spikes: bool = False
    spike_log: list = field(default_factory=list, repr=False)

    @classmethod
    def rest(cls, n: int, constants: NeuronConstants, **kw) -> "SpikingState":
        """Quiet start: empty traces, potentials at ``u_reset``.

        Starting at ``u_rest`` would fire every neuron on the first step
        whenever ``u_rest >= theta``.
        """
        return cls(
            u=np.full(n, float(constants.u_reset)),
            syn=np.zeros(n),
            rate_est=np.zeros(n),
            refract_left=np.zeros(n, dtype=np.int64),
            **kw,
        )

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def refract_until(self) -> np.ndarray:
        """Time (ms) at which each neuron leaves its refractory period."""
        return self.t_now + self.refract_left * self.dt

    @property
    def spikes(self) -> list[np.ndarray]:
        """Per-neuron ordered spike times (ms)."""
        if not self.spike_log:
            return [np.zeros(0) for _ in range(self.n)]
        nrn = np.concatenate([c[0] for c in self.spike_log])
        t = np.concatenate([c[1] for c in self.spike_log])
        return [t[nrn == i] for i in range(self.n)]

    def reset(self, constants: NeuronConstants) -> None:
        self.u[:] = constants.u_reset
        self.syn[:] = 0.0
        self.rate_est[:] = 0.0
        self.refract_left[:] = 0
        self.t_now = 0.0
        self.spike_log.clear()

    def copy(self) -> "SpikingState":
        return SpikingState(self.u.copy(), self.syn.copy(), self.rate_est.copy(), self.refract_left.copy(),
                            self.t_now, self.dt, self.record_spikes, list(self.spike_log))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("u", "syn", "rate_est", "refract_left")} | {
            "t_now": self.t_now, "dt": self.dt}

    @classmethod
    def from_dict(cls, d: dict) -> "SpikingState":
        return cls(np.array(d["u"]), np.array(d["syn"]), np.array(d["rate_est"]),
                   np.array(d["refract_left"], dtype=np.int64), d["t_now"], d["dt"])


def nudging_factor(drive, current, R: float):
    """lam = R I / (R I + A); zero without current or for non-positive totals, capped at 1."""
    A = np.asarray(drive, dtype=np.float64)
    B = R * np.asarray(current, dtype=np.float64)
    den = A + B
    ok = (B > 0) & (den > 0)
    lam = np.divide(B, den, out=np.zeros(np.broadcast(A, B).shape), where=ok)
    return np.clip(lam, 0.0, 1.0)


def _kernel_consts(k: NeuronConstants):
    return (k.tau, k.u_rest, k.u_reset, k.theta, k.tau_s, k.tau_r, k.u_psp, k.R)


def simulate(
    state: SpikingState,
    params: NetworkParams,
    constants: NeuronConstants,
    current: np.ndarray,
    n_steps: int,
    dt: float = 1.0,
    *,
    probe: int = -1,
    backend: str | None = None,
) -> np.ndarray | None:
    """Advance ``state`` in place by ``n_steps`` Euler steps of size ``dt`` under constant ``current``.

    With ``probe >= 0`` returns an ``(n_steps, 6)`` array of
    ``(t, u, syn, rate_est, I, lam)`` for that neuron after every step.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    current = np.ascontiguousarray(current, dtype=np.float64)
    if current.shape != (state.n,):
        raise ValueError(f"current must have length {state.n}")
    if np.any(current < 0):
        raise ValueError("external currents must be non-negative")
    kern = get_backend(backend)
    topo = params.topology
    n_ref = int(round(constants.delta / dt))
    if state.record_spikes:
        cap = state.n * (n_steps // (n_ref + 1) + 1)
    else:
        cap = 0
    spike_nrn = np.zeros(cap, dtype=np.int64)
    spike_step = np.zeros(cap, dtype=np.int64)
    probe_buf = np.zeros((n_steps if probe >= 0 else 0, 5))
    n_spikes, status = kern.lif_run(
        params.w, topo.indptr, topo.indices, state.u, state.syn, state.rate_est, state.refract_left,
        current, int(n_steps), float(dt), _kernel_consts(constants), n_ref,
        spike_nrn, spike_step, int(probe), probe_buf,
    )
    t0 = state.t_now
    state.dt = dt
    if status:
        state.t_now = t0 + status * dt
        raise DivergenceError(int(status), "membrane potential")
    state.t_now = t0 + n_steps * dt
    if state.record_spikes and n_spikes:
        m = min(n_spikes, cap)
        state.spike_log.append((spike_nrn[:m].copy(), t0 + spike_step[:m] * dt))
    if probe >= 0:
        t = t0 + dt * np.arange(1, n_steps + 1)
        return np.column_stack([t, probe_buf])
    return None


def step_spiking(state: SpikingState, params: NetworkParams, constants: NeuronConstants,
                 current: np.ndarray, dt: float = 1.0, **kw) -> SpikingState:
    simulate(state, params, constants, current, 1, dt, **kw)
    return state


def encode_input(sample: tuple[float, float] | TaskSample, code: PopulationCode) -> np.ndarray:
    """Identical current for every neuron of a dimension's group, equal to the value."""
    vals = sample.inputs if isinstance(sample, TaskSample) else tuple(sample)
    return _encode(vals, code.input_dims, code.neurons_per_dim, "input")


def encode_target(target: tuple[float, float] | TaskSample, code: PopulationCode) -> np.ndarray:
    vals = target.target if isinstance(target, TaskSample) else tuple(target)
    return _encode(vals, code.output_dims, code.neurons_per_dim, "target")


def _encode(vals, dims, per_dim, what):
    vals = np.asarray(vals, dtype=np.float64)
    if vals.shape != (dims,):
        raise ValueError(f"{what} must have {dims} components")
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError(f"{what} values must lie in [0, 1], got {vals.tolist()}")
    return np.repeat(vals, per_dim)


class RateCalibration:
    """Value <-> steady rate-estimate map for a neuron fully driven by current ``v``.

    Under current ``v`` alone the nudging factor is 1, the drive is
    ``u_rest + R v``, and the rate estimate settles at ``u_psp * liffi(drive)``.
    """

    def __init__(self, constants: NeuronConstants, n_points: int = 101):
        self.values = np.linspace(0.0, 1.0, n_points)
        self.levels = constants.u_psp * liffi(constants.u_rest + constants.R * self.values, constants)
        if np.any(np.diff(self.levels[1:]) <= 0):
            raise ValueError("calibration curve is not monotone; need u_rest >= theta")

    def to_value(self, level):
        return np.clip(np.interp(level, self.levels, self.values), 0.0, 1.0)

    def to_level(self, value):
        return np.interp(value, self.values, self.levels)


def decode_output(state: SpikingState, code: PopulationCode, constants: NeuronConstants,
                  output_set: np.ndarray | None = None,
                  calibration: RateCalibration | None = None) -> tuple[float, float]:
    """Mean rate estimate per output group, mapped back to a value in [0, 1]."""
    calibration = calibration or RateCalibration(constants)
    if output_set is None:
        output_set = np.arange(state.n - code.n_outputs, state.n)
    lv = state.rate_est[output_set].reshape(code.output_dims, -1).mean(axis=1)
    x, y = calibration.to_value(lv)
    return float(x), float(y)


@dataclass
class SpikingModel:
    """Everything fixed about a spiking experiment apart from the weights."""

    constants: NeuronConstants
    code: PopulationCode
    schedule: PhaseSchedule
    learning: LearningRates
    bias_current: float = 1.0
    carry_traces: bool = False
    backend: str | None = None

    def __post_init__(self):
        self.calibration = RateCalibration(self.constants)

    def currents(self, topology: NetworkTopology, inputs=None, targets=None) -> np.ndarray:
        I = np.zeros(topology.n_neurons)
        if inputs is not None:
            I[topology.input_set] = encode_input(inputs, self.code)
        if targets is not None:
            I[topology.output_set] = encode_target(targets, self.code)
        for b in topology.bias_units:
            I[b] = self.bias_current
        return I

    def steps(self, duration: float) -> int:
        return int(round(duration / self.schedule.dt))

    def new_state(self, topology: NetworkTopology, record_spikes: bool = False) -> SpikingState:
        return SpikingState.rest(topology.n_neurons, self.constants, dt=self.schedule.dt,
                                 record_spikes=record_spikes)

    def decode(self, state: SpikingState, topology: NetworkTopology) -> tuple[float, float]:
        return decode_output(state, self.code, self.constants, topology.output_set, self.calibration)


@dataclass
class TrialMetrics:
    prediction: tuple[float, float]
    train_error: float
    r_minus: np.ndarray = field(repr=False)
    r_plus: np.ndarray = field(repr=False)
    t_subtract: float = 0.0
    t_add: float = 0.0


def _hebbian(params: NetworkParams, r: np.ndarray, eta: np.ndarray) -> np.ndarray:
    return np.where(params.topology.mask, eta[:, None] * np.outer(r, r), 0.0)


def run_trial(
    params: NetworkParams,
    sample: TaskSample,
    model: SpikingModel,
    state: SpikingState | None = None,
    *,
    probe: int = -1,
) -> tuple[NetworkParams, TrialMetrics, SpikingState, np.ndarray | None]:
    """One forward/backward trial with the two online weight updates.

    The anti-Hebbian half ``-eta_i r_i r_j`` is applied at the end of the forward
    phase and the Hebbian half at the end of the backward phase, with ``r`` the
    rate estimates at those instants.  Times in the returned metrics are on the
    trial-local clock.
    """
    topo = params.topology
    if state is None:
        state = model.new_state(topo)
    elif not model.carry_traces:
        state.reset(model.constants)
    t_start = state.t_now
    eta = model.learning.per_neuron(topo)
    sch = model.schedule

    fwd = simulate(state, params, model.constants, model.currents(topo, sample.inputs),
                   model.steps(sch.t_forward), sch.dt, probe=probe, backend=model.backend)
    prediction = model.decode(state, topo)
    r_minus = state.rate_est.copy()
    t_sub = state.t_now - t_start
    params = NetworkParams(topo, params.w - _hebbian(params, r_minus, eta))

    bwd = simulate(state, params, model.constants, model.currents(topo, sample.inputs, sample.target),
                   model.steps(sch.t_backward), sch.dt, probe=probe, backend=model.backend)
    r_plus = state.rate_est.copy()
    t_add = state.t_now - t_start
    params = NetworkParams(topo, params.w + _hebbian(params, r_plus, eta))

    trace = None
    if probe >= 0:
        trace = np.vstack([fwd, bwd])
        trace[:, 0] -= t_start
    err = euclid_error([prediction], [sample.target])
    return params, TrialMetrics(prediction, err, r_minus, r_plus, t_sub, t_add), state, trace


def predict_spiking(params: NetworkParams, samples: Sequence[TaskSample], model: SpikingModel) -> np.ndarray:
    topo = params.topology
    out = np.empty((len(samples), 2))
    state = model.new_state(topo)
    n_steps = model.steps(model.schedule.t_forward)
    for n, smp in enumerate(samples):
        state.reset(model.constants)
        simulate(state, params, model.constants, model.currents(topo, smp.inputs), n_steps,
                 model.schedule.dt, backend=model.backend)
        out[n] = model.decode(state, topo)
    return out


def evaluate_spiking(params: NetworkParams, eval_set: Sequence[TaskSample], model: SpikingModel) -> float:
    """Forward phases only (no target current); mean Euclidean error."""
    if not eval_set:
        raise ValueError("eval set must be non-empty")
    preds = predict_spiking(params, eval_set, model)
    return euclid_error(preds, [smp.target for smp in eval_set])


def train_spiking(
    params: NetworkParams,
    sampler: Callable[[], TaskSample] | Iterable[TaskSample],
    model: SpikingModel,
    n_samples: int,
    *,
    eval_set: Sequence[TaskSample] | None = None,
    eval_every: int = 0,
    state: SpikingState | None = None,
) -> tuple[NetworkParams, list[dict]]:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    draw = sampler if callable(sampler) else iter(sampler).__next__
    state = state or model.new_state(params.topology)
    log = []
    for k in range(1, n_samples + 1):
        try:
            params, m, state, _ = run_trial(params, draw(), model, state)
        except DivergenceError as exc:
            raise DivergenceError(exc.step, f"sample {k}: membrane potential") from exc
        row = {"sample_index": k, "train_error": m.train_error}
        if eval_set is not None and eval_every and k % eval_every == 0:
            row["eval_error"] = evaluate_spiking(params, eval_set, model)
        log.append(row)
    return params, log


def write_raster(state: SpikingState, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["neuron_id", "spike_time_ms"])
        rows = []
        for nrn, t in state.spike_log:
            rows.extend(zip(nrn.tolist(), t.tolist()))
        rows.sort(key=lambda r: (r[1], r[0]))
        for nrn, t in rows:
            wr.writerow([nrn, repr(t)])


def write_probe(trace: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "u", "syn", "rate_est", "I", "lam"])
        for row in trace:
            wr.writerow([repr(float(v)) for v in row])
