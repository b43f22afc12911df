"""Brute-force checks of the contrastive gradient estimate on small rate networks.

The oracle re-relaxes the network for every perturbed weight and takes
central differences of the cost at the fixed points.  Bidirectional
connections are perturbed as a tied pair (``w_ij`` and ``w_ji`` together),
which is the parameter the symmetric-network theory differentiates;
one-way connections (input and bias projections) are perturbed alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import NetworkParams, NetworkTopology, build_topology
from .energy import CLAMPED, RateState, energy, rates, relax
from .nonlinearity import Activation

BETAS = (1e-1, 1e-2, 1e-3, 1e-4)
H_WEIGHT = 1e-5
H_STATE = 1e-6
H_HESSIAN = 1e-4
TIGHT_TOL = 1e-10
MAX_DURATION = 200_000.0


class HessianError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TightSchedule:
    dt: float = 1.0
    residual_tol: float = TIGHT_TOL
    max_duration: float = MAX_DURATION


def cost(s: np.ndarray, y_hat: np.ndarray, topology: NetworkTopology) -> float:
    """C = 1/2 sum over outputs of (y_hat - s)^2."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    out = s[topology.output_set]
    if y_hat.shape != out.shape:
        raise ValueError(f"target has {y_hat.shape} entries, network has {out.shape} outputs")
    return 0.5 * float(np.sum((y_hat - out) ** 2))


def cost_grad(s: np.ndarray, y_hat: np.ndarray, topology: NetworkTopology) -> np.ndarray:
    g = np.zeros_like(s)
    g[topology.output_set] = -(np.asarray(y_hat) - s[topology.output_set])
    return g


def symmetrize(params: NetworkParams) -> NetworkParams:
    """w <- (w + w^T)/2 on bidirectional connections; one-way entries untouched."""
    mask = params.topology.mask
    both = mask & mask.T
    w = params.w.copy()
    w[both] = (0.5 * (params.w + params.w.T))[both]
    return NetworkParams(params.topology, w)


def _relax_tight(state, params, act, sch: TightSchedule):
    out, rep = relax(state, params, act, sch.dt, sch.max_duration, sch.residual_tol)
    if rep.final_residual >= sch.residual_tol:
        raise RuntimeError(f"relaxation did not reach residual {sch.residual_tol} (got {rep.final_residual:.3g})")
    return out


def free_phase(params, x, act, sch: TightSchedule, start=None) -> RateState:
    topo = params.topology
    st = RateState.zeros(topo.n_neurons, beta_x=CLAMPED, beta_y=0.0)
    st.s_hat[topo.input_set] = x
    if start is not None:
        st.s[:] = start
    return _relax_tight(st, params, act, sch)


def nudged_phase(params, s_star: RateState, y_hat, beta, act, sch: TightSchedule) -> RateState:
    if not beta > 0:
        raise ValueError("beta must be > 0")
    st = s_star.copy()
    st.beta_y = beta
    st.s_hat[params.topology.output_set] = y_hat
    return _relax_tight(st, params, act, sch)


def weight_groups(topology: NetworkTopology) -> list[tuple[tuple[int, int], ...]]:
    """Independent parameters: tied pairs for bidirectional links, single entries otherwise."""
    mask = topology.mask
    groups = []
    for i, j in zip(*np.nonzero(mask)):
        if mask[j, i]:
            if i < j:
                groups.append(((i, j), (j, i)))
        else:
            groups.append(((i, j),))
    return groups


def oracle_grad(params: NetworkParams, x, y_hat, act: Activation | None = None,
                sch: TightSchedule = TightSchedule(), h: float = H_WEIGHT) -> np.ndarray:
    """dC/dw by central differences of the cost at re-relaxed fixed points."""
    act = act or Activation("relu", "exact")
    s_star = free_phase(params, x, act, sch)
    grad = np.zeros_like(params.w)
    for grp in weight_groups(params.topology):
        vals = []
        for sign in (1.0, -1.0):
            w = params.w.copy()
            for ij in grp:
                w[ij] += sign * h
            st = free_phase(NetworkParams(params.topology, w), x, act, sch, start=s_star.s)
            vals.append(cost(st.s, y_hat, params.topology))
        g = (vals[0] - vals[1]) / (2 * h)
        for ij in grp:
            grad[ij] = g
    return grad


def contrastive_estimate(params: NetworkParams, x, y_hat, beta: float, act: Activation | None = None,
                         sch: TightSchedule = TightSchedule()) -> np.ndarray:
    """(rho(s^beta) rho(s^beta)^T - rho(s*) rho(s*)^T) / beta on allowed entries.

    Approximates -dC/dw, i.e. the descent direction.
    """
    act = act or Activation("relu", "exact")
    s_star = free_phase(params, x, act, sch)
    s_beta = nudged_phase(params, s_star, y_hat, beta, act, sch)
    r0 = rates(s_star.s, params, act)
    r1 = rates(s_beta.s, params, act)
    est = (np.outer(r1, r1) - np.outer(r0, r0)) / beta
    return np.where(params.topology.mask, est, 0.0)


def relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    nrm = np.linalg.norm(reference)
    if nrm == 0:
        return float(np.linalg.norm(estimate))
    return float(np.linalg.norm(estimate - reference) / nrm)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.sum(a * b) / (na * nb), -1.0, 1.0))


def energy_hessian(state: RateState, params: NetworkParams, act: Activation, idx: np.ndarray,
                   h: float = H_HESSIAN) -> np.ndarray:
    """Second differences of the energy over the neurons in ``idx``."""
    m = len(idx)
    H = np.zeros((m, m))
    st = state.copy()

    def e_at(di, dj, a, b):
        st.s[:] = state.s
        st.s[idx[a]] += di
        st.s[idx[b]] += dj
        return energy(st, params, act)

    for a in range(m):
        for b in range(a, m):
            val = (e_at(h, h, a, b) - e_at(h, -h, a, b) - e_at(-h, h, a, b) + e_at(-h, -h, a, b)) / (4 * h * h)
            H[a, b] = H[b, a] = val
    return H


@dataclass
class LambdaReport:
    lambda_residual: float
    cost_grad_norm: float
    ratio: float
    hessian_cond: float
    lambda_hat: list[float] = field(default_factory=list)


def lambda_check(params: NetworkParams, x, y_hat, beta: float = 1e-4, act: Activation | None = None,
                 sch: TightSchedule = TightSchedule(), max_cond: float = 1e10) -> LambdaReport:
    """Check dC/ds + H lambda_hat = 0 with lambda_hat = (s^beta - s*)/beta.

    Only free neurons away from the rectification kink take part; a silent
    neuron is held by the constraint s >= 0 and carries no multiplier.
    """
    act = act or Activation("relu", "exact")
    topo = params.topology
    s_star = free_phase(params, x, act, sch)
    s_beta = nudged_phase(params, s_star, y_hat, beta, act, sch)
    free = np.ones(topo.n_neurons, dtype=bool)
    free[topo.input_set] = False
    free[list(topo.bias_units)] = False
    idx = np.flatnonzero(free & (s_star.s > 10 * H_HESSIAN))
    lam = (s_beta.s[idx] - s_star.s[idx]) / beta
    dC = cost_grad(s_star.s, y_hat, topo)
    H = energy_hessian(s_star, params, act, idx)
    cond = float(np.linalg.cond(H)) if len(idx) else 1.0
    if not np.isfinite(cond) or cond > max_cond:
        raise HessianError(f"energy Hessian is singular or ill-conditioned (cond={cond:.3g})")
    resid = float(np.max(np.abs(dC[idx] + H @ lam))) if len(idx) else 0.0
    gnorm = float(np.max(np.abs(dC)))
    return LambdaReport(resid, gnorm, resid / gnorm if gnorm > 0 else resid, cond, lam.tolist())


@dataclass
class Instance:
    params: NetworkParams
    x: np.ndarray
    y_hat: np.ndarray


def random_instance(rng: np.random.Generator, layer_sizes=(2, 3, 2), bias: bool = True,
                    act: Activation | None = None, min_activity: float = 0.05,
                    sch: TightSchedule = TightSchedule(), max_tries: int = 1000) -> Instance:
    """Symmetric-weight network with every free neuron active at the free fixed point.

    Rejection sampling keeps the fixed point away from the rectification kink,
    where the cost is not differentiable in the weights.
    """
    act = act or Activation("relu", "exact")
    topo = build_topology(layer_sizes, bias=bias)
    free = np.ones(topo.n_neurons, dtype=bool)
    free[topo.input_set] = False
    free[list(topo.bias_units)] = False
    indeg = np.maximum(topo.indegree, 1)
    for _ in range(max_tries):
        w = rng.uniform(-0.4, 1.0, size=topo.mask.shape) / np.sqrt(indeg)[:, None]
        w[~topo.mask] = 0.0
        params = symmetrize(NetworkParams(topo, w))
        x = rng.uniform(0.2, 1.0, size=len(topo.input_set))
        y_hat = rng.uniform(0.0, 1.0, size=len(topo.output_set))
        try:
            s = free_phase(params, x, act, sch).s
        except (RuntimeError, ArithmeticError):
            continue
        if np.all(s[free] > min_activity):
            return Instance(params, x, y_hat)
    raise RuntimeError("could not draw a well-conditioned instance")


@dataclass
class GradReport:
    beta_values: list[float]
    rel_errors: list[float]
    cosine_similarity: list[float]
    lambda_residual: float
    lambda_ratio: float
    oracle_norm: float


def check_instance(inst: Instance, betas=BETAS, act: Activation | None = None,
                   lambda_beta: float = 1e-4) -> GradReport:
    act = act or Activation("relu", "exact")
    ref = -oracle_grad(inst.params, inst.x, inst.y_hat, act)
    errs, coss = [], []
    for b in betas:
        est = contrastive_estimate(inst.params, inst.x, inst.y_hat, b, act)
        errs.append(relative_error(est, ref))
        coss.append(cosine(est, ref))
    lam = lambda_check(inst.params, inst.x, inst.y_hat, lambda_beta, act)
    return GradReport(list(betas), errs, coss, lam.lambda_residual, lam.ratio, float(np.linalg.norm(ref)))


@dataclass
class Thresholds:
    cos_beta: float = 1e-2
    min_cosine: float = 0.99
    err_beta: float = 1e-3
    max_rel_error: float = 0.05
    trend_betas: tuple = (1e-1, 1e-2, 1e-3)
    max_lambda_ratio: float = 1e-3


def run_suite(n_instances: int = 20, seed: int = 0, betas=BETAS, layer_sizes=(2, 3, 2),
              thresholds: Thresholds = Thresholds(), act: Activation | None = None) -> dict:
    """Check every instance and return a JSON-ready summary with a ``passed`` flag."""
    rng = np.random.default_rng(seed)
    reports = [check_instance(random_instance(rng, layer_sizes, act=act), betas, act) for _ in range(n_instances)]
    th = thresholds
    failures = []
    for k, r in enumerate(reports):
        err = dict(zip(r.beta_values, r.rel_errors))
        cos = dict(zip(r.beta_values, r.cosine_similarity))
        if th.cos_beta in cos and cos[th.cos_beta] < th.min_cosine:
            failures.append(f"instance {k}: cosine {cos[th.cos_beta]:.4f} at beta={th.cos_beta}")
        if th.err_beta in err and err[th.err_beta] > th.max_rel_error:
            failures.append(f"instance {k}: relative error {err[th.err_beta]:.4f} at beta={th.err_beta}")
        trend = [err[b] for b in th.trend_betas if b in err]
        if any(b > a for a, b in zip(trend, trend[1:])):
            failures.append(f"instance {k}: relative error not decreasing over {th.trend_betas}: {trend}")
        if r.lambda_ratio > th.max_lambda_ratio:
            failures.append(f"instance {k}: lambda residual ratio {r.lambda_ratio:.3g}")
    return {
        "n_instances": n_instances,
        "seed": seed,
        "layer_sizes": list(layer_sizes),
        "beta_values": list(betas),
        "thresholds": asdict(th),
        "instances": [asdict(r) for r in reports],
        "failures": failures,
        "passed": not failures,
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2)
