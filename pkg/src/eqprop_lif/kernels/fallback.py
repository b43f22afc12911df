"""Pure numpy implementation of the simulation kernels.

Mirrors ``_core.pyx`` argument for argument.  Dense matrix-vector products
replace the mask-indexed sums; masked-out weights are zero so both give the
same drive up to summation order.
"""

import numpy as np

NAME = "python"


def _rho(s, act_code, lp):
    if act_code == 0:
        return np.maximum(s, 0.0)
    tau, u_rest, u_reset, theta, delta, norm = lp
    v = u_rest + s
    above = v > theta
    vv = np.where(above, v, theta + 1.0)
    f = 1.0 / (tau * np.log((vv - u_reset) / (vv - theta)) + delta)
    return np.where(above, f, 0.0) / norm


def _drho_tilde(s, act_code, lp):
    # derivative used by the integrator; the kink at s <= 0 takes slope 1
    if act_code != 2:
        return np.ones_like(s)
    tau, u_rest, u_reset, theta, delta, norm = lp
    v = u_rest + s
    above = v > theta
    vv = np.where(above, v, theta + 1.0)
    den = tau * np.log((vv - u_reset) / (vv - theta)) + delta
    dden = tau * (1.0 / (vv - u_reset) - 1.0 / (vv - theta))
    d = np.where(above, -dden / den**2, 0.0) / norm
    return np.where(s > 0, d, 1.0)


def rate_force(w, s, mode, beta, s_hat, act_code, lp, bias_value):
    r = _rho(s, act_code, lp)
    r[mode == 2] = bias_value
    g = -s + _drho_tilde(s, act_code, lp) * (w @ r) + beta * (s_hat - s)
    g[mode != 0] = 0.0
    return g


def projected_residual(s, g, mode):
    res = np.where(s > 0, np.abs(g), np.where(s == 0, np.maximum(g, 0.0), np.abs(g)))
    res = res[mode == 0]
    return float(res.max()) if res.size else 0.0


def rate_relax(w, indptr, indices, s, mode, beta, s_hat, act_code, lp, bias_value,
               dt_over_tau, n_steps, tol, limit):
    """Projected Euler relaxation, in place on ``s``.

    Returns ``(steps, residual, status)``; ``status`` is 0 or ``1 + step`` of divergence.
    """
    free = mode == 0
    k = 0
    while True:
        g = rate_force(w, s, mode, beta, s_hat, act_code, lp, bias_value)
        if k == n_steps:
            return k, projected_residual(s, g, mode), 0
        if tol > 0:
            res = projected_residual(s, g, mode)
            if res < tol:
                return k, res, 0
        s_new = s + dt_over_tau * g
        s[free] = np.maximum(s_new[free], 0.0)
        k += 1
        if not np.all(np.isfinite(s)) or np.max(np.abs(s)) > limit:
            return k, float("nan"), k


def lif_run(w, indptr, indices, u, syn, rate, refr, current, n_steps, dt, consts, n_ref,
            spike_nrn, spike_step, probe, probe_buf):
    """Advance the LIF network ``n_steps`` Euler steps in place.

    ``consts`` = (tau, u_rest, u_reset, theta, tau_s, tau_r, u_psp, R).
    Returns ``(n_spikes, status)``; ``status`` is 0 or ``1 + step`` of divergence.
    """
    tau, u_rest, u_reset, theta, tau_s, tau_r, u_psp, R = consts
    a_mem = dt / tau
    a_syn = dt / tau_s
    a_rate = dt / tau_r
    kick = u_psp / tau_s
    B = R * current
    nudged = B > 0
    record = spike_nrn.shape[0] > 0
    cap = spike_nrn.shape[0]
    n_spikes = 0
    for step in range(n_steps):
        A = w @ syn
        den = A + B
        lam = np.zeros_like(A)
        ok = nudged & (den > 0)
        lam[ok] = np.clip(B[ok] / den[ok], 0.0, 1.0)
        v = u_rest + (1.0 - lam) * A + lam * B

        held = refr > 0
        u_next = u + a_mem * (v - u)
        u_next[held] = u_reset
        refr[held] -= 1
        fired = (~held) & (u_next >= theta)
        u_next[fired] = u_reset
        refr[fired] = n_ref
        u[:] = u_next

        rate += a_rate * (syn - rate)
        syn -= a_syn * syn
        syn[fired] += kick

        if not np.all(np.isfinite(u)):
            return n_spikes, step + 1
        if fired.any():
            idx = np.flatnonzero(fired)
            if record:
                m = min(idx.size, cap - n_spikes)
                spike_nrn[n_spikes:n_spikes + m] = idx[:m]
                spike_step[n_spikes:n_spikes + m] = step + 1
            n_spikes += idx.size
        if probe >= 0:
            probe_buf[step, 0] = u[probe]
            probe_buf[step, 1] = syn[probe]
            probe_buf[step, 2] = rate[probe]
            probe_buf[step, 3] = current[probe]
            probe_buf[step, 4] = lam[probe]
    return n_spikes, 0
