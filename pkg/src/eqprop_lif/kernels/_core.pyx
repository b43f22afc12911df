# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: rate relaxation and LIF stepping over the mask CSR."""

import numpy as np
from libc.math cimport log, fabs, isfinite

NAME = "cython"


cdef inline double _rho(double s, int act, double tau, double u_rest, double u_reset,
                        double theta, double delta, double norm) nogil:
    cdef double v
    if act == 0:
        return s if s > 0 else 0.0
    v = u_rest + s
    if v <= theta:
        return 0.0
    return 1.0 / (tau * log((v - u_reset) / (v - theta)) + delta) / norm


cdef inline double _drho_tilde(double s, int act, double tau, double u_rest, double u_reset,
                               double theta, double delta, double norm) nogil:
    cdef double v, den, dden
    if act != 2 or s <= 0:
        return 1.0
    v = u_rest + s
    if v <= theta:
        return 0.0
    den = tau * log((v - u_reset) / (v - theta)) + delta
    dden = tau * (1.0 / (v - u_reset) - 1.0 / (v - theta))
    return -dden / (den * den) / norm


def rate_relax(double[:, ::1] w, const long[::1] indptr, const long[::1] indices,
               double[::1] s, const signed char[::1] mode, const double[::1] beta,
               const double[::1] s_hat, int act_code, lp, double bias_value,
               double dt_over_tau, long n_steps, double tol, double limit):
    cdef double tau = lp[0], u_rest = lp[1], u_reset = lp[2], theta = lp[3], delta = lp[4], norm = lp[5]
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t i, p
    cdef long k = 0
    cdef double acc, gi, res, ri, snew
    cdef double[::1] r = np.empty(n)
    cdef double[::1] g = np.empty(n)
    cdef bint check = True
    with nogil:
        while True:
            for i in range(n):
                if mode[i] == 2:
                    r[i] = bias_value
                else:
                    r[i] = _rho(s[i], act_code, tau, u_rest, u_reset, theta, delta, norm)
            res = 0.0
            for i in range(n):
                if mode[i] != 0:
                    g[i] = 0.0
                    continue
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc = acc + w[i, indices[p]] * r[indices[p]]
                gi = -s[i] + _drho_tilde(s[i], act_code, tau, u_rest, u_reset, theta, delta, norm) * acc \
                    + beta[i] * (s_hat[i] - s[i])
                g[i] = gi
                if s[i] > 0 or s[i] < 0:
                    ri = fabs(gi)
                else:
                    ri = gi if gi > 0 else 0.0
                if ri > res:
                    res = ri
            if k == n_steps or (tol > 0 and res < tol):
                break
            check = True
            for i in range(n):
                if mode[i] == 0:
                    snew = s[i] + dt_over_tau * g[i]
                    s[i] = snew if snew > 0 else 0.0
                    if not isfinite(s[i]) or fabs(s[i]) > limit:
                        check = False
            k += 1
            if not check:
                break
    if not check:
        return k, float("nan"), k
    return k, res, 0


def lif_run(double[:, ::1] w, const long[::1] indptr, const long[::1] indices,
            double[::1] u, double[::1] syn, double[::1] rate, long[::1] refr,
            const double[::1] current, long n_steps, double dt, consts, long n_ref,
            long[::1] spike_nrn, long[::1] spike_step, long probe, double[:, ::1] probe_buf):
    cdef double tau = consts[0], u_rest = consts[1], u_reset = consts[2], theta = consts[3]
    cdef double tau_s = consts[4], tau_r = consts[5], u_psp = consts[6], R = consts[7]
    cdef double a_mem = dt / tau, a_syn = dt / tau_s, a_rate = dt / tau_r, kick = u_psp / tau_s
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t cap = spike_nrn.shape[0]
    cdef Py_ssize_t i, p
    cdef long step, n_spikes = 0, status = 0
    cdef double A, B, den, lam, v, un
    cdef signed char[::1] fired = np.zeros(n, dtype=np.int8)
    cdef double lam_probe = 0.0
    with nogil:
        for step in range(n_steps):
            for i in range(n):
                A = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    A = A + w[i, indices[p]] * syn[indices[p]]
                B = R * current[i]
                lam = 0.0
                if B > 0:
                    den = A + B
                    if den > 0:
                        lam = B / den
                        if lam > 1.0:
                            lam = 1.0
                v = u_rest + (1.0 - lam) * A + lam * B
                if i == probe:
                    lam_probe = lam
                fired[i] = 0
                if refr[i] > 0:
                    refr[i] -= 1
                    u[i] = u_reset
                else:
                    un = u[i] + a_mem * (v - u[i])
                    if un >= theta:
                        fired[i] = 1
                        un = u_reset
                        refr[i] = n_ref
                    u[i] = un
            for i in range(n):
                rate[i] = rate[i] + a_rate * (syn[i] - rate[i])
                syn[i] = syn[i] - a_syn * syn[i]
                if fired[i]:
                    syn[i] = syn[i] + kick
                    if n_spikes < cap:
                        spike_nrn[n_spikes] = i
                        spike_step[n_spikes] = step + 1
                    n_spikes += 1
                if not isfinite(u[i]):
                    status = step + 1
            if probe >= 0:
                probe_buf[step, 0] = u[probe]
                probe_buf[step, 1] = syn[probe]
                probe_buf[step, 2] = rate[probe]
                probe_buf[step, 3] = current[probe]
                probe_buf[step, 4] = lam_probe
            if status:
                break
    return n_spikes, status
