"""Activation functions: rectified linear and the LIF frequency-current curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NeuronConstants:
    """Neuron constants. Times in ms, potentials in dimensionless units."""

    tau: float = 15.0
    u_rest: float = 20.0
    u_reset: float = 0.0
    theta: float = 20.0
    delta: float = 5.0
    tau_s: float = 10.0
    tau_r: float = 300.0
    u_psp: float = 400.0
    R: float = 40.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not self.tau_s > 0:
            raise ValueError("tau_s must be > 0")
        if not self.tau_r > 0:
            raise ValueError("tau_r must be > 0")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")
        if not self.theta > self.u_reset:
            raise ValueError("theta must exceed u_reset")


def relu(s):
    return np.maximum(s, 0.0) if np.ndim(s) else (float(s) if s > 0 else 0.0)


def relu_prime(s):
    if np.ndim(s):
        return (np.asarray(s) > 0).astype(np.float64)
    return 1.0 if s > 0 else 0.0


def liffi(v, k: NeuronConstants):
    """Firing rate (spikes/ms) of an LIF neuron under constant drive ``v``.

    Zero at or below threshold, ``1/(tau*log((v-u_r)/(v-theta)) + delta)`` above.
    """
    v = np.asarray(v, dtype=np.float64)
    above = v > k.theta
    vv = np.where(above, v, k.theta + 1.0)
    f = 1.0 / (k.tau * np.log((vv - k.u_reset) / (vv - k.theta)) + k.delta)
    out = np.where(above, f, 0.0)
    return float(out) if out.ndim == 0 else out


def liffi_prime(v, k: NeuronConstants):
    """Closed-form derivative of :func:`liffi` (zero at or below threshold)."""
    v = np.asarray(v, dtype=np.float64)
    above = v > k.theta
    vv = np.where(above, v, k.theta + 1.0)
    den = k.tau * np.log((vv - k.u_reset) / (vv - k.theta)) + k.delta
    dden = k.tau * (1.0 / (vv - k.u_reset) - 1.0 / (vv - k.theta))
    out = np.where(above, -dden / den**2, 0.0)
    return float(out) if out.ndim == 0 else out


def liffi_surrogate_prime(v):
    return relu_prime(v)


ACTIVATIONS = ("relu", "liffi")
DERIVATIVES = ("exact", "surrogate")


class Activation:
    """Rate-model nonlinearity rho(s) with its derivative.

    ``liffi`` here is the f-I curve seen from the rate state: the state is the
    drive above rest, ``rho(s) = liffi(u_rest + s) / liffi(u_rest + 1)``, so
    that both activations have threshold 0 and unit value at ``s = 1``.
    """

    def __init__(self, name: str = "relu", derivative: str = "surrogate", constants: NeuronConstants | None = None):
        if name not in ACTIVATIONS:
            raise ValueError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")
        if derivative not in DERIVATIVES:
            raise ValueError(f"unknown derivative mode {derivative!r}, expected one of {DERIVATIVES}")
        self.name = name
        self.derivative = derivative
        self.k = constants or NeuronConstants()
        self.norm = 1.0
        if name == "liffi":
            self.norm = liffi(self.k.u_rest + 1.0, self.k)
            if self.norm <= 0:
                raise ValueError("liffi activation needs u_rest + 1 above threshold")

    def __repr__(self):
        return f"Activation({self.name!r}, {self.derivative!r})"

    @property
    def code(self) -> int:
        """Integer id understood by the compiled kernels."""
        if self.name == "relu":
            return 0
        return 1 if self.derivative == "surrogate" else 2

    def rho(self, s):
        if self.name == "relu":
            return relu(s)
        return liffi(self.k.u_rest + np.asarray(s), self.k) / self.norm

    def rho_prime(self, s):
        if self.name == "relu" or self.derivative == "surrogate":
            return relu_prime(s)
        return liffi_prime(self.k.u_rest + np.asarray(s), self.k) / self.norm
