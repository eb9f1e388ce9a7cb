"""Leaky integrate-and-fire dynamics with a first-order synaptic current model.

The discrete-time membrane update is

    u[t] = (1 - 1/tau) * u[t-1] + (R / tau) * I[t]

with a spike emitted when ``u`` reaches the threshold ``theta``, followed by a
reset to zero. Spikes drive a first-order low-pass postsynaptic current (PSC)

    a[t] = (1 - 1/tau_s) * a[t-1] + s[t]

which is the quantity synaptic weights multiply downstream.

Two activation modes exist. ``"spiking"`` is the real dynamics: hard threshold,
reset, and a rectangular surrogate derivative for backpropagation. ``"soft"``
replaces the threshold with a logistic activation and skips the reset; it keeps
the identical dataflow differentiable end to end and exists purely so gradients
can be verified against finite differences.

All functions are pure and broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

MODE_SPIKING = "spiking"
MODE_SOFT = "soft"

DEFAULT_THETA = 1.0
DEFAULT_TAU = 4.0
DEFAULT_TAU_S = 2.0
DEFAULT_R = 1.0
DEFAULT_KAPPA = 0.2
DEFAULT_SURROGATE_WIDTH = 1.0


@dataclass
class NeuronIntrinsics:
    """Per-neuron membrane parameters for one layer.

    ``R`` and ``tau`` are arrays of shape ``(n,)`` and are the only fields the
    intrinsic-plasticity rule is allowed to mutate. ``theta`` and ``tau_s`` are
    shared scalars.
    """

    R: np.ndarray
    tau: np.ndarray
    theta: float = DEFAULT_THETA
    tau_s: float = DEFAULT_TAU_S

    @classmethod
    def uniform(cls, n: int, R: float = DEFAULT_R, tau: float = DEFAULT_TAU,
                theta: float = DEFAULT_THETA, tau_s: float = DEFAULT_TAU_S) -> "NeuronIntrinsics":
        return cls(R=np.full(n, float(R)), tau=np.full(n, float(tau)),
                   theta=float(theta), tau_s=float(tau_s))

    def validate(self) -> None:
        if not np.all(self.tau > 1.0):
            raise ValueError("tau must be > 1 (leak factor must lie in (0, 1))")
        if self.tau_s <= 1.0:
            raise ValueError("tau_s must be > 1")
        if not np.all(self.R > 0.0):
            raise ValueError("R must be positive")
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")

    def copy(self) -> "NeuronIntrinsics":
        return NeuronIntrinsics(R=self.R.copy(), tau=self.tau.copy(),
                                theta=self.theta, tau_s=self.tau_s)

    @property
    def leak(self) -> np.ndarray:
        """Membrane decay factor 1 - 1/tau."""
        return 1.0 - 1.0 / self.tau

    @property
    def gain(self) -> np.ndarray:
        """Input scaling factor R/tau."""
        return self.R / self.tau


def psc_step(a_prev, spike, tau_s):
    """One step of the synaptic low-pass: (1 - 1/tau_s) * a_prev + spike."""
    return (1.0 - 1.0 / tau_s) * a_prev + spike


def membrane_step(u_prev, current, R, tau):
    """Leaky integration before any threshold: (1 - 1/tau) u_prev + (R/tau) I."""
    return (1.0 - 1.0 / tau) * u_prev + (R / tau) * current


def soft_spike(u, theta, kappa=DEFAULT_KAPPA):
    """Logistic stand-in for the threshold, sigma((u - theta) / kappa)."""
    return expit((u - theta) / kappa)


def soft_spike_grad(u, theta, kappa=DEFAULT_KAPPA):
    s = expit((u - theta) / kappa)
    return s * (1.0 - s) / kappa


def surrogate_grad(u, theta, width=DEFAULT_SURROGATE_WIDTH):
    """Rectangular surrogate for d(spike)/du: 1/width inside |u - theta| < width/2."""
    return np.where(np.abs(u - theta) < 0.5 * width, 1.0 / width, 0.0)


def lif_step(u_prev, total_current, intr: NeuronIntrinsics, mode: str = MODE_SPIKING,
             kappa: float = DEFAULT_KAPPA):
    """Advance the membrane one step and produce the spike output.

    Returns ``(u, s)``. In spiking mode ``s`` is binary, and any neuron at or
    above threshold is reset to zero after the spike is recorded. In soft mode
    ``s`` is the logistic activation and the membrane is never reset.
    """
    u = membrane_step(u_prev, total_current, intr.R, intr.tau)
    if mode == MODE_SPIKING:
        s = (u >= intr.theta).astype(np.float64)
        return u * (1.0 - s), s
    if mode == MODE_SOFT:
        return u, soft_spike(u, intr.theta, kappa)
    raise ValueError(f"unknown mode {mode!r}")
