"""Intrinsic plasticity: unsupervised homeostatic adaptation of R and tau.

Each recurrent neuron's firing rate is pushed toward an exponential
distribution with target mean ``mu`` by descending the pointwise proxy loss

    l_ip(y) = y / mu - log y        (dl/dy = 1/mu - 1/y, zero at y = mu)

on its low-pass-filtered rate estimate y. The chain factors dy/dR and
dy/dtau are estimated numerically: the neuron's mean input drive over the
window is recovered from the recorded trajectories, and the closed-form
stationary firing rate of a leaky integrator under that constant drive is
probed at R +/- h and tau +/- h (two-point central differences).

The rule sees spikes and drives only. It never touches labels or validation
data, and it runs only on recurrent-layer neurons.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError
from .network import ActivityRecord
from .neuron import NeuronIntrinsics

log = logging.getLogger(__name__)

DEFAULT_MU = 0.05
DEFAULT_ETA_IP = 0.05
DEFAULT_BOUNDS = (0.1, 10.0, 2.0, 32.0)
DEFAULT_SMOOTHING = 10.0
DEFAULT_MAX_REL_STEP = 0.1
PROBE_REL = 1e-3


@dataclass(frozen=True)
class IPConfig:
    mu: float = DEFAULT_MU
    eta_ip: float = DEFAULT_ETA_IP
    window: int = 1
    bounds: tuple[float, float, float, float] = DEFAULT_BOUNDS
    smoothing: float = DEFAULT_SMOOTHING
    max_rel_step: float = DEFAULT_MAX_REL_STEP

    def validate(self) -> None:
        if not 0.0 < self.mu < 1.0:
            raise InvalidSpecError(f"target rate mu must lie in (0, 1), got {self.mu}")
        r_min, r_max, tau_min, tau_max = self.bounds
        if not (0.0 < r_min < r_max):
            raise InvalidSpecError(f"R bounds must satisfy 0 < min < max, got {self.bounds}")
        if not (1.0 < tau_min < tau_max):
            raise InvalidSpecError(f"tau bounds must satisfy 1 < min < max, got {self.bounds}")
        if self.eta_ip <= 0 or self.window < 1 or self.smoothing < 1:
            raise InvalidSpecError("eta_ip, window and smoothing must be positive")


@dataclass
class RateEstimate:
    """Windowed per-neuron statistics for one layer: the low-pass filtered
    firing rate y (spikes per timestep, batch mean of the filter's final
    value) and the mean input drive, both needed by the IP step."""

    y: np.ndarray
    mean_drive: np.ndarray


def estimate_rate(activity: ActivityRecord, intr: NeuronIntrinsics, layer: int,
                  smoothing: float = DEFAULT_SMOOTHING) -> RateEstimate:
    """EMA of the spike train over t, batch-averaged at the final step.

    y[t] = (1 - 1/smoothing) y[t-1] + (1/smoothing) s[t]. The mean drive is
    recovered from the recorded membrane trajectory by inverting the
    integration step: c[t] = (u_pre[t] - leak * u[t-1]) * tau / R.
    """
    s = activity.s[layer]
    gamma = 1.0 / smoothing
    y = np.zeros(s.shape[:2])
    for t in range(s.shape[2]):
        y = (1.0 - gamma) * y + gamma * s[:, :, t]
    u_prev = np.concatenate([np.zeros_like(activity.u[layer][:, :, :1]),
                             activity.u[layer][:, :, :-1]], axis=2)
    drive = (activity.u_pre[layer] - intr.leak[None, :, None] * u_prev)
    drive = drive * (intr.tau / intr.R)[None, :, None]
    return RateEstimate(y=y.mean(axis=0), mean_drive=drive.mean(axis=(0, 2)))


def stationary_rate(R: float, tau: float, drive: float, theta: float) -> float:
    """Firing rate of a leaky integrator under constant drive.

    From reset, u[t] climbs toward the fixed point R*drive with leak
    1 - 1/tau; if the fixed point clears the threshold the first crossing
    happens after k = log(1 - theta/(R*drive)) / log(1 - 1/tau) steps and
    the rate is 1/k (continuous in k so the probes see a gradient),
    otherwise the neuron is silent.
    """
    if drive <= 0.0 or R * drive <= theta:
        return 0.0
    k = np.log(1.0 - theta / (R * drive)) / np.log(1.0 - 1.0 / tau)
    return 1.0 / max(k, 1.0)


def rate_sensitivities(R: float, tau: float, drive: float, theta: float,
                       rel: float = PROBE_REL) -> tuple[float, float]:
    """Two-point central estimates of (dy/dR, dy/dtau) at the given drive."""
    h_r = rel * R
    h_t = rel * tau
    dr = (stationary_rate(R + h_r, tau, drive, theta)
          - stationary_rate(R - h_r, tau, drive, theta)) / (2.0 * h_r)
    dt = (stationary_rate(R, tau + h_t, drive, theta)
          - stationary_rate(R, tau - h_t, drive, theta)) / (2.0 * h_t)
    return dr, dt


def ip_step(rates: RateEstimate, intr: NeuronIntrinsics, cfg: IPConfig) -> NeuronIntrinsics:
    """One homeostatic update on a copy of the intrinsics.

    A neuron silent for the whole window (y = 0) but receiving positive
    drive takes the full capped step toward more excitability (R up, tau
    down): the proxy loss gradient diverges in that direction as y -> 0+,
    and waking silent-but-driven neurons is the point of the homeostatic
    rule. Silent neurons with non-positive drive are skipped (no excitability
    change can make them fire), as are active neurons with non-positive mean
    drive (the stationary probe has no crossing to move). Per-window steps
    are capped at a relative fraction of the current value, then clamped to
    bounds.
    """
    cfg.validate()
    out = intr.copy()
    r_min, r_max, tau_min, tau_max = cfg.bounds
    skipped = []
    woke = []
    for i in range(len(out.R)):
        y = float(rates.y[i])
        drive = float(rates.mean_drive[i])
        if y == 0.0:
            if drive > 0.0:
                woke.append(i)
                out.R[i] = min(out.R[i] * (1.0 + cfg.max_rel_step), r_max)
                out.tau[i] = max(out.tau[i] * (1.0 - cfg.max_rel_step), tau_min)
            else:
                skipped.append(i)
            continue
        if drive <= 0.0:
            continue
        dl_dy = 1.0 / cfg.mu - 1.0 / y
        dy_dr, dy_dtau = rate_sensitivities(float(out.R[i]), float(out.tau[i]),
                                            drive, out.theta)
        step_r = -cfg.eta_ip * dl_dy * dy_dr
        step_tau = -cfg.eta_ip * dl_dy * dy_dtau
        cap_r = cfg.max_rel_step * float(out.R[i])
        cap_tau = cfg.max_rel_step * float(out.tau[i])
        out.R[i] = np.clip(out.R[i] + np.clip(step_r, -cap_r, cap_r), r_min, r_max)
        out.tau[i] = np.clip(out.tau[i] + np.clip(step_tau, -cap_tau, cap_tau),
                             tau_min, tau_max)
    if woke:
        log.info("ip_step: woke %d silent driven neuron(s): %s", len(woke), woke)
    if skipped:
        log.info("ip_step: skipped %d degenerate-rate neuron(s): %s", len(skipped), skipped)
    return out


def empirical_exponential_kl(samples, mu: float, bins: int = 12) -> float:
    """Discrete KL divergence from a sample histogram to Exp(mean mu).

    Bin edges span [0, max sample] with an extra open tail bin so both
    distributions have full mass; empty histogram bins contribute zero.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise InvalidSpecError("need at least one sample")
    hi = float(x.max())
    if hi <= 0.0:
        hi = mu
    edges = np.linspace(0.0, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    counts = np.append(counts, np.sum(x > hi))
    p = counts / counts.sum()
    cdf = 1.0 - np.exp(-edges / mu)
    q = np.append(np.diff(cdf), np.exp(-edges[-1] / mu))
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
