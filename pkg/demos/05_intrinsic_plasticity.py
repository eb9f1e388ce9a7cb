"""Homeostatic regulation of a single neuron's firing rate.

A neuron driven by a different random current each window starts out firing
far above the target rate. The plasticity rule nudges its gain R and
membrane constant tau after every window; the running rate converges to the
target and the distribution of window rates moves toward the exponential
profile the rule is derived from.
"""

import numpy as np

from spikemotif.ip import (
    IPConfig,
    RateEstimate,
    empirical_exponential_kl,
    ip_step,
)
from spikemotif.neuron import NeuronIntrinsics, lif_step

WINDOW = 600
SMOOTHING = 100.0
MU = 0.1


def run_window(intr, drive):
    u = np.zeros(1)
    y = np.zeros(1)
    count = 0.0
    gamma = 1.0 / SMOOTHING
    for _ in range(WINDOW):
        u, s = lif_step(u, np.array([drive]), intr)
        count += float(s[0])
        y = (1 - gamma) * y + gamma * s
    return count / WINDOW, y


def main():
    rng = np.random.Generator(np.random.PCG64(300))
    intr = NeuronIntrinsics(R=np.ones(1), tau=np.full(1, 4.0))
    cfg = IPConfig(mu=MU, eta_ip=4.0, smoothing=SMOOTHING,
                   bounds=(1.0, 10.0, 2.0, 32.0))

    pre = [run_window(intr, d)[0] for d in rng.uniform(1.6, 2.4, 200)]
    print(f"before adaptation: mean rate {np.mean(pre):.3f} "
          f"(target {MU}), tau {float(intr.tau[0]):.1f}")

    print("\nadapting for 200 windows:")
    for i, drive in enumerate(rng.uniform(1.6, 2.4, 200)):
        rate, y = run_window(intr, drive)
        intr = ip_step(RateEstimate(y=y, mean_drive=np.array([drive])), intr, cfg)
        if (i + 1) % 25 == 0:
            print(f"  window {i + 1:3d}: rate {rate:.3f} "
                  f"R {float(intr.R[0]):.2f} tau {float(intr.tau[0]):.1f}")

    post = [run_window(intr, d)[0] for d in rng.uniform(1.6, 2.4, 200)]
    kl_pre = empirical_exponential_kl(pre, MU)
    kl_post = empirical_exponential_kl(post, MU)
    print(f"\nafter adaptation: mean rate {np.mean(post):.3f} (target {MU})")
    print(f"divergence from the exponential rate profile: "
          f"{kl_pre:.2f} -> {kl_post:.2f}")


if __name__ == "__main__":
    main()
