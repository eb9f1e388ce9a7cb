"""Membrane and synapse dynamics of a single leaky integrate-and-fire unit.

Shows the two simulation modes side by side: the spiking mode emits binary
events and resets the membrane, the soft mode replaces the threshold with a
logistic activation so everything stays differentiable. Also checks the
closed-form stationary rate against a long simulation.
"""

import numpy as np

from spikemotif.ip import stationary_rate
from spikemotif.neuron import MODE_SOFT, NeuronIntrinsics, lif_step, psc_step


def trace(drive, intr, steps, mode="spiking"):
    u = np.zeros(1)
    us, ss = [], []
    for t in range(steps):
        u, s = lif_step(u, np.array([drive(t)]), intr, mode=mode)
        us.append(float(u[0]))
        ss.append(float(s[0]))
    return np.array(us), np.array(ss)


def main():
    intr = NeuronIntrinsics(R=np.ones(1), tau=np.full(1, 4.0))

    print("constant drive 1.5, spiking mode (membrane resets after a spike)")
    us, ss = trace(lambda t: 1.5, intr, 16)
    for t in range(16):
        bar = "#" * int(us[t] * 20)
        print(f"  t={t:2d} u={us[t]:5.2f} {'SPIKE' if ss[t] else '     '} {bar}")
    print(f"  {int(ss.sum())} spikes in 16 steps")

    print("\nsame drive, soft mode (no reset, graded output)")
    us, ss = trace(lambda t: 1.5, intr, 8, mode=MODE_SOFT)
    for t in range(8):
        print(f"  t={t} u={us[t]:5.2f} activation={ss[t]:5.3f}")

    print("\npostsynaptic current is a leaky trace of the spike train")
    a = np.zeros(1)
    spikes = [1, 0, 0, 1, 0, 0, 0, 0]
    for t, s in enumerate(spikes):
        a = psc_step(a, np.array([float(s)]), tau_s=2.0)
        print(f"  t={t} spike={s} a={float(a[0]):5.3f}")

    print("\nstationary rate: closed form vs long simulation")
    for drive in (1.2, 1.5, 2.0, 3.0):
        _, ss = trace(lambda t: drive, intr, 5000)
        pred = stationary_rate(1.0, 4.0, drive, 1.0)
        print(f"  drive {drive}: simulated {ss.mean():.4f}  predicted {pred:.4f}")

    print("\nfaster membranes fire faster: the same drive through three taus")
    for tau in (2.0, 4.0, 8.0):
        fast = NeuronIntrinsics(R=np.ones(1), tau=np.full(1, tau))
        _, ss = trace(lambda t: 1.5, fast, 2000)
        print(f"  tau {tau}: rate {ss.mean():.4f}")


if __name__ == "__main__":
    main()
