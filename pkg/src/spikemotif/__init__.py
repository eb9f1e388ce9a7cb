"""Discrete-time spiking recurrent networks built from repeated connection
motifs, with a differentiable architecture search over motif size and
per-edge connection type, homeostatic intrinsic plasticity, and
finite-difference verification oracles."""

__version__ = "0.1.0"

from . import (config, data, errors, grad, ip, network, neuron, relax, search,
               topology, verify)

__all__ = ["config", "data", "errors", "grad", "ip", "network", "neuron",
           "relax", "search", "topology", "verify", "__version__"]
