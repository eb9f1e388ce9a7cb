"""From relaxed architecture weights to a committed discrete wiring.

During the search every candidate edge carries a three-way probability
(trained excitatory / fixed inhibitory / absent) and every motif size a
selection probability; the recurrent drive mixes all of them. Forcing the
probabilities one-hot makes the relaxed network equal an ordinary dense
simulation, which is how the search result is handed over.
"""

import numpy as np

from spikemotif.network import (
    KIND_RECURRENT,
    LayerSpec,
    NetworkConfig,
    build_layouts,
    forward,
    init_params,
    simulate_dense,
)
from spikemotif.relax import combined_matrix, effective_weight_matrix
from spikemotif.search import (
    SearchState,
    discretize,
    fix_motif_size,
    params_from_discrete,
)


def main():
    cfg = NetworkConfig(n_in=3, layers=(LayerSpec(8, KIND_RECURRENT, (2, 4)),
                                        LayerSpec(2)), T=8, w_init_b=1.0)
    rng = np.random.Generator(np.random.PCG64(3))
    layouts = build_layouts(cfg)
    params = init_params(cfg, rng, layouts=layouts)
    arch = params.arch[0]
    arch.motif_logits = rng.normal(0, 1, size=arch.motif_logits.shape)
    for v in arch.sizes:
        arch.conn_logits[v] = rng.normal(0, 1, arch.conn_logits[v].shape)

    print("motif-size probabilities:", np.round(arch.motif_probs(), 3),
          "for sizes", arch.sizes)
    p = arch.conn_probs(2)
    print("first 4 edges of size 2, probabilities [exc, inh, absent]:")
    print(np.round(p[:4], 3))

    w = params.w_rec[0]
    print("\nexpected recurrent weight matrix under size 2 (3 dp):")
    print(np.round(effective_weight_matrix(arch, w, layouts[0], 2), 3))
    print("\nmixture over both candidate sizes:")
    print(np.round(combined_matrix(arch, w, layouts[0]), 3))

    print("\ncommitting: argmax size, then argmax type per edge")
    state = SearchState(config=cfg, params=params, layouts=layouts)
    fix_motif_size(state)
    d = discretize(state)
    kept = d[0].kept_edges()
    print(f"  chosen motif size {d[0].motif_size}, {len(kept)} edges kept")
    print("  dense matrix of the committed wiring (3 dp):")
    print(np.round(d[0].dense_matrix(), 3))

    pinned, use_layouts = params_from_discrete(cfg, d, rng, retain_weights=True)
    spikes = (rng.random((4, 3, 8)) < 0.4).astype(np.float64)
    relaxed = forward(cfg, pinned, spikes, layouts=use_layouts)
    dense = simulate_dense(cfg, pinned.w_ff, {0: d[0].dense_matrix()},
                           pinned.intr, spikes)
    diff = max(np.abs(relaxed.u_pre[k] - dense.u_pre[k]).max() for k in range(2))
    print(f"\none-hot relaxed forward vs dense simulation: "
          f"max |membrane difference| = {diff}")


if __name__ == "__main__":
    main()
