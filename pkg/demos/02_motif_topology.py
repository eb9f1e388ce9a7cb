"""Candidate connectivity of a recurrent layer built from repeated motifs.

A layer of n neurons is partitioned into motifs of size v for every
candidate v. Within a motif every ordered pair (including self-loops) is a
candidate edge; between adjacent motifs, corresponding offsets are wired in
a chain. The search later weighs these candidates; here we just look at the
raw structure.
"""

import numpy as np

from spikemotif.topology import build_layout


def adjacency(n, edges):
    m = np.zeros((n, n), dtype=int)
    m[edges.dst, edges.src] = 1
    return m


def main():
    n = 12
    layout = build_layout(n, (2, 4))
    print(f"layer of {n} neurons, candidate motif sizes {layout.sizes}")
    for v in layout.sizes:
        es = layout.edges[v]
        n_intra = int((~es.inter).sum())
        n_inter = int(es.inter.sum())
        print(f"\nmotif size {v}: {n // v} motifs, "
              f"{n_intra} intra- + {n_inter} inter-motif candidate edges")
        print("  motif assignment:", layout.assignments[v].tolist())
        print("  candidate adjacency (row = target, col = source):")
        for row in adjacency(n, es):
            print("   ", "".join(".#"[x] for x in row))

    print("\nfixing the motif size drops all other candidates:")
    fixed = layout.restrict(4)
    print(f"  sizes after restrict(4): {fixed.sizes}, "
          f"{len(fixed.edges[4])} edges kept")

    print("\nwithout inter-motif wiring the chain edges disappear:")
    isolated = build_layout(n, (4,), inter_enabled=False)
    print(f"  size 4: {len(isolated.edges[4])} candidate edges "
          f"(vs {len(layout.edges[4])} with the chain)")


if __name__ == "__main__":
    main()
