"""Tabulate which agents an insider can identify across the graph families.

For each family and size prints whether every agent is protected, and the
largest number of agents a single insider can identify.
"""
import argparse

from cpl.graph import FAMILIES, all_private, identifiable_set, is_weight_balanced

SIZES = {
    "directed_ring": [(n,) for n in (3, 5, 8, 12)],
    "cyclic_bipartite": [(k,) for k in (2, 3, 4, 6)],
    "ring_lattice_4regular": [(n,) for n in (6, 9, 12, 16)],
    "stacked_prism": [(3, 3), (3, 4), (4, 4), (5, 3)],
    "grid_lattice": [(2, 2), (3, 3), (4, 4), (5, 3)],
}


def survey(families):
    rows = []
    for fam in families:
        for args in SIZES[fam]:
            g = FAMILIES[fam](*args)
            worst = max(len(identifiable_set(g, i)) for i in g.nodes)
            rows.append((fam, args, g.n, is_weight_balanced(g), all_private(g), worst))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", choices=sorted(SIZES), action="append", help="restrict to these families")
    args = ap.parse_args()
    print(f"{'family':24s} {'args':10s} {'n':>3s} {'balanced':>8s} {'private':>7s} {'max ident':>9s}")
    for fam, fargs, n, bal, priv, worst in survey(args.family or sorted(SIZES)):
        print(f"{fam:24s} {str(fargs):10s} {n:3d} {str(bal):>8s} {str(priv):>7s} {worst:9d}")


if __name__ == "__main__":
    main()
