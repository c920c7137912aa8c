#!/usr/bin/env python3
"""Turn a Planetoid pickle set (ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index})
into a LINQS-style `<name>.content` / `<name>.cites` pair for `dfgl convert linqs`.

Node ids are the Planetoid row indices; labels become `class<k>`. Test rows
are reordered by `test.index`, as in the usual Planetoid loaders. CiteSeer's
isolated test ids (gaps in `test.index`) get zero features and no label and
are dropped, so node counts follow the rows that carry a label.
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(raw: Path, name: str):
    parts = {}
    for key in ("x", "tx", "allx", "y", "ty", "ally", "graph"):
        with open(raw / f"ind.{name}.{key}", "rb") as f:
            parts[key] = pickle.load(f, encoding="latin1")
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    return parts, test_index


def dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("raw", type=Path, help="directory holding the ind.<name>.* files")
    ap.add_argument("--name", default="cora")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args()

    p, test_index = load(args.raw, args.name)
    allx, tx = dense(p["allx"]), dense(p["tx"])
    ally, ty = np.asarray(p["ally"]), np.asarray(p["ty"])

    n = max(max(test_index) + 1, allx.shape[0] + len(test_index))
    features = np.zeros((n, allx.shape[1]), dtype=np.float32)
    labels = np.zeros((n, ally.shape[1]))
    features[: allx.shape[0]] = allx
    labels[: ally.shape[0]] = ally
    features[test_index] = tx
    labels[test_index] = ty

    labelled = labels.sum(axis=1) > 0
    keep = {v for v in range(n) if labelled[v]}
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / f"{args.name}.content", "w") as f:
        for v in sorted(keep):
            words = " ".join(str(int(x)) if float(x).is_integer() else repr(float(x)) for x in features[v])
            f.write(f"{v} {words} class{int(labels[v].argmax())}\n")

    seen = set()
    with open(args.out / f"{args.name}.cites", "w") as f:
        for u, nbrs in p["graph"].items():
            for v in nbrs:
                if u == v or u not in keep or v not in keep:
                    continue
                key = (min(u, v), max(u, v))
                if key in seen:
                    continue
                seen.add(key)
                f.write(f"{v} {u}\n")

    print(f"{len(keep)} nodes, {features.shape[1]} features, {len(seen)} undirected edges -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
