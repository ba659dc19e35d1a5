#!/usr/bin/env python3
"""Convert public Cora and WN18RR downloads into the TSV layout read by hypnorm."""

import argparse
import random
import shutil
from collections import defaultdict
from pathlib import Path


def convert_cora(src: Path, dst: Path, seed: int) -> None:
    ids, feats, labels = {}, [], []
    for line in (src / "cora.content").read_text().splitlines():
        parts = line.split("\t")
        if len(parts) < 3:
            continue
        ids[parts[0]] = len(ids)
        feats.append(parts[1:-1])
        labels.append(parts[-1])
    classes = {c: i for i, c in enumerate(sorted(set(labels)))}

    edges = set()
    for line in (src / "cora.cites").read_text().splitlines():
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ids or parts[1] not in ids:
            continue
        u, v = ids[parts[0]], ids[parts[1]]
        if u != v:
            edges.add((min(u, v), max(u, v)))

    # 20 training nodes per class, then 500 validation and 1000 test nodes
    rng = random.Random(seed)
    order = list(range(len(ids)))
    rng.shuffle(order)
    split = ["none"] * len(ids)
    per_class = defaultdict(int)
    for i in order:
        if per_class[labels[i]] < 20:
            per_class[labels[i]] += 1
            split[i] = "train"
    rest = [i for i in order if split[i] == "none"]
    for i in rest[:500]:
        split[i] = "val"
    for i in rest[500:1500]:
        split[i] = "test"

    dst.mkdir(parents=True, exist_ok=True)
    with open(dst / "edges.tsv", "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(dst / "features.tsv", "w") as f:
        for i, row in enumerate(feats):
            f.write("\t".join([str(i), *row]) + "\n")
    with open(dst / "labels.tsv", "w") as f:
        for i, c in enumerate(labels):
            f.write(f"{i}\t{classes[c]}\n")
    with open(dst / "split.tsv", "w") as f:
        for i, s in enumerate(split):
            if s != "none":
                f.write(f"{i}\t{s}\n")
    print(f"cora: {len(ids)} nodes, {len(edges)} edges, {len(classes)} classes -> {dst}")


def convert_wn18rr(src: Path, dst: Path) -> None:
    dst.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        for ext in (".tsv", ".txt"):
            if (src / (name + ext)).exists():
                shutil.copyfile(src / (name + ext), dst / (name + ".tsv"))
                break
        else:
            raise SystemExit(f"missing {name}.txt in {src}")
    print(f"wn18rr -> {dst}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("kind", choices=["cora", "wn18rr"])
    ap.add_argument("src", type=Path)
    ap.add_argument("dst", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.kind == "cora":
        convert_cora(args.src, args.dst, args.seed)
    else:
        convert_wn18rr(args.src, args.dst)


if __name__ == "__main__":
    main()
