from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Flat clustering: element id -> cluster id, ids contiguous from 0.

    Cluster ids are assigned in order of first appearance over the element
    order, so two partitions with the same blocks and element order compare
    equal.
    """

    labels: Mapping[str, int]

    def __post_init__(self):
        used = sorted(set(self.labels.values()))
        if used != list(range(len(used))):
            raise PartitionError("cluster ids must be contiguous from 0")

    @classmethod
    def from_labels(cls, elements: Iterable[str], labels: Iterable) -> "Partition":
        """Canonicalize arbitrary hashable labels to 0..k-1 by first appearance."""
        remap: dict = {}
        out: dict[str, int] = {}
        for elem, lab in zip(elements, labels):
            if elem in out:
                raise PartitionError(f"duplicate element {elem!r}")
            out[elem] = remap.setdefault(lab, len(remap))
        return cls(out)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[str]]) -> "Partition":
        elements, labels = [], []
        for k, block in enumerate(blocks):
            for elem in block:
                elements.append(elem)
                labels.append(k)
        return cls.from_labels(elements, labels)

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels.values()))

    @property
    def elements(self) -> list[str]:
        return list(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def blocks(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.n_clusters)]
        for elem, lab in self.labels.items():
            out[lab].append(elem)
        return out

    def sizes(self) -> Counter:
        return Counter(self.labels.values())

    def canonical(self) -> "Partition":
        return Partition.from_labels(self.labels.keys(), self.labels.values())


def write_partition_csv(partition: Partition, path: str | Path, header=("element_id", "cluster_id")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for elem, lab in partition.labels.items():
            w.writerow([elem, lab])


def read_partition_csv(path: str | Path) -> Partition:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PartitionError(f"{path}: empty partition file")
    body = rows[1:]
    try:
        return Partition.from_labels([r[0] for r in body], [int(r[1]) for r in body])
    except (IndexError, ValueError) as exc:
        raise PartitionError(f"{path}: malformed partition row ({exc})") from exc
