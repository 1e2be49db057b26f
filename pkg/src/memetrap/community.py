"""Community detection on the unweighted network.

Louvain and label propagation stand in for flow- and link-based methods; both
produce a :class:`Partition`, so any other detector can plug in behind the
same type.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import SocialNetwork


@dataclass(frozen=True)
class Partition:
    """Node -> community assignment with dense ids ``0..C-1``."""

    assignment: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignment must be one-dimensional")
        if len(a) and (a.min() < 0):
            raise ValueError("every node needs a community (found negative id)")
        if len(a) and len(np.unique(a)) != a.max() + 1:
            raise ValueError("community ids must be dense 0..C-1")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def C(self) -> int:
        return int(self.assignment.max()) + 1 if len(self.assignment) else 0

    def __getitem__(self, u):
        return self.assignment[u]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.C)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == c)

    def covers(self, net: SocialNetwork) -> bool:
        return self.n == net.n

    @classmethod
    def from_labels(cls, labels, meta: dict | None = None) -> "Partition":
        """Densify arbitrary labels; ids are assigned in order of first node appearance."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        return cls(rank[inverse.ravel()], meta or {})

    def same_partition(self, other: "Partition") -> bool:
        """True when both induce the same set of node groups, whatever the labels."""
        if self.n != other.n:
            return False
        return np.array_equal(
            Partition.from_labels(self.assignment).assignment,
            Partition.from_labels(other.assignment).assignment,
        )


def trivial_partition(n: int) -> Partition:
    return Partition(np.zeros(n, dtype=np.int64))


def singleton_partition(n: int) -> Partition:
    return Partition(np.arange(n, dtype=np.int64))


def modularity(net: SocialNetwork, part: Partition, resolution: float = 1.0) -> float:
    """Newman-Girvan modularity ``sum_c [m_c/m - res * (d_c/2m)^2]``."""
    if part.n != net.n:
        raise ValueError("partition does not cover the network")
    m = net.edge_count
    if m == 0:
        raise ValueError("modularity is undefined for a graph without edges")
    a = part.assignment
    e = net.edge_array()
    same = a[e[:, 0]] == a[e[:, 1]]
    m_c = np.bincount(a[e[same, 0]], minlength=part.C)
    d_c = np.bincount(a, weights=net.degrees, minlength=part.C)
    return float(m_c.sum() / m - resolution * np.sum((d_c / (2.0 * m)) ** 2))


def _one_level(adj, strength, total, order, resolution, init=None):
    """Local moving phase. Returns community labels per node and whether anything moved."""
    n = len(adj)
    comm = list(range(n)) if init is None else [int(c) for c in init]
    tot = [0.0] * max(n, max(comm, default=-1) + 1)
    for i, c in enumerate(comm):
        tot[c] += strength[i]
    moved_any = False
    improved = True
    passes = 0
    while improved and passes < 1000:
        improved = False
        passes += 1
        for i in order:
            ci = comm[i]
            ki = strength[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + w
            tot[ci] -= ki
            scale = resolution * ki / (2.0 * total)
            stay = links.get(ci, 0.0) - tot[ci] * scale
            best_c, best_gain = ci, stay
            for c in sorted(links):
                gain = links[c] - tot[c] * scale
                if gain > best_gain or (gain == best_gain and c < best_c and gain > stay):
                    best_c, best_gain = c, gain
            tot[best_c] += ki
            if best_c != ci:
                comm[i] = best_c
                improved = True
                moved_any = True
    return comm, moved_any


def detect_louvain(net: SocialNetwork, seed: int = 0, resolution: float = 1.0) -> Partition:
    """Louvain modularity maximisation with a seeded node-visit order.

    The result is a partition no single node move can improve at the given
    resolution. Equal gains resolve to the lowest community id, so a fixed
    seed always yields the same partition.
    """
    if net.n == 0:
        raise ValueError("cannot partition an empty network")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if net.edge_count == 0:
        return Partition(np.arange(net.n, dtype=np.int64), {"algorithm": "louvain", "levels": 0})

    rng = np.random.default_rng(seed)
    base_adj = [dict.fromkeys(net.neighbors(u).tolist(), 1.0) for u in range(net.n)]
    base_strength = [float(d) for d in net.degrees]
    total = float(net.edge_count)
    node_comm = np.arange(net.n)
    levels = rounds = 0
    while True:
        rounds += 1
        adj, strength = _aggregate(base_adj, base_strength, node_comm)
        while len(adj) > 1:
            order = rng.permutation(len(adj)).tolist()
            comm, moved = _one_level(adj, strength, total, order, resolution)
            if not moved:
                break
            levels += 1
            comm = _dense(comm)
            node_comm = comm[node_comm]
            adj, strength = _aggregate(adj, strength, comm)
        # aggregation can leave single nodes that would gain by moving; polish at node level
        order = rng.permutation(net.n).tolist()
        comm, moved = _one_level(base_adj, base_strength, total, order, resolution, init=node_comm)
        if not moved or rounds >= 100:
            break
        node_comm = _dense(comm)
    return Partition.from_labels(node_comm, {"algorithm": "louvain", "levels": levels, "rounds": rounds, "seed": seed})


def _dense(labels) -> np.ndarray:
    """Renumber to dense ids in order of first appearance."""
    relabel: dict[int, int] = {}
    return np.array([relabel.setdefault(int(c), len(relabel)) for c in labels], dtype=np.int64)


def _aggregate(adj, strength, comm):
    """Collapse each community of ``comm`` (dense ids) into one node; internal links are dropped."""
    k = int(max(comm)) + 1
    new_adj: list[dict[int, float]] = [dict() for _ in range(k)]
    new_strength = [0.0] * k
    for i, nbrs in enumerate(adj):
        ci = int(comm[i])
        new_strength[ci] += strength[i]
        for j, w in nbrs.items():
            cj = int(comm[j])
            if ci != cj:
                new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
    return new_adj, new_strength


def _propagate(net: SocialNetwork, order: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, int, bool]:
    labels = np.arange(net.n, dtype=np.int64)
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for u in order:
            nb = net.neighbors(u)
            if len(nb) == 0:
                continue
            vals, counts = np.unique(labels[nb], return_counts=True)
            top = vals[counts == counts.max()]
            if labels[u] in top:
                continue
            labels[u] = top.min()
            changed = True
        if not changed:
            return labels, sweep, True
    return labels, max_sweeps, False


def detect_label_propagation(net: SocialNetwork, seed: int = 0, max_sweeps: int = 100, restarts: int = 16) -> Partition:
    """Sequential label propagation in seeded node orders.

    A node keeps its label while it is among the most frequent neighbor labels;
    otherwise it takes the smallest of them. Each run stops at a fixed point or
    after ``max_sweeps`` sweeps. Smallest-label tie breaking lets the lowest
    label leak across a bridge in some orders, so ``restarts`` orders are tried
    and the fixed point with the highest modularity is kept (earliest on ties).
    ``meta['converged']`` refers to the kept run.
    """
    if net.n == 0:
        raise ValueError("cannot partition an empty network")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    runs = restarts if net.edge_count else 1
    best = None
    for r in range(runs):
        labels, sweeps, converged = _propagate(net, rng.permutation(net.n), max_sweeps)
        part = Partition.from_labels(labels)
        q = modularity(net, part) if net.edge_count else 0.0
        if best is None or q > best[0]:
            best = (q, part, sweeps, converged, r)
    q, part, sweeps, converged, r = best
    return Partition(part.assignment, {"algorithm": "label_propagation", "sweeps": sweeps, "converged": converged,
                                       "run": r, "restarts": runs, "seed": seed})


DETECTORS = {"louvain": detect_louvain, "label_propagation": detect_label_propagation}


def detect(net: SocialNetwork, algorithm: str = "louvain", seed: int = 0) -> Partition:
    try:
        fn = DETECTORS[algorithm]
    except KeyError:
        raise ValueError(f"unknown community algorithm {algorithm!r}; choose from {sorted(DETECTORS)}") from None
    return fn(net, seed=seed)


def write_partition(part: Partition, net: SocialNetwork, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "community_id"])
        for u, c in enumerate(part.assignment):
            w.writerow([net.ids[u], int(c)])


def read_partition(path: str | Path, net: SocialNetwork) -> Partition:
    labels = np.full(net.n, -1, dtype=np.int64)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["node_id", "community_id"]:
            raise ValueError(f"{path}: expected header node_id,community_id")
        for row in reader:
            labels[net.node_of(row["node_id"])] = int(row["community_id"])
    missing = np.flatnonzero(labels < 0)
    if len(missing):
        raise ValueError(f"{path}: partition missing {len(missing)} nodes (first: {net.ids[missing[0]]})")
    return Partition(labels)
