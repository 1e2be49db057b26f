"""Undirected social network in CSR form plus the raw interaction log."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

KINDS = ("retweet", "mention")


class IngestionError(ValueError):
    """Malformed input record; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def id_sort_key(ext_id: str):
    # numeric ids sort numerically so "2" < "10"; everything else lexicographic after them
    s = str(ext_id)
    if s.isdigit():
        return (0, int(s), "")
    return (1, 0, s)


@dataclass(frozen=True)
class SocialNetwork:
    """Immutable undirected, unweighted graph over dense ids ``0..n-1``.

    ``indptr``/``indices`` hold sorted neighbor lists (CSR). ``ids[i]`` is the
    external id of node ``i``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    ids: tuple[str, ...]
    ingest_stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.ids)})

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, u: int) -> np.ndarray:
        if not 0 <= u < self.n:
            raise IndexError(f"node {u} out of range for n={self.n}")
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        return bool(k < len(nb) and nb[k] == v)

    def node_of(self, ext_id) -> int:
        try:
            return self._index[str(ext_id)]
        except KeyError:
            raise KeyError(f"unknown user {ext_id!r}") from None

    def edges(self) -> Iterator[tuple[int, int]]:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``, ascending."""
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    yield u, int(v)

    def edge_array(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n), self.degrees)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])


def from_adjacency(n: int, edges: np.ndarray, ids: Sequence[str] | None = None) -> SocialNetwork:
    """Build a network from an ``(m, 2)`` array of internal-id pairs (deduplicated here)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    und = np.unique(np.column_stack([lo, hi]), axis=0) if len(edges) else np.empty((0, 2), np.int64)
    src = np.concatenate([und[:, 0], und[:, 1]])
    dst = np.concatenate([und[:, 1], und[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    if ids is None:
        ids = [str(i) for i in range(n)]
    return SocialNetwork(indptr, dst.astype(np.int64), tuple(str(s) for s in ids))


def build_network(
    edge_list: Iterable[tuple],
    mode: str = "reciprocal",
    nodes: Iterable = (),
) -> SocialNetwork:
    """Build the network from external-id pairs.

    In ``reciprocal`` mode the pairs are directed follows and an undirected edge
    exists only when both directions appear. In ``as-is`` mode every pair is an
    edge. Ids in ``nodes`` that never appear in a pair are kept as isolated
    nodes. Self-pairs are skipped and counted in ``ingest_stats``.
    """
    if mode not in ("reciprocal", "as-is"):
        raise ValueError(f"unknown mode {mode!r}")
    pairs = []
    self_loops = 0
    universe = {str(x) for x in nodes}
    for i, pair in enumerate(edge_list):
        try:
            u, v = pair
        except (TypeError, ValueError):
            raise IngestionError(f"malformed pair {pair!r}", i + 1) from None
        u, v = str(u), str(v)
        universe.add(u)
        universe.add(v)
        if u == v:
            self_loops += 1
            continue
        pairs.append((u, v))

    ids = sorted(universe, key=id_sort_key)
    index = {s: i for i, s in enumerate(ids)}
    arr = np.array([(index[u], index[v]) for u, v in pairs], dtype=np.int64).reshape(-1, 2)
    if mode == "reciprocal" and len(arr):
        directed = np.unique(arr, axis=0)
        fwd = set(map(tuple, directed.tolist()))
        arr = np.array([(u, v) for u, v in fwd if (v, u) in fwd and u < v], dtype=np.int64).reshape(-1, 2)
    net = from_adjacency(len(ids), arr, ids)
    net.ingest_stats.update(pairs=len(pairs) + self_loops, self_loops=self_loops)
    if self_loops:
        log.warning("skipped %d self-loop pairs", self_loops)
    return net


def neighbors(net: SocialNetwork, u: int) -> np.ndarray:
    return net.neighbors(u)


def degree_stats(net: SocialNetwork) -> dict:
    if net.n == 0:
        return {"n": 0, "m": 0, "min": 0, "max": 0, "mean": 0.0}
    deg = net.degrees
    return {
        "n": net.n,
        "m": net.edge_count,
        "min": int(deg.min()),
        "max": int(deg.max()),
        "mean": 2.0 * net.edge_count / net.n,
    }


def read_edge_list(path: str | Path) -> list[tuple[str, str]]:
    """Parse a ``u<TAB>v`` edge list; blank lines and ``#`` comments are skipped."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise IngestionError(f"expected 'u<TAB>v', got {line!r}", lineno)
            pairs.append((parts[0], parts[1]))
    return pairs


def write_edge_list(net: SocialNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={net.n} m={net.edge_count}\n")
        for u, v in net.edges():
            fh.write(f"{net.ids[u]}\t{net.ids[v]}\n")


def write_node_ids(net: SocialNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node_id,external_id\n")
        for i, s in enumerate(net.ids):
            fh.write(f"{i},{s}\n")


def read_node_ids(path: str | Path) -> list[str]:
    """External ids from a ``node_id,external_id`` table, in node order."""
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "node_id,external_id":
            raise IngestionError(f"expected header node_id,external_id, got {header!r}", 1)
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            idx, sep, ext = line.partition(",")
            if not sep or not idx.isdigit() or int(idx) != len(out):
                raise IngestionError(f"bad node row {line!r}", lineno)
            out.append(ext)
    return out


class Interaction(NamedTuple):
    actor: int
    target: int
    kind: str
    ts: int
    memes: tuple[str, ...] = ()


@dataclass
class InteractionLog:
    """Retweet/mention events, sorted by timestamp (stable)."""

    events: list[Interaction]

    def __post_init__(self):
        for e in self.events:
            if e.actor == e.target:
                raise IngestionError(f"interaction with actor == target ({e.actor})")
            if e.kind not in KINDS:
                raise IngestionError(f"unknown interaction kind {e.kind!r}")
        self.events = sorted(self.events, key=lambda e: e.ts)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def filter(self, kind: str | None = None) -> "InteractionLog":
        if kind is None:
            return self
        return InteractionLog([e for e in self.events if e.kind == kind])

    def by_meme(self) -> dict[str, list[Interaction]]:
        out: dict[str, list[Interaction]] = {}
        for e in self.events:
            for m in e.memes:
                out.setdefault(m, []).append(e)
        return out


def read_interactions(path: str | Path, net: SocialNetwork) -> InteractionLog:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                actor = net.node_of(rec["actor"])
                target = net.node_of(rec["target"])
                kind = rec["kind"]
                ts = int(rec["ts"])
                memes = tuple(rec.get("memes", ()))
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestionError(str(exc), lineno) from None
            if actor == target:
                continue
            events.append(Interaction(actor, target, kind, ts, memes))
    return InteractionLog(events)


def write_interactions(ilog: InteractionLog, net: SocialNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in ilog.events:
            rec = {"actor": net.ids[e.actor], "target": net.ids[e.target], "kind": e.kind, "ts": e.ts}
            if e.memes:
                rec["memes"] = list(e.memes)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
