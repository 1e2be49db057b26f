"""Planted worlds: community-structured networks with simple and complex cascades.

Simple memes spread by the restarting random cascade over the whole graph and
draw heavy-tailed popularity. Complex memes start from one intra-community
edge, spread freely inside that community but need ``complex_threshold``
infected neighbors to enter any other, and draw small popularity.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .cascade import substream
from .community import Partition, write_partition
from .graph import Interaction, InteractionLog, SocialNetwork, from_adjacency, write_edge_list, write_interactions
from .trace import MemeTrace, write_traces

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlantedPartitionSpec:
    n: int = 1000
    k: int = 10
    p_in: float = 0.1
    p_out: float = 0.002
    seed: int = 0
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_out < self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if self.sizes is None:
            if self.k < 1 or self.n % self.k:
                raise ValueError(f"k={self.k} must divide n={self.n} when sizes are not given")
        elif sum(self.sizes) != self.n or len(self.sizes) != self.k:
            raise ValueError("sizes must have k entries summing to n")

    def block_sizes(self) -> list[int]:
        return list(self.sizes) if self.sizes is not None else [self.n // self.k] * self.k

    def expected_degree(self) -> float:
        s = np.asarray(self.block_sizes(), dtype=float)
        intra = np.sum(s * (s - 1)) * self.p_in
        inter = (self.n**2 - np.sum(s**2)) * self.p_out
        return float((intra + inter) / self.n)


def _sample_pairs(rng, n_pairs: int, prob: float) -> np.ndarray:
    # Binomial count then distinct uniform pair indices: same law as independent per-pair coins
    m = rng.binomial(n_pairs, prob)
    if m == 0:
        return np.empty(0, dtype=np.int64)
    if m > n_pairs // 4:
        return np.flatnonzero(rng.random(n_pairs) < prob)
    return np.sort(rng.choice(n_pairs, size=m, replace=False))


WORLD_SIZES = (800, 1000, 1200, 1500, 1500, 1800, 2000, 2200)


def world_network_spec(seed: int) -> PlantedPartitionSpec:
    """Default network for the prediction world.

    Communities are large next to a 50-tweet cascade, so adopters inside one
    community rarely share neighbors, and their sizes differ, so intra-degree
    varies between communities. Together these keep the neighbor-count
    feature from revealing how concentrated a meme is.
    """
    return PlantedPartitionSpec(n=sum(WORLD_SIZES), k=len(WORLD_SIZES), p_in=0.01, p_out=0.0002,
                                seed=seed, sizes=WORLD_SIZES)


def gen_network(spec: PlantedPartitionSpec) -> tuple[SocialNetwork, Partition]:
    """Planted partition graph: intra pairs linked w.p. ``p_in``, inter pairs w.p. ``p_out``."""
    rng = np.random.default_rng(spec.seed)
    sizes = spec.block_sizes()
    starts = np.concatenate([[0], np.cumsum(sizes)])
    chunks = []
    for a in range(spec.k):
        for b in range(a, spec.k):
            sa, sb = sizes[a], sizes[b]
            if a == b:
                # index k over the strict upper triangle, row-major
                k = _sample_pairs(rng, sa * (sa - 1) // 2, spec.p_in)
                i = (sa - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * sa * (sa - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
                j = k + i + 1 - sa * (sa - 1) // 2 + (sa - i) * ((sa - i) - 1) // 2
            else:
                k = _sample_pairs(rng, sa * sb, spec.p_out)
                i, j = k // sb, k % sb
            chunks.append(np.column_stack([i + starts[a], j + starts[b]]))
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), np.int64)
    net = from_adjacency(spec.n, edges)
    labels = np.repeat(np.arange(spec.k), sizes)
    part = Partition(labels, {"algorithm": "planted"})
    exp_deg = spec.expected_degree()
    net.ingest_stats["expected_degree"] = exp_deg
    if exp_deg < 1:
        net.ingest_stats["sparse_warning"] = True
        log.warning("expected mean degree %.3f < 1; the graph will be mostly fragments", exp_deg)
    return net, part


@dataclass(frozen=True)
class PlantedCascadeSpec:
    n_memes: int = 600
    simple_fraction: float = 0.15
    # simple: discrete power law P = floor(min * u^(-1/(alpha-1))), capped at max_tweets
    simple_min_tweets: int = 300
    simple_alpha: float = 2.2
    # complex: min + geometric extra, truncated at complex_max_tweets
    complex_min_tweets: int = 50
    complex_mean_extra: float = 40.0
    complex_max_tweets: int = 150
    max_tweets: int = 2000
    complex_threshold: float = 2
    # per-meme repeat-tweet probability ~ Uniform(0, repeat_max), same law for both types
    repeat_max: float = 0.5
    p: float = 0.85
    intra_rate_multiplier: float = 5.0
    base_interaction_rate: float = 1.0
    seed: int = 0
    min_adopters: int = 5
    max_retries: int = 20

    def __post_init__(self):
        if self.n_memes < 10:
            raise ValueError("n_memes must be >= 10")
        if self.complex_threshold < 2:
            raise ValueError("complex_threshold must be >= 2")
        if not 0.0 <= self.simple_fraction <= 1.0:
            raise ValueError("simple_fraction must lie in [0, 1]")


def draw_popularity(spec: PlantedCascadeSpec, contagion: str, rng) -> int:
    if contagion == "simple":
        u = 1.0 - rng.random()
        pop = math.floor(spec.simple_min_tweets * u ** (-1.0 / (spec.simple_alpha - 1.0)))
    else:
        q = 1.0 / (1.0 + spec.complex_mean_extra)
        pop = min(spec.complex_min_tweets + int(rng.geometric(q)) - 1, spec.complex_max_tweets)
    return int(min(pop, spec.max_tweets))


def _simple_cascade(net: SocialNetwork, n_events: int, p: float, rng) -> tuple[np.ndarray, np.ndarray]:
    U = rng.random((n_events, 3))
    return _kernels.cascade_walk(net.indptr, net.indices, net.n, U, p, -1)


def _complex_cascade(net: SocialNetwork, part: Partition, n_events: int, threshold: float, rng):
    a = part.assignment
    e = net.edge_array()
    intra = e[a[e[:, 0]] == a[e[:, 1]]]
    if len(intra) == 0:
        raise ValueError("complex cascades need at least one intra-community edge")
    s, t = intra[rng.integers(len(intra))]
    if rng.random() < 0.5:
        s, t = t, s
    home = a[s]
    count = np.zeros(net.n, dtype=np.int64)
    infected = np.zeros(net.n, dtype=bool)
    users = [int(s), int(t)]
    infector = [-1, int(s)]
    adopters = []
    frontier: set[int] = set()

    def infect(v):
        infected[v] = True
        adopters.append(v)
        frontier.discard(v)
        for x in net.neighbors(v).tolist():
            count[x] += 1
            if not infected[x] and (count[x] >= threshold or a[x] == home):
                frontier.add(x)

    infect(int(s))
    infect(int(t))
    while len(users) < n_events:
        if frontier:
            cand = sorted(frontier)
            v = cand[rng.integers(len(cand))]
            nb = net.neighbors(v)
            src = nb[infected[nb]]
            infector.append(int(src[rng.integers(len(src))]))
            users.append(v)
            infect(v)
        else:
            v = adopters[rng.integers(len(adopters))]
            nb = net.neighbors(v)
            src = nb[infected[nb]]
            infector.append(int(src[rng.integers(len(src))]) if len(src) else -1)
            users.append(v)
    return np.asarray(users[:n_events]), np.asarray(infector[:n_events])


def _with_repeats(users: np.ndarray, infector: np.ndarray, n_events: int, q: float, rng):
    """Interleave repeat tweets: each event is, w.p. ``q``, a re-tweet by a uniform earlier adopter.

    Repeats leave the cascade state untouched, so the spreading events keep
    their relative order and are consumed from the front of ``users``.
    """
    out_u, out_i = [], []
    adopters: list[int] = []
    seen: set[int] = set()
    k = 0
    while len(out_u) < n_events:
        if adopters and rng.random() < q:
            out_u.append(adopters[rng.integers(len(adopters))])
            out_i.append(-1)
            continue
        v = int(users[k])
        out_u.append(v)
        out_i.append(int(infector[k]))
        k += 1
        if v not in seen:
            seen.add(v)
            adopters.append(v)
    return np.asarray(out_u, dtype=np.int64), np.asarray(out_i, dtype=np.int64)


@dataclass
class PlantedMemes:
    traces: list[MemeTrace]
    contagion: dict[str, str]
    log: InteractionLog
    retries: int = 0
    meta: dict = field(default_factory=dict)


def gen_cascades(net: SocialNetwork, part: Partition, spec: PlantedCascadeSpec) -> PlantedMemes:
    """Generate ``n_memes`` planted traces, their contagion labels and an interaction log.

    Each spreading event (one with a known infector) emits a Poisson number of
    retweet interactions from the adopter to the infector, with rate
    multiplied by ``intra_rate_multiplier`` when both share a community.
    """
    a = part.assignment
    n_simple = int(round(spec.simple_fraction * spec.n_memes))
    kinds = np.array(["simple"] * n_simple + ["complex"] * (spec.n_memes - n_simple))
    substream(spec.seed, 0).shuffle(kinds)
    traces, labels, events = [], {}, []
    retries = 0
    for i, kind in enumerate(kinds.tolist()):
        meme = f"m{i:05d}"
        for attempt in range(spec.max_retries + 1):
            rng = substream(spec.seed, 1, i, attempt)
            pop = draw_popularity(spec, kind, rng)
            q = rng.uniform(0.0, spec.repeat_max)
            if kind == "simple":
                users, inf = _simple_cascade(net, pop, spec.p, rng)
            else:
                users, inf = _complex_cascade(net, part, pop, spec.complex_threshold, rng)
            users, inf = _with_repeats(users, inf, pop, q, rng)
            if len(np.unique(users)) >= min(spec.min_adopters, pop):
                break
            retries += 1
        else:
            raise RuntimeError(f"meme {meme}: cascade stayed below {spec.min_adopters} adopters")
        tr = MemeTrace(meme, users, infector=inf, flags={"contagion": kind})
        traces.append(tr)
        labels[meme] = kind
        irng = substream(spec.seed, 2, i)
        has_src = inf >= 0
        rates = np.where(a[users] == a[np.maximum(inf, 0)], spec.intra_rate_multiplier, 1.0)
        rates = spec.base_interaction_rate * rates * has_src
        counts = irng.poisson(rates)
        for idx in np.flatnonzero(counts):
            u, v, ts = int(users[idx]), int(inf[idx]), int(tr.ts[idx])
            if u == v:
                continue
            events.extend([Interaction(u, v, "retweet", ts, (meme,))] * int(counts[idx]))
    return PlantedMemes(traces, labels, InteractionLog(events), retries, {"spec": asdict(spec)})


def write_world(
    out: str | Path,
    net: SocialNetwork,
    part: Partition,
    memes: PlantedMemes,
    net_spec: PlantedPartitionSpec,
    cascade_spec: PlantedCascadeSpec,
) -> dict:
    """Write edge list, partition, traces, interactions and a manifest; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(net, out / "edges.tsv")
    write_partition(part, net, out / "partition.csv")
    write_traces(memes.traces, net, out / "traces.jsonl")
    write_interactions(memes.log, net, out / "interactions.jsonl")
    manifest = {
        "network": asdict(net_spec),
        "cascades": asdict(cascade_spec),
        "n_nodes": net.n,
        "n_edges": net.edge_count,
        "n_memes": len(memes.traces),
        "n_interactions": len(memes.log),
        "retries": memes.retries,
        "labels": memes.contagion,
        "files": ["edges.tsv", "partition.csv", "traces.jsonl", "interactions.jsonl"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
