"""Baseline diffusion models M1-M4 and the oversimulate-then-sample ensemble protocol.

* M1 random sampling: ignores topology.
* M2 simple cascade: restarting random spread along edges.
* M3 social reinforcement: the user with the most infected neighbors tweets next.
* M4 homophily: M2 restricted to neighbors in the spreader's own community.

Each ``simulate_*`` returns the raw trace of ``target_tweets * oversample_factor``
events; :func:`subsample` applies the sampling step and :func:`run_ensemble`
runs the full protocol.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .community import Partition
from .graph import SocialNetwork
from .metrics import EARLY_N, METRICS, concentration
from .trace import MemeTrace

MODELS = ("M1", "M2", "M3", "M4")


@dataclass(frozen=True)
class CascadeParams:
    p: float = 0.85
    target_tweets: int = 50
    oversample_factor: int = 10
    sample_rate: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.target_tweets < 1:
            raise ValueError("target_tweets must be >= 1")
        if self.oversample_factor < 1:
            raise ValueError("oversample_factor must be >= 1")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must lie in (0, 1]")

    @property
    def n_events(self) -> int:
        return self.target_tweets * self.oversample_factor


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; counter-based, order independent."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def community_restricted(net: SocialNetwork, part: Partition) -> tuple[np.ndarray, np.ndarray]:
    """CSR arrays keeping only edges whose endpoints share a community."""
    if part.n != net.n:
        raise ValueError(f"partition covers {part.n} nodes, network has {net.n}")
    a = part.assignment
    src = np.repeat(np.arange(net.n), net.degrees)
    keep = a[src] == a[net.indices]
    counts = np.bincount(src[keep], minlength=net.n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, np.ascontiguousarray(net.indices[keep], dtype=np.int64)


def _rng(params: CascadeParams, rng):
    return rng if rng is not None else np.random.default_rng(params.seed)


def simulate_m1(net: SocialNetwork, params: CascadeParams, mode: str = "tweets", rng=None) -> MemeTrace:
    """Random sampling: authors uniform with replacement (tweets) or distinct users (users)."""
    if net.n == 0:
        raise ValueError("M1 needs a non-empty network")
    rng = _rng(params, rng)
    E = params.n_events
    if mode == "tweets":
        users = rng.integers(0, net.n, size=E)
    elif mode == "users":
        if E > net.n:
            raise ValueError(f"users mode needs {E} distinct users but the network has {net.n}")
        users = rng.choice(net.n, size=E, replace=False)
    else:
        raise ValueError(f"mode must be 'tweets' or 'users', not {mode!r}")
    return MemeTrace("M1", users, flags={"model": "M1", "mode": mode})


def _walk(indptr, indices, n, params, rng, seed_user, model):
    U = rng.random((params.n_events, 3))
    kernel = _kernels.cascade_argmax if model == "M3" else _kernels.cascade_walk
    users, inf = kernel(indptr, indices, n, U, float(params.p), -1 if seed_user is None else int(seed_user))
    return MemeTrace(model, users, infector=inf, flags={"model": model})


def simulate_m2(net: SocialNetwork, params: CascadeParams, rng=None, seed_user: int | None = None) -> MemeTrace:
    if net.edge_count == 0:
        raise ValueError("M2 needs at least one edge")
    return _walk(net.indptr, net.indices, net.n, params, _rng(params, rng), seed_user, "M2")


def simulate_m3(net: SocialNetwork, params: CascadeParams, rng=None, seed_user: int | None = None) -> MemeTrace:
    if net.edge_count == 0:
        raise ValueError("M3 needs at least one edge")
    return _walk(net.indptr, net.indices, net.n, params, _rng(params, rng), seed_user, "M3")


def simulate_m4(
    net: SocialNetwork,
    part: Partition,
    params: CascadeParams,
    rng=None,
    seed_user: int | None = None,
    restricted=None,
) -> MemeTrace:
    if net.edge_count == 0:
        raise ValueError("M4 needs at least one edge")
    indptr, indices = restricted if restricted is not None else community_restricted(net, part)
    return _walk(indptr, indices, net.n, params, _rng(params, rng), seed_user, "M4")


def subsample(trace: MemeTrace, rate: float, rng) -> MemeTrace:
    """Keep exactly ``ceil(rate * T)`` events chosen uniformly; order kept, seq renumbered."""
    if not 0.0 < rate <= 1.0:
        raise ValueError("rate must lie in (0, 1]")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    T = len(trace)
    k = min(T, math.ceil(rate * T - 1e-9))
    keep = np.sort(rng.choice(T, size=k, replace=False)) if k < T else np.arange(T)
    out = MemeTrace(trace.meme_id, trace.users[keep], None, trace.ts[keep], trace.infector[keep], dict(trace.flags))
    if k == 0:
        out.flags["empty"] = True
    return out


def simulate(model: str, net: SocialNetwork, part: Partition | None, params: CascadeParams,
             mode: str = "tweets", rng=None, restricted=None) -> MemeTrace:
    """Raw (un-sampled) trace for any of M1..M4."""
    if model == "M1":
        return simulate_m1(net, params, mode, rng)
    if model == "M2":
        return simulate_m2(net, params, rng)
    if model == "M3":
        return simulate_m3(net, params, rng)
    if model == "M4":
        if part is None:
            raise ValueError("M4 needs a partition")
        return simulate_m4(net, part, params, rng, restricted=restricted)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


@dataclass
class Ensemble:
    model: str
    mode: str
    values: dict[str, np.ndarray]
    traces: list[MemeTrace] = field(default_factory=list)
    dropped: int = 0
    n_sims: int = 0
    n_samples: int = 0

    def summary(self) -> dict:
        out = {}
        for m in METRICS:
            v = self.values[m]
            out[m] = {
                "mean": float(v.mean()) if len(v) else None,
                "stderr": float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else None,
                "n": int(len(v)),
            }
        return out

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "n_sims": self.n_sims,
            "n_samples": self.n_samples,
            "n_traces": int(len(self.values["r"])),
            "dropped_empty": self.dropped,
            "metrics": self.summary(),
        }


_MODEL_KEY = {"M1": 1, "M2": 2, "M3": 3, "M4": 4}


def run_ensemble(
    net: SocialNetwork,
    part: Partition,
    model: str,
    params: CascadeParams,
    n_sims: int = 100,
    n_samples: int = 10,
    mode: str = "tweets",
    shared_stream: bool = False,
    keep_traces: bool = False,
    n_early: int = EARLY_N,
) -> Ensemble:
    """``n_sims`` simulations, each subsampled ``n_samples`` times, with metrics per sample.

    Simulation ``i`` draws from the substream ``(seed, model, i)``; with
    ``shared_stream`` the model key is dropped so different models consume
    identical random numbers (paired comparisons).
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    restricted = community_restricted(net, part) if model == "M4" else None
    mkey = (0,) if shared_stream else (_MODEL_KEY[model],)
    values = {m: [] for m in METRICS}
    traces = []
    dropped = 0
    kept = min(params.n_events, math.ceil(params.sample_rate * params.n_events - 1e-9))
    # Distinct users subsampled uniformly are just a smaller uniform draw, so when
    # the oversampled pool would not fit in the network the kept users are drawn directly.
    direct = model == "M1" and mode == "users" and params.n_events > net.n
    if direct and kept > net.n:
        raise ValueError(f"users mode needs {kept} distinct users but the network has {net.n}")
    for i in range(n_sims):
        sim_rng = substream(params.seed, *mkey, i, 0)
        raw = None if direct else simulate(model, net, part, params, mode, sim_rng, restricted)
        for j in range(n_samples):
            rng = substream(params.seed, *mkey, i, j + 1)
            if direct:
                tr = MemeTrace("M1", rng.choice(net.n, size=kept, replace=False), flags={"model": "M1"})
            else:
                tr = subsample(raw, params.sample_rate, rng)
            if tr.empty:
                dropped += 1
                continue
            tr = MemeTrace(f"{model}-{i}-{j}", tr.users, tr.seq, tr.ts, tr.infector, tr.flags)
            rep = concentration(tr, net, part, n_early)
            for m in METRICS:
                values[m].append(rep[m])
            if keep_traces:
                traces.append(tr)
    return Ensemble(model, mode, {m: np.asarray(v) for m, v in values.items()}, traces, dropped, n_sims, n_samples)


def write_ensemble_summary(ens: Ensemble, params: CascadeParams, path: str | Path) -> None:
    doc = ens.to_json()
    doc["params"] = asdict(params)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
