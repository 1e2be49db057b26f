"""MemeTrace: the time-ordered tweets carrying one meme."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .graph import IngestionError, SocialNetwork


class EmptyTraceError(ValueError):
    pass


@dataclass(frozen=True)
class MemeTrace:
    """Events of one meme as parallel arrays ordered by ``seq``.

    ``ts`` defaults to ``seq``. ``infector[i]`` is the user whose tweet event
    ``i`` spread from, or -1 for seeds, restarts and unknown sources.
    """

    meme_id: str
    users: np.ndarray
    seq: np.ndarray | None = None
    ts: np.ndarray | None = None
    infector: np.ndarray | None = None
    flags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        seq = np.arange(len(users), dtype=np.int64) if self.seq is None else np.asarray(self.seq, dtype=np.int64)
        ts = seq.copy() if self.ts is None else np.asarray(self.ts, dtype=np.int64)
        inf = np.full(len(users), -1, dtype=np.int64) if self.infector is None else np.asarray(self.infector, np.int64)
        if not (len(users) == len(seq) == len(ts) == len(inf)):
            raise ValueError("trace arrays must have equal length")
        if len(seq) > 1 and np.any(np.diff(seq) <= 0):
            raise ValueError(f"trace {self.meme_id}: seq must be strictly increasing")
        for name, arr in (("users", users), ("seq", seq), ("ts", ts), ("infector", inf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(users) == 0:
            self.flags.setdefault("empty", True)

    def __len__(self) -> int:
        return len(self.users)

    @property
    def T(self) -> int:
        return len(self.users)

    @property
    def empty(self) -> bool:
        return len(self.users) == 0

    def adopters(self) -> np.ndarray:
        """Distinct users in order of their first event."""
        _, first = np.unique(self.users, return_index=True)
        return self.users[np.sort(first)]

    @property
    def U(self) -> int:
        return len(np.unique(self.users))

    def first_event_index(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for i, u in enumerate(self.users.tolist()):
            out.setdefault(u, i)
        return out

    def tweet_counts(self, assignment: np.ndarray, C: int) -> np.ndarray:
        return np.bincount(assignment[self.users], minlength=C)

    def adopter_counts(self, assignment: np.ndarray, C: int) -> np.ndarray:
        return np.bincount(assignment[np.unique(self.users)], minlength=C)

    def take(self, index) -> "MemeTrace":
        index = np.asarray(index)
        return MemeTrace(self.meme_id, self.users[index], self.seq[index], self.ts[index], self.infector[index],
                         dict(self.flags))

    def prefix(self, n: int) -> "MemeTrace":
        return self.take(np.arange(min(n, len(self))))


def require_nonempty(trace: MemeTrace) -> None:
    if trace.empty:
        raise EmptyTraceError(f"empty or sub-minimal trace: {trace.meme_id}")


def traces_from_records(records: Iterable[tuple[str, int, int]]) -> dict[str, MemeTrace]:
    """Group ``(meme_id, ts, user)`` records into traces, stable-sorted by ts."""
    grouped: dict[str, list[tuple[int, int]]] = {}
    for meme, ts, user in records:
        grouped.setdefault(meme, []).append((ts, user))
    out = {}
    for meme in sorted(grouped):
        rows = sorted(grouped[meme], key=lambda r: r[0])
        out[meme] = MemeTrace(meme, [u for _, u in rows], ts=[t for t, _ in rows])
    return out


def write_traces(traces: Iterable[MemeTrace], net: SocialNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            for u, s, t in zip(tr.users.tolist(), tr.seq.tolist(), tr.ts.tolist()):
                fh.write(json.dumps({"meme_id": tr.meme_id, "seq": s, "user": net.ids[u], "ts": t}) + "\n")


def read_traces(path: str | Path, net: SocialNetwork) -> dict[str, MemeTrace]:
    grouped: dict[str, list[tuple[int, int, int]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                seq = int(rec["seq"])
                row = (seq, net.node_of(rec["user"]), int(rec.get("ts", seq)))
                grouped.setdefault(str(rec["meme_id"]), []).append(row)
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestionError(str(exc), lineno) from None
    out = {}
    for meme, rows in grouped.items():
        rows.sort()
        out[meme] = MemeTrace(meme, [r[1] for r in rows], [r[0] for r in rows], [r[2] for r in rows])
    return out
