"""Community concentration and social-reinforcement measures for meme traces.

Entropies use the natural log. Every per-meme measure is computed on the
first ``EARLY_N`` tweets unless a caller passes a different window.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np
from scipy.stats import mannwhitneyu

from .community import Partition
from .graph import InteractionLog, SocialNetwork
from .trace import MemeTrace, require_nonempty

EARLY_N = 50
METRICS = ("r", "g", "Ht", "Hu", "Nt", "Nu")


class Dominance(NamedTuple):
    value: float
    community: int
    tie: bool


def early_stage(trace: MemeTrace, n: int = EARLY_N) -> MemeTrace:
    return trace.prefix(n)


def _check_cover(trace: MemeTrace, part: Partition) -> None:
    require_nonempty(trace)
    if trace.users.max() >= part.n:
        raise ValueError(f"trace {trace.meme_id}: user {int(trace.users.max())} not covered by the partition")


def _dominance(counts: np.ndarray) -> Dominance:
    top = counts.max()
    c = int(np.argmax(counts))
    return Dominance(float(top / counts.sum()), c, bool(np.count_nonzero(counts == top) > 1))


def entropy(counts) -> float:
    """Shannon entropy (nats) of a count vector; zero cells contribute nothing."""
    counts = np.asarray(counts, dtype=np.float64)
    counts = counts[counts > 0]
    if len(counts) == 0:
        raise ValueError("entropy of an empty distribution")
    q = counts / counts.sum()
    return float(max(0.0, -np.sum(q * np.log(q))))


def usage_dominance(trace: MemeTrace, part: Partition) -> Dominance:
    _check_cover(trace, part)
    return _dominance(trace.tweet_counts(part.assignment, part.C))


def adoption_dominance(trace: MemeTrace, part: Partition) -> Dominance:
    _check_cover(trace, part)
    return _dominance(trace.adopter_counts(part.assignment, part.C))


def usage_entropy(trace: MemeTrace, part: Partition) -> float:
    _check_cover(trace, part)
    return entropy(trace.tweet_counts(part.assignment, part.C))


def adoption_entropy(trace: MemeTrace, part: Partition) -> float:
    _check_cover(trace, part)
    return entropy(trace.adopter_counts(part.assignment, part.C))


def exposures_per_adopter(trace: MemeTrace, net: SocialNetwork) -> dict[int, tuple[int, int]]:
    """``adopter -> (neighbor tweets, distinct neighbor authors)`` seen strictly before its first tweet."""
    require_nonempty(trace)
    prior: dict[int, int] = {}
    out: dict[int, tuple[int, int]] = {}
    for u in trace.users.tolist():
        if u not in out:
            nb = net.neighbors(u)
            if len(prior) < len(nb):
                hits = [c for v, c in prior.items() if net.has_edge(u, v)]
            else:
                hits = [prior[v] for v in nb.tolist() if v in prior]
            out[u] = (sum(hits), len(hits))
        prior[u] = prior.get(u, 0) + 1
    return out


def average_exposures(trace: MemeTrace, net: SocialNetwork, mode: str = "tweets") -> float:
    if mode not in ("tweets", "users"):
        raise ValueError(f"mode must be 'tweets' or 'users', not {mode!r}")
    col = 0 if mode == "tweets" else 1
    per = exposures_per_adopter(trace, net)
    return sum(v[col] for v in per.values()) / len(per)


def concentration(trace: MemeTrace, net: SocialNetwork, part: Partition, n_early: int | None = EARLY_N) -> dict:
    """Raw r, g, Ht, Hu, Nt, Nu (plus T, U, tie flags) on the early window."""
    tr = trace if n_early is None else early_stage(trace, n_early)
    _check_cover(tr, part)
    tc = tr.tweet_counts(part.assignment, part.C)
    ac = tr.adopter_counts(part.assignment, part.C)
    ud, ad = _dominance(tc), _dominance(ac)
    per = exposures_per_adopter(tr, net)
    k = len(per)
    return {
        "T": tr.T,
        "U": tr.U,
        "C_touched": int(np.count_nonzero(tc)),
        "r": ud.value,
        "r_community": ud.community,
        "r_tie": ud.tie,
        "g": ad.value,
        "g_community": ad.community,
        "g_tie": ad.tie,
        "Ht": entropy(tc),
        "Hu": entropy(ac),
        "Nt": sum(v[0] for v in per.values()) / k,
        "Nu": sum(v[1] for v in per.values()) / k,
    }


@dataclass
class ConcentrationReport:
    meme_id: str
    T: int
    U: int
    r: float
    g: float
    Ht: float
    Hu: float
    Nt: float
    Nu: float
    r_rel: float | None = None
    g_rel: float | None = None
    Ht_rel: float | None = None
    Hu_rel: float | None = None
    Nt_rel: float | None = None
    Nu_rel: float | None = None
    r_tie: bool = False
    g_tie: bool = False
    T_total: int | None = None
    U_total: int | None = None
    missing: list[str] = field(default_factory=list)

    def row(self) -> dict:
        d = asdict(self)
        d["missing"] = ";".join(self.missing)
        return d


def _mean_of(summary: Mapping, metric: str) -> float | None:
    entry = summary.get(metric) if summary else None
    if entry is None:
        return None
    return entry["mean"] if isinstance(entry, Mapping) else float(entry)


def relative_report(
    trace: MemeTrace,
    net: SocialNetwork,
    part: Partition,
    m1_tweets: Mapping,
    m1_users: Mapping | None = None,
    n_early: int = EARLY_N,
) -> ConcentrationReport:
    """Raw measures and their ratios to the random-sampling ensemble means.

    ``m1_tweets`` supplies the denominators for r, Ht, Nt and ``m1_users``
    those for g, Hu, Nu (falls back to ``m1_tweets``). Each maps metric name to
    either a float or ``{"mean": ...}``. A zero or absent denominator leaves the
    ratio as ``None`` and records the metric in ``missing``.
    """
    raw = concentration(trace, net, part, n_early)
    rep = ConcentrationReport(
        trace.meme_id, raw["T"], raw["U"], raw["r"], raw["g"], raw["Ht"], raw["Hu"], raw["Nt"], raw["Nu"],
        r_tie=raw["r_tie"], g_tie=raw["g_tie"], T_total=trace.T, U_total=trace.U,
    )
    m1_users = m1_users if m1_users is not None else m1_tweets
    for name, base in (("r", m1_tweets), ("Ht", m1_tweets), ("Nt", m1_tweets),
                       ("g", m1_users), ("Hu", m1_users), ("Nu", m1_users)):
        denom = _mean_of(base, name)
        if denom is None or denom == 0 or not math.isfinite(denom):
            rep.missing.append(name + "_rel")
            continue
        setattr(rep, name + "_rel", raw[name] / denom)
    return rep


REPORT_FIELDS = [
    "meme_id", "T", "U", "T_total", "U_total", "r", "g", "Ht", "Hu", "Nt", "Nu",
    "r_rel", "g_rel", "Ht_rel", "Hu_rel", "Nt_rel", "Nu_rel", "r_tie", "g_tie", "missing",
]


def write_reports(reports: Iterable[ConcentrationReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            row = rep.row()
            w.writerow({k: ("" if row[k] is None else row[k]) for k in REPORT_FIELDS})


@dataclass
class CommunityFlowReport:
    w_intra: np.ndarray  # per community, NaN = no such edges
    w_inter: np.ndarray
    f_intra: dict[int, float]
    f_inter: dict[int, float]
    edge_weights: dict[tuple[int, int], int]
    non_adjacent: int
    p_weight: float
    p_focus: float

    def summary(self) -> dict:
        fi = np.array(list(self.f_intra.values()))
        fo = np.array(list(self.f_inter.values()))
        return {
            "w_intra_mean": float(np.nanmean(self.w_intra)) if np.any(~np.isnan(self.w_intra)) else None,
            "w_inter_mean": float(np.nanmean(self.w_inter)) if np.any(~np.isnan(self.w_inter)) else None,
            "f_intra_mean": float(fi.mean()) if len(fi) else None,
            "f_inter_mean": float(fo.mean()) if len(fo) else None,
            "n_users": len(fi),
            "n_communities": len(self.w_intra),
            "non_adjacent_events": self.non_adjacent,
            "p_weight": self.p_weight,
            "p_focus": self.p_focus,
        }


def _mw_p(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = a[~np.isnan(a)], b[~np.isnan(b)]
    if len(a) == 0 or len(b) == 0:
        return float("nan")
    return float(mannwhitneyu(a, b, alternative="two-sided").pvalue)


def community_flow(
    ilog: InteractionLog, net: SocialNetwork, part: Partition, kind: str | None = None
) -> CommunityFlowReport:
    """Edge weights (events per undirected edge) and user focus split by community.

    Events between non-adjacent users are counted in ``non_adjacent`` and left
    out of both weights and focus. Mean weights include zero-weight edges.
    """
    a = part.assignment
    weights: dict[tuple[int, int], int] = {}
    intra_by_user: dict[int, int] = {}
    total_by_user: dict[int, int] = {}
    non_adjacent = 0
    for e in ilog.filter(kind):
        if not net.has_edge(e.actor, e.target):
            non_adjacent += 1
            continue
        key = (min(e.actor, e.target), max(e.actor, e.target))
        weights[key] = weights.get(key, 0) + 1
        total_by_user[e.actor] = total_by_user.get(e.actor, 0) + 1
        if a[e.actor] == a[e.target]:
            intra_by_user[e.actor] = intra_by_user.get(e.actor, 0) + 1

    edges = net.edge_array()
    w = np.array([weights.get((int(u), int(v)), 0) for u, v in edges], dtype=np.float64)
    cu, cv = a[edges[:, 0]], a[edges[:, 1]]
    same = cu == cv
    C = part.C
    intra_sum = np.bincount(cu[same], weights=w[same], minlength=C)
    intra_n = np.bincount(cu[same], minlength=C)
    cross = ~same
    inter_sum = np.bincount(cu[cross], weights=w[cross], minlength=C) + np.bincount(cv[cross], weights=w[cross], minlength=C)
    inter_n = np.bincount(cu[cross], minlength=C) + np.bincount(cv[cross], minlength=C)
    with np.errstate(invalid="ignore", divide="ignore"):
        w_intra = np.where(intra_n > 0, intra_sum / np.maximum(intra_n, 1), np.nan)
        w_inter = np.where(inter_n > 0, inter_sum / np.maximum(inter_n, 1), np.nan)

    f_intra = {u: intra_by_user.get(u, 0) / t for u, t in sorted(total_by_user.items())}
    f_inter = {u: 1.0 - f for u, f in f_intra.items()}
    return CommunityFlowReport(
        w_intra, w_inter, f_intra, f_inter, weights, non_adjacent,
        _mw_p(w_intra, w_inter), _mw_p(list(f_intra.values()), list(f_inter.values())),
    )


def new_meme_filter(traces, history: Mapping[str, int], threshold: int = 20):
    """Keep memes with fewer than ``threshold`` tweets in the prior period (absent = 0)."""
    if isinstance(traces, Mapping):
        return {m: tr for m, tr in traces.items() if history.get(m, 0) < threshold}
    return [tr for tr in traces if history.get(tr.meme_id, 0) < threshold]


def binned_curve(popularity, values, base: float = 2.0) -> list[dict]:
    """Logarithmic popularity bins ``[base^k, base^(k+1))`` with mean/stderr of ``values``."""
    pop = np.asarray(popularity, dtype=np.float64)
    val = np.asarray([np.nan if v is None else v for v in values], dtype=np.float64)
    ok = (pop >= 1) & ~np.isnan(val)
    pop, val = pop[ok], val[ok]
    if len(pop) == 0:
        return []
    k = np.floor(np.log(pop) / np.log(base) + 1e-12).astype(int)
    rows = []
    for b in range(int(k.min()), int(k.max()) + 1):
        sel = val[k == b]
        if len(sel) == 0:
            continue
        se = float(sel.std(ddof=1) / np.sqrt(len(sel))) if len(sel) > 1 else 0.0
        rows.append({"bin_lo": base**b, "bin_hi": base ** (b + 1), "mean": float(sel.mean()), "stderr": se, "n": len(sel)})
    return rows


def write_curve(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["bin_lo", "bin_hi", "mean", "stderr", "n"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
