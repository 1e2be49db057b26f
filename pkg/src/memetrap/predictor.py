"""Early-stage features, percentile virality labels and cross-validated evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cascade import substream
from .community import Partition
from .forest import TrainingError, train_forest
from .graph import Interaction, InteractionLog, SocialNetwork
from .metrics import EARLY_N, early_stage, entropy
from .trace import MemeTrace, require_nonempty

FEATURE_NAMES = (
    "n_early_adopters",
    "n_uninfected_neighbors",
    "n_infected_communities",
    "usage_entropy",
    "adoption_entropy",
    "frac_intra_interactions",
    "frac_intra_present",
)
BLIND_COLUMNS = (0, 1)
THETAS = (70, 80, 90)
LABEL_MODES = ("tweets", "users")
METHODS = ("community", "random_guess", "community_blind")
MISSING_SENTINEL = -1.0


@dataclass
class FeatureVector:
    n_early_adopters: int
    n_uninfected_neighbors: int
    n_infected_communities: int
    usage_entropy: float
    adoption_entropy: float
    frac_intra_interactions: float | None
    uncovered_adopters: int = 0

    def as_row(self) -> list[float]:
        present = self.frac_intra_interactions is not None
        return [
            float(self.n_early_adopters),
            float(self.n_uninfected_neighbors),
            float(self.n_infected_communities),
            float(self.usage_entropy),
            float(self.adoption_entropy),
            float(self.frac_intra_interactions) if present else MISSING_SENTINEL,
            1.0 if present else 0.0,
        ]


def extract_features(
    trace: MemeTrace,
    net: SocialNetwork,
    part: Partition,
    interactions: Sequence[Interaction] | InteractionLog | None = None,
    n: int = EARLY_N,
) -> FeatureVector:
    """Features from the first ``n`` tweets of ``trace``.

    ``interactions`` are the interactions tagged with this meme (a full log is
    filtered by meme id). Only those made by an early adopter no later than the
    last early tweet count toward the same-community fraction.
    """
    require_nonempty(trace)
    early = early_stage(trace, n)
    adopters = np.unique(early.users)
    covered = adopters[adopters < net.n]
    uncovered = len(adopters) - len(covered)

    if len(covered):
        nbrs = np.unique(np.concatenate([net.neighbors(int(u)) for u in covered]))
        n_uninf = int(len(np.setdiff1d(nbrs, adopters, assume_unique=True)))
    else:
        n_uninf = 0
    a = part.assignment
    tc = np.bincount(a[covered], minlength=part.C) if len(covered) else np.zeros(1)
    tweet_c = np.bincount(a[early.users[early.users < net.n]], minlength=part.C)
    comms = int(np.count_nonzero(tc))

    if isinstance(interactions, InteractionLog):
        interactions = [e for e in interactions if trace.meme_id in e.memes]
    frac = None
    if interactions:
        cutoff = int(early.ts[-1])
        early_set = set(adopters.tolist())
        same = total = 0
        for e in interactions:
            if e.ts > cutoff or e.actor not in early_set or e.actor >= part.n or e.target >= part.n:
                continue
            total += 1
            same += a[e.actor] == a[e.target]
        if total:
            frac = same / total
    return FeatureVector(
        n_early_adopters=len(adopters),
        n_uninfected_neighbors=n_uninf,
        n_infected_communities=comms,
        usage_entropy=entropy(tweet_c) if tweet_c.sum() else 0.0,
        adoption_entropy=entropy(tc) if tc.sum() else 0.0,
        frac_intra_interactions=frac,
        uncovered_adopters=uncovered,
    )


def feature_matrix(vectors: Sequence[FeatureVector]) -> np.ndarray:
    return np.asarray([v.as_row() for v in vectors], dtype=np.float64).reshape(-1, len(FEATURE_NAMES))


def write_features(meme_ids: Sequence[str], vectors: Sequence[FeatureVector], path: str | Path,
                   extra: Mapping[str, Sequence] | None = None) -> None:
    extra = extra or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["meme_id", *FEATURE_NAMES, *extra])
        for i, (m, v) in enumerate(zip(meme_ids, vectors)):
            w.writerow([m, *[repr(float(x)) if isinstance(x, float) else x for x in v.as_row()], *[col[i] for col in extra.values()]])


def read_features(path: str | Path) -> tuple[list[str], np.ndarray, dict[str, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[1 : 1 + len(FEATURE_NAMES)]) != FEATURE_NAMES or header[0] != "meme_id":
            raise ValueError(f"{path}: unexpected features header {header}")
        extra_names = header[1 + len(FEATURE_NAMES) :]
        ids, rows, extra = [], [], {k: [] for k in extra_names}
        for row in reader:
            ids.append(row[0])
            rows.append([float(x) for x in row[1 : 1 + len(FEATURE_NAMES)]])
            for k, x in zip(extra_names, row[1 + len(FEATURE_NAMES) :]):
                extra[k].append(x)
    return ids, np.asarray(rows, dtype=np.float64).reshape(-1, len(FEATURE_NAMES)), extra


def nearest_rank(values, theta: float) -> float:
    """Nearest-rank ``theta``-th percentile."""
    v = np.sort(np.asarray(values))
    rank = max(1, math.ceil(theta / 100.0 * len(v) - 1e-9))
    return v[rank - 1]


def label_viral(popularity, theta: float) -> np.ndarray:
    """1 where popularity strictly exceeds the nearest-rank ``theta`` percentile."""
    pop = np.asarray(popularity)
    if len(pop) < 10:
        raise ValueError(f"need at least 10 memes to label by percentile, got {len(pop)}")
    if not 0 <= theta <= 100:
        raise ValueError("theta must lie in [0, 100]")
    return (pop > nearest_rank(pop, theta)).astype(np.int64)


def stratified_folds(y, folds: int, rng) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin so fold sizes differ by at most one."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < folds):
        raise ValueError(f"cannot stratify into {folds} folds; class counts {dict(zip(classes.tolist(), counts.tolist()))}")
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in classes:
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        fold[idx] = (offset + np.arange(len(idx))) % folds
        offset = (offset + len(idx)) % folds
    return fold


def precision_recall(y_true, y_pred) -> tuple[float | None, float | None]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    pp = int(np.sum(y_pred == 1))
    ap = int(np.sum(y_true == 1))
    return (tp / pp if pp else None, tp / ap if ap else None)


@dataclass
class CVResult:
    precision: float | None
    recall: float | None
    fold_precision: list[float | None]
    fold_recall: list[float | None]
    predictions: np.ndarray = field(repr=False)

    def _macro(self, vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "precision_macro": self._macro(self.fold_precision),
            "recall_macro": self._macro(self.fold_recall),
            "fold_precision": self.fold_precision,
            "fold_recall": self.fold_recall,
        }


def cross_validate(
    X,
    y,
    folds: int = 10,
    seed: int = 0,
    n_trees: int = 500,
    features_per_tree: int = 4,
    columns: Sequence[int] | None = None,
    per_split: bool = False,
    threads: int = 1,
) -> CVResult:
    """Stratified k-fold CV of the forest; pooled and per-fold precision/recall."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if columns is not None:
        X = X[:, list(columns)]
    fold = stratified_folds(y, folds, substream(seed, 0))
    pred = np.zeros(len(y), dtype=np.int64)
    fp, fr = [], []
    for k in range(folds):
        test = fold == k
        model = train_forest(X[~test], y[~test], n_trees, features_per_tree, seed=seed * 1000 + k + 1,
                             per_split=per_split, threads=threads)
        pred[test] = model.predict(X[test])
        p, r = precision_recall(y[test], pred[test])
        fp.append(p)
        fr.append(r)
    p, r = precision_recall(y, pred)
    return CVResult(p, r, fp, fr, pred)


def baseline_community_blind(X, y, folds: int = 10, seed: int = 0, **kw) -> CVResult:
    """Same pipeline restricted to the two popularity features."""
    X = np.asarray(X, dtype=np.float64)
    return cross_validate(X, y, folds, seed, columns=BLIND_COLUMNS, **kw)


def baseline_random_guess(y, seed: int = 0, trials: int = 1000) -> dict:
    """Pick ``n_viral`` memes uniformly at random, ``trials`` times."""
    y = np.asarray(y, dtype=np.int64)
    n, k = len(y), int(y.sum())
    if k < 1:
        raise ValueError("random guess needs at least one viral meme")
    rng = substream(seed, 0)
    hits = np.array([int(y[rng.choice(n, size=k, replace=False)].sum()) for _ in range(trials)])
    prec = hits / k
    return {
        "precision": float(prec.mean()),
        "recall": float(prec.mean()),
        "precision_std": float(prec.std(ddof=1)) if trials > 1 else 0.0,
        "ci95": [float(np.percentile(prec, 2.5)), float(np.percentile(prec, 97.5))],
        "expected": k / n,
        "n_viral": k,
        "n": n,
        "trials": trials,
    }


@dataclass
class EvalReport:
    """Precision/recall per (theta, label mode, method)."""

    grid: dict = field(default_factory=dict)

    def add(self, theta: int, mode: str, method: str, entry: dict) -> None:
        self.grid.setdefault(str(theta), {}).setdefault(mode, {})[method] = entry

    def get(self, theta: int, mode: str, method: str) -> dict:
        return self.grid[str(theta)][mode][method]

    def rows(self) -> list[dict]:
        out = []
        for theta in sorted(self.grid, key=int):
            for mode in LABEL_MODES:
                for method in METHODS:
                    e = self.grid[theta].get(mode, {}).get(method)
                    if e is None:
                        continue
                    out.append({
                        "theta": int(theta), "label_mode": mode, "method": method,
                        "precision": e.get("precision"), "recall": e.get("recall"),
                        "precision_macro": e.get("precision_macro"), "recall_macro": e.get("recall_macro"),
                        "n_viral": e.get("n_viral"), "n": e.get("n"),
                    })
        return out

    def to_json(self) -> dict:
        return {"grid": self.grid}


EVAL_FIELDS = ["theta", "label_mode", "method", "precision", "recall", "precision_macro", "recall_macro", "n_viral", "n"]


def write_eval_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in report.rows():
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})


def evaluate(
    X,
    popularity: Mapping[str, Sequence[int]],
    thetas: Sequence[int] = THETAS,
    modes: Sequence[str] = LABEL_MODES,
    folds: int = 10,
    seed: int = 0,
    n_trees: int = 500,
    features_per_tree: int = 4,
    trials: int = 1000,
    threads: int = 1,
) -> EvalReport:
    """Full grid: community model, random guess and community-blind model per theta and mode.

    ``popularity`` maps ``"tweets"``/``"users"`` to final counts aligned with ``X``.
    """
    report = EvalReport()
    for theta in thetas:
        for mode in modes:
            y = label_viral(popularity[mode], theta)
            extra = {"n_viral": int(y.sum()), "n": int(len(y))}
            try:
                full = cross_validate(X, y, folds, seed, n_trees, features_per_tree, threads=threads)
                blind = baseline_community_blind(X, y, folds, seed, n_trees=n_trees,
                                                 features_per_tree=features_per_tree, threads=threads)
            except (TrainingError, ValueError) as exc:
                for method in METHODS:
                    report.add(theta, mode, method, {"error": str(exc), **extra})
                continue
            report.add(theta, mode, "community", {**full.to_json(), **extra})
            report.add(theta, mode, "community_blind", {**blind.to_json(), **extra})
            report.add(theta, mode, "random_guess", {**baseline_random_guess(y, seed, trials), **extra})
    return report
