"""Random forest of unpruned Gini trees.

By default every tree gets its own fixed random subset of ``features_per_tree``
columns and uses it for all splits; ``per_split=True`` redraws the subset at
every node instead.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .cascade import substream

MODEL_VERSION = 1


class TrainingError(ValueError):
    pass


@dataclass
class Tree:
    features: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return _kernels.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_json(self) -> dict:
        return {
            "features": self.features.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["features"], dtype=np.int64),
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


@dataclass
class ForestModel:
    trees: list[Tree]
    n_features: int
    features_per_tree: int
    seed: int
    per_split: bool = False
    metadata: dict = field(default_factory=dict)

    def predict_proba(self, X) -> np.ndarray:
        """Share of trees voting viral."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns")
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict_value(X) > 0.5
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_json(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "n_features": self.n_features,
            "features_per_tree": self.features_per_tree,
            "seed": self.seed,
            "per_split": self.per_split,
            "metadata": self.metadata,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ForestModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        return cls([Tree.from_json(t) for t in d["trees"]], d["n_features"], d["features_per_tree"], d["seed"],
                   d["per_split"], d.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # row order must not influence the bootstrap, so rows are sorted by content first
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys[::-1])


def train_forest(
    X,
    y,
    n_trees: int = 500,
    features_per_tree: int = 4,
    seed: int = 0,
    per_split: bool = False,
    threads: int = 1,
    metadata: dict | None = None,
) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, F) with one label per row")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise TrainingError(f"training set has a single class: {dict(zip(classes.tolist(), counts.tolist()))}")
    if not set(classes.tolist()) <= {0, 1}:
        raise TrainingError("labels must be 0/1")
    order = _canonical_order(X, y)
    X, y = np.ascontiguousarray(X[order]), y[order]
    n, F = X.shape
    k = min(features_per_tree, F)

    def grow(t: int) -> Tree:
        rng = substream(seed, t)
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.int64)
        if per_split:
            feats = np.arange(F, dtype=np.int64)
            mtry, rseed = k, int(rng.integers(0, 2**63))
        else:
            feats = np.sort(rng.choice(F, size=k, replace=False)).astype(np.int64)
            mtry, rseed = 0, 0
        arrays = _kernels.fit_tree(X, y, weights, feats, mtry, rseed)
        return Tree(feats, *arrays)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return ForestModel(trees, F, k, seed, per_split, dict(metadata or {}))
