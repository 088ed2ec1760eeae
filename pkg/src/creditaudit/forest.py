"""Bagged CART forests for classification and regression.

Each tree is grown on a bootstrap sample of size n (drawn with replacement)
using a per-tree seed mixed from the forest seed and the tree index, so the
fitted model is a pure function of (data, target, config) no matter how many
worker threads build trees.  Node splitting searches mtry features sampled
without replacement per node; the best split maximizes impurity decrease
(Gini for classification, variance for regression) with deterministic ties:
lowest feature index, then lowest threshold.  Nodes stop at purity, at the
minimum node size, at the optional depth bound, or when no candidate split
decreases impurity.

Variable importance is mean decrease in impurity: every split node adds its
impurity decrease, weighted by the fraction of the tree's bootstrap rows
that reached the node, to its feature's score; scores are summed over all
trees and normalized to sum to 1.

Out-of-bag error is computed at fit time from rows each tree's bootstrap
missed and stored in the model metadata as a diagnostic.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, SchemaError
from .rng import mix_seed
from .tabular import ColumnKind, DataTable, FeatureMatrix

__all__ = [
    "Task",
    "ForestConfig",
    "ForestModel",
    "fit",
    "predict",
    "variable_importance",
    "save_model",
    "load_model",
]

_FORMAT = "creditaudit-forest"
_VERSION = 1


class Task(enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class ForestConfig:
    task: Task
    n_trees: int = 750
    mtry: int | None = None  # default: floor(sqrt(p)) cls, max(p//3, 1) reg
    min_node_size: int | None = None  # default: 1 cls, 5 reg
    max_depth: int | None = None  # None: unbounded
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError("mtry must be >= 1")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ConfigError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")

    def resolved(self, p: int) -> "ForestConfig":
        """Fill task-dependent defaults for a p-feature problem."""
        mtry = self.mtry
        if mtry is None:
            if self.task is Task.CLASSIFICATION:
                mtry = max(int(np.sqrt(p)), 1)
            else:
                mtry = max(p // 3, 1)
        if mtry > p:
            raise ConfigError(f"mtry={mtry} exceeds feature count {p}")
        min_size = self.min_node_size
        if min_size is None:
            min_size = 1 if self.task is Task.CLASSIFICATION else 5
        return ForestConfig(
            task=self.task,
            n_trees=self.n_trees,
            mtry=mtry,
            min_node_size=min_size,
            max_depth=self.max_depth,
            seed=self.seed,
        )


@dataclass(frozen=True)
class TreeArrays:
    """All trees of a forest, concatenated; tree t spans
    offsets[t]:offsets[t+1].  feat < 0 marks a leaf.  counts is per-node
    class counts (classification); node_mean per-node target mean
    (regression); node_n bootstrap rows reaching the node."""

    offsets: np.ndarray
    feat: np.ndarray
    thresh: np.ndarray
    is_cat: np.ndarray
    left: np.ndarray
    right: np.ndarray
    dec: np.ndarray
    node_n: np.ndarray
    counts: np.ndarray | None = None
    node_mean: np.ndarray | None = None
    leaf_label: np.ndarray | None = None


@dataclass(frozen=True)
class ForestModel:
    config: ForestConfig  # resolved: mtry and min_node_size are concrete
    target: str
    target_levels: tuple[str, ...]  # empty for regression
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]  # "numeric" | "categorical" per feature
    feature_levels: tuple[tuple[str, ...], ...]
    trees: TreeArrays
    raw_importance: np.ndarray
    metadata: dict

    @property
    def task(self) -> Task:
        return self.config.task


def _check_target(train: DataTable, target: str, task: Task):
    col = train.column(target)
    if task is Task.CLASSIFICATION:
        if col.kind is not ColumnKind.CATEGORICAL:
            raise DataError(f"classification target {target!r} is not categorical")
        present = np.unique(col.values)
        if len(present) < 2:
            raise DataError(f"classification target {target!r} has a single level")
    else:
        if col.kind is not ColumnKind.NUMERIC:
            raise DataError(f"regression target {target!r} is not numeric")
    return col


def fit(
    train: DataTable,
    target: str,
    config: ForestConfig,
    exclude: tuple[str, ...] = (),
    n_jobs: int = 1,
    extra_metadata: dict | None = None,
) -> ForestModel:
    """Train a forest on every column except the target and ``exclude``.

    ``n_jobs`` only controls how many threads build trees; per-tree seeds
    make the result identical for any value.
    """
    if train.n_rows < 2:
        raise DataError("need at least 2 training rows")
    tcol = _check_target(train, target, config.task)
    fm: FeatureMatrix = train.feature_matrix(exclude=(target,) + tuple(exclude))
    p = len(fm.names)
    cfg = config.resolved(p)
    cls = cfg.task is Task.CLASSIFICATION
    y = tcol.values.astype(np.float64)
    n_classes = len(tcol.levels) if cls else 0
    n = train.n_rows
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth
    seeds = [np.uint64(mix_seed(cfg.seed, t)) for t in range(cfg.n_trees)]

    def build(t: int):
        if cls:
            out = _kernels.build_tree_cls(
                fm.X, fm.kinds, y, n_classes, cfg.mtry, cfg.min_node_size,
                max_depth, seeds[t],
            )
            n_nodes, feat, thresh, is_cat, left, right, dec, counts, inbag = out
            return (
                feat[:n_nodes].copy(), thresh[:n_nodes].copy(),
                is_cat[:n_nodes].copy(), left[:n_nodes].copy(),
                right[:n_nodes].copy(), dec[:n_nodes].copy(),
                counts[:n_nodes].copy(), inbag,
            )
        out = _kernels.build_tree_reg(
            fm.X, fm.kinds, y, cfg.mtry, cfg.min_node_size, max_depth, seeds[t],
        )
        n_nodes, feat, thresh, is_cat, left, right, dec, node_mean, node_n, inbag = out
        return (
            feat[:n_nodes].copy(), thresh[:n_nodes].copy(),
            is_cat[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), dec[:n_nodes].copy(),
            node_mean[:n_nodes].copy(), node_n[:n_nodes].copy(), inbag,
        )

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            built = list(pool.map(build, range(cfg.n_trees)))
    else:
        built = [build(t) for t in range(cfg.n_trees)]

    sizes = np.array([len(b[0]) for b in built], dtype=np.int64)
    offsets = np.zeros(cfg.n_trees + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    feat = np.concatenate([b[0] for b in built])
    thresh = np.concatenate([b[1] for b in built])
    is_cat = np.concatenate([b[2] for b in built])
    left = np.concatenate([b[3] for b in built])
    right = np.concatenate([b[4] for b in built])
    dec = np.concatenate([b[5] for b in built])
    inbag = np.stack([b[-1] for b in built])
    if cls:
        counts = np.concatenate([b[6] for b in built])
        node_n = counts.sum(axis=1).astype(np.int32)
        leaf_label = counts.argmax(axis=1).astype(np.int32)  # ties: lowest level
        trees = TreeArrays(
            offsets=offsets, feat=feat, thresh=thresh, is_cat=is_cat,
            left=left, right=right, dec=dec, node_n=node_n,
            counts=counts, leaf_label=leaf_label,
        )
    else:
        node_mean = np.concatenate([b[6] for b in built])
        node_n = np.concatenate([b[7] for b in built])
        trees = TreeArrays(
            offsets=offsets, feat=feat, thresh=thresh, is_cat=is_cat,
            left=left, right=right, dec=dec, node_n=node_n,
            node_mean=node_mean,
        )

    raw = np.zeros(p, dtype=np.float64)
    split = feat >= 0
    np.add.at(raw, feat[split], (node_n[split] / n) * dec[split])

    oob = _oob_error(trees, fm.X, tcol.values, inbag, n_classes, cls)
    metadata = {
        "dataset_hash": train.content_hash(),
        "created": datetime.now(timezone.utc).isoformat(),
        "n_train": n,
        "oob_error": oob,
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return ForestModel(
        config=cfg,
        target=target,
        target_levels=tcol.levels if cls else (),
        feature_names=fm.names,
        feature_kinds=tuple(
            "numeric" if k == 0 else "categorical" for k in fm.kinds
        ),
        feature_levels=fm.levels,
        trees=trees,
        raw_importance=raw,
        metadata=metadata,
    )


def _oob_error(trees, X, y_codes, inbag, n_classes, cls) -> float | None:
    """Classification error rate / regression MSE over rows with at least
    one out-of-bag tree; None when no row has one."""
    if cls:
        votes = _kernels.oob_votes(
            X, trees.offsets, trees.feat, trees.thresh, trees.is_cat,
            trees.left, trees.right, trees.leaf_label, inbag, n_classes,
        )
        seen = votes.sum(axis=1) > 0
        if not seen.any():
            return None
        pred = votes[seen].argmax(axis=1)
        return float((pred != y_codes[seen]).mean())
    sums, hits = _kernels.oob_means(
        X, trees.offsets, trees.feat, trees.thresh, trees.is_cat,
        trees.left, trees.right, trees.node_mean, inbag,
    )
    seen = hits > 0
    if not seen.any():
        return None
    d = sums[seen] / hits[seen] - y_codes[seen]
    return float(np.mean(d * d))


def _encode_features(model: ForestModel, table: DataTable) -> np.ndarray:
    """Feature matrix in the model's column order; categorical values are
    remapped by level string and unseen levels become -1 (always routed to
    the 'not equal' side of splits)."""
    X = np.empty((table.n_rows, len(model.feature_names)), dtype=np.float64)
    for j, name in enumerate(model.feature_names):
        try:
            col = table.column(name)
        except SchemaError:
            raise SchemaError(f"prediction input lacks feature column {name!r}")
        want_cat = model.feature_kinds[j] == "categorical"
        if want_cat != (col.kind is ColumnKind.CATEGORICAL):
            raise SchemaError(f"feature column {name!r} has the wrong kind")
        if want_cat:
            lut = {level: i for i, level in enumerate(model.feature_levels[j])}
            remap = np.array(
                [lut.get(level, -1) for level in col.levels], dtype=np.float64
            )
            X[:, j] = remap[col.values]
        else:
            X[:, j] = col.values
    return X


def predict(model: ForestModel, table: DataTable):
    """Classification: list of predicted level strings (plurality vote over
    trees, per-tree vote = leaf majority, all ties to the first-interned
    level).  Regression: float64 array of per-row means of leaf means."""
    X = _encode_features(model, table)
    t = model.trees
    if model.task is Task.CLASSIFICATION:
        votes = _kernels.forest_votes(
            X, t.offsets, t.feat, t.thresh, t.is_cat, t.left, t.right,
            t.leaf_label, len(model.target_levels),
        )
        codes = votes.argmax(axis=1)
        return [model.target_levels[c] for c in codes]
    return _kernels.forest_means(
        X, t.offsets, t.feat, t.thresh, t.is_cat, t.left, t.right, t.node_mean
    )


def variable_importance(model: ForestModel) -> list[tuple[str, float]]:
    """(feature, importance) sorted descending, importances summing to 1
    (all zeros for a forest with no splits); ties keep feature order."""
    raw = model.raw_importance
    total = raw.sum()
    norm = raw / total if total > 0 else np.zeros_like(raw)
    order = sorted(range(len(norm)), key=lambda j: (-norm[j], j))
    return [(model.feature_names[j], float(norm[j])) for j in order]


def _tree_to_dict(t: TreeArrays, base: int, end: int, cls: bool) -> dict:
    # children ids always exceed the parent's, so one reverse pass suffices
    n = end - base
    nodes: list[dict | None] = [None] * n
    for i in range(n - 1, -1, -1):
        g = base + i
        if t.feat[g] < 0:
            if cls:
                nodes[i] = {"n": int(t.node_n[g]), "counts": t.counts[g].tolist()}
            else:
                nodes[i] = {"n": int(t.node_n[g]), "mean": float(t.node_mean[g])}
        else:
            nodes[i] = {
                "f": int(t.feat[g]),
                "cat": bool(t.is_cat[g]),
                "t": float(t.thresh[g]),
                "dec": float(t.dec[g]),
                "n": int(t.node_n[g]),
                "l": nodes[int(t.left[g])],
                "r": nodes[int(t.right[g])],
            }
    return nodes[0]


def model_to_dict(model: ForestModel) -> dict:
    cls = model.task is Task.CLASSIFICATION
    t = model.trees
    trees = [
        _tree_to_dict(t, int(t.offsets[k]), int(t.offsets[k + 1]), cls)
        for k in range(len(t.offsets) - 1)
    ]
    features = []
    for j, name in enumerate(model.feature_names):
        entry: dict = {"name": name, "kind": model.feature_kinds[j]}
        if model.feature_kinds[j] == "categorical":
            entry["levels"] = list(model.feature_levels[j])
        features.append(entry)
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "task": model.task.value,
        "config": {
            "n_trees": model.config.n_trees,
            "mtry": model.config.mtry,
            "min_node_size": model.config.min_node_size,
            "max_depth": model.config.max_depth,
            "seed": model.config.seed,
        },
        "target": model.target,
        "target_levels": list(model.target_levels),
        "features": features,
        "metadata": model.metadata,
        "importance_raw": model.raw_importance.tolist(),
        "trees": trees,
    }


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def _dict_to_arrays(roots: list[dict], cls: bool, n_classes: int) -> TreeArrays:
    offsets = [0]
    feat, thresh, is_cat, left, right, dec, node_n = [], [], [], [], [], [], []
    counts, node_mean = [], []

    for root in roots:
        base = offsets[-1]
        # pre-order walk, left before right, parents before children
        stack = [(root, None, None)]  # (node, parent slot index, side)
        while stack:
            nd, parent, side = stack.pop()
            my_id = len(feat) - base
            if parent is not None:
                (left if side == "l" else right)[base + parent] = my_id
            if "f" in nd:
                feat.append(nd["f"])
                thresh.append(nd["t"])
                is_cat.append(1 if nd["cat"] else 0)
                dec.append(nd["dec"])
                node_n.append(nd["n"])
                counts.append([0] * n_classes)
                node_mean.append(0.0)
                left.append(-1)
                right.append(-1)
                stack.append((nd["r"], my_id, "r"))
                stack.append((nd["l"], my_id, "l"))
            else:
                feat.append(-1)
                thresh.append(0.0)
                is_cat.append(0)
                dec.append(0.0)
                node_n.append(nd["n"])
                counts.append(nd["counts"] if cls else [0] * n_classes)
                node_mean.append(0.0 if cls else nd["mean"])
                left.append(-1)
                right.append(-1)
        offsets.append(len(feat))

    counts_arr = np.array(counts, dtype=np.int32) if cls else None
    return TreeArrays(
        offsets=np.array(offsets, dtype=np.int64),
        feat=np.array(feat, dtype=np.int32),
        thresh=np.array(thresh, dtype=np.float64),
        is_cat=np.array(is_cat, dtype=np.int8),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        dec=np.array(dec, dtype=np.float64),
        node_n=np.array(node_n, dtype=np.int32),
        counts=counts_arr,
        node_mean=None if cls else np.array(node_mean, dtype=np.float64),
        leaf_label=counts_arr.argmax(axis=1).astype(np.int32) if cls else None,
    )


def load_model(path: str | Path) -> ForestModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != _FORMAT:
        raise DataError(f"{path}: not a forest model file")
    if doc.get("version") != _VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')}")
    task = Task(doc["task"])
    cls = task is Task.CLASSIFICATION
    cfg = ForestConfig(task=task, **doc["config"])
    n_classes = len(doc["target_levels"])
    trees = _dict_to_arrays(doc["trees"], cls, n_classes)
    return ForestModel(
        config=cfg,
        target=doc["target"],
        target_levels=tuple(doc["target_levels"]),
        feature_names=tuple(f["name"] for f in doc["features"]),
        feature_kinds=tuple(f["kind"] for f in doc["features"]),
        feature_levels=tuple(
            tuple(f.get("levels", ())) for f in doc["features"]
        ),
        trees=trees,
        raw_importance=np.array(doc["importance_raw"], dtype=np.float64),
        metadata=doc["metadata"],
    )
