"""Train/test splitting and SMOTE synthetic oversampling.

Both operations are pure functions of (table, config): all randomness comes
from the documented generator in :mod:`creditaudit.rng`, seeded from the
config, so a given seed always yields the same rows on any machine.

SMOTE synthesizes rows for under-represented classes of a categorical
column.  Each synthetic row starts from a base row of the class (bases are
assigned round-robin in original row order) and one of its k nearest
same-class neighbors, where distance is Euclidean over z-score standardized
numeric columns (standardized against the whole input table; zero-variance
columns contribute nothing; categorical columns do not enter the distance).
Numeric fields are interpolated as x + u * (z - x) with u uniform in [0, 1);
categorical fields follow the configured policy; the class column is set to
the level being synthesized.  Synthetic row i draws from its own random
stream derived from (seed, i), so output does not depend on evaluation
order; each row consumes one uniform (u) and then one neighbor draw.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .rng import Xoshiro256StarStar, stream_seed
from .tabular import Column, ColumnKind, DataTable

__all__ = [
    "SplitSpec",
    "SplitResult",
    "train_test_split",
    "CategoricalPolicy",
    "SmoteConfig",
    "smote",
]


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.75
    seed: int = 0
    stratify: str | None = None

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ConfigError("split fraction must be strictly inside (0, 1)")


@dataclass(frozen=True)
class SplitResult:
    train: DataTable
    test: DataTable
    train_indices: np.ndarray
    test_indices: np.ndarray


def _take(n: int, fraction: float) -> int:
    # round half up: 447.75 -> 448, 300.0 -> 300
    return int(np.floor(fraction * n + 0.5))


def train_test_split(table: DataTable, spec: SplitSpec) -> SplitResult:
    """Partition rows into train/test.

    Train size is round(fraction * n); with stratification the rounding is
    applied per stratum.  Both partitions keep original row order.
    """
    n = table.n_rows
    if n == 0:
        raise DataError("cannot split an empty table")
    rng = Xoshiro256StarStar(spec.seed)
    if spec.stratify is None:
        pools = [np.arange(n)]
    else:
        col = table.column(spec.stratify)
        if col.kind is not ColumnKind.CATEGORICAL:
            raise DataError(f"stratify column {spec.stratify!r} is not categorical")
        pools = []
        for code in range(len(col.levels)):
            idx = np.nonzero(col.values == code)[0]
            if len(idx) == 1:
                raise DataError(
                    f"stratum {col.levels[code]!r} has a single row; "
                    "cannot place it on both sides"
                )
            if len(idx):
                pools.append(idx)

    train_parts, test_parts = [], []
    for idx in pools:
        order = list(range(len(idx)))
        rng.shuffle(order)
        k = _take(len(idx), spec.fraction)
        if k == 0 or k == len(idx):
            raise DataError(
                f"fraction {spec.fraction} leaves an empty partition "
                f"for a pool of {len(idx)} rows"
            )
        train_parts.append(idx[order[:k]])
        test_parts.append(idx[order[k:]])

    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return SplitResult(
        train=table.select_rows(train_idx),
        test=table.select_rows(test_idx),
        train_indices=train_idx,
        test_indices=test_idx,
    )


class CategoricalPolicy(enum.Enum):
    COPY_FROM_BASE = "copy_from_base"
    NEIGHBOR_MAJORITY_VOTE = "neighbor_majority_vote"


@dataclass(frozen=True)
class SmoteConfig:
    target: str
    k_neighbors: int = 5
    target_sizes: dict[str, int] = field(default_factory=dict)  # empty: equalize
    categorical_policy: CategoricalPolicy = CategoricalPolicy.COPY_FROM_BASE
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be positive")


def _resolve_sizes(config: SmoteConfig, counts: dict[str, int]) -> dict[str, int]:
    if config.target_sizes:
        for level, size in config.target_sizes.items():
            if level not in counts:
                raise DataError(f"target class {level!r} has no rows to grow from")
            if size < counts[level]:
                raise ConfigError(
                    f"target size {size} for {level!r} is below its "
                    f"current count {counts[level]}; SMOTE only adds rows"
                )
        return dict(config.target_sizes)
    majority = max(counts.values())
    return {level: majority for level in counts}


def smote(table: DataTable, config: SmoteConfig) -> DataTable:
    """Original rows plus synthetic rows until each class reaches its
    target size (default: every class grows to the majority count)."""
    target_col = table.column(config.target)
    if target_col.kind is not ColumnKind.CATEGORICAL:
        raise DataError(f"SMOTE target {config.target!r} is not categorical")
    numeric = [c for c in table.columns if c.kind is ColumnKind.NUMERIC]
    if not numeric:
        raise DataError("SMOTE needs at least one numeric column")

    counts: dict[str, int] = {}
    for code in range(len(target_col.levels)):
        c = int((target_col.values == code).sum())
        if c:
            counts[target_col.levels[code]] = c
    sizes = _resolve_sizes(config, counts)

    # z-score standardization over the whole table, zero-variance guarded
    feats = np.column_stack([c.values for c in numeric])
    mean = feats.mean(axis=0)
    sd = feats.std(axis=0)
    sd[sd == 0.0] = 1.0
    z = (feats - mean) / sd

    grown = [level for level in sizes if sizes[level] > counts[level]]
    # deterministic class order: level code order
    grown.sort(key=target_col.levels.index)

    new_numeric: dict[str, list[float]] = {c.name: [] for c in numeric}
    new_cat: dict[str, list[int]] = {
        c.name: [] for c in table.columns if c.kind is ColumnKind.CATEGORICAL
    }
    stream_index = 0
    for level in grown:
        code = target_col.levels.index(level)
        members = np.nonzero(target_col.values == code)[0]
        m = len(members)
        if config.k_neighbors >= m:
            raise DataError(
                f"k_neighbors={config.k_neighbors} needs more than "
                f"{m} rows of class {level!r}"
            )
        # pairwise distances within the class; ties fall to the lowest row
        # index because the stable argsort keeps original order
        zc = z[members]
        d2 = ((zc[:, None, :] - zc[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        neighbor_rows = np.argsort(d2, axis=1, kind="stable")[:, : config.k_neighbors]

        for local_i in range(sizes[level] - counts[level]):
            rng = Xoshiro256StarStar(stream_seed(config.seed, stream_index))
            local = local_i % m
            u = rng.uniform()
            pick = rng.below(config.k_neighbors)
            base = int(members[local])
            neighbor = int(members[neighbor_rows[local, pick]])
            for c in numeric:
                x = float(c.values[base])
                zval = float(c.values[neighbor])
                new_numeric[c.name].append(x + u * (zval - x))
            for c in table.columns:
                if c.kind is not ColumnKind.CATEGORICAL:
                    continue
                if c.name == config.target:
                    new_cat[c.name].append(code)
                elif config.categorical_policy is CategoricalPolicy.COPY_FROM_BASE:
                    new_cat[c.name].append(int(c.values[base]))
                else:
                    votes = np.bincount(
                        c.values[members[neighbor_rows[local]]],
                        minlength=len(c.levels),
                    )
                    new_cat[c.name].append(int(votes.argmax()))
            stream_index += 1

    if stream_index == 0:
        return table

    cols = []
    for c in table.columns:
        if c.kind is ColumnKind.NUMERIC:
            extra = np.array(new_numeric[c.name], dtype=np.float64)
        else:
            extra = np.array(new_cat[c.name], dtype=np.int32)
        cols.append(Column(c.name, c.kind, np.concatenate([c.values, extra]), c.levels))
    return DataTable(tuple(cols), table.target, table.protected)
