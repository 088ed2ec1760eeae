"""Leakage-audit experiment pipeline.

An experiment asks one question: given this table, how well does a forest
predict the chosen target after an optional sequence of data treatments?
Treatments run in a fixed order:

    perturb -> feature engineering -> smote (pre_split mode) -> split
    -> smote (train_only mode) -> fit -> predict -> metrics -> importance

Perturbation and feature engineering are deterministic, so they run once;
splitting, SMOTE and forest fitting are replicated ``replicates`` times with
seeds derived from the experiment seed, and the report carries every
replicate row plus mean and sample standard deviation of the headline
metric.

SMOTE placement is a named mode because it changes what the headline means:
``pre_split`` oversamples the whole table before splitting (synthetic rows
can land in the test partition, which inflates scores and is exactly the
signal the audit looks for), ``train_only`` oversamples the training
partition after splitting and leaves the test partition untouched.  The
mode is stamped on every report.

Headline metric: regression reports MSE on a min-max normalized target
(bounds fit on the training partition); binary classification reports the
minority-class F1 (minority determined from the full pre-SMOTE table);
multi-class classification reports macro F1.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import forest as forest_mod
from .errors import AuditError, ConfigError, DataError
from .forest import ForestConfig, Task
from .metrics import ClassificationReport, classification_report, mean_squared_error
from .resample import CategoricalPolicy, SmoteConfig, SplitSpec, smote, train_test_split
from .rng import mix_seed
from .tabular import (
    Column,
    ColumnKind,
    DataTable,
    MissingPolicy,
    Schema,
    group_counts,
    load_csv,
    load_schema,
)

__all__ = [
    "PerturbSpec",
    "perturb",
    "EngineerResult",
    "engineer_features",
    "SmoteMode",
    "ExperimentSpec",
    "ReplicateRow",
    "ExperimentResult",
    "AuditReport",
    "run_experiment",
    "leakage_audit",
    "scoring_baseline",
    "RunConfig",
    "run_config",
    "report_to_dict",
    "report_to_json",
    "report_to_markdown",
    "markdown_from_report_dict",
]

_SEED_SPLIT = 1
_SEED_SMOTE = 2
_SEED_FOREST = 3


@dataclass(frozen=True)
class PerturbSpec:
    group: str
    multipliers: dict[str, float]  # group level -> positive factor
    columns: tuple[str, ...]  # numeric columns the factor applies to

    def __post_init__(self):
        if not self.multipliers:
            raise ConfigError("perturbation needs at least one multiplier")
        for level, m in self.multipliers.items():
            if not m > 0:
                raise ConfigError(f"multiplier for {level!r} must be positive")
        if not self.columns:
            raise ConfigError("perturbation needs at least one affected column")


def perturb(table: DataTable, spec: PerturbSpec) -> DataTable:
    """Scale the affected columns of every row whose group level has a
    multiplier; rows of other levels are untouched."""
    gcol = table.column(spec.group)
    if gcol.kind is not ColumnKind.CATEGORICAL:
        raise DataError(f"group column {spec.group!r} is not categorical")
    factors = np.ones(table.n_rows, dtype=np.float64)
    for level, m in spec.multipliers.items():
        if level not in gcol.levels:
            raise DataError(f"level {level!r} not present in {spec.group!r}")
        factors[gcol.values == gcol.levels.index(level)] = m
    out = table
    for name in spec.columns:
        col = table.column(name)
        if col.kind is not ColumnKind.NUMERIC:
            raise DataError(f"affected column {name!r} is not numeric")
        out = out.replace_column(name, col.values * factors)
    return out


@dataclass(frozen=True)
class EngineerResult:
    table: DataTable
    n_rejected: int  # rows dropped by the zero-income division guard
    rejected_indices: tuple[int, ...]


_ENGINEERED = ("f1", "f2", "f3", "f4")


def engineer_features(table: DataTable) -> EngineerResult:
    """Append the four income-ratio columns used by the loan experiments:

    f1 = ApplicantIncome / (CoapplicantIncome + 1)
    f2 = LoanAmount / ApplicantIncome
    f3 = ApplicantIncome / (dependents + 1), with the "3+" level read as 3
    f4 = Loan_Amount_Term / ApplicantIncome

    Rows with ApplicantIncome = 0 cannot form f2/f4 and are rejected (and
    counted).  Applying this twice is an error, not a silent duplicate.
    """
    for name in _ENGINEERED:
        if name in table.column_names:
            raise DataError(f"engineered column {name!r} already present")
    ai = table.column("ApplicantIncome")
    ci = table.column("CoapplicantIncome")
    la = table.column("LoanAmount")
    term = table.column("Loan_Amount_Term")
    dep = table.column("Dependents")
    for c in (ai, ci, la, term):
        if c.kind is not ColumnKind.NUMERIC:
            raise DataError(f"column {c.name!r} must be numeric")
    if dep.kind is not ColumnKind.CATEGORICAL:
        raise DataError("column 'Dependents' must be categorical")

    dep_value = np.empty(len(dep.levels), dtype=np.float64)
    for i, level in enumerate(dep.levels):
        text = level.rstrip("+")
        try:
            dep_value[i] = float(text)
        except ValueError:
            raise DataError(f"Dependents level {level!r} is not a count") from None

    keep = ai.values != 0.0
    rejected = tuple(int(i) for i in np.nonzero(~keep)[0])
    base = table.select_rows(np.nonzero(keep)[0]) if rejected else table
    a = base.column("ApplicantIncome").values
    c = base.column("CoapplicantIncome").values
    l = base.column("LoanAmount").values
    t = base.column("Loan_Amount_Term").values
    d = dep_value[base.column("Dependents").values]
    new = [
        Column("f1", ColumnKind.NUMERIC, a / (c + 1.0)),
        Column("f2", ColumnKind.NUMERIC, l / a),
        Column("f3", ColumnKind.NUMERIC, a / (d + 1.0)),
        Column("f4", ColumnKind.NUMERIC, t / a),
    ]
    return EngineerResult(
        table=base.with_columns(new),
        n_rejected=len(rejected),
        rejected_indices=rejected,
    )


class SmoteMode(enum.Enum):
    PRE_SPLIT = "pre_split"  # oversample everything, then split
    TRAIN_ONLY = "train_only"  # split first, oversample the train partition


@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    label: str
    target: str
    task: Task
    split: SplitSpec = SplitSpec()
    forest: ForestConfig | None = None  # None: defaults for the task
    feature_engineering: bool = False
    perturb: PerturbSpec | None = None
    smote: SmoteConfig | None = None
    smote_mode: SmoteMode | None = None
    replicates: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.smote is not None:
            if self.smote_mode is None:
                raise ConfigError("smote requires an explicit smote_mode")
            if self.task is Task.REGRESSION:
                raise ConfigError("regression experiments cannot use smote")
        if self.forest is not None and self.forest.task is not self.task:
            raise ConfigError("forest config task does not match experiment task")


@dataclass(frozen=True)
class ReplicateRow:
    replicate: int
    seed: int
    headline: float
    macro_f1: float | None
    per_class: dict[str, dict] | None
    confusion: dict | None
    importance: tuple[tuple[str, float], ...]
    oob_error: float | None
    train_rows: int
    test_rows: int


@dataclass(frozen=True)
class ExperimentResult:
    experiment_id: str
    label: str
    target: str
    task: str
    headline_metric: str  # minority_f1 | macro_f1 | mse
    headline_label: str | None
    stages: dict
    rows: tuple[ReplicateRow, ...]
    mean: float
    sd: float
    mean_importance: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class AuditReport:
    environment: dict
    experiments: tuple[ExperimentResult, ...]


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except AuditError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def _minority_level(table: DataTable, target: str) -> str:
    counts = group_counts(table, target)
    best = None
    for level in table.column(target).levels:  # first-interned wins ties
        if level not in counts:
            continue
        if best is None or counts[level] < counts[best]:
            best = level
    return best


def _normalize_regression_target(split_result, target: str):
    lo = float(split_result.train.column(target).values.min())
    hi = float(split_result.train.column(target).values.max())
    if hi <= lo:
        raise DataError(f"regression target {target!r} is constant in train")
    scale = hi - lo

    def transform(tbl: DataTable) -> DataTable:
        v = (tbl.column(target).values - lo) / scale
        return tbl.replace_column(target, v)

    return transform(split_result.train), transform(split_result.test)


def run_experiment(
    table: DataTable, spec: ExperimentSpec, n_jobs: int = 1
) -> ExperimentResult:
    """Execute one experiment's full replicate loop on an already-loaded
    table and aggregate the headline metric."""
    stages: dict = {
        "feature_engineering": spec.feature_engineering,
        "perturb": None,
        "smote": None,
    }
    prepared = table
    if spec.perturb is not None:
        prepared = _stage("perturb", perturb, prepared, spec.perturb)
        stages["perturb"] = {
            "group": spec.perturb.group,
            "multipliers": dict(spec.perturb.multipliers),
            "columns": list(spec.perturb.columns),
        }
    if spec.feature_engineering:
        eng = _stage("feature_engineering", engineer_features, prepared)
        prepared = eng.table
        stages["feature_engineering"] = {"rejected_rows": eng.n_rejected}
    if spec.smote is not None:
        stages["smote"] = {
            "mode": spec.smote_mode.value,
            "k_neighbors": spec.smote.k_neighbors,
            "categorical_policy": spec.smote.categorical_policy.value,
            "target_sizes": dict(spec.smote.target_sizes) or "equalize",
        }

    cls = spec.task is Task.CLASSIFICATION
    headline_metric = "mse"
    headline_label = None
    if cls:
        levels_present = len(group_counts(prepared, spec.target))
        if levels_present == 2:
            headline_metric = "minority_f1"
            headline_label = _minority_level(prepared, spec.target)
        else:
            headline_metric = "macro_f1"

    forest_cfg = spec.forest or ForestConfig(task=spec.task)
    rows = []
    for r in range(spec.replicates):
        rep_seed = mix_seed(spec.seed, r)
        working = prepared
        if spec.smote is not None and spec.smote_mode is SmoteMode.PRE_SPLIT:
            cfg = dataclasses.replace(
                spec.smote, target=spec.target, seed=mix_seed(rep_seed, _SEED_SMOTE)
            )
            working = _stage("smote", smote, working, cfg)
        split_spec = dataclasses.replace(
            spec.split, seed=mix_seed(rep_seed, _SEED_SPLIT)
        )
        sr = _stage("split", train_test_split, working, split_spec)
        train, test = sr.train, sr.test
        if spec.smote is not None and spec.smote_mode is SmoteMode.TRAIN_ONLY:
            cfg = dataclasses.replace(
                spec.smote, target=spec.target, seed=mix_seed(rep_seed, _SEED_SMOTE)
            )
            train = _stage("smote", smote, train, cfg)
        if not cls:
            train, test = _stage(
                "normalize", _normalize_regression_target, sr, spec.target
            )
        fcfg = dataclasses.replace(forest_cfg, seed=mix_seed(rep_seed, _SEED_FOREST))
        model = _stage("fit", forest_mod.fit, train, spec.target, fcfg, n_jobs=n_jobs)
        preds = _stage("predict", forest_mod.predict, model, test)
        importance = tuple(forest_mod.variable_importance(model))
        if cls:
            truth = [
                test.column(spec.target).decode(c)
                for c in test.column(spec.target).values
            ]
            rep: ClassificationReport = _stage(
                "metrics", classification_report, truth, preds, headline_label
            )
            row = ReplicateRow(
                replicate=r,
                seed=rep_seed,
                headline=rep.headline_f1,
                macro_f1=rep.macro_f1,
                per_class={
                    label: {"precision": p, "recall": rc, "f1": f}
                    for label, (p, rc, f) in rep.per_class.items()
                },
                confusion={
                    "labels": list(rep.matrix.labels),
                    "matrix": [[int(v) for v in line] for line in rep.matrix.counts],
                },
                importance=importance,
                oob_error=model.metadata["oob_error"],
                train_rows=train.n_rows,
                test_rows=test.n_rows,
            )
        else:
            mse = _stage(
                "metrics",
                mean_squared_error,
                test.column(spec.target).values,
                preds,
            )
            row = ReplicateRow(
                replicate=r,
                seed=rep_seed,
                headline=mse,
                macro_f1=None,
                per_class=None,
                confusion=None,
                importance=importance,
                oob_error=model.metadata["oob_error"],
                train_rows=train.n_rows,
                test_rows=test.n_rows,
            )
        rows.append(row)

    headlines = np.array([row.headline for row in rows], dtype=np.float64)
    mean = float(headlines.mean())
    sd = float(headlines.std(ddof=1)) if len(rows) > 1 else 0.0

    by_feature: dict[str, list[float]] = {}
    for row in rows:
        for name, value in row.importance:
            by_feature.setdefault(name, []).append(value)
    mean_imp = {name: sum(v) / spec.replicates for name, v in by_feature.items()}
    names = sorted(mean_imp, key=lambda nm: (-mean_imp[nm], nm))
    mean_importance = tuple((nm, mean_imp[nm]) for nm in names)

    return ExperimentResult(
        experiment_id=spec.experiment_id,
        label=spec.label,
        target=spec.target,
        task=spec.task.value,
        headline_metric=headline_metric,
        headline_label=headline_label,
        stages=stages,
        rows=tuple(rows),
        mean=mean,
        sd=sd,
        mean_importance=mean_importance,
    )


def _single_report(table: DataTable, spec: ExperimentSpec, n_jobs: int) -> AuditReport:
    result = run_experiment(table, spec, n_jobs=n_jobs)
    return AuditReport(
        environment={
            "seed": spec.seed,
            "replicates": spec.replicates,
            "dataset_hash": table.content_hash(),
            "n_rows": table.n_rows,
        },
        experiments=(result,),
    )


def leakage_audit(table: DataTable, spec: ExperimentSpec, n_jobs: int = 1) -> AuditReport:
    """Predict a protected attribute from the remaining columns."""
    if spec.target not in table.protected:
        raise ConfigError(
            f"leakage target {spec.target!r} is not a protected column"
        )
    if spec.task is not Task.CLASSIFICATION:
        raise ConfigError("leakage audits are classification experiments")
    return _single_report(table, spec, n_jobs)


def scoring_baseline(table: DataTable, spec: ExperimentSpec, n_jobs: int = 1) -> AuditReport:
    """Predict the dataset's scoring target, to confirm the data carries
    usable signal at all."""
    if spec.target != table.target:
        raise ConfigError(
            f"scoring target {spec.target!r} differs from the dataset "
            f"target {table.target!r}"
        )
    return _single_report(table, spec, n_jobs)


@dataclass(frozen=True)
class RunConfig:
    """One JSON config file: a dataset plus a list of experiments that all
    predict the same target."""

    data_path: Path
    schema: Schema
    schema_path: Path
    missing: MissingPolicy
    kind: str  # "leakage" | "scoring"
    experiments: tuple[ExperimentSpec, ...]

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return RunConfig.from_dict(doc, base_dir=path.parent)

    @staticmethod
    def from_dict(doc: dict, base_dir: Path) -> "RunConfig":
        try:
            data_path = base_dir / doc["data"]
            schema_path = base_dir / doc["schema"]
            kind = doc.get("kind", "leakage")
            if kind not in ("leakage", "scoring"):
                raise ConfigError(f"unknown config kind {kind!r}")
            missing = MissingPolicy(doc.get("missing", "fail"))
            task = Task(doc.get("task", "classification"))
            target = doc["target"]
            seed = int(doc.get("seed", 0))
            replicates = int(doc.get("replicates", 20))
            split_doc = doc.get("split", {})
            split = SplitSpec(
                fraction=float(split_doc.get("fraction", 0.75)),
                stratify=split_doc.get("stratify"),
            )
            forest_doc = doc.get("forest", {})
            forest_cfg = ForestConfig(
                task=task,
                n_trees=int(forest_doc.get("n_trees", 750)),
                mtry=forest_doc.get("mtry"),
                min_node_size=forest_doc.get("min_node_size"),
                max_depth=forest_doc.get("max_depth"),
            )
            experiments = []
            for entry in doc["experiments"]:
                stages = entry.get("stages", {})
                perturb_spec = None
                if "perturb" in stages:
                    p = stages["perturb"]
                    perturb_spec = PerturbSpec(
                        group=p["group"],
                        multipliers={k: float(v) for k, v in p["multipliers"].items()},
                        columns=tuple(p["columns"]),
                    )
                smote_cfg = None
                smote_mode = None
                if "smote" in stages:
                    s = stages["smote"]
                    smote_mode = SmoteMode(s["mode"])
                    smote_cfg = SmoteConfig(
                        target=target,
                        k_neighbors=int(s.get("k_neighbors", 5)),
                        target_sizes={
                            k: int(v) for k, v in s.get("target_sizes", {}).items()
                        },
                        categorical_policy=CategoricalPolicy(
                            s.get("categorical_policy", "copy_from_base")
                        ),
                    )
                experiments.append(
                    ExperimentSpec(
                        experiment_id=entry["id"],
                        label=entry.get("label", entry["id"]),
                        target=target,
                        task=task,
                        split=split,
                        forest=forest_cfg,
                        feature_engineering=bool(
                            stages.get("feature_engineering", False)
                        ),
                        perturb=perturb_spec,
                        smote=smote_cfg,
                        smote_mode=smote_mode,
                        replicates=replicates,
                        seed=seed,
                    )
                )
            if not experiments:
                raise ConfigError("config lists no experiments")
            ids = [e.experiment_id for e in experiments]
            if len(set(ids)) != len(ids):
                raise ConfigError("duplicate experiment ids in config")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc!r}") from exc
        return RunConfig(
            data_path=data_path,
            schema=load_schema(schema_path),
            schema_path=schema_path,
            missing=missing,
            kind=kind,
            experiments=tuple(experiments),
        )

    def override(self, seed: int | None = None, replicates: int | None = None) -> "RunConfig":
        if seed is None and replicates is None:
            return self
        experiments = tuple(
            dataclasses.replace(
                e,
                seed=e.seed if seed is None else seed,
                replicates=e.replicates if replicates is None else replicates,
            )
            for e in self.experiments
        )
        return dataclasses.replace(self, experiments=experiments)


def run_config(config: RunConfig, n_jobs: int = 1) -> AuditReport:
    """Load the config's dataset once and run every experiment against it."""
    loaded = load_csv(config.data_path, config.schema, config.missing)
    table = loaded.table
    results = []
    for spec in config.experiments:
        if config.kind == "leakage":
            report = leakage_audit(table, spec, n_jobs=n_jobs)
        else:
            report = scoring_baseline(table, spec, n_jobs=n_jobs)
        results.append(report.experiments[0])
    env = {
        "kind": config.kind,
        "data": config.data_path.name,
        "dataset_hash": table.content_hash(),
        "n_rows": table.n_rows,
        "rows_dropped_at_load": loaded.n_dropped,
        "seed": config.experiments[0].seed,
        "replicates": config.experiments[0].replicates,
        "target": config.experiments[0].target,
    }
    return AuditReport(environment=env, experiments=tuple(results))


def _row_dict(row: ReplicateRow) -> dict:
    return {
        "replicate": row.replicate,
        "seed": row.seed,
        "headline": row.headline,
        "macro_f1": row.macro_f1,
        "per_class": row.per_class,
        "confusion": row.confusion,
        "importance": [[name, value] for name, value in row.importance],
        "oob_error": row.oob_error,
        "train_rows": row.train_rows,
        "test_rows": row.test_rows,
    }


def report_to_dict(report: AuditReport) -> dict:
    return {
        "format": "creditaudit-report",
        "version": 1,
        "environment": report.environment,
        "experiments": [
            {
                "id": e.experiment_id,
                "label": e.label,
                "target": e.target,
                "task": e.task,
                "headline_metric": e.headline_metric,
                "headline_label": e.headline_label,
                "stages": e.stages,
                "mean": e.mean,
                "sd": e.sd,
                "mean_importance": [[n, v] for n, v in e.mean_importance],
                "replicates": [_row_dict(r) for r in e.rows],
            }
            for e in report.experiments
        ],
    }


def report_to_json(report: AuditReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


_METRIC_TITLES = {
    "minority_f1": "F1 (minority class)",
    "macro_f1": "F1 (macro)",
    "mse": "MSE (normalized target)",
}


def report_to_markdown(report: AuditReport) -> str:
    return markdown_from_report_dict(report_to_dict(report))


def markdown_from_report_dict(doc: dict) -> str:
    """Render a serialized report as Markdown: one scenario-by-score table
    shaped like a results table, then per-scenario stage stamps and top
    variables."""
    if doc.get("format") != "creditaudit-report":
        raise DataError("not a creditaudit report document")
    env = doc["environment"]
    experiments = doc["experiments"]
    lines = ["# Audit report", ""]
    lines.append(
        f"Target `{env.get('target')}` on `{env.get('data')}` "
        f"({env.get('n_rows')} rows), seed {env.get('seed')}, "
        f"{env.get('replicates')} replicates per scenario."
    )
    lines.append("")
    lines.append(f"Dataset hash: `{env.get('dataset_hash')}`")
    lines.append("")
    metric = _METRIC_TITLES.get(experiments[0]["headline_metric"], "score")
    lines.append(f"| Scenario | {metric} | sd |")
    lines.append("| --- | --- | --- |")
    for e in experiments:
        lines.append(f"| {e['label']} | {e['mean']:.7f} | {e['sd']:.7f} |")
    lines.append("")
    for e in experiments:
        lines.append(f"## {e['label']}")
        lines.append("")
        stamped = {k: v for k, v in e["stages"].items() if v}
        lines.append(f"Stages: `{json.dumps(stamped) if stamped else 'none'}`")
        lines.append("")
        lines.append("Top variables by mean impurity-decrease importance:")
        lines.append("")
        lines.append("| Variable | Importance |")
        lines.append("| --- | --- |")
        for name, value in e["mean_importance"][:5]:
            lines.append(f"| {name} | {value:.4f} |")
        lines.append("")
    return "\n".join(lines)
