"""creditaudit: detects protected-attribute leakage in credit-scoring data.

The package answers one question about a tabular credit dataset: can a
model trained on the "neutral" columns recover a protected attribute such
as gender or ethnicity?  It ships a columnar table layer, a from-scratch
bagged-forest learner, SMOTE oversampling, deterministic splitting, and an
experiment runner that scores leakage scenarios side by side.
"""

__version__ = "0.1.0"

from .audit import (
    AuditReport,
    ExperimentSpec,
    PerturbSpec,
    SmoteMode,
    engineer_features,
    leakage_audit,
    perturb,
    run_config,
    run_experiment,
    scoring_baseline,
)
from .errors import AuditError, ConfigError, DataError, SchemaError
from .forest import ForestConfig, ForestModel, Task, fit, predict, variable_importance
from .metrics import classification_report, confusion_matrix, mean_squared_error
from .resample import SmoteConfig, SplitSpec, smote, train_test_split
from .tabular import (
    ColumnKind,
    DataTable,
    MissingPolicy,
    Schema,
    group_counts,
    group_mean,
    histogram,
    load_csv,
    load_schema,
    quantiles,
    save_csv,
)

__all__ = [
    "__version__",
    "AuditError",
    "AuditReport",
    "ColumnKind",
    "ConfigError",
    "DataError",
    "DataTable",
    "ExperimentSpec",
    "ForestConfig",
    "ForestModel",
    "MissingPolicy",
    "PerturbSpec",
    "Schema",
    "SchemaError",
    "SmoteConfig",
    "SmoteMode",
    "SplitSpec",
    "Task",
    "classification_report",
    "confusion_matrix",
    "engineer_features",
    "fit",
    "group_counts",
    "group_mean",
    "histogram",
    "leakage_audit",
    "load_csv",
    "load_schema",
    "mean_squared_error",
    "perturb",
    "predict",
    "quantiles",
    "run_config",
    "run_experiment",
    "save_csv",
    "scoring_baseline",
    "smote",
    "train_test_split",
    "variable_importance",
]
