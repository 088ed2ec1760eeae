"""Command-line interface.

Subcommands: ingest, stats, quantiles, histogram, perturb, smote, run,
report.  Every subcommand is deterministic given its flags and never
mutates input files.

Exit codes: 0 success; 1 usage error (bad flags or malformed config);
2 data error (unreadable or inconsistent data/schema); 3 internal error.
The CREDITAUDIT_OUT environment variable sets the default output directory
for the run subcommand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import audit, tabular
from .errors import AuditError, ConfigError, DataError, SchemaError
from .resample import CategoricalPolicy, SmoteConfig, smote
from .tabular import MissingPolicy, load_csv, load_schema, save_csv

_PROBS_DEFAULT = (0.0, 0.25, 0.5, 0.75, 1.0)
_PROB_NAMES = {0.0: "Min", 0.25: "Q1", 0.5: "Median", 0.75: "Q3", 1.0: "Max"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _missing_policy(name: str) -> MissingPolicy:
    return MissingPolicy.DROP_ROW if name == "drop" else MissingPolicy.FAIL


def _load(args) -> tabular.LoadResult:
    schema = load_schema(args.schema)
    return load_csv(args.data, schema, _missing_policy(args.missing))


def _load_perturb_spec(path: str) -> audit.PerturbSpec:
    try:
        doc = json.loads(Path(path).read_text())
        return audit.PerturbSpec(
            group=doc["group"],
            multipliers={k: float(v) for k, v in doc["multipliers"].items()},
            columns=tuple(doc["columns"]),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad perturbation spec {path}: {exc!r}") from exc


def _maybe_perturb(table, args):
    if getattr(args, "perturb", None):
        return audit.perturb(table, _load_perturb_spec(args.perturb))
    return table


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_ingest(args) -> int:
    loaded = _load(args)
    table = loaded.table
    lines = [f"rows: {table.n_rows} (dropped: {loaded.n_dropped})"]
    if loaded.ignored_columns:
        lines.append(f"ignored columns: {', '.join(loaded.ignored_columns)}")
    for col in table.columns:
        if col.kind is tabular.ColumnKind.NUMERIC:
            lines.append(f"  {col.name}: numeric")
        else:
            counts = tabular.group_counts(table, col.name)
            levels = ", ".join(f"{k}={v}" for k, v in counts.items())
            lines.append(f"  {col.name}: categorical ({levels})")
    print("\n".join(lines))
    return 0


def _cmd_stats(args) -> int:
    table = _maybe_perturb(_load(args).table, args)
    means = tabular.group_mean(table, args.column, args.group)
    if args.group:
        counts = tabular.group_counts(table, args.group)
    else:
        counts = {"all": table.n_rows}
    if args.format == "json":
        doc = {
            "column": args.column,
            "group": args.group,
            "means": means,
            "counts": counts,
        }
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return 0
    lines = ["| Group | Mean | Count |", "| --- | --- | --- |"]
    for level, mean in means.items():
        lines.append(f"| {level} | {mean:.6f} | {counts[level]} |")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _parse_probs(text: str) -> tuple[float, ...]:
    try:
        probs = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --probs value {text!r}") from exc
    if not probs:
        raise ConfigError("--probs needs at least one probability")
    return probs


def _cmd_quantiles(args) -> int:
    table = _maybe_perturb(_load(args).table, args)
    probs = _parse_probs(args.probs)
    values = tabular.quantiles(table, args.column, probs, args.group)
    if args.format == "json":
        doc = {
            "column": args.column,
            "group": args.group,
            "probs": list(probs),
            "quantiles": {k: list(v) for k, v in values.items()},
        }
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return 0
    headers = [_PROB_NAMES.get(p, f"p{p:g}") for p in probs]
    lines = [
        "| Group | " + " | ".join(headers) + " |",
        "| --- |" + " --- |" * len(headers),
    ]
    for level, row in values.items():
        cells = " | ".join(f"{v:.6g}" for v in row)
        lines.append(f"| {level} | {cells} |")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_histogram(args) -> int:
    if args.bins < 1:
        raise ConfigError("--bins must be >= 1")
    table = _maybe_perturb(_load(args).table, args)
    hist = tabular.histogram(table, args.column, args.bins, args.group)
    doc = {
        "column": args.column,
        "group": args.group,
        "edges": list(hist.edges),
        "degenerate": hist.degenerate,
        "counts": {k: list(v) for k, v in hist.counts.items()},
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def _cmd_perturb(args) -> int:
    table = _load(args).table
    spec = _load_perturb_spec(args.spec)
    out = audit.perturb(table, spec)
    save_csv(out, args.out)
    print(f"wrote {out.n_rows} rows to {args.out} (values in loaded units)")
    return 0


def _cmd_smote(args) -> int:
    table = _load(args).table
    config = SmoteConfig(
        target=args.target,
        k_neighbors=args.k,
        categorical_policy=CategoricalPolicy(args.policy),
        seed=args.seed,
    )
    out = smote(table, config)
    save_csv(out, args.out)
    print(
        f"wrote {out.n_rows} rows to {args.out} "
        f"({out.n_rows - table.n_rows} synthetic)"
    )
    return 0


def _cmd_run(args) -> int:
    config = audit.RunConfig.from_file(args.config)
    config = config.override(seed=args.seed, replicates=args.replicates)
    report = audit.run_config(config, n_jobs=args.jobs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.config).stem
    written = []
    if args.format in ("json", "both"):
        path = out_dir / f"{stem}_report.json"
        path.write_text(audit.report_to_json(report))
        written.append(str(path))
    if args.format in ("md", "both"):
        path = out_dir / f"{stem}_report.md"
        path.write_text(audit.report_to_markdown(report) + "\n")
        written.append(str(path))
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    _emit(audit.markdown_from_report_dict(doc) + "\n", args.out)
    return 0


def _add_data_flags(p: _Parser, perturbable: bool = False):
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument(
        "--missing",
        choices=("drop", "fail"),
        default="fail",
        help="rows with missing schema cells: drop them or fail (default)",
    )
    if perturbable:
        p.add_argument(
            "--perturb",
            help="perturbation spec JSON to apply before computing",
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="creditaudit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset and print its shape")
    _add_data_flags(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="per-group means of a numeric column")
    _add_data_flags(p, perturbable=True)
    p.add_argument("--column", required=True)
    p.add_argument("--group")
    p.add_argument("--format", choices=("md", "json"), default="md")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("quantiles", help="interpolated quantiles of a column")
    _add_data_flags(p, perturbable=True)
    p.add_argument("--column", required=True)
    p.add_argument("--group")
    p.add_argument(
        "--probs",
        default=",".join(str(x) for x in _PROBS_DEFAULT),
        help="comma-separated probabilities in [0,1]",
    )
    p.add_argument("--format", choices=("md", "json"), default="md")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_quantiles)

    p = sub.add_parser("histogram", help="equal-width histogram as JSON")
    _add_data_flags(p, perturbable=True)
    p.add_argument("--column", required=True)
    p.add_argument("--group")
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_histogram)

    p = sub.add_parser("perturb", help="write a group-scaled copy of a dataset")
    _add_data_flags(p)
    p.add_argument("--spec", required=True, help="perturbation spec JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("smote", help="write an oversampled copy of a dataset")
    _add_data_flags(p)
    p.add_argument("--target", required=True, help="class column to rebalance")
    p.add_argument("--k", type=int, default=5)
    p.add_argument(
        "--policy",
        choices=tuple(x.value for x in CategoricalPolicy),
        default=CategoricalPolicy.COPY_FROM_BASE.value,
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_smote)

    p = sub.add_parser("run", help="run an experiment config, write reports")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument(
        "--out",
        default=os.environ.get("CREDITAUDIT_OUT", "."),
        help="output directory (default: CREDITAUDIT_OUT or .)",
    )
    p.add_argument("--format", choices=("json", "md", "both"), default="both")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--replicates", type=int, help="override replicate count")
    p.add_argument("--jobs", type=int, default=1, help="forest worker threads")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render a stored report JSON as Markdown")
    p.add_argument("--report", required=True, help="report JSON file")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"creditaudit: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, SchemaError) as exc:
        print(f"creditaudit: data error: {exc}", file=sys.stderr)
        return 2
    except AuditError as exc:
        print(f"creditaudit: internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
