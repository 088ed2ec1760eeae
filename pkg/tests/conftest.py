"""Session fixtures: shipped datasets and the four shipped experiment runs.

The experiment reports are expensive (750-tree forests, 20 replicates per
scenario), so each config is executed exactly once per session and shared by
every test that inspects it.
"""

from pathlib import Path

import pytest

from creditaudit.audit import RunConfig, run_config
from creditaudit.tabular import MissingPolicy, load_csv, load_schema

import _criteria

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return ROOT


@pytest.fixture(scope="session")
def credit_loaded():
    schema = load_schema(CONFIGS / "credit_schema.json")
    return load_csv(DATA / "credit.csv", schema, MissingPolicy.FAIL)


@pytest.fixture(scope="session")
def loan_loaded():
    schema = load_schema(CONFIGS / "loan_schema.json")
    return load_csv(DATA / "loan.csv", schema, MissingPolicy.DROP_ROW)


@pytest.fixture(scope="session")
def credit_table(credit_loaded):
    return credit_loaded.table


@pytest.fixture(scope="session")
def loan_table(loan_loaded):
    return loan_loaded.table


def _run(name: str):
    config = RunConfig.from_file(CONFIGS / name)
    return run_config(config, n_jobs=1)


@pytest.fixture(scope="session")
def credit_leakage_report():
    return _run("credit_leakage.json")


@pytest.fixture(scope="session")
def credit_scoring_report():
    return _run("credit_scoring.json")


@pytest.fixture(scope="session")
def loan_scoring_report():
    return _run("loan_scoring.json")


@pytest.fixture(scope="session")
def gender_leakage_report():
    return _run("gender_leakage.json")


def experiment(report, experiment_id: str):
    for e in report.experiments:
        if e.experiment_id == experiment_id:
            return e
    raise KeyError(experiment_id)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria.RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in _criteria.RESULTS:
        terminalreporter.write_line(line)
