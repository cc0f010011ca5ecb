import csv
import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from soundphylo.model import SoundChangeRecord, train  # noqa: E402
from soundphylo.phonology import default_feature_table  # noqa: E402

ACCEPTANCE = {}


def record_criterion(number, name, ok, detail=""):
    ACCEPTANCE[number] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {name}" + (f" -- {detail}" if detail else ""))


@pytest.fixture(scope="session")
def table():
    return default_feature_table()


@pytest.fixture(scope="session")
def raw_rows():
    """Feature rows read straight from the shipped CSV, bypassing the loader."""
    path = resources.files("soundphylo") / "data" / "features.csv"
    with path.open(encoding="utf-8") as fh:
        return {r["phone"]: r for r in csv.DictReader(fh)}


@pytest.fixture(scope="session")
def t_to_d_model(table):
    records = [SoundChangeRecord("t", "d", "Synthetic")] * 200
    return train(records, table, depth=1, seed=411)


@pytest.fixture(scope="session")
def synthetic_dir():
    return Path(str(resources.files("soundphylo") / "data" / "synthetic"))
