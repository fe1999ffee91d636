"""Shared fixtures; the long desk-scale runs are executed once per session."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from imbalance_lab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ACCEPTANCE = []


def record(name, passed, detail=""):
    ACCEPTANCE.append((name, bool(passed), detail))


def run_cli(*argv):
    return main([str(a) for a in argv])


def medians(out_dir):
    rows = json.loads((Path(out_dir) / "summary.json").read_text())
    by = {}
    for r in rows:
        by.setdefault(r["method"], []).append(r["gap"])
    return {m: float(np.median(v)) for m, v in by.items()}


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """AC8 protocol outputs, keyed by task, as per-method median gaps plus the run dir."""
    out = {}
    t0 = time.perf_counter()
    for task in ("binary", "longtail"):
        d = tmp_path_factory.mktemp(f"metalad_{task}")
        code = run_cli("metalad", "--config", CONFIGS / f"metalad_{task}.yaml", "--out", d,
                       "--deterministic", "--force")
        assert code == 0
        out[task] = (medians(d), d)
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def longtail_runs(desk_runs, tmp_path_factory):
    d = tmp_path_factory.mktemp("la_longtail")
    code = run_cli("train", "--config", CONFIGS / "train_la.yaml", "--out", d, "--deterministic")
    assert code == 0
    la = medians(d)["la"]
    med = dict(desk_runs["longtail"][0])
    med["la"] = la
    return med


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
