import json
import os

import pytest

from pcnnrank import synthetic


@pytest.fixture
def write_jsonl(tmp_path):
    def write(records, name="m.jsonl"):
        path = tmp_path / name
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write((r if isinstance(r, str) else json.dumps(r)) + "\n")
        return str(path)

    return write


@pytest.fixture
def schema_file(tmp_path):
    path = tmp_path / "schema.tsv"
    path.write_text("NR\t0\nplace_of_birth\t1\nplace_lived\t2\n", encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A reduced synthetic corpus for fast end-to-end tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    spec = synthetic.SyntheticSpec(n_train_bags=120, n_test_bags=80, seed=3)
    manifest = synthetic.generate(str(out), spec)
    return os.fspath(out), manifest


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed at the end of the run."""
    lines = request.config.acceptance_lines

    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
