import json

import numpy as np
import pytest


@pytest.fixture
def write_jsonl(tmp_path):
    def write(rows, name="trials.jsonl"):
        path = tmp_path / name
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path
    return write


def random_trials(rng, n, k, *, posteriors=True, decisions=True, groups=None):
    """Random classification trials; every class appears at least once when n >= k."""
    from evalkit import TrialSet

    labels = rng.integers(0, k, size=n)
    if n >= k:
        labels[:k] = rng.permutation(k)
    post = rng.dirichlet(np.ones(k), size=n) if posteriors else None
    dec = rng.integers(0, k, size=n) if decisions else None
    return TrialSet.build([f"s{i}" for i in range(n)], labels, num_classes=k,
                          posteriors=post, decisions=dec, groups=groups)


# acceptance verdicts, echoed in the terminal summary so they show without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
