import json
from pathlib import Path

import numpy as np
import pytest

from imdp.model import model_from_dict
from imdp.synthetic import example1_dict

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE1 = ROOT / "models" / "example1.json"

# Pessimistic relaxed fixed point of the two-state example, solved by hand:
# policy (1, 0) and the minimising distribution put 0.5 on the higher-valued
# state, giving v = (5.17, 5.27) / 0.118.  Confirmed by vertex enumeration and
# grid value iteration (see test_oracle).
EXAMPLE1_VALUE = np.array([5.17 / 0.118, 5.27 / 0.118])


@pytest.fixture
def example1():
    return model_from_dict(example1_dict())


@pytest.fixture
def example1_relaxed(example1):
    return example1.relaxed()


@pytest.fixture
def example1_path():
    return EXAMPLE1


def write_model(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def random_bounds(rng, n):
    """Consistent interval bounds around a random distribution."""
    p = rng.dirichlet(np.ones(n))
    lo = p * rng.uniform(0, 1, size=n)
    hi = p + (1 - p) * rng.uniform(0, 1, size=n)
    if rng.uniform() < 0.2:  # some point entries
        k = rng.integers(n)
        hi[k] = lo[k]
        if lo.sum() > 1 or hi.sum() < 1:
            hi[k] = lo[k] = p[k]
    return lo, hi


def random_values(rng, n):
    if rng.uniform() < 0.3:  # ties
        return rng.integers(-3, 4, size=n).astype(float)
    return rng.uniform(-10, 10, size=n)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
