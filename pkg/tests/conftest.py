import json
from pathlib import Path

import numpy as np
import pytest

from gibbslab.pmf import Family, pmf_builtin, pmf_from_weights

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


def random_log_concave_weights(rng: np.random.Generator, max_support: int = 8) -> list[float]:
    """Positive weights on {0..m} with nonincreasing successive ratios."""
    m = int(rng.integers(0, max_support))
    ratios = np.sort(rng.uniform(0.05, 3.0, size=m))[::-1]
    w = np.concatenate([[1.0], np.cumprod(ratios)])
    return (w / w.sum()).tolist()


def random_log_concave_family(rng: np.random.Generator, n: int, max_support: int = 8) -> Family:
    return Family(tuple(pmf_from_weights(random_log_concave_weights(rng, max_support)) for _ in range(n)), cyclic=False)


@pytest.fixture
def small_geometric():
    """Geometric(1/2) truncated to a short support, usable up to tilt 1.02."""
    return pmf_builtin("geometric", p=0.5, lambda_cap=1.02, trunc_eps=1e-6)


@pytest.fixture
def gcp_family():
    return Family.iid(pmf_builtin("geometric", p=0.5, lambda_cap=1.7))


@pytest.fixture
def mixed_family():
    return Family(
        (
            pmf_builtin("bernoulli", q=0.3),
            pmf_builtin("binomial", m=3, q=0.6),
            pmf_from_weights([1, 3, 2]),
        ),
        cyclic=False,
    )


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
