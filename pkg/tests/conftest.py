import numpy as np
import pytest

from nodule_reid import Partition, validate_partition

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(label: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.append((label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else ""))


def check_partition(partition: Partition, n: int) -> Partition:
    validate_partition(partition, n)
    return partition


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(rng, n, dim, k=None, spread=0.05, scale=1.0):
    """Points around ``k`` random centres plus a few uniform stragglers."""
    k = k or max(1, n // 8)
    centres = rng.normal(0, scale, size=(k, dim))
    which = rng.integers(0, k, size=n)
    X = centres[which] + rng.normal(0, spread * scale, size=(n, dim))
    n_out = n // 10
    if n_out:
        X[:n_out] = rng.normal(0, scale, size=(n_out, dim))
    return X
