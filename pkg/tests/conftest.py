import numpy as np
import pytest

from origami import ChipParams, QFormat


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_chip():
    return ChipParams(n_ch=4, h_k=3, w_k=3, h_in_max=16)


def codes(rng, shape, fmt=QFormat()):
    return rng.integers(fmt.min_raw, fmt.max_raw + 1, size=shape, dtype=np.int64)


ACCEPTANCE = []


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
