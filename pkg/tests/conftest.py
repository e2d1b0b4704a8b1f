import numpy as np
import pytest

from pairfx.data import PairedDataset


def random_pairs(rng, n=200, effect=(1.0, -0.8, 0.5), zyg_p=0.6):
    """Small synthetic dataset: shared (zygosity_MZ, sex_M, z), individual (x,)."""
    mz = rng.binomial(1, zyg_p, n)
    sex = rng.binomial(1, 0.5, n)
    z = rng.normal(size=n)
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    p1 = 1 / (1 + np.exp(-(0.3 * z + 0.6 * x1)))
    p2 = 1 / (1 + np.exp(-(0.3 * z + 0.6 * x2)))
    a1, a2 = rng.binomial(1, p1), rng.binomial(1, p2)
    own, cot, both = effect
    y1 = 1 + z + x1 + own * a1 + cot * a2 + both * a1 * a2 + rng.normal(size=n)
    y2 = 1 + z + x2 + own * a2 + cot * a1 + both * a1 * a2 + rng.normal(size=n)
    return PairedDataset(pair_ids=[f"p{i}" for i in range(n)],
                         c=np.column_stack([mz, sex, z]), x1=x1[:, None], x2=x2[:, None],
                         a1=a1, a2=a2, y1=y1, y2=y2,
                         c_names=("zygosity_MZ", "sex_M", "z"), x_names=("x",),
                         zygosity_column="zygosity_MZ")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """List the acceptance verdicts recorded through the ``verdict`` fixture."""
    lines = [v for rep in terminalreporter.getreports("passed") + terminalreporter.getreports("failed")
             for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(record_property, capsys):
    """``verdict(k, ok, detail)`` prints and records one PASS/FAIL line for criterion ``k``."""
    def emit(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {k}: {detail}"
        record_property("acceptance", line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return emit
