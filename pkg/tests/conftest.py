import mpmath
import numpy as np
import pytest

from equilibrate.core import ProblemSpec

_CRITERIA = []


def golden_section(fun, lo, hi, tol=1e-13, dps=40):
    """Minimize a unimodal 1-D function by golden-section search in extended precision."""
    with mpmath.workdps(dps):
        lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
        invphi = (mpmath.sqrt(5) - 1) / 2
        a = hi - invphi * (hi - lo)
        b = lo + invphi * (hi - lo)
        fa, fb = fun(a), fun(b)
        while hi - lo > tol:
            if fa < fb:
                hi, b, fb = b, a, fa
                a = hi - invphi * (hi - lo)
                fa = fun(a)
            else:
                lo, a, fa = a, b, fb
                b = lo + invphi * (hi - lo)
                fb = fun(b)
        return float((lo + hi) / 2)


def lasso_1d(b=3.0, alpha=1.0):
    """0.5 (x - b)^2 + alpha |x| written as 0.5 x^2 - b x + alpha |x| (plus a constant)."""
    return ProblemSpec([[1.0]], [-b], alpha, F=[[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report_criterion():
    def _report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        _CRITERIA.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
