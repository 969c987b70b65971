import math

import pytest
from hypothesis import settings

from poisson_mlsi.semigroup import DensityFunction

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SUITE = {
    "constant": DensityFunction.constant(),
    "geometric_log2": DensityFunction.geometric(math.log(2.0), 0.0),
    "gaussian_like": DensityFunction.gaussian_like(0.7, 1.0),
    "poisson_kernel": DensityFunction.poisson_kernel(2.0),
}
ULC_SUITE = ("gaussian_like", "poisson_kernel")


@pytest.fixture(params=sorted(SUITE))
def family(request):
    return SUITE[request.param]


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
