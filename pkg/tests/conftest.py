import hypothesis
import numpy as np
import pytest

from deconvkm.config import Config

np.seterr(all="warn", under="ignore")

hypothesis.settings.register_profile("default", max_examples=25, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

# filled by tests/test_acceptance.py, reported at the end of the session
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s[1:].split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{key:<4} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance_log():
    def record(key, ok, detail):
        ACCEPTANCE_RESULTS[key] = (bool(ok), detail)
        print(f"{key} {'PASS' if ok else 'FAIL'} {detail}")
    return record


@pytest.fixture
def mixture_config():
    """Two truncated Gaussians at -1 and 1 (std 0.25, M = 2.5), Laplace noise 0.3."""
    return Config()


@pytest.fixture
def uniform_config():
    cfg = Config()
    cfg.source.kind = "uniform_box"
    cfg.source.low, cfg.source.high = [0.0], [1.0]
    cfg.noise.kind = "identity"
    return cfg
