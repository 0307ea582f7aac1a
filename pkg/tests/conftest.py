import numpy as np
import pytest

from pmuguard import kernels


def pytest_report_header(config):
    return f"pmuguard kernel backend: {kernels.BACKEND_NAME}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = [kernels.python_backend]
if kernels.compiled_backend is not None:
    BACKENDS.append(kernels.compiled_backend)


@pytest.fixture(params=BACKENDS, ids=lambda b: b.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param


def circle_points(rng, n, center=(0.0, 0.0), radius=1.0, arc=2 * np.pi):
    th = rng.uniform(0, arc, n)
    return complex(*center) + radius * np.exp(1j * th)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
