import numpy as np
import pytest

from dalsolve import _kernels

KERNEL_NAMES = ("csc_matvec_cols", "csc_rmatvec_cols", "csc_row_sq_cols",
                "soft_threshold", "group_shrink", "group_jacobian_apply")


def pytest_addoption(parser):
    parser.addoption("--run-large", action="store_true", default=False,
                     help="run the large smoke solve (m=1024, n=65536)")


def pytest_configure(config):
    config.addinivalue_line("markers", "large: slow large-scale run, needs --run-large")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-large"):
        return
    skip = pytest.mark.skip(reason="needs --run-large")
    for item in items:
        if "large" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(params=["numpy", "numba"])
def backend(request, monkeypatch):
    """Route the module-level kernels through one backend for the test."""
    ns = _kernels.get_backend(request.param)
    for name in KERNEL_NAMES:
        monkeypatch.setattr(_kernels, name, getattr(ns, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
