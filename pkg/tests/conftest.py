import numpy as np
import pytest

from lodgfem import _kernels
from lodgfem.assembly import assemble, clement
from lodgfem.coeff import constant_field, random_field
from lodgfem.mesh import build_mesh, build_pair

BACKENDS = [pytest.param(_kernels.python_backend, id="python")]
if _kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(_kernels.compiled_backend, id="cython"))


@pytest.fixture(params=BACKENDS)
def kernel_backend(request, monkeypatch):
    """Route the kernel entry points through one backend for the duration of a test."""
    mod = request.param
    monkeypatch.setattr(_kernels, "pcg_csr", mod.pcg_csr)
    monkeypatch.setattr(_kernels, "p1_local_matrices", mod.p1_local_matrices)
    return mod


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def setup_pair(coarse_level, fine_level, field=None):
    pair = build_pair(coarse_level, fine_level)
    fem = assemble(pair.fine, field if field is not None else constant_field(1.0))
    return pair, fem, clement(pair, fem)


@pytest.fixture(scope="session")
def pair24_unit():
    return setup_pair(2, 4)


@pytest.fixture(scope="session")
def pair24_rough():
    return setup_pair(2, 4, random_field(3, 0.1, 1e5, 7))


@pytest.fixture(scope="session")
def mesh3():
    return build_mesh(3)


ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
