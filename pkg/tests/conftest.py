import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from heckevirt.arith_core import identity, normalize  # noqa: E402
from heckevirt.dseries_kernel import QuadratureSpec  # noqa: E402
from heckevirt.hecke_assembly import build_basis  # noqa: E402


@pytest.fixture(scope="session")
def q():
    return QuadratureSpec()


@pytest.fixture(scope="session")
def basis64(q):
    return build_basis(12, 64, q)


@pytest.fixture(scope="session")
def basis24(q):
    return build_basis(12, 24, q)


def el(a, b, c, d, p=2):
    return normalize([[a, b], [c, d]], p)


@pytest.fixture
def e2():
    return identity(2)
