import pytest

from robustutil import _kernels
from robustutil.market import LognormalSpec, gauss_hermite_market
from robustutil.utility import UtilityFunction
from robustutil.verifier import BSOracle, bs_instance


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile every JIT kernel once so per-test timings measure numerics
    _kernels.warm_up()


@pytest.fixture(scope="session")
def uf_half():
    return UtilityFunction.power(0.5)


@pytest.fixture(scope="session")
def bs_oracle():
    return BSOracle(sigma=0.5, T=1.0, A=1.1, x=1.0)


@pytest.fixture(scope="session")
def bs64(bs_oracle):
    """(market, constraints) for the anchor lognormal instance, 64 nodes."""
    return bs_instance(bs_oracle, nodes=64)


@pytest.fixture(scope="session")
def gh_market16():
    return gauss_hermite_market(LognormalSpec(sigma=0.5, T=1.0, nodes=16))
