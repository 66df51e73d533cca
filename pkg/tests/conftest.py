import numpy as np
import pytest

from bloomsim.core import default_params


@pytest.fixture
def params_case1():
    """Extinction regime without hypolimnion phosphorus (R0 = 0)."""
    return default_params(r=0.7, P_h=0.0)


@pytest.fixture
def params_case2():
    """Subthreshold regime: R0 just below one."""
    return default_params(r=0.7, P_h=0.2)


@pytest.fixture
def params_case3():
    """Persistent regime: R0 above one, positive equilibrium exists."""
    return default_params(r=1.0, P_h=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
