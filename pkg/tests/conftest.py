import warnings

import pytest

from isingperc import activation as act
from isingperc import amp as amp_mod
from isingperc import rs as rs_mod
from isingperc import sevol
from isingperc.quadrature import gauss_hermite


@pytest.fixture(scope="session")
def rule():
    return gauss_hermite()


@pytest.fixture(scope="session")
def halfspace_spec():
    return act.halfspace(0.0)


@pytest.fixture(scope="session")
def sol001(halfspace_spec, rule):
    return rs_mod.solve_fixed_point(halfspace_spec, 0.01, rule=rule)


@pytest.fixture(scope="session")
def se6(halfspace_spec, sol001, rule):
    return sevol.se_run(halfspace_spec, sol001, t_max=6, eps_conv=0.0,
                        rule=rule)


@pytest.fixture(scope="session")
def trace2000(halfspace_spec, sol001, rule, se6):
    return amp_mod.amp_run(halfspace_spec, sol001, N=2000, t_max=6, seed=7,
                           rule=rule, se=se6)


@pytest.fixture(scope="session")
def trace4000(halfspace_spec, sol001, rule, se6):
    return amp_mod.amp_run(halfspace_spec, sol001, N=4000, t_max=6, seed=7,
                           rule=rule, se=se6)


@pytest.fixture(scope="session")
def sol01_wide(halfspace_spec, rule):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return rs_mod.solve_fixed_point(halfspace_spec, 0.1, q_max=0.25,
                                        rule=rule)
