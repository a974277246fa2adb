import numpy as np
import pytest

from stopgame.demos import BUILTIN_NAMES, builtin_model
from stopgame.solver import solve_zachrisson


@pytest.fixture(scope="session", autouse=True)
def _warm_backend():
    """Trigger kernel JIT/caching once, outside any timed test region."""
    solve_zachrisson(builtin_model("const_g"), 2, substeps=2)


@pytest.fixture(scope="session")
def demo_models():
    return {name: builtin_model(name) for name in BUILTIN_NAMES}


@pytest.fixture(scope="session")
def tsg_model():
    return builtin_model("two_state_game")


@pytest.fixture(scope="session")
def tsg_grids(tsg_model):
    """two_state_game solves at nested resolutions, shared across tests."""
    return {n: solve_zachrisson(tsg_model, n, substeps=8)
            for n in (100, 200, 400)}


@pytest.fixture(scope="session")
def tsg_diffs(tsg_grids):
    """Sup-norm differences between consecutive nested solves."""
    out = {}
    for na, nb in ((100, 200), (200, 400)):
        r = nb // na
        out[(na, nb)] = float(np.max(np.abs(
            tsg_grids[na].values - tsg_grids[nb].values[::r])))
    return out
