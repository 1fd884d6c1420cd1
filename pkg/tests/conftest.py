import numpy as np
import pytest

from plaplab import make_grid


@pytest.fixture(scope="session")
def grid17():
    return make_grid(2, [17, 17], [1.0, 1.0])


@pytest.fixture(scope="session")
def grid33():
    return make_grid(2, [33, 33], [1.0, 1.0])


@pytest.fixture(scope="session")
def grid65():
    return make_grid(2, [65, 65], [1.0, 1.0])


@pytest.fixture(scope="session")
def grid3d():
    return make_grid(3, [13, 13, 13], [1.0, 1.0, 1.0])


def sinsin(amplitude=1.0):
    def fn(*xs):
        out = amplitude
        for x in xs:
            out = out * np.sin(np.pi * x)
        return out

    return fn
