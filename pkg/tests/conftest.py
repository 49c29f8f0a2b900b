import numpy as np
import pytest

from asynccap import Channel


@pytest.fixture(scope="session")
def fig3():
    return Channel(np.array([[0.9, 0.1], [0.1, 0.9]]), star=0)


@pytest.fixture(scope="session")
def fig4():
    return Channel(np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]]), star=2)


@pytest.fixture(scope="session")
def zchannel():
    return Channel(np.array([[1.0, 0.0], [0.5, 0.5]]), star=0)
