import numpy as np
import pytest

from anosov_lab.actions import AbelianLinearAction, IntegerMatrix

CAT = ((2, 1), (1, 1))
C3 = ((0, 1, 0), (0, 0, 1), (1, 2, -1))
U3 = ((-2, 0, 1), (1, 0, -1), (-1, -1, 1))
PSI_DIRECTION = np.array([0.3, -0.5, 0.7]) / np.linalg.norm([0.3, -0.5, 0.7])
PSI_FREQUENCY = (1, 1, 0)


@pytest.fixture(scope="session")
def cat_action():
    return AbelianLinearAction((CAT,))


@pytest.fixture(scope="session")
def torus3_action():
    return AbelianLinearAction((C3, U3))


@pytest.fixture(scope="session")
def cat_spec(cat_action):
    from anosov_lab.spectrum import compute_spectrum
    return compute_spectrum(cat_action)


@pytest.fixture(scope="session")
def torus3_spec(torus3_action):
    from anosov_lab.spectrum import compute_spectrum
    return compute_spectrum(torus3_action)


@pytest.fixture(scope="session")
def psi_poly():
    from anosov_lab.conjugacy.maps import TrigPolynomial
    return TrigPolynomial(3, [(PSI_FREQUENCY, 0.01 * PSI_DIRECTION, "sin")])


@pytest.fixture(scope="session")
def conjugated3(torus3_action, psi_poly):
    from anosov_lab.conjugacy.maps import conjugated_action
    return conjugated_action(torus3_action, psi_poly)


def matrix(rows):
    return IntegerMatrix(tuple(tuple(r) for r in rows))
