import numpy as np
import pytest

from dispersion_lab.field import Field
from dispersion_lab.multipliers import DispersionSymbol
from dispersion_lab.nonlinearity import parse_nonlinearity

KDV5 = "-20*u1*u2 - 10*u0*u3 - 3*u0^2*u1"
N1 = "2*u2*u1^2"
N2 = "u2^2*u0"
POROUS3 = "3*u0^2*u2 + 6*u0*u1^2"


@pytest.fixture
def quintic():
    return DispersionSymbol.pure(2)


@pytest.fixture
def n1():
    return parse_nonlinearity(N1)


@pytest.fixture
def kdv5():
    return parse_nonlinearity(KDV5)


def assert_conjugate_symmetric(f: Field):
    ks, vals = f.full_spectrum()
    np.testing.assert_array_equal(vals, np.conj(vals[::-1]))
    assert f.coeffs[0].imag == 0.0
