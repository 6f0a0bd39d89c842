import math

import numpy as np
import pytest

from rdpi.control import build_certificate
from rdpi.model import build_truncated_model
from rdpi.sim import design, disturbance_scenario, reference_scenario, simulate
from rdpi.spectral import ReactionProfile, compute_basis, mode_coefficients


@pytest.fixture(scope="session")
def section6():
    """Basis, coefficients, model and certificate of the c = 1.25, L = 2 pi plant."""
    basis = compute_basis(ReactionProfile.constant(1.25, 2 * math.pi), 16)
    coeffs = mode_coefficients(basis)
    model, tail = build_truncated_model(basis, coeffs)
    cert = build_certificate(model, basis, coeffs, 1.0, (-0.5, -0.6, -0.7, -0.8))
    return dict(basis=basis, coeffs=coeffs, model=model, tail=tail, cert=cert)


@pytest.fixture(scope="session")
def reference_run():
    sc = reference_scenario()
    d = design(sc)
    return sc, d, simulate(sc, d.cert, d.model, d.basis)


@pytest.fixture(scope="session")
def disturbance_run():
    sc = disturbance_scenario()
    d = design(sc)
    return sc, d, simulate(sc, d.cert, d.model, d.basis)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
