import numpy as np
import pytest

from hetune.hecore import make_scheme, preset


@pytest.fixture(scope="session")
def fast_params():
    return preset("fast")


@pytest.fixture(scope="session", params=["reference", "rlwe"])
def he(request, fast_params):
    """(scheme, keys, evaluator, rng, tolerance) for each backend."""
    scheme = make_scheme(request.param, fast_params)
    rng = np.random.default_rng(7)
    keys = scheme.keygen(rng)
    tol = 1e-6 if request.param == "reference" else 1e-3
    return scheme, keys, scheme.evaluator(keys.public()), rng, tol
