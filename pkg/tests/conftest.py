import numpy as np
import pytest

from policyforest.data import Dataset


def make_observational(n, p, seed, effect_fn, noise_sd=1.0, propensity=0.5):
    """Small hand-rolled confounded sample with known effect, for tree tests."""
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.standard_normal((n, p))
    if callable(propensity):
        e = propensity(x)
    else:
        e = np.full(n, propensity)
    d = (rng.random(n) < e).astype(np.int64)
    tau = effect_fn(x)
    y = 0.3 * x[:, -1] + d * tau + noise_sd * rng.standard_normal(n)
    return Dataset(covariates=x, treatments=d, outcomes=y), tau, e


@pytest.fixture(scope="session")
def boundary_dataset():
    """2-d sample whose effect changes sign across x0 = 0."""
    ds, tau, _ = make_observational(
        1200, 2, seed=2024, effect_fn=lambda x: np.sign(x[:, 0]), noise_sd=0.5
    )
    return ds, tau
