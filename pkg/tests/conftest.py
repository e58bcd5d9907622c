import math

import pytest

from pooldec.design import DesignParams, build_design, c_min, stream
from pooldec.signal import measure, sample_signal


class Instance:
    """A design together with one sampled signal and its measurements."""

    def __init__(self, params: DesignParams):
        self.params = params
        self.design = build_design(params)
        self.derived = self.design.derived
        self.signal = sample_signal(params, self.design, stream(params.rng_seed, 1))
        self.y = measure(self.design, self.signal)


def desk_params(seed: int = 0, mult: float = 1.2) -> DesignParams:
    """n = 1e5, k = 316 (theta close to 1/2), c a multiple of c_min."""
    n, k = 100_000, 316
    theta = math.log(k) / math.log(n)
    return DesignParams(n=n, counts=(k,), c=mult * c_min(theta, 1.0, 0.05), rng_seed=seed)


@pytest.fixture(scope="session")
def small():
    return Instance(DesignParams(n=2000, counts=(30, 15), c=30, rng_seed=3))


@pytest.fixture(scope="session")
def desk():
    return Instance(desk_params(seed=11))
