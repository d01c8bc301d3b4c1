import numpy as np
import pytest

from gsustat import validate_genotypes, validate_phenotypes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_genotypes(n, m, rng, maf_low=0.05, maf_high=0.4):
    mafs = rng.uniform(maf_low, maf_high, size=m)
    return validate_genotypes(rng.binomial(2, mafs, size=(n, m)).astype(float))


def random_phenotypes(n, l, rng):
    return validate_phenotypes(rng.normal(size=(n, l)))


@pytest.fixture
def small_genotypes(rng):
    return random_genotypes(12, 6, rng)


@pytest.fixture
def small_phenotypes(rng):
    return random_phenotypes(12, 2, rng)
