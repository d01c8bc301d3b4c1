import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gsustat import (
    KernelConfig,
    cross_product_phenotype,
    gaussian_phenotype,
    genotype_similarity,
    ibs_genotype,
    laplacian_correlated_phenotype,
    laplacian_phenotype,
    lk_genotype,
    maf_weights,
    phenotype_similarity,
    rank_transform,
    sd_weights,
    validate_genotypes,
    validate_phenotypes,
    weighted_ibs_genotype,
)
from gsustat.exceptions import BadWeight, DegenerateWeights, GammaSingular
from gsustat.kernels import default_gamma

from conftest import random_genotypes, random_phenotypes


def pheno(values, weights=None):
    return validate_phenotypes(np.asarray(values, dtype=float), weights=weights)


class TestLaplacian:
    def test_identical_rows_give_one(self):
        y = pheno([[1.5, -2.0], [1.5, -2.0], [0.0, 0.0]])
        assert laplacian_phenotype(y).values[0, 1] == 1.0

    def test_log2_distance(self):
        y = pheno([[0.0], [np.log(2.0)]])
        assert laplacian_phenotype(y).values[0, 1] == pytest.approx(0.5)

    def test_two_variable_formula(self):
        y = pheno([[0.0, 0.0], [2.0, 4.0]], weights=[0.5, 0.5])
        assert laplacian_phenotype(y).values[0, 1] == pytest.approx(
            np.exp(-3.0), rel=1e-12)

    def test_univariate_monotone_in_distance(self):
        y = pheno([[0.0], [0.5], [3.0]])
        s = laplacian_phenotype(y).values
        assert s[0, 1] > s[0, 2]


class TestLaplacianCorrelated:
    def test_identical_rows_give_one(self):
        y = pheno([[2.0, 1.0], [2.0, 1.0]])
        s = laplacian_correlated_phenotype(y, np.eye(2))
        assert s.values[0, 1] == 1.0

    def test_scalar_case_reduces_to_plain_distance(self):
        # d = |dy|^0.5, so d' G d = |dy| for scalar gamma 1
        y = pheno([[0.0], [4.0]])
        s = laplacian_correlated_phenotype(y, np.array([[1.0]]))
        assert s.values[0, 1] == pytest.approx(np.exp(-4.0), rel=1e-12)

    def test_auto_gamma_near_identity_for_whitened_data(self):
        # frozen Monte Carlo draw; oracle below recomputes the inverse root
        rng = np.random.default_rng(3)
        y = validate_phenotypes(rng.normal(size=(200, 2)))
        gamma = default_gamma(y)
        assert np.abs(gamma - np.eye(2)).max() < 0.1
        auto = laplacian_correlated_phenotype(y)
        fixed = laplacian_correlated_phenotype(y, np.eye(2))
        assert np.abs(auto.values - fixed.values).max() < 0.05

    def test_auto_gamma_matches_inverse_root_oracle(self, rng):
        y = random_phenotypes(60, 3, rng)
        moment = y.values.T @ y.values / 60.0
        oracle = np.linalg.inv(scipy.linalg.sqrtm(moment).real)
        np.testing.assert_allclose(default_gamma(y), oracle, atol=1e-8)

    def test_singular_moment_matrix_rejected(self, rng):
        base = rng.normal(size=(30, 1))
        y = validate_phenotypes(np.hstack([base, 2.0 * base]))
        with pytest.raises(GammaSingular):
            laplacian_correlated_phenotype(y)

    def test_non_psd_gamma_rejected(self, rng):
        y = random_phenotypes(10, 2, rng)
        with pytest.raises(ValueError):
            laplacian_correlated_phenotype(y, np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestGaussian:
    def test_identical_rows(self):
        y = pheno([[1.0], [1.0]])
        assert gaussian_phenotype(y).values[0, 1] == 1.0

    def test_unit_distance(self):
        y = pheno([[0.0], [1.0]])
        assert gaussian_phenotype(y).values[0, 1] == pytest.approx(np.exp(-1.0))

    def test_weighted_two_variables(self):
        y = pheno([[0.0, 0.0], [1.0, 1.0]], weights=[0.5, 0.5])
        assert gaussian_phenotype(y).values[0, 1] == pytest.approx(np.exp(-1.0))


class TestCrossProduct:
    def test_orthogonal_rows(self):
        s = cross_product_phenotype(pheno([[1.0, 0.0], [0.0, 1.0]]))
        assert s.values[0, 1] == 0.0

    def test_diagonal_is_squared_norm(self):
        s = cross_product_phenotype(pheno([[3.0, 4.0], [0.0, 1.0]]))
        assert s.values[0, 0] == pytest.approx(25.0)

    def test_identity_rows_give_identity_gram(self):
        s = cross_product_phenotype(pheno(np.eye(4)))
        np.testing.assert_allclose(s.values, np.eye(4))

    def test_standardized_columns(self, rng):
        y = random_phenotypes(40, 2, rng)
        s = cross_product_phenotype(y, standardize=True)
        z = (y.values - y.values.mean(0)) / y.values.std(0)
        np.testing.assert_allclose(s.values, z @ z.T, atol=1e-10)


class TestGenotypeKernels:
    def test_ibs_identical_rows(self, small_genotypes):
        s = ibs_genotype(small_genotypes)
        np.testing.assert_allclose(np.diag(s.values), 1.0)

    def test_ibs_maximal_dissimilarity(self):
        g = validate_genotypes(np.array([[0.0, 0.0], [2.0, 2.0], [0.0, 2.0]]))
        assert ibs_genotype(g).values[0, 1] == 0.0

    def test_ibs_direct_formula(self):
        g = validate_genotypes(
            np.array([[0.0, 1.0, 2.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]))
        # (2-1) + (2-0) + (2-2) over 2*3
        assert ibs_genotype(g).values[0, 1] == pytest.approx(0.5)

    def test_weighted_ibs_formula(self):
        g = validate_genotypes(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 2.0]]))
        s = weighted_ibs_genotype(g, [0, 1], np.array([1.0, 3.0]))
        assert s.values[0, 1] == pytest.approx(0.875)

    def test_weighted_ibs_equals_ibs_for_unit_weights(self, small_genotypes):
        a = ibs_genotype(small_genotypes).values
        b = weighted_ibs_genotype(small_genotypes, None,
                                  np.ones(small_genotypes.n_variants)).values
        np.testing.assert_array_equal(a, b)

    def test_weighted_ibs_constant_weights_cancel(self, small_genotypes):
        # power-of-two weight keeps every intermediate rounding identical
        a = ibs_genotype(small_genotypes).values
        b = weighted_ibs_genotype(small_genotypes, None,
                                  np.full(small_genotypes.n_variants, 2.0)).values
        np.testing.assert_array_equal(a, b)

    def test_lk_single_variant(self):
        g = validate_genotypes(np.array([[0.0], [2.0], [1.0]]))
        assert lk_genotype(g).values[0, 1] == pytest.approx(np.exp(-2.0))

    def test_lk_two_variants_unit_weights(self):
        g = validate_genotypes(np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]))
        assert lk_genotype(g).values[0, 1] == pytest.approx(np.exp(-1.0))

    def test_lk_identical_rows(self):
        g = validate_genotypes(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]))
        assert lk_genotype(g).values[0, 1] == 1.0

    def test_zero_weights_rejected(self, small_genotypes):
        with pytest.raises(DegenerateWeights):
            lk_genotype(small_genotypes, None,
                        np.zeros(small_genotypes.n_variants))


class TestVariantWeights:
    def test_maf_half(self):
        g = validate_genotypes(np.array([[0.0], [1.0], [2.0], [1.0]]))
        assert maf_weights(g)[0] == pytest.approx(2.0)

    def test_maf_point_one(self):
        g = validate_genotypes(np.array([[0.0]] * 9 + [[2.0]]))
        assert g.mafs[0] == pytest.approx(0.1)
        assert maf_weights(g)[0] == pytest.approx(1.0 / 0.3)

    def test_monomorphic_weight_zero(self):
        g = validate_genotypes(np.array([[0.0, 1.0]] * 4))
        w = maf_weights(g)
        assert w[0] == 0.0 and w[1] > 0.0
        # and the variant contributes nothing to the kernel
        s = lk_genotype(g, None, w)
        np.testing.assert_allclose(s.values, 1.0)

    def test_sd_weights_positive(self, small_genotypes):
        assert np.all(sd_weights(small_genotypes) > 0)

    def test_bad_explicit_weights(self, small_genotypes):
        from gsustat.kernels import resolve_variant_weights
        with pytest.raises(BadWeight):
            resolve_variant_weights(small_genotypes, None,
                                    [-1.0] * small_genotypes.n_variants)


class TestRankTransform:
    def test_simple_column(self):
        y = rank_transform(pheno([[3.2], [-1.0], [7.0]]))
        np.testing.assert_allclose(y.values[:, 0],
                                   [0.5, 1.0 / 6.0, 5.0 / 6.0])

    def test_constant_column_all_half(self):
        y = rank_transform(pheno([[2.0], [2.0], [2.0], [2.0]]))
        np.testing.assert_allclose(y.values[:, 0], 0.5)

    def test_average_ranks_for_ties(self):
        y = rank_transform(pheno([[1.0], [1.0], [2.0]]))
        np.testing.assert_allclose(y.values[:, 0],
                                   [1.0 / 3.0, 1.0 / 3.0, 5.0 / 6.0])

    def test_values_in_open_unit_interval(self, rng):
        y = rank_transform(random_phenotypes(25, 3, rng))
        assert y.values.min() > 0.0 and y.values.max() < 1.0


BOUNDED_BUILDERS = [
    lambda g, y: laplacian_phenotype(y),
    lambda g, y: gaussian_phenotype(y),
    lambda g, y: laplacian_correlated_phenotype(y, np.eye(y.n_variables)),
    lambda g, y: ibs_genotype(g),
    lambda g, y: lk_genotype(g, None, maf_weights(g)),
    lambda g, y: weighted_ibs_genotype(g, None, maf_weights(g)),
]


@pytest.mark.parametrize("build", BOUNDED_BUILDERS)
def test_bounded_kernels_bounds_and_psd(build, rng):
    g = random_genotypes(18, 5, rng)
    y = random_phenotypes(18, 2, rng)
    s = build(g, y)
    v = s.values
    assert v.min() >= 0.0 and v.max() <= 1.0
    np.testing.assert_array_equal(np.diag(v), 1.0)
    np.testing.assert_array_equal(v, v.T)
    eigs = np.linalg.eigvalsh(v)
    assert eigs.min() >= -1e-8 * np.trace(v)


@pytest.mark.parametrize("build", BOUNDED_BUILDERS)
def test_permutation_equivariance(build, rng):
    g = random_genotypes(14, 4, rng)
    y = random_phenotypes(14, 2, rng)
    s = build(g, y).values
    perm = rng.permutation(14)
    from gsustat.data import GenotypeMatrix, PhenotypeMatrix
    gp = GenotypeMatrix(values=g.values[perm], variants=g.variants,
                        mafs=g.mafs, monomorphic=g.monomorphic)
    yp = PhenotypeMatrix(values=y.values[perm], weights=y.weights)
    sp = build(gp, yp).values
    np.testing.assert_allclose(sp, s[np.ix_(perm, perm)], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.int8, shape=st.tuples(st.integers(4, 10), st.integers(1, 5)),
                  elements=st.integers(0, 2)))
def test_ibs_bounds_property(raw):
    g = validate_genotypes(raw.astype(float))
    v = ibs_genotype(g).values
    assert v.min() >= -1e-15 and v.max() <= 1.0 + 1e-15
    np.testing.assert_array_equal(v, v.T)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50.0, 50.0), min_size=2, max_size=12, unique=True))
def test_laplacian_univariate_monotone_property(values):
    y = pheno(np.asarray(values).reshape(-1, 1))
    s = laplacian_phenotype(y).values
    d = np.abs(y.values - y.values.T)
    i, j, k = 0, 1, len(values) - 1
    if d[i, j] < d[i, k]:
        assert s[i, j] > s[i, k]
    elif d[i, j] > d[i, k]:
        assert s[i, j] < s[i, k]


class TestDispatch:
    def test_phenotype_dispatch(self, small_phenotypes):
        s = phenotype_similarity(small_phenotypes, KernelConfig(kind="laplacian"))
        assert s.bounded
        s = phenotype_similarity(small_phenotypes,
                                 KernelConfig(kind="cross_product"))
        assert not s.bounded

    def test_rank_transform_applied(self, small_phenotypes):
        direct = laplacian_phenotype(rank_transform(small_phenotypes))
        via = phenotype_similarity(
            small_phenotypes, KernelConfig(kind="laplacian", rank_transform=True))
        np.testing.assert_array_equal(direct.values, via.values)

    def test_genotype_dispatch_subset(self, small_genotypes):
        s = genotype_similarity(small_genotypes, [0, 2],
                                KernelConfig(kind="lk_genotype"))
        assert s.n == small_genotypes.n_subjects

    def test_wrong_kind_rejected(self, small_genotypes, small_phenotypes):
        with pytest.raises(ValueError):
            genotype_similarity(small_genotypes, None,
                                KernelConfig(kind="laplacian"))
        with pytest.raises(ValueError):
            phenotype_similarity(small_phenotypes, KernelConfig(kind="ibs"))
