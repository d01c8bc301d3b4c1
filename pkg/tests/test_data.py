import numpy as np
import pytest

from gsustat import (
    SimilarityMatrix,
    validate_covariates,
    validate_genotypes,
    validate_phenotypes,
)
from gsustat import TestResult as AssociationResult
from gsustat.exceptions import (
    BadWeight,
    ColumnUnusable,
    MissingPhenotype,
    SampleTooSmall,
    SingularDesign,
)


class TestValidateGenotypes:
    def test_plain_maf(self):
        g = validate_genotypes(np.array([[0.0], [0.0], [1.0], [1.0]]))
        assert g.mafs[0] == pytest.approx(0.25)

    def test_monomorphic_column_flips_and_flags(self):
        g = validate_genotypes(np.array([[2.0], [2.0], [2.0], [2.0]]))
        assert np.all(g.values[:, 0] == 0.0)
        assert g.mafs[0] == 0.0
        assert g.monomorphic[0]

    def test_mean_imputation_matches_observed_mean(self):
        # oracle: imputed value is the average of the observed entries
        raw = np.array([[0.0], [np.nan], [2.0], [0.0]])
        observed_mean = np.nanmean(raw[:, 0])
        g = validate_genotypes(raw)
        assert g.values[1, 0] == pytest.approx(observed_mean)
        assert g.values[1, 0] == pytest.approx(2.0 / 3.0)
        assert g.mafs[0] == pytest.approx(1.0 / 3.0)

    def test_orientation_flips_major_coding(self):
        raw = np.array([[2.0, 0.0], [2.0, 1.0], [1.0, 0.0], [2.0, 0.0]])
        g = validate_genotypes(raw)
        assert np.all(g.mafs <= 0.5)
        np.testing.assert_allclose(g.values[:, 0], [0.0, 0.0, 1.0, 0.0])

    def test_orientation_idempotent(self, rng):
        raw = rng.binomial(2, rng.uniform(0.1, 0.9, size=7), size=(20, 7)).astype(float)
        raw[rng.uniform(size=raw.shape) < 0.1] = np.nan
        once = validate_genotypes(raw)
        twice = validate_genotypes(once.values)
        np.testing.assert_array_equal(once.values, twice.values)
        np.testing.assert_array_equal(once.mafs, twice.mafs)

    def test_recomputed_mafs_match(self, rng):
        raw = rng.binomial(2, 0.3, size=(15, 4)).astype(float)
        raw[2, 1] = np.nan
        g = validate_genotypes(raw)
        np.testing.assert_allclose(g.values.mean(axis=0) / 2.0, g.mafs,
                                   atol=1e-12)

    def test_too_few_subjects(self):
        with pytest.raises(SampleTooSmall):
            validate_genotypes(np.zeros((2, 1)))

    def test_all_missing_column(self):
        raw = np.array([[0.0, np.nan], [1.0, np.nan], [0.0, np.nan]])
        with pytest.raises(ColumnUnusable) as err:
            validate_genotypes(raw)
        assert err.value.index == 1


class TestValidatePhenotypes:
    def test_default_equal_weights(self, rng):
        p = validate_phenotypes(rng.normal(size=(6, 4)))
        np.testing.assert_allclose(p.weights, 0.25)

    def test_weight_renormalization(self, rng):
        p = validate_phenotypes(rng.normal(size=(6, 2)), weights=[2.0, 2.0])
        np.testing.assert_allclose(p.weights, [0.5, 0.5])

    def test_negative_weight_rejected(self, rng):
        with pytest.raises(BadWeight):
            validate_phenotypes(rng.normal(size=(6, 2)), weights=[1.0, -1.0])

    def test_missing_entry_rejected(self):
        raw = np.array([[1.0, 2.0], [np.nan, 0.0], [0.5, 0.5]])
        with pytest.raises(MissingPhenotype) as err:
            validate_phenotypes(raw)
        assert (err.value.row, err.value.col) == (1, 0)


class TestCovariates:
    def test_intercept_only(self):
        c = validate_covariates(None, n=5)
        assert c.p_user == 0
        np.testing.assert_array_equal(c.values, np.ones((5, 1)))

    def test_intercept_prepended(self, rng):
        x = rng.normal(size=(10, 3))
        c = validate_covariates(x)
        assert c.p_user == 3
        np.testing.assert_array_equal(c.values[:, 0], 1.0)
        np.testing.assert_array_equal(c.values[:, 1:], x)

    def test_collinear_rejected(self, rng):
        x = rng.normal(size=(10, 1))
        with pytest.raises(SingularDesign):
            validate_covariates(np.hstack([x, 2.0 * x]))


class TestSimilarityMatrix:
    def test_asymmetric_rejected(self):
        bad = np.array([[1.0, 0.2], [0.4, 1.0]])
        with pytest.raises(ValueError):
            SimilarityMatrix(values=bad, state="raw")

    def test_bounded_raw_needs_unit_diagonal(self):
        bad = np.array([[0.9, 0.2], [0.2, 1.0]])
        with pytest.raises(ValueError):
            SimilarityMatrix(values=bad, state="raw", bounded=True)
        # unbounded kinds are exempt
        SimilarityMatrix(values=bad, state="raw", bounded=False)

    def test_centered_row_sums_enforced(self):
        with pytest.raises(ValueError):
            SimilarityMatrix(values=np.eye(3), state="centered")

    def test_immutability(self):
        s = SimilarityMatrix(values=np.eye(3), state="raw")
        with pytest.raises(ValueError):
            s.values[0, 0] = 2.0


class TestResultRecord:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            AssociationResult(set_name="x", set_size=1, statistic=0.0,
                              u_gamma=0.0, p_value=1.5, method="davies",
                              n_eigen_kept=(1, 1), diagnostics={})
        with pytest.raises(ValueError):
            AssociationResult(set_name="x", set_size=1, statistic=0.0,
                              u_gamma=-2.0, p_value=0.5, method="davies",
                              n_eigen_kept=(1, 1), diagnostics={})
