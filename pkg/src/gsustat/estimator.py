"""Scikit-learn style front end for the association test.

The estimator wraps validation, kernel construction, and inference behind
``fit``; fitted attributes carry the statistic, p-value, and diagnostics.
``get_params``/``set_params`` come from ``BaseEstimator`` so the test
composes with parameter sweeps and pipelines.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .data import GenotypeMatrix, PhenotypeMatrix, validate_genotypes, validate_phenotypes
from .kernels import KernelConfig
from .nulldist import PValueOptions, test_association


class GSUTest(BaseEstimator):
    """Similarity-based association test between genotypes and phenotypes.

    Parameters
    ----------
    kernel_geno : {"lk", "ibs", "wibs"}
        Genotype similarity: bounded L1-exponential, allele sharing, or
        weighted allele sharing.
    kernel_pheno : {"laplacian", "laplacian_correlated", "gaussian", "cross_product"}
        Phenotype similarity.
    variant_weights : {"maf", "sd", "uniform"} or array-like
        Per-variant weights for the weighted genotype kernels.
    pheno_weights : array-like, optional
        Per-variable phenotype weights (default equal).
    gamma : array-like, optional
        Coupling matrix for the correlated Laplacian kernel.
    rank_transform : bool
        Rank-transform each phenotype variable first.
    standardize_cross : bool
        Column-standardize before the cross-product kernel.
    method : {"auto", "davies", "liu", "saddlepoint", "permutation"}
    permutations : int
        Replicates for the permutation method.
    davies_accuracy, prune_rel_tol, max_coefficients, seed
        Passed through to the p-value machinery.

    Attributes
    ----------
    statistic_ : float
        Scaled adjusted statistic n * V.
    p_value_ : float
    u_gamma_ : float
        Scale-invariant similarity correlation.
    method_ : str
        Method that produced the p-value.
    result_ : TestResult
        Full result record.

    Examples
    --------
    >>> test = GSUTest(seed=1).fit(genotypes, phenotypes)   # doctest: +SKIP
    >>> test.p_value_                                        # doctest: +SKIP
    """

    _GENO = {"lk": "lk_genotype", "ibs": "ibs", "wibs": "weighted_ibs"}

    def __init__(self, kernel_geno="lk", kernel_pheno="laplacian",
                 variant_weights="maf", pheno_weights=None, gamma=None,
                 rank_transform=False, standardize_cross=False, method="auto",
                 permutations=0, davies_accuracy=1e-9, prune_rel_tol=1e-8,
                 max_coefficients=None, seed=0):
        self.kernel_geno = kernel_geno
        self.kernel_pheno = kernel_pheno
        self.variant_weights = variant_weights
        self.pheno_weights = pheno_weights
        self.gamma = gamma
        self.rank_transform = rank_transform
        self.standardize_cross = standardize_cross
        self.method = method
        self.permutations = permutations
        self.davies_accuracy = davies_accuracy
        self.prune_rel_tol = prune_rel_tol
        self.max_coefficients = max_coefficients
        self.seed = seed

    def fit(self, G, y, covariates=None, variant_indices=None):
        """Run the test; G is an n x M allele-count matrix, y is n x L."""
        if self.kernel_geno not in self._GENO:
            raise ValueError(f"unknown genotype kernel {self.kernel_geno!r}")
        genotypes = G if isinstance(G, GenotypeMatrix) else validate_genotypes(
            np.asarray(G, dtype=float))
        phenotypes = y if isinstance(y, PhenotypeMatrix) else validate_phenotypes(
            np.asarray(y, dtype=float), weights=self.pheno_weights)

        geno_config = KernelConfig(kind=self._GENO[self.kernel_geno],
                                   variant_weights=self.variant_weights)
        pheno_config = KernelConfig(kind=self.kernel_pheno,
                                    gamma_matrix=self.gamma,
                                    rank_transform=self.rank_transform,
                                    standardize=self.standardize_cross)
        options = PValueOptions(method=self.method,
                                davies_accuracy=self.davies_accuracy,
                                prune_rel_tol=self.prune_rel_tol,
                                permutations=self.permutations,
                                seed=self.seed,
                                max_coefficients=self.max_coefficients)
        result = test_association(genotypes, phenotypes, covariates,
                                  variant_indices=variant_indices,
                                  geno_config=geno_config,
                                  pheno_config=pheno_config, options=options)
        self.result_ = result
        self.statistic_ = result.statistic
        self.p_value_ = result.p_value
        self.u_gamma_ = result.u_gamma
        self.method_ = result.method
        self.n_eigen_kept_ = result.n_eigen_kept
        return self

    def score(self, G=None, y=None):
        """Negative log10 p-value of the fitted test (larger = stronger)."""
        if not hasattr(self, "p_value_"):
            raise AttributeError("call fit first")
        return float(-np.log10(max(self.p_value_, 1e-300)))
