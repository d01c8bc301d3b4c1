"""Similarity-based association testing with weighted U statistics.

The test measures concordance between a response similarity matrix and a
predictor similarity matrix: under independence the scaled statistic
follows a weighted chi-square mixture built from the two eigen-spectra,
under association it is asymptotically normal, which yields power and
sample-size formulas.  Bounded L1-exponential kernels make the test valid
for heavy-tailed, discrete, and mixed multivariate responses.
"""

from .data import (
    CovariateMatrix,
    GenotypeMatrix,
    PhenotypeMatrix,
    SimilarityMatrix,
    TestResult,
    VariantInfo,
    VariantSet,
    validate_covariates,
    validate_genotypes,
    validate_phenotypes,
)
from .estimator import GSUTest
from .kernels import (
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
    weighted_ibs_genotype,
)
from .nulldist import (
    NullSpectrum,
    PValueOptions,
    mixture_pvalue,
    null_spectrum,
    permutation_pvalue,
    prepare_response_side,
    test_association,
)
from .power import (
    PowerParams,
    asymptotic_power,
    estimate_effect_params,
    null_quantile,
    required_sample_size,
)
from .quadform import davies_pvalue, liu_pvalue, qfc, saddlepoint_pvalue
from .scan import (
    GeneRange,
    ScanConfig,
    group_variants,
    load_genotype_file,
    load_phenotype_file,
    run_scan,
)
from .simulate import (
    ExperimentDesign,
    PhenoModel,
    default_panel,
    run_experiment,
    sample_effects,
    simulate_panel,
    simulate_phenotype,
)
from .ustat import (
    ProjectionContext,
    adjusted_v_statistic,
    center_similarity,
    covariate_adjust,
    gsu_correlation,
    gsu_statistic,
    zero_diagonal,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
