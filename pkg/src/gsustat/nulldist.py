"""Null spectrum construction, p-value dispatch, and the full test pipeline.

Under independence the scaled statistic n * V follows a weighted sum of
independent chi-square variables whose coefficients are outer products of
the eigenvalues of the two adjusted similarity matrices times
1 / (n (n - P - 1)).  P-values come from characteristic-function inversion
(davies), moment matching (liu), a saddlepoint approximation, or subject
permutation.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import SimilarityMatrix, TestResult, validate_covariates
from .exceptions import DegenerateSpectrum, NumericalFailure
from .kernels import KernelConfig, genotype_similarity, phenotype_similarity
from .quadform import davies_pvalue, liu_pvalue, saddlepoint_pvalue
from .ustat import (
    ProjectionContext,
    adjusted_v_statistic,
    center_similarity,
    covariate_adjust,
    gsu_correlation,
    gsu_statistic,
    zero_diagonal,
)
from .exceptions import UndefinedCorrelation

PVALUE_METHODS = ("auto", "davies", "liu", "saddlepoint", "permutation")


@dataclass(frozen=True)
class PValueOptions:
    """How to turn the statistic and spectrum into a p-value."""

    method: str = "auto"
    davies_accuracy: float = 1e-9
    prune_rel_tol: float = 1e-8
    permutations: int = 0
    seed: int = 0
    #: cap on inversion terms; the small-coefficient tail is absorbed as a
    #: matched Gaussian.  None keeps every coefficient (exact error bound).
    max_coefficients: object = None

    def __post_init__(self):
        if self.method not in PVALUE_METHODS:
            raise ValueError(f"unknown p-value method {self.method!r}")
        if not (0.0 < self.davies_accuracy <= 1e-3):
            raise ValueError("davies_accuracy must lie in (0, 1e-3]")
        if self.permutations < 0:
            raise ValueError("permutation count must be non-negative")


@dataclass(frozen=True)
class NullSpectrum:
    """Eigenvalue lists and the flattened mixture coefficients."""

    lambda_hat: np.ndarray  # eigenvalues of the adjusted response similarity
    eta_hat: np.ndarray     # eigenvalues of the adjusted predictor similarity
    scale: float
    coefficients: np.ndarray

    @property
    def n_kept(self):
        return (int(self.lambda_hat.size), int(self.eta_hat.size))


def _pruned_eigvals(matrix, rel_tol):
    try:
        eig = np.linalg.eigvalsh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}")
    mags = np.abs(eig)
    top = mags.max(initial=0.0)
    kept = eig[mags >= rel_tol * top] if top > 0 else eig[:0]
    order = np.argsort(-np.abs(kept), kind="stable")
    return kept[order]


def _mixture_coefficients(eta, lam, scale, rel_tol):
    """Scaled, pruned, magnitude-ordered outer product of two spectra."""
    coeffs = (scale * np.outer(eta, lam)).ravel()
    top = np.abs(coeffs).max(initial=0.0)
    if top == 0.0:
        return coeffs[:0]
    coeffs = coeffs[np.abs(coeffs) >= rel_tol * top]
    return coeffs[np.argsort(-np.abs(coeffs), kind="stable")]


def null_spectrum(k_adjusted, s_adjusted, context, prune_rel_tol=1e-8):
    """Eigen-spectra of the adjusted similarities and their scaled products.

    Eigenvalues below ``prune_rel_tol`` times the dominant magnitude are
    discarded on each side, and again on the flattened coefficient list;
    a full n x n outer product would otherwise carry n^2 terms into every
    inversion call.

    Raises
    ------
    DegenerateSpectrum
        If either matrix has no eigenvalue above the pruning threshold.
    """
    if k_adjusted.state != "adjusted" or s_adjusted.state != "adjusted":
        raise ValueError("null_spectrum needs adjusted similarity matrices")
    if k_adjusted.context is not context or s_adjusted.context is not context:
        raise ValueError("adjusted matrices must share the projection context")
    lam = _pruned_eigvals(s_adjusted.values, prune_rel_tol)
    eta = _pruned_eigvals(k_adjusted.values, prune_rel_tol)
    if lam.size == 0 or eta.size == 0:
        raise DegenerateSpectrum("an adjusted similarity matrix is numerically zero")
    scale = context.dof_scale()
    coeffs = _mixture_coefficients(eta, lam, scale, prune_rel_tol)
    if coeffs.size == 0 or not np.any(coeffs):
        raise DegenerateSpectrum("all mixture coefficients pruned away")
    return NullSpectrum(lambda_hat=lam, eta_hat=eta, scale=scale,
                        coefficients=coeffs)


def mixture_pvalue(coefficients, q, options=PValueOptions()):
    """Evaluate P(sum c chi2_1 > q) with the configured method.

    ``auto`` tries the inversion first, then the saddlepoint when the
    inversion faults or cannot resolve the tail at its accuracy, then the
    moment match.  Returns (p_value, method_used).
    """
    method = options.method
    if method == "davies":
        return davies_pvalue(coefficients, q, acc=options.davies_accuracy,
                             max_terms=options.max_coefficients), "davies"
    if method == "liu":
        return liu_pvalue(coefficients, q), "liu"
    if method == "saddlepoint":
        return saddlepoint_pvalue(coefficients, q), "saddlepoint"
    try:
        p = davies_pvalue(coefficients, q, acc=options.davies_accuracy,
                          max_terms=options.max_coefficients)
        if p > 4.0 * options.davies_accuracy:
            return p, "davies"
    except NumericalFailure:
        pass
    try:
        return saddlepoint_pvalue(coefficients, q), "saddlepoint"
    except NumericalFailure:
        return liu_pvalue(coefficients, q), "liu"


def _rng_for(seed, index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(index,)))


def permutation_pvalue(k_similarity, s_similarity, permutations, seed=0):
    """Permutation tail probability of the off-diagonal statistic.

    Subject labels are permuted on the predictor side only (rows and columns
    jointly), the response side stays fixed.  Each replicate uses a
    counter-based stream keyed by (seed, replicate) so the result does not
    depend on evaluation order or worker count.  Ties count as exceedances,
    giving p = (1 + #{U_b >= U_obs}) / (B + 1).
    """
    if permutations < 100:
        raise ValueError("need at least 100 permutations")

    def to_zero_diag(sim):
        if sim.state == "raw":
            sim = zero_diagonal(center_similarity(sim))
        elif sim.state == "centered":
            sim = zero_diagonal(sim)
        elif sim.state != "zero_diagonal":
            raise ValueError(f"unsupported similarity state {sim.state!r}")
        return sim

    k0 = to_zero_diag(k_similarity)
    s0 = to_zero_diag(s_similarity)
    n = k0.n
    denom = n * (n - 1)
    kv, sv = k0.values, s0.values
    u_obs = float(np.vdot(kv, sv)) / denom
    exceed = 0
    for b in range(permutations):
        perm = _rng_for(seed, b).permutation(n)
        u_b = float(np.vdot(kv[np.ix_(perm, perm)], sv)) / denom
        if u_b >= u_obs:
            exceed += 1
    return (1.0 + exceed) / (permutations + 1.0)


@dataclass(frozen=True)
class ResponseSide:
    """Response-side matrices shared across many predictor sets in a scan."""

    centered0: SimilarityMatrix
    adjusted: SimilarityMatrix
    lambda_hat: np.ndarray
    context: ProjectionContext = field(compare=False)


def prepare_response_side(similarity, context, prune_rel_tol=1e-8):
    """Center, zero-diagonal, adjust, and decompose a raw response similarity."""
    s0 = zero_diagonal(center_similarity(similarity))
    s_adj = covariate_adjust(s0, context)
    lam = _pruned_eigvals(s_adj.values, prune_rel_tol)
    return ResponseSide(centered0=s0, adjusted=s_adj, lambda_hat=lam,
                        context=context)


def test_association(genotypes, phenotypes, covariates=None, *,
                     variant_indices=None,
                     geno_config=KernelConfig(kind="lk_genotype"),
                     pheno_config=KernelConfig(kind="laplacian"),
                     options=PValueOptions(),
                     set_name="set",
                     response_side=None,
                     context=None):
    """Run the full association pipeline for one variant set.

    kernels -> center -> zero diagonal -> covariate projection -> statistic
    -> spectrum -> p-value.  ``response_side``/``context`` allow a scan to
    compute the phenotype side once and share it across sets.  A degenerate
    spectrum (no variation on a side) yields p = 1 with a diagnostic flag
    rather than an error.
    """
    n = genotypes.n_subjects
    if phenotypes is not None and phenotypes.n_subjects != n:
        raise ValueError("genotypes and phenotypes disagree on sample size")

    if context is None:
        context = ProjectionContext(validate_covariates(covariates, n=n))
    if context.n != n:
        raise ValueError("projection context does not match the sample size")

    diagnostics = {}
    if response_side is None:
        s_raw = phenotype_similarity(phenotypes, pheno_config)
        response_side = prepare_response_side(s_raw, context,
                                              options.prune_rel_tol)

    indices = variant_indices
    size = len(indices) if indices is not None else genotypes.n_variants

    k_raw = genotype_similarity(genotypes, indices, geno_config)
    k0 = zero_diagonal(center_similarity(k_raw))
    k_adj = covariate_adjust(k0, context)

    u_stat = gsu_statistic(k0, response_side.centered0)
    diagnostics["u_statistic"] = u_stat
    try:
        u_gamma = gsu_correlation(k0, response_side.centered0)
    except UndefinedCorrelation:
        u_gamma = 0.0
        diagnostics["u_gamma_undefined"] = 1.0

    v_hat = adjusted_v_statistic(k_adj, response_side.adjusted)
    statistic = n * v_hat

    if options.method == "permutation":
        p = permutation_pvalue(k0, response_side.centered0,
                               options.permutations, seed=options.seed)
        diagnostics["n_coefficients"] = 0.0
        return TestResult(set_name=set_name, set_size=size,
                          statistic=statistic, u_gamma=u_gamma, p_value=p,
                          method="permutation", n_eigen_kept=(0, 0),
                          diagnostics=diagnostics)

    eta = _pruned_eigvals(k_adj.values, options.prune_rel_tol)
    lam = response_side.lambda_hat
    method = "davies" if options.method == "auto" else options.method
    coeffs = _mixture_coefficients(eta, lam, context.dof_scale(),
                                   options.prune_rel_tol)
    if coeffs.size == 0 or not np.any(coeffs):
        diagnostics["degenerate_spectrum"] = 1.0
        return TestResult(set_name=set_name, set_size=size,
                          statistic=statistic, u_gamma=u_gamma, p_value=1.0,
                          method=method, n_eigen_kept=(int(lam.size), int(eta.size)),
                          diagnostics=diagnostics)
    diagnostics["n_coefficients"] = float(coeffs.size)

    p, used = mixture_pvalue(coeffs, statistic, options)
    return TestResult(set_name=set_name, set_size=size, statistic=statistic,
                      u_gamma=u_gamma, p_value=p, method=used,
                      n_eigen_kept=(int(lam.size), int(eta.size)),
                      diagnostics=diagnostics)
