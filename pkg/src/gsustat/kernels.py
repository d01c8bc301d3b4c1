"""Similarity kernels for phenotypes and genotypes.

Phenotype kernels
    laplacian            exp(-sum_l w_l |y_il - y_jl|)
    laplacian_correlated exp(-(1/L) d_ij' G d_ij),  d_ij,l = |y_il - y_jl|^0.5
    gaussian             exp(-sum_l w_l (y_il - y_jl)^2)
    cross_product        <y_i, y_j>

Genotype kernels (over a variant subset, allele counts in [0, 2])
    ibs                  (1/2M) sum_m (2 - |g_im - g_jm|)
    weighted_ibs         sum_m w_m (2 - |g_im - g_jm|) / (2 Upsilon)
    lk_genotype          exp(-sum_m w_m |g_im - g_jm| / Upsilon)

All bounded kernels produce entries in [0, 1] with unit diagonal.  Pairwise
exponents are accumulated left-to-right over ascending column index in an
extended-precision accumulator so results do not depend on scheduling.
"""

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .data import MONOMORPHIC_MAF, PhenotypeMatrix, SimilarityMatrix
from .exceptions import BadWeight, DegenerateWeights, GammaSingular

PHENOTYPE_KINDS = ("laplacian", "laplacian_correlated", "cross_product", "gaussian")
GENOTYPE_KINDS = ("ibs", "weighted_ibs", "lk_genotype")


@dataclass(frozen=True)
class KernelConfig:
    """Choice of similarity kernel and its weighting options.

    ``variant_weights`` applies to genotype kinds: "maf" (inverse square
    root of allele-frequency variance), "sd" (inverse empirical standard
    deviation), "uniform", or an explicit non-negative vector.
    ``gamma_matrix`` applies to laplacian_correlated; ``standardize``
    applies to cross_product (column mean 0 / variance 1) and is ignored
    when ``rank_transform`` is on.
    """

    kind: str
    variant_weights: object = "maf"
    gamma_matrix: object = None
    rank_transform: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.kind not in PHENOTYPE_KINDS + GENOTYPE_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")


def _mirror(values, unit_diagonal):
    """Exact symmetry: keep the upper triangle, mirror it below."""
    upper = np.triu(values, k=1)
    out = upper + upper.T
    if unit_diagonal:
        np.fill_diagonal(out, 1.0)
    else:
        np.fill_diagonal(out, np.diag(values))
    return out


# bound the n x n x chunk pairwise-difference temporary to ~128 MB
_CHUNK_ELEMENTS = 1 << 24


def _weighted_l1_exponent(columns, weights):
    """sum_j w_j |x_i,j - x_k,j|, accumulated over ascending column index.

    The contraction runs in fixed order with no threaded reductions, so the
    result is identical across runs and worker counts.
    """
    n, m = columns.shape
    acc = np.zeros((n, n))
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n * n))
    for start in range(0, m, chunk):
        w = weights[start:start + chunk]
        if not np.any(w):
            continue
        block = columns[:, start:start + chunk]
        diffs = np.abs(block[:, None, :] - block[None, :, :])
        acc += np.einsum("ijm,m->ij", diffs, w, optimize=False)
    return acc


def laplacian_phenotype(phenotypes):
    """Bounded phenotype similarity from the weighted L1 distance."""
    expo = _weighted_l1_exponent(phenotypes.values, phenotypes.weights)
    values = np.exp(-expo)
    return SimilarityMatrix(values=_mirror(values, True), state="raw", bounded=True)


def default_gamma(phenotypes):
    """Inverse square root of the uncentered second-moment matrix (1/n) Y'Y."""
    y = phenotypes.values
    moment = (y.T @ y) / y.shape[0]
    eigval, eigvec = np.linalg.eigh(moment)
    top = eigval.max(initial=0.0)
    if top <= 0.0 or eigval.min() <= 1e-10 * top:
        raise GammaSingular(
            "phenotype second-moment matrix is singular; supply gamma_matrix"
        )
    floored = np.maximum(eigval, 1e-10 * top)
    return (eigvec * (1.0 / np.sqrt(floored))) @ eigvec.T


def laplacian_correlated_phenotype(phenotypes, gamma=None):
    """Laplacian-type similarity with cross-variable coupling.

    The pairwise feature is d_l = |y_il - y_jl|^0.5 and the exponent is
    (1/L) d' gamma d.  When ``gamma`` is None it is estimated as the inverse
    square root of the uncentered second-moment matrix.
    """
    y = phenotypes.values
    n, l = y.shape
    if gamma is None:
        gamma = default_gamma(phenotypes)
    else:
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (l, l):
            raise ValueError(f"gamma matrix must be {l}x{l}, got {gamma.shape}")
        if np.abs(gamma - gamma.T).max() > 1e-10 * max(np.abs(gamma).max(), 1e-300):
            raise ValueError("gamma matrix must be symmetric")
        if np.linalg.eigvalsh(gamma).min() < -1e-10 * max(np.abs(gamma).max(), 1.0):
            raise ValueError("gamma matrix must be positive semi-definite")

    roots = np.sqrt(np.abs(y[:, None, :] - y[None, :, :]))
    coupled = np.einsum("ija,ab->ijb", roots, gamma, optimize=False)
    expo = np.einsum("ijb,ijb->ij", coupled, roots, optimize=False)
    values = np.exp(-expo / l)
    return SimilarityMatrix(values=_mirror(values, True), state="raw", bounded=True)


def gaussian_phenotype(phenotypes):
    """Bounded phenotype similarity from the weighted squared L2 distance."""
    y = phenotypes.values
    n, l = y.shape
    acc = np.zeros((n, n))
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n * n))
    for start in range(0, l, chunk):
        w = phenotypes.weights[start:start + chunk]
        if not np.any(w):
            continue
        block = y[:, start:start + chunk]
        diffs = block[:, None, :] - block[None, :, :]
        acc += np.einsum("ijm,ijm,m->ij", diffs, diffs, w, optimize=False)
    values = np.exp(-acc)
    return SimilarityMatrix(values=_mirror(values, True), state="raw", bounded=True)


def cross_product_phenotype(phenotypes, standardize=False):
    """Gram-matrix similarity; entries are unbounded and not unit-diagonal."""
    y = phenotypes.values
    if standardize:
        sd = y.std(axis=0, ddof=0)
        sd = np.where(sd > 0, sd, 1.0)
        y = (y - y.mean(axis=0)) / sd
    values = y @ y.T
    values = np.triu(values) + np.triu(values, k=1).T
    return SimilarityMatrix(values=values, state="raw", bounded=False)


def rank_transform(phenotypes):
    """Replace each variable by (rank - 0.5)/n with average ranks for ties."""
    ranks = scipy.stats.rankdata(phenotypes.values, axis=0, method="average")
    n = phenotypes.values.shape[0]
    return PhenotypeMatrix(values=(ranks - 0.5) / n, weights=phenotypes.weights)


def maf_weights(genotypes, indices=None):
    """Inverse-variance variant weights 1/sqrt(maf (1 - maf)).

    Monomorphic variants would get an infinite weight; they carry no signal,
    so their weight is pinned to zero instead.
    """
    mafs = genotypes.mafs if indices is None else genotypes.mafs[list(indices)]
    w = np.zeros(mafs.shape[0])
    poly = mafs >= MONOMORPHIC_MAF
    w[poly] = 1.0 / np.sqrt(mafs[poly] * (1.0 - mafs[poly]))
    return w


def sd_weights(genotypes, indices=None):
    """Inverse empirical-standard-deviation weights, zero where degenerate."""
    values = genotypes.values
    if indices is not None:
        values = values[:, list(indices)]
    sd = values.std(axis=0, ddof=0)
    w = np.zeros(sd.shape[0])
    w[sd > 0] = 1.0 / sd[sd > 0]
    return w


def resolve_variant_weights(genotypes, indices, spec):
    """Turn a weight specification into a validated weight vector."""
    m = len(indices) if indices is not None else genotypes.n_variants
    if spec is None or (isinstance(spec, str) and spec == "uniform"):
        return np.ones(m)
    if isinstance(spec, str):
        if spec == "maf":
            return maf_weights(genotypes, indices)
        if spec == "sd":
            return sd_weights(genotypes, indices)
        raise ValueError(f"unknown variant weighting {spec!r}")
    w = np.asarray(spec, dtype=float).reshape(-1)
    if indices is not None and w.shape[0] == genotypes.n_variants and w.shape[0] != m:
        w = w[list(indices)]
    if w.shape[0] != m:
        raise BadWeight(f"expected {m} variant weights, got {w.shape[0]}")
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise BadWeight("variant weights must be non-negative")
    return w


def _subset(genotypes, indices):
    if indices is None:
        return genotypes.values
    return genotypes.values[:, list(indices)]


def weighted_ibs_genotype(genotypes, indices=None, weights=None):
    """Allele-sharing similarity with per-variant weights."""
    g = _subset(genotypes, indices)
    if weights is None:
        weights = np.ones(g.shape[1])
    weights = np.asarray(weights, dtype=float)
    upsilon = weights.sum()
    if upsilon <= 0.0:
        raise DegenerateWeights("variant weights sum to zero")
    # sum_m w_m (2 - |dg|) = 2 Upsilon - weighted L1 distance
    distance = _weighted_l1_exponent(g, weights)
    values = 1.0 - distance / (2.0 * upsilon)
    return SimilarityMatrix(values=_mirror(values, True), state="raw", bounded=True)


def ibs_genotype(genotypes, indices=None):
    """Unweighted allele-sharing similarity (equal weights)."""
    m = len(indices) if indices is not None else genotypes.n_variants
    return weighted_ibs_genotype(genotypes, indices, np.ones(m))


def lk_genotype(genotypes, indices=None, weights=None):
    """Bounded genotype similarity exp(-weighted L1 / Upsilon).

    Works for allele counts and, unlike allele sharing, for count or
    continuous predictor columns as well.
    """
    g = _subset(genotypes, indices)
    if weights is None:
        weights = np.ones(g.shape[1])
    weights = np.asarray(weights, dtype=float)
    upsilon = weights.sum()
    if upsilon <= 0.0:
        raise DegenerateWeights("variant weights sum to zero")
    values = np.exp(-_weighted_l1_exponent(g, weights) / upsilon)
    return SimilarityMatrix(values=_mirror(values, True), state="raw", bounded=True)


def phenotype_similarity(phenotypes, config):
    """Dispatch a phenotype kernel configuration."""
    if config.kind not in PHENOTYPE_KINDS:
        raise ValueError(f"{config.kind!r} is not a phenotype kernel")
    y = rank_transform(phenotypes) if config.rank_transform else phenotypes
    if config.kind == "laplacian":
        return laplacian_phenotype(y)
    if config.kind == "laplacian_correlated":
        return laplacian_correlated_phenotype(y, config.gamma_matrix)
    if config.kind == "gaussian":
        return gaussian_phenotype(y)
    standardize = config.standardize and not config.rank_transform
    return cross_product_phenotype(y, standardize=standardize)


def genotype_similarity(genotypes, indices, config):
    """Dispatch a genotype kernel configuration over a variant subset."""
    if config.kind not in GENOTYPE_KINDS:
        raise ValueError(f"{config.kind!r} is not a genotype kernel")
    if config.kind == "ibs":
        return ibs_genotype(genotypes, indices)
    weights = resolve_variant_weights(genotypes, indices, config.variant_weights)
    if config.kind == "weighted_ibs":
        return weighted_ibs_genotype(genotypes, indices, weights)
    return lk_genotype(genotypes, indices, weights)
