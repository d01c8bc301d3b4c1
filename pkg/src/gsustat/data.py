"""Core data containers and their validation.

Subjects are rows everywhere.  Genotypes are allele counts in {0, 1, 2}
with NaN as the missing marker until validation imputes them; phenotypes
are dense real matrices with no missing entries allowed.  All containers
are immutable after construction (arrays are set read-only) and safe to
share across parallel workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadWeight,
    ColumnUnusable,
    MissingPhenotype,
    SampleTooSmall,
    SingularDesign,
)

MONOMORPHIC_MAF = 1e-12

#: Allowed processing states of a similarity matrix, in pipeline order.
SIMILARITY_STATES = ("raw", "centered", "zero_diagonal", "adjusted")


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def as_matrix(raw, name="matrix"):
    """Coerce input to a 2-d float array, treating None entries as NaN."""
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"{name} is empty, shape {a.shape}")
    return a


@dataclass(frozen=True)
class VariantInfo:
    """Identifier and genomic location of one variant column."""

    id: str
    chromosome: str
    position: int


@dataclass(frozen=True)
class GenotypeMatrix:
    """Validated n x M allele-count matrix.

    ``values`` may contain fractional entries where missing genotypes were
    mean-imputed; ``mafs`` always match the column means of ``values``
    divided by two.  ``monomorphic`` flags columns with no variation.
    """

    values: np.ndarray
    variants: tuple
    mafs: np.ndarray
    monomorphic: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        object.__setattr__(self, "mafs", _freeze(self.mafs))
        mono = np.ascontiguousarray(self.monomorphic, dtype=bool)
        mono.setflags(write=False)
        object.__setattr__(self, "monomorphic", mono)
        n, m = self.values.shape
        if len(self.variants) != m:
            raise ValueError(
                f"{len(self.variants)} variant records for {m} genotype columns"
            )
        if self.mafs.shape != (m,):
            raise ValueError("mafs length does not match variant count")
        if np.any(self.mafs < 0) or np.any(self.mafs > 0.5 + 1e-12):
            raise ValueError("minor allele frequencies must lie in [0, 0.5]")

    @property
    def n_subjects(self):
        return self.values.shape[0]

    @property
    def n_variants(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class PhenotypeMatrix:
    """Validated n x L phenotype matrix with per-variable weights summing to 1."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        object.__setattr__(self, "weights", _freeze(self.weights))
        n, l = self.values.shape
        if self.weights.shape != (l,):
            raise ValueError("weights length does not match phenotype count")
        if np.any(np.isnan(self.values)):
            raise ValueError("PhenotypeMatrix may not contain missing values")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("phenotype weights must sum to 1")

    @property
    def n_subjects(self):
        return self.values.shape[0]

    @property
    def n_variables(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class CovariateMatrix:
    """n x (P+1) design matrix whose first column is the intercept."""

    values: np.ndarray
    p_user: int

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        n, cols = self.values.shape
        if cols != self.p_user + 1:
            raise ValueError("column count must be p_user + 1 (intercept included)")
        if not np.all(self.values[:, 0] == 1.0):
            raise ValueError("first covariate column must be the all-ones intercept")
        sv = np.linalg.svd(self.values, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise SingularDesign(
                f"covariate design is rank deficient (sv ratio {sv[-1] / sv[0]:.2e})"
            )

    @property
    def n_subjects(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric n x n similarity with a processing-state tag.

    ``bounded`` records whether the generating kernel is bounded in [0, 1]
    with unit self-similarity (the cross-product kernel is not).  ``context``
    is set by covariate adjustment and identifies the projection used.
    """

    values: np.ndarray
    state: str
    bounded: bool = True
    context: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.state not in SIMILARITY_STATES:
            raise ValueError(f"unknown similarity state {self.state!r}")
        v = self.values
        n, m = v.shape
        if n != m:
            raise ValueError("similarity matrix must be square")
        scale = np.abs(v).max() if v.size else 0.0
        if scale > 0 and np.abs(v - v.T).max() > 1e-10 * scale:
            raise ValueError("similarity matrix is not symmetric")
        if self.state == "raw" and self.bounded:
            if v.min() < -1e-12 or v.max() > 1 + 1e-12:
                raise ValueError("bounded raw similarity must have entries in [0, 1]")
            if np.abs(np.diag(v) - 1.0).max() > 1e-12:
                raise ValueError("bounded raw similarity must have unit diagonal")
        if self.state == "centered":
            tol = 1e-8 * n * max(scale, 1e-300)
            if np.abs(v.sum(axis=1)).max() > tol:
                raise ValueError("centered similarity must have zero row sums")
        if self.state == "zero_diagonal" and np.any(np.diag(v) != 0.0):
            raise ValueError("zero_diagonal similarity must have an exactly zero diagonal")

    @property
    def n(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class VariantSet:
    """A named group of genotype columns to test jointly."""

    name: str
    chromosome: str
    member_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.member_indices)
        object.__setattr__(self, "member_indices", idx)
        if len(idx) == 0:
            raise ValueError(f"variant set {self.name!r} is empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"variant set {self.name!r} indices must be strictly increasing")
        if idx[0] < 0:
            raise ValueError(f"variant set {self.name!r} has negative indices")

    def __len__(self):
        return len(self.member_indices)


@dataclass(frozen=True)
class TestResult:
    """Outcome of one association test."""

    set_name: str
    set_size: int
    statistic: float
    u_gamma: float
    p_value: float
    method: str
    n_eigen_kept: tuple
    diagnostics: dict

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if not (-1.0 - 1e-12 <= self.u_gamma <= 1.0 + 1e-12):
            raise ValueError(f"similarity correlation {self.u_gamma} outside [-1, 1]")


def validate_genotypes(raw):
    """Validate an allele-count matrix, orienting and imputing each column.

    Columns are flipped (g -> 2 - g) so the coded-allele frequency never
    exceeds 0.5, missing entries (NaN) are replaced by the column mean of
    the observed entries, and per-column minor allele frequencies are
    recorded.  Columns without variation are retained but flagged.

    Raises
    ------
    SampleTooSmall
        If fewer than 3 subjects.
    ColumnUnusable
        If a column is entirely missing.
    """
    values = as_matrix(raw, "genotypes").copy()
    n, m = values.shape
    if n < 3:
        raise SampleTooSmall(f"need at least 3 subjects, got {n}")

    observed = ~np.isnan(values)
    bad = values[observed]
    if bad.size and not np.isin(bad, (0.0, 1.0, 2.0)).all():
        # Fractional entries are only ever produced by our own imputation;
        # idempotence requires accepting them in [0, 2].
        if bad.min() < 0 or bad.max() > 2:
            raise ValueError("genotype entries must lie in [0, 2]")

    mafs = np.empty(m)
    for j in range(m):
        col = values[:, j]
        obs = observed[:, j]
        if not obs.any():
            raise ColumnUnusable(j)
        freq = col[obs].mean() / 2.0
        if freq > 0.5:
            col[obs] = 2.0 - col[obs]
            freq = 1.0 - freq
        col[~obs] = 2.0 * freq
        values[:, j] = col
        mafs[j] = freq

    monomorphic = mafs < MONOMORPHIC_MAF
    variants = tuple(
        VariantInfo(id=f"v{j + 1}", chromosome="1", position=j + 1) for j in range(m)
    )
    return GenotypeMatrix(values=values, variants=variants, mafs=mafs,
                          monomorphic=monomorphic)


def attach_variants(genotypes, variants):
    """Return a copy of ``genotypes`` with the given variant metadata."""
    return GenotypeMatrix(
        values=genotypes.values,
        variants=tuple(variants),
        mafs=genotypes.mafs,
        monomorphic=genotypes.monomorphic,
    )


def validate_phenotypes(raw, weights=None):
    """Validate a phenotype matrix and normalize per-variable weights.

    Absent weights default to equal 1/L; supplied weights must be
    non-negative and are renormalized to sum to 1.
    """
    values = as_matrix(raw, "phenotypes")
    missing = np.argwhere(np.isnan(values))
    if missing.size:
        row, col = missing[0]
        raise MissingPhenotype(int(row), int(col))
    n, l = values.shape
    if weights is None:
        w = np.full(l, 1.0 / l)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != (l,):
            raise BadWeight(f"expected {l} weights, got {w.shape[0]}")
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise BadWeight("phenotype weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise BadWeight("phenotype weights sum to zero")
        w = w / total
    return PhenotypeMatrix(values=values, weights=w)


def validate_covariates(raw=None, n=None):
    """Build a CovariateMatrix, prepending the intercept column.

    With ``raw=None`` returns the intercept-only design for ``n`` subjects,
    so the unadjusted analysis is the P=0 special case of the adjusted one.
    """
    if raw is None:
        if n is None:
            raise ValueError("need a sample size for the intercept-only design")
        return CovariateMatrix(values=np.ones((n, 1)), p_user=0)
    x = as_matrix(raw, "covariates")
    if np.any(np.isnan(x)):
        raise ValueError("covariates may not contain missing values")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"covariates have {x.shape[0]} rows, expected {n}")
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    return CovariateMatrix(values=design, p_user=x.shape[1])
