"""Similarity-matrix transformations and the association statistics.

Pipeline order: raw -> centered -> zero_diagonal -> adjusted.  The
unadjusted statistic U averages off-diagonal products of centered
similarities; the adjusted statistic includes the diagonal (a V statistic)
because projection reintroduces information there.
"""

import numpy as np

from .data import CovariateMatrix, SimilarityMatrix, validate_covariates
from .exceptions import ContextMismatch, SampleTooSmall, UndefinedCorrelation


class ProjectionContext:
    """Two-sided projection onto the orthocomplement of a covariate design.

    Holds I - X (X'X)^{-1} X' for the intercept-augmented design X.  With no
    user covariates this is the centering projection I - J.
    """

    def __init__(self, covariates):
        if isinstance(covariates, int):
            covariates = validate_covariates(None, n=covariates)
        if not isinstance(covariates, CovariateMatrix):
            raise TypeError("expected a CovariateMatrix or a sample size")
        x = covariates.values
        n = x.shape[0]
        # Solve through the pseudo-inverse; rank deficiency was already
        # rejected by CovariateMatrix.
        hat = x @ np.linalg.pinv(x)
        self.hat_complement = np.eye(n) - hat
        self.hat_complement.setflags(write=False)
        self.p_user = covariates.p_user
        self.n = n
        self.covariates = covariates

    def dof_scale(self):
        """1 / (n (n - P - 1)), the null-mixture scale factor."""
        return 1.0 / (self.n * (self.n - self.p_user - 1))


def center_similarity(similarity):
    """Double-center a raw similarity: rows and columns sum to zero after."""
    if similarity.state != "raw":
        raise ValueError(f"expected a raw similarity, got state {similarity.state!r}")
    v = similarity.values
    row = v.mean(axis=1, keepdims=True)
    col = v.mean(axis=0, keepdims=True)
    total = v.mean()
    centered = v - row - col + total
    # Symmetrize away the last-bit asymmetry from the two rank-1 updates.
    centered = 0.5 * (centered + centered.T)
    return SimilarityMatrix(values=centered, state="centered",
                            bounded=similarity.bounded)


def zero_diagonal(similarity):
    """Zero the diagonal, leaving off-diagonal entries untouched."""
    if similarity.state != "centered":
        raise ValueError(f"expected a centered similarity, got {similarity.state!r}")
    v = similarity.values.copy()
    np.fill_diagonal(v, 0.0)
    return SimilarityMatrix(values=v, state="zero_diagonal",
                            bounded=similarity.bounded)


def covariate_adjust(similarity, context):
    """Project a zero-diagonal similarity on both sides: P S P."""
    if similarity.state != "zero_diagonal":
        raise ValueError(
            f"expected a zero_diagonal similarity, got {similarity.state!r}"
        )
    if similarity.n != context.n:
        raise ContextMismatch(
            f"similarity has {similarity.n} subjects, projection has {context.n}"
        )
    if context.p_user == 0:
        # intercept-only projection is exactly I - J: double centering
        v = similarity.values
        row = v.mean(axis=1, keepdims=True)
        adjusted = v - row - row.T + v.mean()
    else:
        p = context.hat_complement
        adjusted = p @ similarity.values @ p
    adjusted = 0.5 * (adjusted + adjusted.T)
    return SimilarityMatrix(values=adjusted, state="adjusted",
                            bounded=similarity.bounded, context=context)


def _offdiag_product_sum(a, b):
    total = float(np.vdot(a, b))
    return total - float(np.dot(np.diag(a), np.diag(b)))


def gsu_statistic(k_centered, s_centered):
    """Average off-diagonal product of two centered similarities.

    Accepts centered or zero_diagonal inputs (the diagonal is excluded
    either way); both arguments are interchangeable.
    """
    for m in (k_centered, s_centered):
        if m.state not in ("centered", "zero_diagonal"):
            raise ValueError(f"expected centered matrices, got {m.state!r}")
    n = k_centered.n
    if s_centered.n != n:
        raise ValueError("similarity sizes differ")
    if n < 2:
        raise SampleTooSmall("need at least 2 subjects")
    return _offdiag_product_sum(k_centered.values, s_centered.values) / (n * (n - 1))


def adjusted_v_statistic(k_adjusted, s_adjusted):
    """Mean product of two adjusted similarities, diagonal included."""
    for m in (k_adjusted, s_adjusted):
        if m.state != "adjusted":
            raise ValueError(f"expected adjusted matrices, got {m.state!r}")
    if k_adjusted.context is not s_adjusted.context:
        raise ContextMismatch("adjusted similarities use different projections")
    n = k_adjusted.n
    return float(np.vdot(k_adjusted.values, s_adjusted.values)) / (n * n)


def gsu_correlation(k_centered, s_centered):
    """Scale-invariant similarity correlation in [-1, 1]."""
    for m in (k_centered, s_centered):
        if m.state not in ("centered", "zero_diagonal"):
            raise ValueError(f"expected centered matrices, got {m.state!r}")
    kv, sv = k_centered.values, s_centered.values
    num = _offdiag_product_sum(kv, sv)
    kk = _offdiag_product_sum(kv, kv)
    ss = _offdiag_product_sum(sv, sv)
    if kk <= 0.0 or ss <= 0.0:
        raise UndefinedCorrelation("a centered similarity is identically zero")
    r = num / np.sqrt(kk * ss)
    return float(np.clip(r, -1.0, 1.0))
