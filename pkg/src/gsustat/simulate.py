"""Genotype-conditional phenotype simulation and replicate experiments.

Phenotypes come in four families driven by a linear predictor
eta_i = mu_i + g_i' beta:

    binary    logit P(Y=1) = eta
    poisson   Y ~ Pois(exp(eta))
    gaussian  Y = eta + N(0, sigma^2)
    cauchy    Y ~ Cauchy(eta, b)

Genotypes for experiments come from a bundled panel simulator: rare-variant
allele frequencies drawn log-uniform, haplotypes built by Markov copying
from a founder pool so nearby variants are correlated, two haplotypes per
subject.  Real sequencing panels cannot be redistributed; this preserves
the allele-frequency spectrum shape and local linkage at fixture scale.

Every replicate derives its own random stream from (seed, replicate), so
results are identical regardless of evaluation order or worker count.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .data import GenotypeMatrix, VariantInfo, validate_genotypes, validate_phenotypes
from .kernels import KernelConfig
from .nulldist import PValueOptions, test_association

FAMILIES = ("binary", "poisson", "gaussian", "cauchy")
FAMILY_CODES = {"B": "binary", "P": "poisson", "G": "gaussian", "C": "cauchy"}

#: seed of the bundled default panel; regenerating it is bit-reproducible
DEFAULT_PANEL_SEED = 20240117


@dataclass(frozen=True)
class PhenoModel:
    """One phenotype variable conditional on the causal genotypes."""

    family: str
    beta: np.ndarray
    mu: object = 0.0
    sigma: float = 1.0
    cauchy_scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown phenotype family {self.family!r}")
        object.__setattr__(self, "beta",
                           np.asarray(self.beta, dtype=float).reshape(-1))
        if self.family == "gaussian" and self.sigma <= 0:
            raise ValueError("gaussian noise sd must be positive")
        if self.family == "cauchy" and self.cauchy_scale <= 0:
            raise ValueError("cauchy scale must be positive")


def sample_effects(m_causal, effect_mean, effect_sd, rng):
    """Draw effect sizes uniformly with the given mean and standard deviation.

    A uniform on (m - sqrt(3) s, m + sqrt(3) s) has mean m and variance s^2.
    """
    if effect_sd < 0:
        raise ValueError("effect sd must be non-negative")
    half = np.sqrt(3.0) * effect_sd
    return rng.uniform(effect_mean - half, effect_mean + half, size=m_causal)


def simulate_phenotype(g_rows, model, rng):
    """Draw one phenotype vector from the model family given genotype rows."""
    g_rows = np.asarray(g_rows, dtype=float)
    if g_rows.shape[1] != model.beta.shape[0]:
        raise ValueError("genotype columns do not match effect vector length")
    eta = np.asarray(model.mu, dtype=float) + g_rows @ model.beta
    if model.family == "binary":
        p = 1.0 / (1.0 + np.exp(-eta))
        return (rng.uniform(size=eta.shape[0]) < p).astype(float)
    if model.family == "poisson":
        lam = np.exp(np.minimum(eta, 20.0))  # cap: carriers of huge effects
        return rng.poisson(lam).astype(float)
    if model.family == "gaussian":
        return eta + rng.normal(0.0, model.sigma, size=eta.shape[0])
    return eta + model.cauchy_scale * rng.standard_cauchy(size=eta.shape[0])


def simulate_panel(n_subjects=1000, n_variants=800, region_bp=1_000_000,
                   maf_range=(0.001, 0.05), n_founders=500, switch_prob=0.05,
                   seed=DEFAULT_PANEL_SEED):
    """Simulate a population genotype panel with rare variants and linkage.

    Founder haplotypes carry variant alleles at log-uniform frequencies
    (each variant is seen in at least one founder, so the attainable
    frequency floor is 1/n_founders); sample haplotypes copy founder
    segments, switching founders between adjacent variants with the given
    probability.  Returns a validated GenotypeMatrix whose variants carry
    sorted positions on one chromosome.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    lo, hi = maf_range
    mafs = np.exp(rng.uniform(np.log(lo), np.log(hi), size=n_variants))
    founders = rng.uniform(size=(n_founders, n_variants)) < mafs
    empty = ~founders.any(axis=0)
    for j in np.flatnonzero(empty):
        founders[rng.integers(n_founders), j] = True

    n_haps = 2 * n_subjects
    draws = rng.integers(0, n_founders, size=(n_haps, n_variants))
    switch = rng.uniform(size=(n_haps, n_variants)) < switch_prob
    switch[:, 0] = True
    keep = np.where(switch, np.arange(n_variants), -1)
    last = np.maximum.accumulate(keep, axis=1)
    paths = np.take_along_axis(draws, last, axis=1)
    haps = founders[paths, np.arange(n_variants)]
    genotypes = (haps[0::2].astype(np.int8) + haps[1::2]).astype(float)

    positions = np.sort(rng.choice(np.arange(1, region_bp + 1),
                                   size=n_variants, replace=False))
    validated = validate_genotypes(genotypes)
    variants = tuple(
        VariantInfo(id=f"v{j + 1}", chromosome="1", position=int(positions[j]))
        for j in range(n_variants)
    )
    return GenotypeMatrix(values=validated.values, variants=variants,
                          mafs=validated.mafs, monomorphic=validated.monomorphic)


_default_panel_cache = {}


def default_panel():
    """The bundled fixture panel, generated once per process."""
    if "panel" not in _default_panel_cache:
        _default_panel_cache["panel"] = simulate_panel()
    return _default_panel_cache["panel"]


@dataclass(frozen=True)
class ExperimentDesign:
    """Replicate-experiment settings."""

    n: int = 50
    replicates: int = 1000
    alpha_levels: tuple = (0.05,)
    causal_fraction: float = 0.0
    effect_mean: float = 0.0
    effect_sd: float = 0.0
    maf_filter: float = 0.05
    seed: int = 0
    segment_bp: int = 30_000
    min_segment_variants: int = 3

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if not (0.0 <= self.causal_fraction <= 1.0):
            raise ValueError("causal fraction must lie in [0, 1]")
        object.__setattr__(self, "alpha_levels",
                           tuple(float(a) for a in self.alpha_levels))


def parse_model_code(code):
    """Map a letter code like 'BCG' to one family name per phenotype variable."""
    try:
        return tuple(FAMILY_CODES[ch] for ch in code.upper())
    except KeyError:
        raise ValueError(f"unknown family letter in model code {code!r}")


def _draw_segment(panel, design, rng):
    """Pick subjects and a contiguous rare-variant window for one replicate."""
    positions = np.array([v.position for v in panel.variants])
    rare = (panel.mafs < design.maf_filter) if design.maf_filter else np.ones(
        panel.n_variants, dtype=bool)
    region_end = int(positions.max())
    subjects = rng.choice(panel.n_subjects, size=design.n, replace=False)
    for _ in range(200):
        start = int(rng.integers(1, max(2, region_end - design.segment_bp + 1)))
        inside = (positions >= start) & (positions < start + design.segment_bp)
        chosen = np.flatnonzero(inside & rare)
        if chosen.size >= design.min_segment_variants:
            sub = validate_genotypes(panel.values[np.ix_(subjects, chosen)])
            return sub, chosen
    raise RuntimeError("could not find a usable variant segment")


def _one_replicate(panel, design, families, rep, geno_config, pheno_config,
                   options):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=design.seed, spawn_key=(rep,)))
    genotypes, chosen = _draw_segment(panel, design, rng)
    m = genotypes.n_variants
    columns = []
    for family in families:
        beta = np.zeros(m)
        n_causal = int(round(design.causal_fraction * m))
        if n_causal > 0 and (design.effect_mean != 0.0 or design.effect_sd != 0.0):
            causal = rng.choice(m, size=n_causal, replace=False)
            beta[causal] = sample_effects(n_causal, design.effect_mean,
                                          design.effect_sd, rng)
        model = PhenoModel(family=family, beta=beta)
        columns.append(simulate_phenotype(genotypes.values, model, rng))
    phenotypes = validate_phenotypes(np.column_stack(columns))
    result = test_association(genotypes, phenotypes,
                              geno_config=geno_config,
                              pheno_config=pheno_config,
                              options=options, set_name=f"rep{rep}")
    return result.p_value


@dataclass(frozen=True)
class ExperimentResult:
    """Rejection rates per model and level, plus the raw p-values."""

    model: str
    design: ExperimentDesign
    p_values: np.ndarray
    n_failures: int
    runtime_s: float

    def rejection_rate(self, alpha):
        return float(np.mean(self.p_values <= alpha))

    def standard_error(self, alpha):
        r = self.rejection_rate(alpha)
        return float(np.sqrt(r * (1.0 - r) / max(1, self.p_values.size)))

    def rows(self):
        for alpha in self.design.alpha_levels:
            yield {
                "model": self.model,
                "alpha": alpha,
                "rate": self.rejection_rate(alpha),
                "se": self.standard_error(alpha),
                "replicates": int(self.p_values.size),
                "failures": self.n_failures,
            }


def run_experiment(panel, design, model_codes,
                   geno_config=KernelConfig(kind="lk_genotype"),
                   pheno_config=KernelConfig(kind="laplacian"),
                   options=None, n_jobs=1):
    """Run replicate experiments for each model code; deterministic by seed.

    Returns a list of :class:`ExperimentResult`, one per model code.
    Replicate failures are counted, not propagated, so a bad draw cannot
    abort a long run.
    """
    if options is None:
        options = PValueOptions(davies_accuracy=1e-6, max_coefficients=1024)
    if isinstance(model_codes, str):
        model_codes = [model_codes]
    results = []
    for code in model_codes:
        families = parse_model_code(code)
        t0 = time.perf_counter()

        def one(rep):
            try:
                return _one_replicate(panel, design, families, rep,
                                      geno_config, pheno_config, options)
            except Exception:
                return np.nan

        if n_jobs == 1:
            raw = [one(rep) for rep in range(design.replicates)]
        else:
            raw = Parallel(n_jobs=n_jobs)(
                delayed(one)(rep) for rep in range(design.replicates))
        raw = np.asarray(raw, dtype=float)
        bad = np.isnan(raw)
        results.append(ExperimentResult(
            model=code, design=design, p_values=raw[~bad],
            n_failures=int(bad.sum()), runtime_s=time.perf_counter() - t0))
    return results


def results_to_tsv(results):
    """Render experiment results as a TSV table string."""
    lines = ["model\talpha\trate\tse\treplicates\tfailures"]
    for res in results:
        for row in res.rows():
            lines.append(
                f"{row['model']}\t{row['alpha']:g}\t{row['rate']:.6f}\t"
                f"{row['se']:.6f}\t{row['replicates']}\t{row['failures']}")
    return "\n".join(lines) + "\n"


def rotation_demo(n, angle, seed=0, options=None):
    """Dependence-without-correlation toy: rotate two bimodal variables.

    Two independent symmetric bimodal variables are rotated by ``angle``;
    the rotation creates association with no first- or second-order
    signature.  Returns (p_bounded, p_cross): the bounded-kernel test
    detects it, the cross-product test does not.
    """
    from .nulldist import mixture_pvalue, _pruned_eigvals, _mixture_coefficients
    from .ustat import (ProjectionContext, adjusted_v_statistic,
                        center_similarity, covariate_adjust, zero_diagonal)
    from .data import validate_covariates
    from .kernels import cross_product_phenotype, laplacian_phenotype

    if options is None:
        options = PValueOptions(davies_accuracy=1e-6, max_coefficients=1024)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    base = rng.choice([-1.0, 1.0], size=(n, 2)) + 0.3 * rng.normal(size=(n, 2))
    rot = np.array([[np.cos(angle), -np.sin(angle)],
                    [np.sin(angle), np.cos(angle)]])
    pair = base @ rot.T
    left = validate_phenotypes(pair[:, :1])
    right = validate_phenotypes(pair[:, 1:])
    ctx = ProjectionContext(validate_covariates(None, n=n))

    out = []
    for kernel in ("laplacian", "cross"):
        if kernel == "laplacian":
            s_left = laplacian_phenotype(left)
            s_right = laplacian_phenotype(right)
        else:
            s_left = cross_product_phenotype(left)
            s_right = cross_product_phenotype(right)
        a = covariate_adjust(zero_diagonal(center_similarity(s_left)), ctx)
        b = covariate_adjust(zero_diagonal(center_similarity(s_right)), ctx)
        q = n * adjusted_v_statistic(a, b)
        coeffs = _mixture_coefficients(
            _pruned_eigvals(a.values, options.prune_rel_tol),
            _pruned_eigvals(b.values, options.prune_rel_tol),
            ctx.dof_scale(), options.prune_rel_tol)
        p, _ = mixture_pvalue(coeffs, q, options)
        out.append(p)
    return tuple(out)
