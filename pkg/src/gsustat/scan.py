"""Genome-scan driver: file ingestion, variant grouping, parallel testing.

File formats (UTF-8 text, whitespace/TSV):

* genotype matrix — one subject per row, one allele-count token per
  variant; ``.`` marks a missing call.  An optional first line starting
  with ``#`` carries ``id chr pos`` triples, one per variant; otherwise a
  sidecar variant file supplies them.
* variant sidecar — one variant per line: ``id  chr  pos``.
* phenotype / covariate files — rectangular numeric text, one subject per
  row; missing entries are not allowed.
* gene ranges — one gene per line: ``gene  chr  start  end``.
* precomputed similarity — n x n numeric matrix, used in place of a
  phenotype file for response objects whose kernels live outside this
  package.

Scan output is a TSV sorted by p-value with a Bonferroni line in the
header; identical inputs and seed give byte-identical output for any
worker count.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .data import (
    GenotypeMatrix,
    VariantInfo,
    validate_covariates,
    validate_genotypes,
    validate_phenotypes,
)
from .exceptions import GsuError, OverlappingGenes, ParseError
from .kernels import KernelConfig
from .data import SimilarityMatrix, VariantSet
from .nulldist import PValueOptions, prepare_response_side, test_association
from .ustat import ProjectionContext


@dataclass(frozen=True)
class GeneRange:
    """Genomic interval carrying a gene name."""

    gene: str
    chromosome: str
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"gene {self.gene}: start exceeds end")


def _read_lines(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}")


def _parse_numeric_matrix(path, allow_missing):
    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        tokens = line.split()
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(
                f"expected {width} fields, found {len(tokens)}", line=lineno)
        row = []
        for tok in tokens:
            if tok == ".":
                if not allow_missing:
                    raise ParseError("missing marker '.' not allowed here",
                                     line=lineno)
                row.append(np.nan)
                continue
            try:
                row.append(float(tok))
            except ValueError:
                raise ParseError(f"unparseable token {tok!r}", line=lineno)
        rows.append(row)
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    return np.asarray(rows, dtype=float)


def load_variant_file(path):
    """Read a variant sidecar: one ``id chr pos`` line per variant."""
    variants = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError("variant lines need 'id chr pos'", line=lineno)
        try:
            pos = int(fields[2])
        except ValueError:
            raise ParseError(f"bad position {fields[2]!r}", line=lineno)
        variants.append(VariantInfo(id=fields[0], chromosome=fields[1],
                                    position=pos))
    if not variants:
        raise ParseError(f"{path} contains no variants")
    return tuple(variants)


def _parse_genotype_header(line, lineno):
    tokens = line.lstrip("#").split()
    if len(tokens) % 3 != 0 or not tokens:
        raise ParseError("genotype header must hold 'id chr pos' triples",
                         line=lineno)
    out = []
    for i in range(0, len(tokens), 3):
        try:
            pos = int(tokens[i + 2])
        except ValueError:
            raise ParseError(f"bad position {tokens[i + 2]!r}", line=lineno)
        out.append(VariantInfo(id=tokens[i], chromosome=tokens[i + 1],
                               position=pos))
    return tuple(out)


def load_genotype_file(path, variants_path=None, max_missing=None):
    """Parse a genotype matrix plus variant metadata and validate it.

    ``max_missing`` drops variants whose missing-call fraction exceeds the
    threshold before imputation (a quality-control step; the dropped count
    is not an error).  Returns the validated GenotypeMatrix.
    """
    lines = _read_lines(path)
    header = None
    body_start = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            header = _parse_genotype_header(line, lineno)
            body_start = lineno
        break

    rows = []
    width = None
    for lineno, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        tokens = line.split()
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(
                f"expected {width} fields, found {len(tokens)}", line=lineno)
        row = []
        for tok in tokens:
            if tok == ".":
                row.append(np.nan)
                continue
            try:
                value = float(tok)
            except ValueError:
                raise ParseError(f"unknown genotype token {tok!r}", line=lineno)
            if not (0.0 <= value <= 2.0):
                raise ParseError(f"genotype {tok!r} outside [0, 2]", line=lineno)
            row.append(value)
        rows.append(row)
    if not rows:
        raise ParseError(f"{path} contains no genotype rows")
    values = np.asarray(rows, dtype=float)

    variants = load_variant_file(variants_path) if variants_path else header
    if variants is not None and len(variants) != values.shape[1]:
        raise ParseError(
            f"{len(variants)} variant records for {values.shape[1]} columns")

    if max_missing is not None:
        missing_rate = np.mean(np.isnan(values), axis=0)
        keep = np.flatnonzero(missing_rate <= max_missing)
        if keep.size == 0:
            raise ParseError("every variant exceeds the missing-rate limit")
        values = values[:, keep]
        if variants is not None:
            variants = tuple(variants[int(j)] for j in keep)

    validated = validate_genotypes(values)
    if variants is None:
        return validated
    return GenotypeMatrix(values=validated.values, variants=variants,
                          mafs=validated.mafs,
                          monomorphic=validated.monomorphic)


def load_phenotype_file(path, weights=None):
    """Parse a phenotype matrix; missing entries are rejected."""
    return validate_phenotypes(_parse_numeric_matrix(path, allow_missing=True),
                               weights=weights)


def load_covariate_file(path, n=None):
    """Parse covariates and prepend the intercept column."""
    return validate_covariates(_parse_numeric_matrix(path, allow_missing=False),
                               n=n)


def load_similarity_file(path):
    """Parse a precomputed raw similarity matrix (bounded entries)."""
    values = _parse_numeric_matrix(path, allow_missing=False)
    bounded = values.min() >= -1e-12 and values.max() <= 1.0 + 1e-12
    return SimilarityMatrix(values=values, state="raw", bounded=bounded)


def load_generanges_file(path):
    """Parse gene ranges: ``gene chr start end`` per line."""
    ranges = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ParseError("gene lines need 'gene chr start end'", line=lineno)
        try:
            start, end = int(fields[2]), int(fields[3])
        except ValueError:
            raise ParseError("bad gene coordinates", line=lineno)
        ranges.append(GeneRange(gene=fields[0], chromosome=fields[1],
                                start=start, end=end))
    return tuple(ranges)


def _float_token(x):
    return repr(float(x))


def write_genotype_file(path, genotypes):
    """Write a genotype matrix with its variant header; round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        header = " ".join(f"{v.id} {v.chromosome} {v.position}"
                          for v in genotypes.variants)
        fh.write(f"# {header}\n")
        for row in genotypes.values:
            fh.write(" ".join(_float_token(x) for x in row) + "\n")


def write_matrix_file(path, values):
    """Write a numeric matrix with shortest round-trip float tokens."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        for row in values:
            fh.write(" ".join(_float_token(x) for x in row) + "\n")


def group_variants(variants, gene_ranges=None, window_bp=50_000):
    """Partition variants into gene sets plus fixed windows.

    Non-overlapping genes soak up the variants inside their ranges; every
    remaining variant falls into a window of ``window_bp`` anchored at the
    smallest ungrouped position on its chromosome.  Each variant lands in
    exactly one set; empty sets are dropped.

    Raises
    ------
    OverlappingGenes
        If two gene ranges on one chromosome overlap (lists the pairs).
    """
    if window_bp <= 0:
        raise ValueError("window size must be positive")
    gene_ranges = tuple(gene_ranges or ())

    by_chrom = {}
    for g in gene_ranges:
        by_chrom.setdefault(g.chromosome, []).append(g)
    offenders = []
    for chrom, genes in by_chrom.items():
        genes.sort(key=lambda g: (g.start, g.end, g.gene))
        for a, b in zip(genes, genes[1:]):
            if b.start <= a.end:
                offenders.append((a.gene, b.gene))
    if offenders:
        raise OverlappingGenes(offenders)

    gene_members = {g.gene: [] for g in gene_ranges}
    window_members = {}
    ungrouped = {}
    for idx, v in enumerate(variants):
        hit = None
        for g in by_chrom.get(v.chromosome, ()):
            if g.start <= v.position <= g.end:
                hit = g
                break
        if hit is not None:
            gene_members[hit.gene].append(idx)
        else:
            ungrouped.setdefault(v.chromosome, []).append(idx)

    sets = []
    for g in gene_ranges:
        members = gene_members[g.gene]
        if members:
            sets.append(VariantSet(name=g.gene, chromosome=g.chromosome,
                                   member_indices=tuple(sorted(members))))
    for chrom in sorted(ungrouped):
        idxs = ungrouped[chrom]
        anchor = min(variants[i].position for i in idxs)
        for idx in idxs:
            w = (variants[idx].position - anchor) // window_bp
            start = anchor + w * window_bp
            key = (chrom, start)
            window_members.setdefault(key, []).append(idx)
        for (c, start) in sorted(k for k in window_members if k[0] == chrom):
            members = window_members[(c, start)]
            name = f"Chr{c}-{start}-{start + window_bp - 1}"
            sets.append(VariantSet(name=name, chromosome=c,
                                   member_indices=tuple(sorted(members))))
    return sets


@dataclass(frozen=True)
class ScanConfig:
    """Everything a scan needs; mirrors the CLI flags."""

    genotype_path: str
    phenotype_path: str = None
    similarity_path: str = None
    variants_path: str = None
    covariate_path: str = None
    generanges_path: str = None
    pheno_weights: tuple = None
    kernel_geno: str = "lk"
    kernel_pheno: str = "laplacian"
    rank_transform: bool = False
    standardize_cross: bool = False
    maf_max: float = None
    max_missing: float = 0.1
    window_bp: int = 50_000
    alpha: float = 0.05
    method: str = "auto"
    permutations: int = 0
    davies_accuracy: float = 1e-9
    prune_rel_tol: float = 1e-8
    max_coefficients: object = None
    threads: int = 1
    seed: int = 0
    output_path: str = None

    def __post_init__(self):
        if self.window_bp <= 0:
            raise ValueError("window size must be positive")
        if (self.phenotype_path is None) == (self.similarity_path is None):
            raise ValueError(
                "exactly one of phenotype_path or similarity_path is required")


_GENO_KINDS = {"ibs": "ibs", "wibs": "weighted_ibs", "lk": "lk_genotype"}
_PHENO_KINDS = {"laplacian": "laplacian", "laplacian-corr": "laplacian_correlated",
                "cross": "cross_product"}


def _scan_one(genotypes, vset, indices, response_side, context, geno_config,
              options, set_name):
    try:
        with threadpool_limits(limits=1):
            result = test_association(
                genotypes, None, variant_indices=indices,
                geno_config=geno_config, options=options,
                set_name=set_name, response_side=response_side,
                context=context)
        return {
            "set": result.set_name, "chr": vset.chromosome,
            "size": result.set_size, "statistic": result.statistic,
            "u_gamma": result.u_gamma, "p_value": result.p_value,
            "method": result.method, "note": "",
        }
    except GsuError as exc:
        return {
            "set": vset.name, "chr": vset.chromosome, "size": len(indices),
            "statistic": float("nan"), "u_gamma": 0.0, "p_value": float("nan"),
            "method": "-", "note": f"error:{type(exc).__name__}",
        }


def run_scan(config):
    """Execute a scan and return (rows, metadata).

    Rows are dictionaries sorted by ascending p-value (failed sets last);
    metadata carries the Bonferroni threshold and skip counts.  The
    response-side similarity and its spectrum are computed once and shared
    read-only across all sets.
    """
    genotypes = load_genotype_file(config.genotype_path, config.variants_path,
                                   max_missing=config.max_missing)
    n = genotypes.n_subjects

    covariates = (load_covariate_file(config.covariate_path, n=n)
                  if config.covariate_path else validate_covariates(None, n=n))
    context = ProjectionContext(covariates)

    options = PValueOptions(method=config.method,
                            davies_accuracy=config.davies_accuracy,
                            prune_rel_tol=config.prune_rel_tol,
                            permutations=config.permutations,
                            seed=config.seed,
                            max_coefficients=config.max_coefficients)

    with threadpool_limits(limits=1):
        if config.similarity_path:
            raw = load_similarity_file(config.similarity_path)
            if raw.n != n:
                raise ParseError("similarity size does not match subjects")
        else:
            phenotypes = load_phenotype_file(config.phenotype_path,
                                             weights=config.pheno_weights)
            if phenotypes.n_subjects != n:
                raise ParseError("phenotype rows do not match genotype rows")
            from .kernels import phenotype_similarity
            pheno_config = KernelConfig(
                kind=_PHENO_KINDS[config.kernel_pheno],
                rank_transform=config.rank_transform,
                standardize=config.standardize_cross)
            raw = phenotype_similarity(phenotypes, pheno_config)
        response_side = prepare_response_side(raw, context,
                                              config.prune_rel_tol)

    gene_ranges = (load_generanges_file(config.generanges_path)
                   if config.generanges_path else ())
    sets = group_variants(genotypes.variants, gene_ranges, config.window_bp)

    geno_config = KernelConfig(kind=_GENO_KINDS[config.kernel_geno])

    jobs = []
    skipped = []
    for k, vset in enumerate(sets):
        indices = list(vset.member_indices)
        if config.maf_max is not None:
            indices = [i for i in indices if genotypes.mafs[i] < config.maf_max]
        if not indices:
            skipped.append(vset.name)
            continue
        set_options = (options if options.method != "permutation" else
                       PValueOptions(method="permutation",
                                     davies_accuracy=options.davies_accuracy,
                                     prune_rel_tol=options.prune_rel_tol,
                                     permutations=options.permutations,
                                     seed=int(np.random.SeedSequence(
                                         entropy=config.seed,
                                         spawn_key=(k,)).generate_state(1)[0]),
                                     max_coefficients=options.max_coefficients))
        jobs.append((vset, indices, set_options))

    def work(job):
        vset, indices, set_options = job
        return _scan_one(genotypes, vset, indices, response_side, context,
                         geno_config, set_options, vset.name)

    if config.threads <= 1:
        rows = [work(job) for job in jobs]
    else:
        rows = Parallel(n_jobs=config.threads)(delayed(work)(j) for j in jobs)

    def sort_key(row):
        p = row["p_value"]
        return (np.isnan(p), p if not np.isnan(p) else 0.0, row["set"])

    rows.sort(key=sort_key)
    tested = sum(1 for r in rows if not r["note"])
    meta = {
        "n_subjects": n,
        "n_variants": genotypes.n_variants,
        "n_sets": len(rows),
        "n_tested": tested,
        "n_skipped_empty": len(skipped),
        "alpha": config.alpha,
        "bonferroni_threshold": config.alpha / max(1, tested),
    }
    return rows, meta


def format_scan_tsv(rows, meta):
    """Render scan rows as the output TSV (byte-stable for fixed inputs)."""
    lines = [
        f"# subjects={meta['n_subjects']} variants={meta['n_variants']} "
        f"sets={meta['n_sets']} tested={meta['n_tested']} "
        f"skipped_empty={meta['n_skipped_empty']}",
        f"# alpha={meta['alpha']:g} "
        f"bonferroni_threshold={meta['bonferroni_threshold']:.6g}",
        "set\tchr\tsize\tstatistic\tu_gamma\tp_value\tmethod\tnote",
    ]
    for r in rows:
        stat = "nan" if np.isnan(r["statistic"]) else f"{r['statistic']:.6g}"
        p = "nan" if np.isnan(r["p_value"]) else f"{r['p_value']:.6g}"
        lines.append(
            f"{r['set']}\t{r['chr']}\t{r['size']}\t{stat}\t"
            f"{r['u_gamma']:.4f}\t{p}\t{r['method']}\t{r['note']}")
    return "\n".join(lines) + "\n"


def write_scan_output(config, rows, meta):
    text = format_scan_tsv(rows, meta)
    if config.output_path:
        with open(config.output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
