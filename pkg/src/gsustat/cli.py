"""Command-line interface.

Subcommands:
  scan      test grouped variant sets against a phenotype matrix
  simulate  replicate experiments (type-I error / power) from a text config
  power     asymptotic power or required sample size
  pvalue    standalone weighted-chi-square tail probability

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import sys

import numpy as np

from .exceptions import GsuError
from .nulldist import PValueOptions
from .power import PowerParams, asymptotic_power, null_quantile, required_sample_size
from .quadform import davies_pvalue, liu_pvalue, saddlepoint_pvalue
from .scan import ScanConfig, run_scan, write_scan_output
from .simulate import (
    ExperimentDesign,
    default_panel,
    results_to_tsv,
    run_experiment,
    simulate_panel,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser():
    parser = _Parser(prog="gsustat",
                     description="Similarity-based association testing")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="scan grouped variant sets",
                          parents=[], add_help=True)
    scan.add_argument("--genotype", required=True, help="genotype matrix file")
    scan.add_argument("--variants", help="variant sidecar file (id chr pos)")
    scan.add_argument("--phenotype", help="phenotype matrix file")
    scan.add_argument("--similarity",
                      help="precomputed response similarity file "
                           "(alternative to --phenotype)")
    scan.add_argument("--pheno-weights", type=float, nargs="+",
                      help="per-variable phenotype weights")
    scan.add_argument("--covariates", help="covariate matrix file")
    scan.add_argument("--generanges", help="gene range file (gene chr start end)")
    scan.add_argument("--window-bp", type=int, default=50_000,
                      help="window size for variants outside genes")
    scan.add_argument("--maf-max", type=float, default=None,
                      help="keep only variants with MAF below this")
    scan.add_argument("--max-missing", type=float, default=0.1,
                      help="drop variants with a higher missing-call rate")
    scan.add_argument("--kernel-geno", choices=("ibs", "wibs", "lk"),
                      default="lk")
    scan.add_argument("--kernel-pheno",
                      choices=("laplacian", "laplacian-corr", "cross"),
                      default="laplacian")
    scan.add_argument("--rank-transform", action="store_true")
    scan.add_argument("--standardize-cross", action="store_true",
                      help="column-standardize before the cross-product kernel")
    scan.add_argument("--method",
                      choices=("auto", "davies", "liu", "saddlepoint",
                               "permutation"), default="auto")
    scan.add_argument("--permutations", type=int, default=0)
    scan.add_argument("--alpha", type=float, default=0.05)
    scan.add_argument("--threads", type=int, default=1)
    scan.add_argument("--seed", type=int, default=0)
    scan.add_argument("--out", help="output TSV path (default: stdout)")

    sim = sub.add_parser("simulate", help="replicate experiments")
    sim.add_argument("--config", required=True,
                     help="text config: 'key = value' lines (n, replicates, "
                          "models, alpha_levels, causal_fraction, effect_mean, "
                          "effect_sd, maf_filter, seed, ...)")
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--out", help="output TSV path (default: stdout)")

    pow_ = sub.add_parser("power", help="asymptotic power / sample size")
    pow_.add_argument("--mu-u", type=float, required=True)
    pow_.add_argument("--zeta1", type=float, required=True)
    pow_.add_argument("--zeta0", type=float, default=None)
    pow_.add_argument("--q", type=float, default=None,
                      help="centered null quantile (else use --coeffs/--alpha)")
    pow_.add_argument("--coeffs", type=float, nargs="+",
                      help="null mixture coefficients for the quantile")
    pow_.add_argument("--alpha", type=float, default=0.05)
    pow_.add_argument("--n", type=int, default=None,
                      help="sample size: print power at this n")
    pow_.add_argument("--power", type=float, default=None,
                      help="target power: print the required sample size")

    pv = sub.add_parser("pvalue", help="weighted-chi-square tail probability")
    pv.add_argument("--coeffs", type=float, nargs="+", required=True)
    pv.add_argument("--q", type=float, required=True)
    pv.add_argument("--method", choices=("davies", "liu", "saddlepoint"),
                    default="davies")
    pv.add_argument("--acc", type=float, default=1e-9)

    return parser


def _parse_sim_config(path):
    design_fields = {
        "n": int, "replicates": int, "causal_fraction": float,
        "effect_mean": float, "effect_sd": float, "maf_filter": float,
        "seed": int, "segment_bp": int, "min_segment_variants": int,
    }
    design_kwargs = {}
    models = ["G"]
    alpha_levels = (0.05,)
    panel_kwargs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GsuError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in design_fields:
                design_kwargs[key] = design_fields[key](value)
            elif key == "models":
                models = [tok.strip() for tok in value.split(",") if tok.strip()]
            elif key == "alpha_levels":
                alpha_levels = tuple(float(tok) for tok in value.split(","))
            elif key in ("panel_seed", "panel_subjects", "panel_variants"):
                panel_kwargs[key] = int(value)
            else:
                raise GsuError(f"{path}:{lineno}: unknown key {key!r}")
    design = ExperimentDesign(alpha_levels=alpha_levels, **design_kwargs)
    return design, models, panel_kwargs


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "scan":
            config = ScanConfig(
                genotype_path=args.genotype,
                phenotype_path=args.phenotype,
                similarity_path=args.similarity,
                variants_path=args.variants,
                covariate_path=args.covariates,
                generanges_path=args.generanges,
                pheno_weights=tuple(args.pheno_weights) if args.pheno_weights else None,
                kernel_geno=args.kernel_geno,
                kernel_pheno=args.kernel_pheno,
                rank_transform=args.rank_transform,
                standardize_cross=args.standardize_cross,
                maf_max=args.maf_max,
                max_missing=args.max_missing,
                window_bp=args.window_bp,
                alpha=args.alpha,
                method=args.method,
                permutations=args.permutations,
                threads=args.threads,
                seed=args.seed,
                output_path=args.out,
            )
            rows, meta = run_scan(config)
            text = write_scan_output(config, rows, meta)
            if not args.out:
                sys.stdout.write(text)
            return 0

        if args.command == "simulate":
            design, models, panel_kwargs = _parse_sim_config(args.config)
            if panel_kwargs:
                panel = simulate_panel(
                    n_subjects=panel_kwargs.get("panel_subjects", 1000),
                    n_variants=panel_kwargs.get("panel_variants", 800),
                    seed=panel_kwargs.get("panel_seed", 20240117))
            else:
                panel = default_panel()
            results = run_experiment(panel, design, models,
                                     n_jobs=args.threads)
            text = results_to_tsv(results)
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return 0

        if args.command == "power":
            if (args.q is None) == (args.coeffs is None):
                parser.error("power needs exactly one of --q or --coeffs")
            q = args.q if args.q is not None else null_quantile(
                np.asarray(args.coeffs), args.alpha)
            zeta0 = args.zeta0 if args.zeta0 is not None else args.zeta1
            params = PowerParams(mu_u=args.mu_u, zeta0=zeta0,
                                 zeta1=args.zeta1, alpha=args.alpha, q_alpha=q)
            if args.n is not None:
                print(f"{asymptotic_power(args.n, params):.4f}")
            elif args.power is not None:
                print(required_sample_size(params, args.power))
            else:
                parser.error("power needs --n (power) or --power (sample size)")
            return 0

        if args.command == "pvalue":
            coeffs = np.asarray(args.coeffs, dtype=float)
            if args.method == "davies":
                p = davies_pvalue(coeffs, args.q, acc=args.acc)
            elif args.method == "liu":
                p = liu_pvalue(coeffs, args.q)
            else:
                p = saddlepoint_pvalue(coeffs, args.q)
            print(f"{p:.6g}")
            return 0
    except GsuError as exc:
        print(f"gsustat: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gsustat: {exc}", file=sys.stderr)
        return 2
    parser.error("no command given")


if __name__ == "__main__":
    sys.exit(main())
