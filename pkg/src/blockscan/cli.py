"""Command-line interface: ``blockscan scan|simulate|calibrate|report``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
Options may also come from a flat ``key=value`` file given with ``--config``
(keys are the long option names without dashes, e.g. ``perms=100``);
command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import data
from .blocks import build_blocks, write_blocks
from .errors import NumericalError, ValidationError
from .report import (plot_rank_vs_size, plot_weight_profile, read_scored_blocks, read_snp_weights,
                     read_truth_blocks, write_null, write_scored_blocks, write_snp_weights)
from .scan import METHODS, Method, MethodOptions, bind_scorer, run_scan
from .significance import (NullDistribution, null_max_scores, order_statistic_index, summarize_truth_rankings,
                           write_summary)
from .sparse_cca import SparseCcaParams, default_grid

logger = logging.getLogger("blockscan")

DEFAULTS = {
    "method": "cca-block", "gap_cm": 0.01, "window_min_snps": 2000, "perms": 100, "alpha": 0.05,
    "seed": 0, "threads": 1, "scale_y": False, "factors_r": 10, "scca_grid": None,
    "gflasso_lambda": None, "gflasso_gamma": None, "corr_cutoff": 0.7, "maf_min": 0.02,
    "hwe_p_min": 1e-5, "covar": None,
}
_TYPES = {
    "gap_cm": float, "window_min_snps": int, "perms": int, "alpha": float, "seed": int, "threads": int,
    "factors_r": int, "gflasso_lambda": float, "gflasso_gamma": float, "corr_cutoff": float,
    "maf_min": float, "hwe_p_min": float,
}


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    for i, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{i}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key == "scale_y":
        low = value.lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ValidationError(f"invalid boolean for {key}: {value!r}")
        return low in ("1", "true", "yes")
    try:
        return _TYPES[key](value) if key in _TYPES else value
    except ValueError as exc:
        raise ValidationError(f"invalid value for {key}: {value!r}") from exc


def resolve(args):
    """Merge defaults, config-file values and explicit flags (highest precedence)."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key in set(DEFAULTS) | set(vars(args)) | set(conf):
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            out[key] = flag
        elif key in conf:
            out[key] = _coerce(key, conf[key])
        else:
            out[key] = DEFAULTS.get(key, flag)
    return out


def parse_grid(text):
    """``"0,0.1,0.5"`` -> all pairs of those levels; ``"0.1:0.2;0.3:0.3"`` -> explicit pairs."""
    if text is None:
        return default_grid()
    try:
        if ":" in text:
            return tuple(tuple(float(v) for v in pair.split(":")) for pair in text.split(";") if pair)
        levels = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"invalid sparse CCA grid {text!r}") from exc
    return default_grid(tuple(levels))


def _method(cfg):
    name = cfg["method"]
    if name not in METHODS:
        raise ValidationError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    opts = MethodOptions(
        seed=cfg["seed"], window_min_snps=cfg["window_min_snps"],
        scca=SparseCcaParams(grid=parse_grid(cfg["scca_grid"])),
        gflasso_lambda=cfg["gflasso_lambda"], gflasso_gamma=cfg["gflasso_gamma"],
        corr_cutoff=cfg["corr_cutoff"], factors_r=cfg["factors_r"])
    return Method(name, opts)


def load_inputs(cfg):
    for key in ("geno", "pheno"):
        if not cfg.get(key):
            raise ValidationError(f"--{key} is required")
    G = data.load_genotypes(cfg["geno"])
    Y = data.load_phenotypes(cfg["pheno"])
    C = data.load_covariates(cfg["covar"]) if cfg.get("covar") else None
    G, Y = data.align_samples(G, Y)
    G = data.qc_filter(G, cfg["maf_min"], cfg["hwe_p_min"])
    G, Y = data.preprocess(G, Y, C, scale_Y=cfg["scale_y"])
    partition = build_blocks(G.snps, cfg["gap_cm"])
    logger.info("%d samples, %d SNPs in %d blocks, %d traits", G.n_samples, G.n_snps, len(partition),
                Y.n_traits)
    return G, Y, partition


def _outdir(cfg):
    if not cfg.get("out"):
        raise ValidationError("--out is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_scan(cfg):
    method = _method(cfg)
    G, Y, partition = load_inputs(cfg)
    out = _outdir(cfg)
    res = run_scan(method, G, Y, partition, cfg["perms"], cfg["alpha"], cfg["seed"], cfg["threads"])
    write_blocks(partition, out / "blocks.tsv")
    write_scored_blocks(out / "blocks_scored.tsv", partition, res.result, method.name)
    write_snp_weights(out / "snp_weights.tsv", partition, res.result.scores)
    if res.null is not None:
        k = order_statistic_index(cfg["alpha"], cfg["perms"])
        write_null(out / "null_max_scores.tsv", out / "threshold.tsv", res.null, res.result.threshold,
                   cfg["alpha"], k)
    n_untestable = sum(not s.testable for s in res.result.scores)
    if n_untestable:
        logger.warning("%d block(s) untestable", n_untestable)
    return 0


def cmd_calibrate(cfg):
    method = _method(cfg)
    k = order_statistic_index(cfg["alpha"], cfg["perms"])
    G, Y, partition = load_inputs(cfg)
    out = _outdir(cfg)
    bound = bind_scorer(method, G, Y, partition)
    maxima = null_max_scores(bound, cfg["perms"], cfg["seed"], cfg["threads"])
    thr = float(np.sort(maxima)[::-1][k - 1])
    write_null(out / "null_max_scores.tsv", out / "threshold.tsv",
               NullDistribution(maxima, cfg["perms"], method.name, cfg["seed"]), thr, cfg["alpha"], k)
    return 0


SIM_DEFAULTS = {
    "scenario": "whole-profile", "beta_max": "0.3", "n": "500", "seed": "0", "corr_power": "1",
    "rho": "0.99", "n_snps": "22", "source_seed": "2013", "group": "VLDL", "n_affected": "10",
    "n_blocks": "50", "n_traits": "20", "causal_block": "",
}


def cmd_simulate(args):
    from . import simulate as sim

    conf = dict(SIM_DEFAULTS)
    if args.config:
        conf.update(read_config(args.config))
    if args.seed is not None:
        conf["seed"] = str(args.seed)
    unknown = set(conf) - set(SIM_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown simulation keys: {', '.join(sorted(unknown))}")
    try:
        beta, n, seed = float(conf["beta_max"]), int(conf["n"]), int(conf["seed"])
        power, rho, q = int(conf["corr_power"]), float(conf["rho"]), int(conf["n_snps"])
        src_seed = int(conf["source_seed"])
    except ValueError as exc:
        raise ValidationError(f"invalid simulation config: {exc}") from exc
    out = _outdir({"out": args.out})
    scenario = conf["scenario"]
    if scenario in ("whole-profile", "subgroup"):
        if scenario == "whole-profile":
            cfg = sim.whole_profile_config(beta, seed, n, q, rho, src_seed, power)
        else:
            cfg = sim.subgroup_config(beta, power, seed, n, q, rho, src_seed, int(conf["n_affected"]),
                                      conf["group"])
        ds = sim.simulate_dataset(cfg)
        X, Y, truth = ds.X, ds.Y, ds.truth
    elif scenario == "genome":
        cb = int(conf["causal_block"]) if conf["causal_block"] else None
        nt = int(conf["n_traits"])
        affected = tuple((k, 1) for k in range(min(3, nt))) if cb is not None and beta > 0 else ()
        gm = sim.simulate_genome(int(conf["n_blocks"]), n, None, seed, causal_block=cb, beta_max=beta,
                                 affected_traits=affected, target_rho=rho, n_traits=nt)
        X, Y, truth = gm.X, gm.Y, gm.truth
    else:
        raise ValidationError(f"unknown scenario {scenario!r}")
    data.write_genotypes(X, out / "sim.geno.tsv")
    data.write_phenotypes(Y, out / "sim.pheno.tsv")
    sim.write_truth(truth, out / "truth.tsv")
    return 0


def cmd_report(args):
    out = _outdir({"out": args.out})
    tables = {}
    for path in args.scored:
        rows = read_scored_blocks(path)
        tables[rows[0]["method"]] = rows
    truth = read_truth_blocks(args.truth) if args.truth else []
    results = {m: ([r["block_id"] for r in rows], [r["rank_scaled"] for r in rows],
                   None if rows[0]["significant"] is None else [r["significant"] for r in rows])
               for m, rows in tables.items()}
    summary = summarize_truth_rankings(results, truth)
    write_summary(summary, out / "summary.tsv", with_truth=bool(truth))
    plot_rank_vs_size(tables, set(truth), out / "rank_vs_size.svg", out / "rank_vs_size.tsv")
    weights = {}
    weight_paths = args.weights or [str(Path(p).with_name("snp_weights.tsv")) for p in args.scored]
    for method, path in zip(tables, weight_paths):
        if Path(path).exists():
            weights[method] = read_snp_weights(path)
    if args.block is not None:
        block = args.block
    elif truth:
        block = truth[0]
    else:
        first = next(iter(tables.values()))
        block = max(first, key=lambda r: (r["rank_scaled"] if r["rank_scaled"] == r["rank_scaled"] else -1))[
            "block_id"]
    plot_weight_profile(weights, block, out / "snp_weight_profile.svg", out / "snp_weight_profile.tsv")
    return 0


def _add_run_options(p):
    p.add_argument("--method", choices=METHODS, metavar="METHOD", help=f"one of: {', '.join(METHODS)}")
    p.add_argument("--geno", help="genotype TSV")
    p.add_argument("--pheno", help="phenotype TSV")
    p.add_argument("--covar", help="covariate TSV (optional)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--gap-cm", dest="gap_cm", type=float, help="LD-block gap in cM (default 0.01)")
    p.add_argument("--window-min-snps", dest="window_min_snps", type=int,
                   help="minimum SNPs per sparse-CCA window (default 2000)")
    p.add_argument("--perms", type=int, help="number of phenotype permutations (default 100)")
    p.add_argument("--alpha", type=float, help="family-wise error level (default 0.05)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--threads", type=int, help="worker processes (default 1)")
    p.add_argument("--scale-y", dest="scale_y", action="store_true", default=None,
                   help="scale phenotypes to unit variance")
    p.add_argument("--factors-r", dest="factors_r", type=int, help="latent factors for confounder-adjust")
    p.add_argument("--scca-grid", dest="scca_grid",
                   help="sparse CCA threshold levels 'a,b,..' or explicit pairs 'la:lb;la:lb'")
    p.add_argument("--gflasso-lambda", dest="gflasso_lambda", type=float, help="fix GFlasso lambda (else CV)")
    p.add_argument("--gflasso-gamma", dest="gflasso_gamma", type=float, help="fix GFlasso gamma (else CV)")
    p.add_argument("--corr-cutoff", dest="corr_cutoff", type=float, help="trait graph cutoff (default 0.7)")
    p.add_argument("--maf-min", dest="maf_min", type=float, help="minimum minor allele frequency (default 0.02)")
    p.add_argument("--hwe-p-min", dest="hwe_p_min", type=float, help="minimum HWE p-value (default 1e-5)")
    p.add_argument("--config", help="key=value option file")


def build_parser():
    parser = argparse.ArgumentParser(prog="blockscan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("scan", help="score, rank and calibrate LD-blocks"))
    _add_run_options(sub.add_parser("calibrate", help="permutation null and genome-wide threshold"))
    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--config", help="key=value simulation file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p = sub.add_parser("report", help="summary table and plots from scored files")
    p.add_argument("--scored", nargs="+", required=True, help="blocks_scored.tsv files")
    p.add_argument("--truth", help="truth.tsv with causal block ids")
    p.add_argument("--weights", nargs="+", help="snp_weights.tsv files, one per scored file")
    p.add_argument("--block", type=int, help="block for the SNP-weight profile")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "scan":
                return cmd_scan(resolve(args))
            if args.command == "calibrate":
                return cmd_calibrate(resolve(args))
            if args.command == "simulate":
                return cmd_simulate(args)
            return cmd_report(args)
    except ValidationError as exc:
        print(f"blockscan: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"blockscan: numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"blockscan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
