"""Result files: scored blocks, SNP weights, permutation nulls, summaries and plots."""
from __future__ import annotations

import csv
import math

import numpy as np

from .data import format_float
from .errors import ParseError, ValidationError

SCORED_COLUMNS = ("block_id", "chrom", "start_bp", "end_bp", "n_snps", "method", "score", "pvalue",
                  "rank_scaled", "significant", "status")


def _fmt(x):
    if x is None:
        return "NA"
    return format_float(x)


def write_scored_blocks(path, partition, result, method):
    sig = set(result.significant)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(SCORED_COLUMNS) + "\n")
        for s, rank in zip(result.scores, result.rank_scaled):
            blk = partition[s.block_id]
            start, end = partition.bp_range(blk)
            flag = "NA" if result.threshold is None else str(int(s.block_id in sig))
            fh.write("\t".join([str(s.block_id), blk.chrom, str(start), str(end), str(blk.n_snps), method,
                                _fmt(s.score), _fmt(s.pvalue), _fmt(rank), flag, s.status]) + "\n")


def scaled_weights(w):
    """Weights divided by their block maximum (all zero if the maximum is zero)."""
    w = np.nan_to_num(np.asarray(w, dtype=float), nan=0.0)
    top = w.max(initial=0.0)
    return w / top if top > 0 else np.zeros_like(w)


def write_snp_weights(path, partition, scores):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("block_id\tsnp_id\tweight_scaled\n")
        for s in scores:
            blk = partition[s.block_id]
            w = scaled_weights(s.weights) if len(s.weights) == blk.n_snps else np.zeros(blk.n_snps)
            for j, val in zip(blk.columns, w):
                fh.write(f"{s.block_id}\t{partition.snps[j].snp_id}\t{format_float(val)}\n")


def write_null(path_null, path_threshold, null, threshold, alpha, k):
    with open(path_null, "w", encoding="utf-8", newline="") as fh:
        fh.write("replicate\tmax_score\n")
        for r, m in enumerate(null.max_scores):
            fh.write(f"{r}\t{_fmt(m)}\n")
    with open(path_threshold, "w", encoding="utf-8", newline="") as fh:
        fh.write("method\tn_perm\talpha\tk\tseed\tthreshold\n")
        fh.write(f"{null.method}\t{null.n_perm}\t{format_float(alpha)}\t{k}\t{null.seed}\t{_fmt(threshold)}\n")


def _read_table(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh, delimiter="\t"))
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError("empty file", path)
    return rows[0], rows[1:]


def _num(x):
    return math.nan if x in ("NA", "") else float(x)


def read_scored_blocks(path):
    header, rows = _read_table(path)
    missing = [c for c in SCORED_COLUMNS[:10] if c not in header]
    if missing:
        raise ParseError(f"missing columns {missing}", path, 1)
    col = {c: header.index(c) for c in header}
    out = []
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", path, i)
        try:
            out.append({
                "block_id": int(r[col["block_id"]]), "n_snps": int(r[col["n_snps"]]),
                "method": r[col["method"]], "score": _num(r[col["score"]]),
                "rank_scaled": _num(r[col["rank_scaled"]]),
                "significant": None if r[col["significant"]] == "NA" else r[col["significant"]] == "1",
            })
        except ValueError as exc:
            raise ParseError(str(exc), path, i) from exc
    if not out:
        raise ParseError("no scored blocks", path)
    return out


def read_truth_blocks(path):
    header, rows = _read_table(path)
    if "causal_block_id" not in header:
        raise ParseError("missing column causal_block_id", path, 1)
    i = header.index("causal_block_id")
    try:
        return sorted({int(r[i]) for r in rows if r and r[i] != ""})
    except ValueError as exc:
        raise ParseError(str(exc), path) from exc


def read_snp_weights(path):
    _, rows = _read_table(path)
    out = {}
    for r in rows:
        out.setdefault(int(r[0]), []).append((r[1], float(r[2])))
    return out


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "blockscan"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def _rank_axis(y):
    return -np.log10(np.clip(1.0 - np.asarray(y, dtype=float), 1e-4, None) + 1e-4)


def _rank_axis_inv(v):
    return 1.0 - (10.0 ** (-np.asarray(v, dtype=float)) - 1e-4)


def plot_rank_vs_size(tables, truth, svg_path, tsv_path):
    """Scaled rank against block size, with truth blocks marked; y stretched near 1."""
    with open(tsv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("method\tblock_id\tn_snps\trank_scaled\tis_truth\n")
        for method, rows in tables.items():
            for r in rows:
                fh.write(f"{method}\t{r['block_id']}\t{r['n_snps']}\t{_fmt(r['rank_scaled'])}\t"
                         f"{int(r['block_id'] in truth)}\n")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (method, rows) in enumerate(tables.items()):
        size = np.array([r["n_snps"] for r in rows], dtype=float)
        rank = np.nan_to_num(np.array([r["rank_scaled"] for r in rows], dtype=float), nan=0.0)
        is_t = np.array([r["block_id"] in truth for r in rows], dtype=bool)
        ax.scatter(size[~is_t], rank[~is_t], s=4, alpha=0.3, color=f"C{i}", label=method)
        if is_t.any():
            ax.scatter(size[is_t], rank[is_t], s=30, marker="D", color=f"C{i}", edgecolor="k")
    ax.set_yscale("function", functions=(_rank_axis, _rank_axis_inv))
    ax.set_ylim(0, 1)
    ax.set_xlabel("SNPs in block")
    ax.set_ylabel("scaled rank")
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    _save(fig, svg_path)
    plt.close(fig)


def plot_weight_profile(weights, block_id, svg_path, tsv_path):
    """Per-SNP scaled weights of one block for each method."""
    with open(tsv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("method\tblock_id\tposition\tsnp_id\tweight_scaled\n")
        for method, table in weights.items():
            for j, (sid, w) in enumerate(table.get(block_id, [])):
                fh.write(f"{method}\t{block_id}\t{j}\t{sid}\t{format_float(w)}\n")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3))
    for i, (method, table) in enumerate(weights.items()):
        w = [v for _, v in table.get(block_id, [])]
        ax.plot(range(len(w)), w, marker="o", ms=3, color=f"C{i}", label=method)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel(f"SNP position in block {block_id}")
    ax.set_ylabel("scaled weight")
    if weights:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, svg_path)
    plt.close(fig)
