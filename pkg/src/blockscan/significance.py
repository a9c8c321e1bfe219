"""Permutation thresholds, block ranking, truth summaries and empirical power."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import format_float
from .errors import ValidationError

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("method", "best", "gt095", "median", "max", "mean", "sign")


def permutation(n, seed, replicate=None):
    """Row permutation drawn from ``default_rng([seed, replicate])``."""
    key = seed if replicate is None else [seed, replicate]
    return np.random.default_rng(key).permutation(n)


def permute_rows(Y, seed, replicate=None):
    """Shuffle phenotype rows; sample ids stay in place so genotype linkage is broken."""
    vals = np.asarray(getattr(Y, "values", Y))
    perm = permutation(len(vals), seed, replicate)
    if hasattr(Y, "with_values"):
        return Y.with_values(vals[perm])
    return vals[perm]


@dataclass(frozen=True)
class NullDistribution:
    max_scores: np.ndarray
    n_perm: int
    method: str
    seed: int


def order_statistic_index(alpha, n_perm):
    """``k = floor(alpha (n_perm + 1))``; the threshold is the k-th largest null maximum."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if n_perm < 1:
        raise ValidationError("need at least one permutation")
    k = int(math.floor(alpha * (n_perm + 1) + 1e-9))
    if k < 1:
        need = int(math.ceil(1 / alpha - 1 - 1e-9))
        raise ValidationError(f"alpha={alpha} needs at least {need} permutations, got {n_perm}")
    return k


def threshold_from_null(max_scores, alpha):
    scores = np.asarray(max_scores, dtype=float)
    k = order_statistic_index(alpha, len(scores))
    return float(np.sort(scores)[::-1][k - 1])


def _max_testable(scores):
    vals = [s.score for s in scores if s.testable]
    return max(vals) if vals else -math.inf


def null_max_scores(bound, n_perm, seed, threads=1):
    """Maximum block score of each permutation replicate of a bound scorer."""
    from .parallel import run_chunks

    def work(reps):
        return [_max_testable(bound.score(permutation(bound.n_samples, seed, r))) for r in reps]

    return np.asarray(run_chunks(work, list(range(n_perm)), threads), dtype=float)


def genomewide_threshold(scorer, X, Y, partition, n_perm=100, alpha=0.05, seed=0, threads=1, method=""):
    """Family-wise threshold from phenotype-permutation maxima.

    ``scorer`` is either a method object with ``bind(X, Y, partition)`` or a
    plain callable ``scorer(X, Y, partition) -> list of BlockScore``.
    Replicate ``r`` permutes phenotype rows with ``default_rng([seed, r])``.
    """
    k = order_statistic_index(alpha, n_perm)
    from .scan import bind_scorer

    bound = bind_scorer(scorer, X, Y, partition)
    maxima = null_max_scores(bound, n_perm, seed, threads)
    thr = float(np.sort(maxima)[::-1][k - 1])
    return thr, NullDistribution(maxima, n_perm, method or getattr(scorer, "name", ""), seed)


@dataclass
class ScanResult:
    scores: list
    rank_scaled: np.ndarray
    threshold: float | None = None
    significant: list = field(default_factory=list)

    def block_ids(self):
        return [s.block_id for s in self.scores]

    def with_threshold(self, threshold):
        sig = [s.block_id for s in self.scores if s.testable and s.score > threshold]
        return ScanResult(self.scores, self.rank_scaled, float(threshold), sig)


def scaled_ranks(values):
    """Average-tie ranks mapped linearly so the top value gets 1 and the bottom 0.

    NaN entries (untestable blocks) are excluded and stay NaN.
    """
    v = np.asarray(values, dtype=float)
    out = np.full(v.shape, np.nan)
    ok = ~np.isnan(v)
    m = int(ok.sum())
    if m == 0:
        return out
    if m == 1 or np.ptp(v[ok]) == 0:
        if m > 1:
            warnings.warn("all block scores are equal; every rank set to 0.5", RuntimeWarning, stacklevel=2)
        out[ok] = 0.5
        return out
    out[ok] = (rankdata(v[ok], method="average") - 1.0) / (m - 1)
    return out


def rank_blocks(scores):
    scores = list(scores)
    if len(scores) < 2:
        raise ValidationError("ranking needs at least two blocks")
    return ScanResult(scores, scaled_ranks([s.score if s.testable else math.nan for s in scores]))


@dataclass(frozen=True)
class SummaryRow:
    method: str
    best: int | None
    gt095: int | None
    median: float | None
    max: float | None
    mean: float | None
    sign: int | None
    n_blocks: int = 0
    n_significant: int | None = None


def summarize_truth_rankings(results, truth=None):
    """Per-method summary of the scaled ranks of known causal blocks.

    ``results`` maps method name to ``(block_ids, rank_scaled, significant)``
    where ``significant`` is a boolean sequence or None. Untestable blocks
    (NaN rank) count as rank 0. ``best`` credits every method tied for the
    highest rank of a truth block.
    """
    tables = {}
    for method, (ids, ranks, sig) in results.items():
        ranks = np.nan_to_num(np.asarray(ranks, dtype=float), nan=0.0)
        tables[method] = (dict(zip(ids, ranks)), None if sig is None else dict(zip(ids, sig)))
    rows = []
    truth = sorted(truth) if truth else []
    if truth:
        for method, (rk, _) in tables.items():
            missing = [b for b in truth if b not in rk]
            if missing:
                raise ValidationError(f"truth blocks {missing} not scored by method {method}")
        top = {b: max(rk[b] for rk, _ in tables.values()) for b in truth}
    for method, (rk, sig) in tables.items():
        n_sig = None if sig is None else int(sum(bool(x) for x in sig.values()))
        if not truth:
            rows.append(SummaryRow(method, None, None, None, None, None, None, len(rk), n_sig))
            continue
        r = np.array([rk[b] for b in truth])
        best = int(sum(rk[b] >= top[b] for b in truth))
        sign = None if sig is None else int(sum(bool(sig[b]) for b in truth))
        rows.append(SummaryRow(method, best, int(np.sum(r > 0.95)), float(np.median(r)), float(r.max()),
                               float(r.mean()), sign, len(rk), n_sig))
    return rows


def write_summary(rows, path, with_truth=True):
    def fmt(x):
        if x is None:
            return "NA"
        return str(x) if isinstance(x, (int, np.integer)) else format_float(x)

    cols = SUMMARY_COLUMNS if with_truth else ("method", "n_blocks", "n_significant")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(getattr(row, c)) if c != "method" else row.method for c in cols) + "\n")


def empirical_threshold(scores_null, fpr):
    """The ``max(1, floor(fpr * N))``-th largest null score."""
    null = np.sort(np.nan_to_num(np.asarray(scores_null, dtype=float), nan=-np.inf))[::-1]
    if null.size == 0:
        raise ValidationError("need at least one null score")
    if not 0 < fpr < 1:
        raise ValidationError("fpr must lie in (0, 1)")
    k = max(1, int(math.floor(fpr * null.size + 1e-9)))
    return float(null[k - 1])


def empirical_power(scores_effect, scores_null, fpr=0.05):
    """Share of effect scores strictly above the null threshold at false-positive rate ``fpr``."""
    eff = np.nan_to_num(np.asarray(scores_effect, dtype=float), nan=-np.inf)
    if eff.size == 0:
        raise ValidationError("need at least one effect score")
    return float(np.mean(eff > empirical_threshold(scores_null, fpr)))
