"""Baseline block scores: exhaustive pairwise regression, PCA-reduced pairwise
testing and per-SNP MANOVA."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cca import LOG_TINY, whiten, wilks_lambda_log_pvalue
from .errors import ValidationError
from .results import OK, BlockScore, neg_log10

R_CLIP = 1.0 - 1e-15
LN10 = math.log(10.0)


@dataclass(frozen=True)
class PairwiseResult:
    t_scores: np.ndarray  # q x p, NaN for skipped SNPs
    p_values: np.ndarray
    best_pair_score: float
    avg_pair_score: float
    log_p: np.ndarray  # natural log of p_values


def _standardize(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    Mc = M - M.mean(axis=0)
    sd = np.sqrt((Mc**2).sum(axis=0) / (len(M) - 1))
    ok = sd > 1e-12
    out = np.zeros_like(Mc)
    out[:, ok] = Mc[:, ok] / sd[ok]
    return out, ok


def pairwise_from_correlations(R, n, ok_rows=None):
    """t statistics and log p-values of simple regressions from correlations ``R`` (q x p)."""
    R = np.clip(R, -R_CLIP, R_CLIP)
    df = n - 2
    t = R * np.sqrt(df / (1.0 - R**2))
    logp = math.log(2.0) + stats.t.logsf(np.abs(t), df)
    logp = np.minimum(np.maximum(logp, LOG_TINY), 0.0)
    if ok_rows is not None:
        t[~ok_rows] = np.nan
        logp[~ok_rows] = np.nan
    return t, logp


def _summaries(t, logp):
    valid = ~np.isnan(logp)
    if not valid.any():
        return math.nan, math.nan
    return neg_log10(np.min(logp[valid])), float(np.mean(np.abs(t[valid])))


def pairwise_scores(X_block, Y):
    """Regress every phenotype on every SNP separately (t test on the slope, n - 2 df)."""
    Xs, okx = _standardize(X_block)
    Ys, oky = _standardize(Y)
    n = len(Xs)
    if n < 3:
        raise ValidationError("pairwise regression needs n >= 3")
    R = Xs.T @ Ys / (n - 1)
    t, logp = pairwise_from_correlations(R, n, okx)
    t[:, ~oky] = np.nan
    logp[:, ~oky] = np.nan
    best, avg = _summaries(t, logp)
    return PairwiseResult(t, np.exp(logp), best, avg, logp)


def pairwise_block_score(res, kind="best", block_id=0):
    """BlockScore from a :class:`PairwiseResult`; ``kind`` is ``best`` or ``avg``."""
    q = res.t_scores.shape[0]
    if np.isnan(res.best_pair_score):
        return BlockScore.untestable(block_id, q)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN rows of skipped SNPs
        if kind == "best":
            w = np.nan_to_num(-np.nanmin(res.log_p, axis=1) / LN10, nan=0.0)
            return BlockScore(block_id, res.best_pair_score, 10.0 ** -res.best_pair_score, w, OK)
        w = np.nan_to_num(np.nanmean(np.abs(res.t_scores), axis=1), nan=0.0)
    return BlockScore(block_id, res.avg_pair_score, None, w, OK)


def principal_components(M, var_threshold=0.995):
    """Leading principal-component scores explaining at least ``var_threshold`` of the variance.

    Components with numerically zero variance are never retained. Returns
    ``(scores, loadings)``.
    """
    if not 0 < var_threshold <= 1:
        raise ValidationError("var_threshold must lie in (0, 1]")
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    Mc = M - M.mean(axis=0)
    U, d, Vt = np.linalg.svd(Mc, full_matrices=False)
    tol = max(Mc.shape) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    d = d[d > tol]
    if d.size == 0:
        return np.zeros((len(M), 0)), np.zeros((M.shape[1], 0))
    share = np.cumsum(d**2) / np.sum(d**2)
    k = int(np.searchsorted(share, var_threshold - 1e-12) + 1)
    k = min(k, d.size)
    return U[:, :k] * d[:k], Vt[:k].T


def pca_scores(X_block, Y, var_threshold=0.995, block_id=0, y_components=None):
    """Pairwise best-pair score between genotype and phenotype principal components.

    SNP weights are the absolute loadings of the genotype component in the
    best pair.
    """
    Xc, Lx = principal_components(X_block, var_threshold)
    Yc = principal_components(Y, var_threshold)[0] if y_components is None else y_components
    q = Lx.shape[0]
    if Xc.shape[1] == 0 or Yc.shape[1] == 0:
        return BlockScore.untestable(block_id, q)
    res = pairwise_scores(Xc, Yc)
    i = int(np.nanargmin(np.nanmin(res.log_p, axis=1)))
    return BlockScore(block_id, res.best_pair_score, 10.0 ** -res.best_pair_score, np.abs(Lx[:, i]), OK)


def genotype_groups(values):
    """Round (possibly imputed) additive genotypes to the categories {0, 1, 2}."""
    return np.clip(np.rint(np.asarray(values, dtype=float)), 0, 2).astype(np.int8)


def manova_snp_log_pvalue(groups, Yn, p):
    """Rao-F log p-value of one SNP's one-way MANOVA, or None if untestable.

    ``Yn`` is the centred phenotype matrix scaled to ``Yn' Yn = I``, so the
    between-group matrix in these coordinates is ``M' M`` with rows
    ``sqrt(n_g) * mean_g`` and ``|W| / |T| = det(I - M M')``.
    """
    n = len(groups)
    labels, counts = np.unique(groups, return_counts=True)
    if np.sum(counts >= 2) < 2:
        return None
    g = len(labels)
    q = g - 1
    if not n > p + q + 1 or p >= n - g:
        return None
    M = np.stack([Yn[groups == lab].sum(axis=0) / math.sqrt(c) for lab, c in zip(labels, counts)])
    sign, log_lam = np.linalg.slogdet(np.eye(g) - M @ M.T)
    if sign <= 0:
        return LOG_TINY
    _, logp = wilks_lambda_log_pvalue(min(log_lam, 0.0), n, p, q, "rao")
    return max(logp, LOG_TINY)


def manova_normalized_y(Y):
    """Centred ``Y`` mapped to ``Yn' Yn = I`` (whitened and divided by sqrt(n - 1))."""
    Y = np.asarray(Y, dtype=float)
    return whiten(Y, "Y") / math.sqrt(len(Y) - 1)


def manova_score(genotypes, Y, block_id=0, Yn=None):
    """Block score ``-log10 min p`` over per-SNP MANOVAs with genotype groups.

    ``genotypes`` are additive codes (imputed values are rounded to the
    nearest category). SNPs with fewer than two groups of two or more
    members are skipped; a block with every SNP skipped is untestable.
    """
    groups = genotype_groups(genotypes)
    if groups.ndim == 1:
        groups = groups[:, None]
    Yn = manova_normalized_y(Y) if Yn is None else Yn
    p = Yn.shape[1]
    q = groups.shape[1]
    logps = np.full(q, np.nan)
    for j in range(q):
        lp = manova_snp_log_pvalue(groups[:, j], Yn, p)
        if lp is not None:
            logps[j] = lp
    if np.all(np.isnan(logps)):
        return BlockScore.untestable(block_id, q)
    best = float(np.nanmin(logps))
    weights = np.nan_to_num(-logps / LN10, nan=0.0)
    return BlockScore(block_id, neg_log10(best), math.exp(best), weights, OK)
