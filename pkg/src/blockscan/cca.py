"""Classical canonical correlation analysis and Wilks-Lambda significance.

The decomposition whitens both sides with symmetric inverse square roots of
their sample covariances and takes the SVD of the whitened cross-covariance::

    K = Sx^{-1/2} Sxy Sy^{-1/2} = U D V',   a_i = Sx^{-1/2} u_i,  b_i = Sy^{-1/2} v_i

so ``D`` holds the canonical correlations. Significance of "any correlation
non-zero" uses Wilks' Lambda ``prod(1 - rho_i^2)`` with either Bartlett's
chi-square or Rao's F approximation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateCorrelationWarning, RankDeficiencyError, ValidationError
from .results import OK, UNTESTABLE, BlockScore, neg_log10

EIG_FLOOR = 1e-10
SCORINGS = ("max_rho", "bartlett_logp", "rao_logp")
LOG_TINY = math.log(np.finfo(float).tiny)


class OverfitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CcaResult:
    correlations: np.ndarray  # non-increasing
    x_vectors: np.ndarray  # q x k
    y_vectors: np.ndarray  # p x k

    @property
    def k(self):
        return len(self.correlations)


@dataclass(frozen=True)
class WilksStats:
    lam: float
    s: float
    df1: float
    df2: float
    method: str


def inv_sqrt_cov(S, side="X"):
    """Symmetric inverse square root with a relative eigenvalue floor.

    Raises :class:`RankDeficiencyError` when any eigenvalue falls below
    ``EIG_FLOOR`` times the largest one.
    """
    S = np.atleast_2d(S)
    w, V = np.linalg.eigh(S)
    top = w[-1]
    if not top > 0 or w[0] < EIG_FLOOR * top:
        raise RankDeficiencyError(side)
    return (V / np.sqrt(w)) @ V.T


def whiten(M, side="X"):
    """Centre ``M`` and map it to identity sample covariance."""
    M = np.asarray(M, dtype=float)
    M = M - M.mean(axis=0)
    S = M.T @ M / (len(M) - 1)
    return M @ inv_sqrt_cov(S, side)


def canonical_decomposition(X, Y, strict=False):
    """All canonical correlations and vectors of centred ``X`` (n x q) and ``Y`` (n x p)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    n, q = X.shape
    p = Y.shape[1]
    if Y.shape[0] != n:
        raise ValidationError("X and Y must have the same number of rows")
    if n <= max(p, q) + 1:
        msg = f"n={n} is not larger than max(p, q) + 1 = {max(p, q) + 1}; canonical correlations overfit"
        if strict:
            raise ValidationError(msg)
        warnings.warn(msg, OverfitWarning, stacklevel=2)
    X = X - X.mean(axis=0)
    Y = Y - Y.mean(axis=0)
    Sx = X.T @ X / (n - 1)
    Sy = Y.T @ Y / (n - 1)
    Sxy = X.T @ Y / (n - 1)
    Kx = inv_sqrt_cov(Sx, "X")
    Ky = inv_sqrt_cov(Sy, "Y")
    K = Kx @ Sxy @ Ky
    U, d, Vt = np.linalg.svd(K, full_matrices=False)
    k = int(np.sum(d > max(K.shape) * np.finfo(float).eps))
    return CcaResult(d[:k], Kx @ U[:, :k], Ky @ Vt[:k].T)


def _correlations(result):
    if isinstance(result, CcaResult):
        return np.asarray(result.correlations, dtype=float)
    return np.atleast_1d(np.asarray(result, dtype=float))


def rao_s(p, q):
    den = p * p + q * q - 5
    if den <= 0:
        return 1.0
    return math.sqrt((p * p * q * q - 4) / den)


def wilks_stats(result, n, p, q, method="rao"):
    rho = _correlations(result)
    lam = float(np.exp(np.sum(np.log1p(-np.minimum(rho, 1.0) ** 2))))
    s = rao_s(p, q)
    df1 = p * q
    df2 = (2 * n - 3 - p - q) / 2 * s - p * q / 2 + 1
    return WilksStats(lam, s, df1, df2, method)


def wilks_log_pvalue(result, n, p, q, method="bartlett"):
    """Test statistic and natural-log p-value of Wilks' Lambda.

    ``method`` is ``"bartlett"`` (chi-square with pq df) or ``"rao"``
    (F with Rao's df1, df2). A correlation of one gives ``(inf, -inf)``
    and a :class:`DegenerateCorrelationWarning`.
    """
    if method not in ("bartlett", "rao"):
        raise ValidationError(f"unknown approximation {method!r}")
    rho = _correlations(result)
    if rho.size == 0:
        raise ValidationError("need at least one canonical correlation")
    if not n > p + q + 1:
        raise ValidationError(f"n={n} must exceed p + q + 1 = {p + q + 1}")
    if np.any(rho >= 1.0 - 1e-15):
        warnings.warn("canonical correlation of one; p-value is 0", DegenerateCorrelationWarning, stacklevel=2)
        return math.inf, -math.inf
    return wilks_lambda_log_pvalue(float(np.sum(np.log1p(-rho**2))), n, p, q, method)


def wilks_lambda_log_pvalue(log_lam, n, p, q, method="rao"):
    """Statistic and log p-value of a Wilks Lambda ``Lambda(p, n - 1 - q, q)`` given ``log Lambda``."""
    if method == "bartlett":
        stat = -(n - 1 - (p + q + 1) / 2) * log_lam
        return stat, float(stats.chi2.logsf(stat, p * q))
    s = rao_s(p, q)
    df1 = p * q
    df2 = (2 * n - 3 - p - q) / 2 * s - p * q / 2 + 1
    if df2 <= 0:
        raise ValidationError("Rao approximation has non-positive denominator degrees of freedom")
    stat = math.expm1(-log_lam / s) * df2 / df1
    return stat, float(stats.f.logsf(stat, df1, df2))


def cca_pvalue(result, n, p, q, method="bartlett"):
    """``(statistic, pvalue)`` for the hypothesis that all correlations vanish."""
    stat, logp = wilks_log_pvalue(result, n, p, q, method)
    return stat, math.exp(logp)


def _untestable_block(q, n, p):
    return q >= n - p - 1


def score_block_cca(X_block, Y, scoring="max_rho", block_id=0):
    """Score one block jointly: maximum canonical correlation or -log10 p.

    Per-SNP weights are the absolute entries of the first genotype canonical
    vector.
    """
    if scoring not in SCORINGS:
        raise ValidationError(f"unknown CCA scoring {scoring!r}")
    X_block = np.asarray(X_block, dtype=float)
    if X_block.ndim == 1:
        X_block = X_block[:, None]
    n, q = X_block.shape
    p = np.shape(Y)[1]
    if _untestable_block(q, n, p):
        return BlockScore.untestable(block_id, q)
    res = canonical_decomposition(X_block, Y)
    if res.k == 0:
        return BlockScore(block_id, 0.0, 1.0 if scoring != "max_rho" else None, np.zeros(q), OK)
    weights = np.abs(res.x_vectors[:, 0])
    if scoring == "max_rho":
        return BlockScore(block_id, float(res.correlations[0]), None, weights, OK)
    method = "bartlett" if scoring == "bartlett_logp" else "rao"
    _, logp = wilks_log_pvalue(res, n, p, q, method)
    return BlockScore(block_id, neg_log10(logp), math.exp(logp), weights, OK)


def single_snp_correlations(X_block, Yw):
    """Canonical correlation of each SNP column with whitened phenotypes ``Yw``.

    With one genotype variable the decomposition reduces to the norm of
    ``Yw' x / ((n - 1) sd(x))``. Constant columns give NaN.
    """
    X_block = np.asarray(X_block, dtype=float)
    n = X_block.shape[0]
    Xc = X_block - X_block.mean(axis=0)
    sd = np.sqrt((Xc**2).sum(axis=0) / (n - 1))
    proj = Yw.T @ Xc / (n - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.sqrt((proj**2).sum(axis=0)) / sd
    rho[~(sd > 1e-12)] = np.nan
    return rho


def single_snp_scores(rho, n, p, block_id=0):
    """Block score from per-SNP canonical correlations (max rho, -log10 p weights)."""
    q = len(rho)
    valid = ~np.isnan(rho)
    if not valid.any():
        return BlockScore.untestable(block_id, q)
    # one genotype variable: Rao's F is exact with s = 1, df = (p, n - 1 - p)
    r2 = np.minimum(rho[valid], 1.0) ** 2
    df1, df2 = p, n - 1 - p
    with np.errstate(divide="ignore"):
        F = r2 / (1.0 - r2) * df2 / df1
    logps = np.zeros(q)
    logps[valid] = stats.f.logsf(F, df1, df2)
    logps = np.maximum(logps, LOG_TINY)
    weights = np.where(valid, -logps / math.log(10.0), 0.0)
    best = int(np.nanargmax(rho))
    return BlockScore(block_id, float(rho[best]), math.exp(logps[best]), weights, OK)


def score_block_cca_single(X_block, Y, block_id=0):
    """Score each SNP separately against all phenotypes; block score is the maximum."""
    X_block = np.asarray(X_block, dtype=float)
    if X_block.ndim == 1:
        X_block = X_block[:, None]
    n, q = X_block.shape
    p = np.shape(Y)[1]
    if _untestable_block(1, n, p):
        return BlockScore.untestable(block_id, q)
    Yw = whiten(Y, "Y")
    return single_snp_scores(single_snp_correlations(X_block, Yw), n, p, block_id)
