"""Soft-thresholded sparse CCA and the window-then-block scoring strategy.

The fit alternates::

    a <- normalize(soft(C b, lambda_a)),   b <- normalize(soft(C' a, lambda_b))

on the sample cross-correlation matrix ``C`` of standardized data, i.e. the
within-set covariances are replaced by identities. Thresholds are relative:
``soft(v, lam)_j = sign(v_j) * max(|v_j| - lam * max|v|, 0)``, so any
``lam`` in ``[0, 1]`` is scale free and ``lam = 1`` zeroes everything.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cca import canonical_decomposition, score_block_cca
from .errors import ValidationError
from .results import EMPTY_SUPPORT, OK, UNTESTABLE, BlockScore

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = tuple(round(0.1 * i, 1) for i in range(10))
UNTESTABLE_SUBBLOCK = "untestable_subblock"
VARIANTS = ("window1", "window2")


def default_grid(levels=DEFAULT_LEVELS):
    return tuple(itertools.product(levels, levels))


@dataclass(frozen=True)
class SparseCcaParams:
    lambda_a: float = 0.0
    lambda_b: float = 0.0
    grid: tuple = field(default_factory=default_grid)
    folds: int = 5
    max_iter: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple((float(a), float(b)) for a, b in self.grid))
        if not self.grid:
            raise ValidationError("sparse CCA grid must not be empty")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.folds < 2:
            raise ValidationError("need at least two folds")
        for la, lb in self.grid + ((self.lambda_a, self.lambda_b),):
            if not (la >= 0 and lb >= 0):
                raise ValidationError("thresholds must be non-negative")


@dataclass(frozen=True)
class SparseCcaResult:
    a: np.ndarray
    b: np.ndarray
    correlation: float
    converged: bool
    iterations: int
    empty: bool = False
    lambda_a: float = 0.0
    lambda_b: float = 0.0

    @property
    def support_a(self):
        return np.flatnonzero(self.a)

    @property
    def support_b(self):
        return np.flatnonzero(self.b)


def soft_threshold(v, lam):
    v = np.asarray(v, dtype=float)
    top = np.max(np.abs(v)) if v.size else 0.0
    return np.sign(v) * np.maximum(np.abs(v) - lam * top, 0.0)


def _normalize(v):
    nrm = np.linalg.norm(v)
    if not nrm > 0:
        return None
    return v / nrm


def _standardize(M, ref=None):
    """Centre/scale columns by the statistics of ``ref`` (default ``M``).

    Returns the scaled matrix and a mask of columns with positive variance;
    constant columns are set to zero.
    """
    M = np.asarray(M, dtype=float)
    ref = M if ref is None else np.asarray(ref, dtype=float)
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0, ddof=1)
    ok = sd > 1e-12
    out = np.zeros_like(M)
    out[:, ok] = (M[:, ok] - mu[ok]) / sd[ok]
    return out, ok


def _start_vectors(C):
    U, _, Vt = np.linalg.svd(C, full_matrices=False)
    a, b = U[:, 0], Vt[0]
    # deterministic sign: largest-magnitude entry of a positive
    if a[np.argmax(np.abs(a))] < 0:
        a, b = -a, -b
    return a, b


def _iterate(C, start, la, lb, max_iter, tol):
    a, b = start
    for it in range(1, max_iter + 1):
        a_new = _normalize(soft_threshold(C @ b, la))
        if a_new is None:
            return np.zeros(C.shape[0]), np.zeros(C.shape[1]), False, it, True
        b_new = _normalize(soft_threshold(C.T @ a_new, lb))
        if b_new is None:
            return np.zeros(C.shape[0]), np.zeros(C.shape[1]), False, it, True
        delta = max(np.linalg.norm(a_new - a), np.linalg.norm(b_new - b))
        a, b = a_new, b_new
        if delta < tol:
            return a, b, True, it, False
    return a, b, False, max_iter, False


def _corr(u, v):
    u = u - u.mean()
    v = v - v.mean()
    den = np.sqrt((u @ u) * (v @ v))
    return float(u @ v / den) if den > 0 else 0.0


def sparse_cca_fit(X, Y, params=None, lambda_a=None, lambda_b=None):
    """Fit one sparse canonical pair at fixed thresholds.

    Thresholds default to ``params.lambda_a`` / ``params.lambda_b``. The
    iteration starts from the leading singular vectors of ``C``.
    """
    params = params or SparseCcaParams()
    la = params.lambda_a if lambda_a is None else lambda_a
    lb = params.lambda_b if lambda_b is None else lambda_b
    Xs, _ = _standardize(X)
    Ys, _ = _standardize(Y)
    n = len(Xs)
    C = Xs.T @ Ys / (n - 1)
    a, b, converged, iters, empty = _iterate(C, _start_vectors(C), la, lb, params.max_iter, params.tol)
    corr = 0.0 if empty else _corr(Xs @ a, Ys @ b)
    return SparseCcaResult(a, b, corr, converged, iters, empty, la, lb)


def cv_thresholds(X, Y, params=None, seed=0):
    """Pick ``(lambda_a, lambda_b)`` from ``params.grid`` by k-fold CV.

    Each grid pair is scored by the mean held-out correlation of ``X_test a``
    and ``Y_test b``. Ties go to the lexicographically smallest pair. Folds
    are drawn from ``numpy.random.default_rng(seed)``.
    """
    params = params or SparseCcaParams()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    grid = sorted(set(params.grid))
    if len(grid) == 1:
        return grid[0]
    if n < 2 * params.folds:
        raise ValidationError(f"need n >= 2 * folds = {2 * params.folds} samples for CV, have {n}")
    order = np.random.default_rng(seed).permutation(n)
    totals = np.zeros(len(grid))
    used = 0
    for k, test in enumerate(np.array_split(order, params.folds)):
        train = np.setdiff1d(np.arange(n), test)
        Xtr, okx = _standardize(X[train])
        Ytr, oky = _standardize(Y[train])
        if not (okx.all() and oky.all()):
            warnings.warn(f"CV fold {k} has a zero-variance column; skipped", RuntimeWarning, stacklevel=2)
            continue
        Xte, _ = _standardize(X[test], X[train])
        Yte, _ = _standardize(Y[test], Y[train])
        C = Xtr.T @ Ytr / (len(train) - 1)
        start = _start_vectors(C)
        for g, (la, lb) in enumerate(grid):
            a, b, _, _, empty = _iterate(C, start, la, lb, params.max_iter, params.tol)
            if not empty:
                totals[g] += _corr(Xte @ a, Yte @ b)
        used += 1
    if used == 0:
        raise ValidationError("every CV fold had a zero-variance column")
    return grid[int(np.argmax(totals / used))]


def fit_with_cv(X, Y, params=None, seed=0):
    params = params or SparseCcaParams()
    la, lb = cv_thresholds(X, Y, params, seed)
    return sparse_cca_fit(X, Y, params, la, lb)


def _independent_columns(M, tol=1e-8):
    """Indices of a maximal linearly independent subset of columns of ``M``."""
    from scipy.linalg import qr

    Mc = M - M.mean(axis=0)
    if Mc.shape[1] == 0:
        return np.arange(0)
    _, R, piv = qr(Mc, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1e-300))) if diag.size else 0
    return np.sort(piv[:rank])


def score_blocks_windowed(X_window, blocks, Y, variant="window1", params=None, seed=0, fit=None):
    """Score every block of one window from a window-wide sparse fit.

    Step one fits sparse CCA (CV thresholds) on the whole window. Step two
    scores each block by the classical canonical correlation between its
    SNPs with non-zero weight and all phenotypes (``window1``) or only the
    phenotypes with non-zero weight (``window2``). Blocks without supported
    SNPs score 0.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown window variant {variant!r}")
    X_window = np.asarray(X_window, dtype=float)
    Y = np.asarray(Y, dtype=float)
    blocks = list(blocks)
    offset = blocks[0].start
    if fit is None:
        fit = fit_with_cv(X_window, Y, params, seed)
    Yuse = Y if variant == "window1" else Y[:, fit.support_b]
    out = []
    for blk in blocks:
        lo, hi = blk.start - offset, blk.end - offset
        w = np.abs(fit.a[lo:hi])
        cols = np.flatnonzero(w) + lo
        if fit.empty or cols.size == 0 or Yuse.shape[1] == 0:
            out.append(BlockScore(blk.block_id, 0.0, None, w, EMPTY_SUPPORT))
            continue
        # canonical correlations depend only on the column span
        cols = cols[_independent_columns(X_window[:, cols])]
        sub = score_block_cca(X_window[:, cols], Yuse)
        if sub.status == UNTESTABLE:
            out.append(BlockScore(blk.block_id, 0.0, None, w, UNTESTABLE_SUBBLOCK))
        else:
            out.append(BlockScore(blk.block_id, sub.score, None, w, OK))
    return out


def score_block_sparse_direct(X_block, Y, params=None, seed=0, block_id=0):
    """Sparse CCA applied to one block directly; the score is its correlation."""
    fit = fit_with_cv(X_block, Y, params, seed)
    status = EMPTY_SUPPORT if fit.empty else OK
    return BlockScore(block_id, float(fit.correlation), None, np.abs(fit.a), status)


def classical_first_pair(X, Y):
    """First classical canonical pair, as a reference for the sparse fit."""
    res = canonical_decomposition(X, Y)
    return res.correlations[0], res.x_vectors[:, 0], res.y_vectors[:, 0]
