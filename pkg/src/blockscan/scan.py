"""Method registry and genome scans.

Every method is bound once to ``(X, Y, partition)``; binding precomputes
everything that does not change under a permutation of phenotype rows
(whitened genotype blocks, whitened phenotypes, principal components, the
trait correlation graph, latent factors). A bound scorer then scores any
row permutation of the phenotypes by indexing, and can score any subset of
its work units (blocks or windows), which is what the parallel driver
distributes. Each block is always computed by the same sequence of
floating-point operations, so results never depend on the chunking.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .blocks import build_windows
from .cca import EIG_FLOOR, inv_sqrt_cov, single_snp_scores, wilks_log_pvalue, whiten
from .errors import NumericalError, RankDeficiencyError, ValidationError
from .factors import fit_latent_factors, residualize_factors
from .gflasso import correlation_graph, fit_and_score_block
from .parallel import run_chunks
from .results import OK, BlockScore, neg_log10
from .significance import NullDistribution, null_max_scores, order_statistic_index, rank_blocks
from .sparse_cca import SparseCcaParams, score_block_sparse_direct, score_blocks_windowed

logger = logging.getLogger(__name__)

METHODS = (
    "cca-block", "cca-single", "cca-block-pval-bartlett", "cca-block-pval-rao",
    "scca-window1", "scca-window2", "scca-ld-block", "gflasso", "confounder-adjust",
    "pairwise-best", "pairwise-avg", "pca", "manova",
)


@dataclass(frozen=True)
class MethodOptions:
    seed: int = 0
    window_min_snps: int = 2000
    scca: SparseCcaParams = field(default_factory=SparseCcaParams)
    gflasso_lambda: float | None = None
    gflasso_gamma: float | None = None
    corr_cutoff: float = 0.7
    factors_r: int = 10
    pca_threshold: float = 0.995


def _values(M):
    return np.asarray(getattr(M, "values", M), dtype=float)


def _centered(M):
    M = _values(M)
    return M - M.mean(axis=0)


def _raw_genotypes(G):
    return G.raw() if hasattr(G, "raw") else _values(G)


class Bound:
    """A method bound to data. Subclasses implement ``_score_unit``."""

    def __init__(self, n_samples, units):
        self.n_samples = n_samples
        self.units = list(units)

    def score(self, perm=None, units=None):
        if perm is None:
            perm = np.arange(self.n_samples)
        out = []
        for u in self.units if units is None else units:
            out.extend(self._score_unit(u, perm))
        return sorted(out, key=lambda s: s.block_id)

    def _score_unit(self, unit, perm):
        raise NotImplementedError


class _FunctionBound(Bound):
    def __init__(self, fn, X, Y, partition):
        super().__init__(len(_values(Y)), [None])
        self.fn, self.X, self.Y, self.partition = fn, X, _values(Y), partition

    def _score_unit(self, unit, perm):
        return list(self.fn(self.X, self.Y[perm], self.partition))


def bind_scorer(scorer, X, Y, partition):
    if hasattr(scorer, "bind"):
        return scorer.bind(X, Y, partition)
    if callable(scorer):
        return _FunctionBound(scorer, X, Y, partition)
    raise ValidationError("scorer must have a bind() method or be callable")


def _untestable(q, n, p):
    return q >= n - p - 1


def _whiten_blocks(Xc, partition, n, p):
    out = {}
    for blk in partition:
        if _untestable(blk.n_snps, n, p):
            out[blk.block_id] = None
            continue
        Xb = Xc[:, blk.start:blk.end]
        try:
            Kx = inv_sqrt_cov(Xb.T @ Xb / (n - 1), "X")
        except RankDeficiencyError as exc:
            raise NumericalError(f"block {blk.block_id}: genotype covariance is numerically singular "
                                 f"(eigenvalue below {EIG_FLOOR:g} of the largest)") from exc
        out[blk.block_id] = (Xb @ Kx, Kx)
    return out


class CcaBlockBound(Bound):
    def __init__(self, X, Y, partition, scoring="max_rho"):
        Xc, Y = _centered(X), _values(Y)
        n, p = Y.shape
        super().__init__(n, partition.blocks)
        self.p, self.scoring = p, scoring
        self.Yw = whiten(Y, "Y")
        self.white = _whiten_blocks(Xc, partition, n, p)

    def _score_unit(self, blk, perm):
        wb = self.white[blk.block_id]
        if wb is None:
            return [BlockScore.untestable(blk.block_id, blk.n_snps)]
        Xw, Kx = wb
        n = self.n_samples
        U, d, _ = np.linalg.svd(Xw.T @ self.Yw[perm] / (n - 1), full_matrices=False)
        weights = np.abs(Kx @ U[:, 0])
        if self.scoring == "max_rho":
            return [BlockScore(blk.block_id, float(d[0]), None, weights, OK)]
        d = d[d > max(Xw.shape[1], self.p) * np.finfo(float).eps]
        if d.size == 0:
            return [BlockScore(blk.block_id, 0.0, 1.0, weights, OK)]
        _, logp = wilks_log_pvalue(d, n, self.p, blk.n_snps, self.scoring.split("_")[0])
        return [BlockScore(blk.block_id, neg_log10(logp), math.exp(logp), weights, OK)]


class CcaSingleBound(Bound):
    def __init__(self, X, Y, partition):
        Y = _values(Y)
        n, p = Y.shape
        super().__init__(n, partition.blocks)
        self.p = p
        self.Xc = _centered(X)
        self.sd = np.sqrt((self.Xc**2).sum(axis=0) / (n - 1))
        self.Yw = None if _untestable(1, n, p) else whiten(Y, "Y")

    def _score_unit(self, blk, perm):
        if self.Yw is None:
            return [BlockScore.untestable(blk.block_id, blk.n_snps)]
        n = self.n_samples
        proj = self.Yw[perm].T @ self.Xc[:, blk.start:blk.end] / (n - 1)
        sd = self.sd[blk.start:blk.end]
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.sqrt((proj**2).sum(axis=0)) / sd
        rho[~(sd > 1e-12)] = np.nan
        return [single_snp_scores(rho, n, self.p, blk.block_id)]


class PairwiseBound(Bound):
    def __init__(self, X, Y, partition, kind="best"):
        Y = _values(Y)
        n = len(Y)
        if n < 3:
            raise ValidationError("pairwise regression needs n >= 3")
        super().__init__(n, partition.blocks)
        self.kind = kind
        self.Xs, self.okx = baselines._standardize(_values(X))
        self.Ys, self.oky = baselines._standardize(Y)

    def _score_unit(self, blk, perm):
        n = self.n_samples
        R = self.Xs[:, blk.start:blk.end].T @ self.Ys[perm] / (n - 1)
        t, logp = baselines.pairwise_from_correlations(R, n, self.okx[blk.start:blk.end])
        t[:, ~self.oky] = np.nan
        logp[:, ~self.oky] = np.nan
        best, avg = baselines._summaries(t, logp)
        res = baselines.PairwiseResult(t, np.exp(logp), best, avg, logp)
        return [baselines.pairwise_block_score(res, self.kind, blk.block_id)]


class PcaBound(Bound):
    def __init__(self, X, Y, partition, threshold=0.995):
        Y = _values(Y)
        n = len(Y)
        super().__init__(n, partition.blocks)
        Xv = _values(X)
        self.comps = {}
        for blk in partition:
            scores, load = baselines.principal_components(Xv[:, blk.start:blk.end], threshold)
            s, _ = baselines._standardize(scores) if scores.shape[1] else (scores, None)
            self.comps[blk.block_id] = (s, np.abs(load))
        ys = baselines.principal_components(Y, threshold)[0]
        self.Ys = baselines._standardize(ys)[0]

    def _score_unit(self, blk, perm):
        Xs, load = self.comps[blk.block_id]
        if Xs.shape[1] == 0 or self.Ys.shape[1] == 0:
            return [BlockScore.untestable(blk.block_id, blk.n_snps)]
        n = self.n_samples
        _, logp = baselines.pairwise_from_correlations(Xs.T @ self.Ys[perm] / (n - 1), n)
        i = int(np.argmin(logp.min(axis=1)))
        best = neg_log10(logp.min())
        return [BlockScore(blk.block_id, best, 10.0 ** -best, load[:, i], OK)]


class ManovaBound(Bound):
    def __init__(self, X, Y, partition):
        Y = _values(Y)
        n, p = Y.shape
        super().__init__(n, partition.blocks)
        self.groups = baselines.genotype_groups(_raw_genotypes(X))
        self.Yn = baselines.manova_normalized_y(Y)

    def _score_unit(self, blk, perm):
        G = self.groups[:, blk.start:blk.end]
        return [baselines.manova_score(G, None, blk.block_id, Yn=self.Yn[perm])]


class SccaWindowBound(Bound):
    def __init__(self, X, Y, partition, variant, options):
        Y = _values(Y)
        windows = build_windows(partition, options.window_min_snps)
        super().__init__(len(Y), windows)
        self.Xc, self.Y = _centered(X), Y
        self.partition, self.variant, self.options = partition, variant, options

    def _score_unit(self, win, perm):
        blocks = [self.partition[b] for b in win.blocks]
        cols = slice(blocks[0].start, blocks[-1].end)
        return score_blocks_windowed(self.Xc[:, cols], blocks, self.Y[perm], self.variant,
                                     self.options.scca, [self.options.seed, win.window_id])


class SccaBlockBound(Bound):
    def __init__(self, X, Y, partition, options):
        Y = _values(Y)
        super().__init__(len(Y), partition.blocks)
        self.Xc, self.Y, self.options = _centered(X), Y, options

    def _score_unit(self, blk, perm):
        return [score_block_sparse_direct(self.Xc[:, blk.start:blk.end], self.Y[perm], self.options.scca,
                                          [self.options.seed, blk.block_id], blk.block_id)]


class GflassoBound(Bound):
    def __init__(self, X, Y, partition, options):
        Y = _values(Y)
        super().__init__(len(Y), partition.blocks)
        self.Xc, self.Y, self.options = _centered(X), Y - Y.mean(axis=0), options
        self.graph = correlation_graph(Y, options.corr_cutoff)

    def _score_unit(self, blk, perm):
        o = self.options
        return [fit_and_score_block(self.Xc[:, blk.start:blk.end], self.Y[perm], self.graph, o.gflasso_lambda,
                                    o.gflasso_gamma, seed=[o.seed, blk.block_id], block_id=blk.block_id)]


@dataclass(frozen=True)
class Method:
    name: str
    options: MethodOptions = field(default_factory=MethodOptions)

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValidationError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")

    def bind(self, X, Y, partition):
        n, o = self.name, self.options
        if n == "cca-block":
            return CcaBlockBound(X, Y, partition)
        if n == "cca-block-pval-bartlett":
            return CcaBlockBound(X, Y, partition, "bartlett_logp")
        if n == "cca-block-pval-rao":
            return CcaBlockBound(X, Y, partition, "rao_logp")
        if n == "cca-single":
            return CcaSingleBound(X, Y, partition)
        if n in ("pairwise-best", "pairwise-avg"):
            return PairwiseBound(X, Y, partition, n.split("-")[1])
        if n == "confounder-adjust":
            Yv = _values(Y)
            model = fit_latent_factors(Yv, o.factors_r, o.seed)
            return PairwiseBound(X, residualize_factors(Yv, model), partition, "best")
        if n == "pca":
            return PcaBound(X, Y, partition, o.pca_threshold)
        if n == "manova":
            return ManovaBound(X, Y, partition)
        if n in ("scca-window1", "scca-window2"):
            return SccaWindowBound(X, Y, partition, n.split("-")[1], o)
        if n == "scca-ld-block":
            return SccaBlockBound(X, Y, partition, o)
        return GflassoBound(X, Y, partition, o)


def make_method(name, **options):
    return Method(name, MethodOptions(**options))


def score_blocks(method, X, Y, partition, threads=1):
    """Observed block scores in block order, computed in parallel over work units."""
    bound = bind_scorer(method, X, Y, partition)
    return sorted(run_chunks(lambda units: bound.score(None, units), bound.units, threads),
                  key=lambda s: s.block_id)


@dataclass
class ScanOutput:
    result: object  # ScanResult
    null: NullDistribution | None


def run_scan(method, X, Y, partition, n_perm=0, alpha=0.05, seed=0, threads=1):
    """Score, rank and (with ``n_perm > 0``) calibrate a genome scan."""
    if n_perm:
        order_statistic_index(alpha, n_perm)
    bound = bind_scorer(method, X, Y, partition)
    scores = sorted(run_chunks(lambda units: bound.score(None, units), bound.units, threads),
                    key=lambda s: s.block_id)
    result = rank_blocks(scores)
    null = None
    if n_perm:
        maxima = null_max_scores(bound, n_perm, seed, threads)
        k = order_statistic_index(alpha, n_perm)
        result = result.with_threshold(float(np.sort(maxima)[::-1][k - 1]))
        null = NullDistribution(maxima, n_perm, getattr(method, "name", ""), seed)
    return ScanOutput(result, null)
