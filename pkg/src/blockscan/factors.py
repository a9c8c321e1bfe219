"""Latent-factor model of the phenotypes and confounder residualization.

``Y = mu + S V + eps`` with ``eps ~ N(0, diag(psi))`` is fitted by
expectation-maximization for maximum-likelihood factor analysis. The factors
are learned from the phenotypes alone; their fitted contribution is then
removed and the residuals replace the phenotypes in downstream tests.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import format_float
from .errors import ValidationError

logger = logging.getLogger(__name__)

PSI_FLOOR = 1e-6


@dataclass(frozen=True)
class FactorModel:
    """Fitted factor model; ``S`` is n x r with orthogonal columns, ``V`` is r x p."""

    S: np.ndarray
    V: np.ndarray
    mu: np.ndarray
    r: int
    noise_var: float
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    loglik_trace: tuple = ()
    converged: bool = True


def _loglik(Syy, L, psi, n):
    p = len(psi)
    Sigma = L @ L.T + np.diag(psi)
    c = np.linalg.cholesky(Sigma)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    Sinv_S = np.linalg.solve(Sigma, Syy)
    return -0.5 * n * (p * np.log(2 * np.pi) + logdet + np.trace(Sinv_S))


def fit_latent_factors(Y, r=10, seed=0, max_iter=5000, tol=1e-8, init="pca"):
    """Maximum-likelihood factor analysis by EM.

    Parameters
    ----------
    Y : array or PhenotypeMatrix, n x p
    r : int
        Number of factors, ``0 <= r < min(n, p)``.
    seed : int
        Seeds the initial loadings when ``init="random"``.
    init : {"pca", "random"}
        Start from the probabilistic-PCA solution or from random loadings.
    tol : float
        Stop when the log-likelihood change is below ``tol`` times its
        magnitude.
    """
    Y = np.asarray(getattr(Y, "values", Y), dtype=float)
    n, p = Y.shape
    if not 0 <= r < min(n, p):
        raise ValidationError(f"number of factors r={r} must satisfy 0 <= r < min(n, p) = {min(n, p)}")
    mu = Y.mean(axis=0)
    Yc = Y - mu
    Syy = Yc.T @ Yc / n
    var = np.diag(Syy).copy()
    if r == 0:
        return FactorModel(np.zeros((n, 0)), np.zeros((0, p)), mu, 0, float(var.mean()), var)
    floor = PSI_FLOOR * np.maximum(var, np.finfo(float).tiny)
    if init == "pca":
        w, U = np.linalg.eigh(Syy)
        w, U = w[::-1], U[:, ::-1]
        sigma2 = max(float(w[r:].mean()), floor.max())
        L = U[:, :r] * np.sqrt(np.maximum(w[:r] - sigma2, 0.0))
        psi = np.maximum(var - (L**2).sum(axis=1), floor)
    elif init == "random":
        rng = np.random.default_rng(seed)
        L = rng.standard_normal((p, r)) * np.sqrt(var)[:, None] / np.sqrt(r)
        psi = var.copy()
    else:
        raise ValidationError(f"unknown init {init!r}")
    trace = [_loglik(Syy, L, psi, n)]
    converged = False
    I = np.eye(r)
    for _ in range(max_iter):
        # E-step via the r x r posterior covariance
        LtPinv = L.T / psi
        G = np.linalg.inv(I + LtPinv @ L)
        beta = G @ LtPinv  # r x p
        Ezz = G + beta @ Syy @ beta.T
        # M-step
        L = Syy @ beta.T @ np.linalg.inv(Ezz)
        psi = np.maximum(np.diag(Syy - L @ beta @ Syy), floor)
        trace.append(_loglik(Syy, L, psi, n))
        if abs(trace[-1] - trace[-2]) < tol * abs(trace[-2]):
            converged = True
            break
    if not converged:
        logger.warning("factor EM did not converge in %d iterations", max_iter)
    LtPinv = L.T / psi
    G = np.linalg.inv(I + LtPinv @ L)
    S = Yc @ (G @ LtPinv).T  # posterior means
    U, d, _ = np.linalg.svd(S, full_matrices=False)
    S = U * d  # orthogonal columns spanning the same space
    V = np.linalg.lstsq(S, Yc, rcond=None)[0]
    return FactorModel(S, V, mu, r, float(psi.mean()), psi, tuple(trace), converged)


def residualize_factors(Y, model):
    """``Y - mu - S V``, re-centred."""
    vals = np.asarray(getattr(Y, "values", Y), dtype=float)
    if vals.shape != (model.S.shape[0], model.V.shape[1]):
        raise ValidationError(
            f"phenotypes {vals.shape} do not match the factor model ({model.S.shape[0]}, {model.V.shape[1]})")
    R = vals - model.mu - model.S @ model.V
    R = R - R.mean(axis=0)
    return Y.with_values(R) if hasattr(Y, "with_values") else R


def write_factors(model, sample_ids, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(["sample_id"] + [f"factor{i + 1}" for i in range(model.r)]) + "\n")
        for sid, row in zip(sample_ids, model.S):
            fh.write("\t".join([sid] + [format_float(x) for x in row]) + "\n")
