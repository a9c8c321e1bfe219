import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from blockscan.data import PhenotypeMatrix
from blockscan.errors import ValidationError
from blockscan.factors import fit_latent_factors, residualize_factors, write_factors


def low_rank(seed, n=200, p=30, r=2, noise=0.01):
    g = np.random.default_rng(seed)
    return 5.0 + g.normal(size=(n, r)) @ g.normal(size=(r, p)) + noise * g.normal(size=(n, p))


def test_rank_two_reconstruction():
    Y = low_rank(0)
    m = fit_latent_factors(Y, 2)
    assert m.converged
    err = np.linalg.norm(Y - (m.mu + m.S @ m.V)) / np.linalg.norm(Y)
    assert err < 0.05


def test_zero_factors():
    Y = low_rank(1)
    m = fit_latent_factors(Y, 0)
    assert m.S.shape == (200, 0) and m.V.shape == (0, 30)
    assert_allclose(m.mu, Y.mean(axis=0))
    assert_allclose(residualize_factors(Y, m), Y - Y.mean(axis=0), atol=1e-12)


def test_noise_factor_explains_little(rng):
    Y = rng.normal(size=(1000, 50))
    m = fit_latent_factors(Y, 1)
    Yc = Y - Y.mean(0)
    share = np.linalg.norm(m.S @ m.V) ** 2 / np.linalg.norm(Yc) ** 2
    assert share < 0.1


def test_scores_orthogonal():
    m = fit_latent_factors(low_rank(2, r=3), 3)
    G = m.S.T @ m.S
    off = G - np.diag(np.diag(G))
    assert np.abs(off).max() < 1e-8 * np.diag(G).max()


def test_residuals_uncorrelated_with_factors():
    Y = low_rank(3)
    m = fit_latent_factors(Y, 2)
    R = residualize_factors(Y, m)
    for k in range(2):
        for j in range(R.shape[1]):
            c = np.corrcoef(R[:, j], m.S[:, k])[0, 1]
            assert abs(c) < 1e-6


@pytest.mark.parametrize("init", ["pca", "random"])
def test_loglik_non_decreasing(init):
    Y = low_rank(4, p=20, r=3, noise=0.5)
    m = fit_latent_factors(Y, 3, seed=1, init=init)
    t = np.array(m.loglik_trace)
    assert np.all(np.diff(t) >= -1e-9 * np.abs(t[:-1]))


def test_random_init_reaches_same_likelihood():
    Y = low_rank(5, p=20, r=2, noise=0.5)
    a = fit_latent_factors(Y, 2, init="pca")
    b = fit_latent_factors(Y, 2, seed=3, init="random", tol=1e-12, max_iter=20_000)
    assert b.loglik_trace[-1] == pytest.approx(a.loglik_trace[-1], rel=1e-6)


def test_residual_means_and_permutation_invariance(rng):
    Y = low_rank(6, noise=0.3)
    m = fit_latent_factors(Y, 2)
    R = residualize_factors(Y, m)
    assert np.all(np.abs(R.mean(axis=0)) < 1e-10)
    perm = rng.permutation(len(Y))
    R2 = residualize_factors(Y[perm], fit_latent_factors(Y[perm], 2))
    assert_allclose(R2, R[perm], atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_residual_orthogonality_property(seed, r):
    Y = low_rank(seed % 10_000, n=60, p=12, r=2, noise=0.2)
    m = fit_latent_factors(Y, r)
    R = residualize_factors(Y, m)
    scale = np.linalg.norm(R) * np.linalg.norm(m.S)
    assert np.abs(m.S.T @ R).max() <= 1e-8 * scale


def test_phenotype_matrix_round_trip(tmp_path):
    Y = low_rank(7)
    P = PhenotypeMatrix(Y, [f"t{i}" for i in range(30)], [f"s{i}" for i in range(200)])
    m = fit_latent_factors(P, 2)
    R = residualize_factors(P, m)
    assert isinstance(R, PhenotypeMatrix) and R.trait_names == P.trait_names
    write_factors(m, P.sample_ids, tmp_path / "factors.tsv")
    lines = (tmp_path / "factors.tsv").read_text().splitlines()
    assert lines[0] == "sample_id\tfactor1\tfactor2" and len(lines) == 201


def test_errors():
    Y = low_rank(8, n=20, p=5)
    with pytest.raises(ValidationError):
        fit_latent_factors(Y, 5)
    with pytest.raises(ValidationError):
        fit_latent_factors(Y, 1, init="magic")
    m = fit_latent_factors(Y, 1)
    with pytest.raises(ValidationError):
        residualize_factors(Y[:, :4], m)
