"""Acceptance criteria C1 to C11, each at its stated tolerance.

Every test prints one ``Cn PASS|FAIL: ...`` line (collected again in the
terminal summary) before asserting. Effect sizes marked "pilot" were located
by a sweep and then fixed; see the decisions ledger.
"""
import os
import time

import mpmath
import numpy as np
import pytest
from scipy import optimize, stats

from blockscan import data
from blockscan.baselines import manova_score, pairwise_block_score, pairwise_scores
from blockscan.blocks import build_blocks
from blockscan.cca import canonical_decomposition, cca_pvalue, score_block_cca, score_block_cca_single
from blockscan.cli import main
from blockscan.factors import fit_latent_factors, residualize_factors
from blockscan.gflasso import CorrelationGraph, correlation_graph, gflasso_fit, gflasso_objective
from blockscan.scan import make_method, run_scan, score_blocks
from blockscan.significance import empirical_power, empirical_threshold
from blockscan.simulate import (founder_block, hadamard_power, idl_correlation, metabolite_correlation,
                                simulate_dataset, simulate_genome, subgroup_config, vldl_correlation,
                                whole_profile_affected, whole_profile_config)

pytestmark = pytest.mark.slow

RESULTS = []

C4_BETA = 0.3     # fixed by the criterion
C5_BETA = 0.15    # pilot: corr_power=1 power 0.51, corr_power=80 power 0.23 (100 replicates)
C6_BETA = 0.14    # pilot: rho 0.6 gives single 0.61 / block 0.72 at n=1000
C7_BETA = 0.3     # pilot: 10-block genomes, both variants recover 0.8 to 0.9
C9_BETA = 0.3     # pilot: raw 0.32, residualized 0.86 (100 replicates)


def report(cid, ok, detail):
    line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    RESULTS.append(line)
    assert ok, line


def centred(M):
    M = np.asarray(M, dtype=float)
    return M - M.mean(axis=0)


def split_null_rejection(null, fpr=0.05):
    """Threshold on one half of the null scores, rejection rate on the other half (both ways)."""
    null = np.asarray(null, dtype=float)
    a, b = null[::2], null[1::2]
    return 0.5 * (np.mean(b > empirical_threshold(a, fpr)) + np.mean(a > empirical_threshold(b, fpr)))


# ---------------------------------------------------------------- C1


def brute_force_rho(X, Y, starts=12, seed=0):
    q = X.shape[1]
    r = np.random.default_rng(seed)

    def neg(v):
        return -np.corrcoef(X @ v[:q], Y @ v[q:])[0, 1]

    return max(-optimize.minimize(neg, r.normal(size=q + Y.shape[1]), method="BFGS").fun for _ in range(starts))


def test_c01_cca_oracle_equivalence():
    t0 = time.perf_counter()
    worst_oracle = 0.0
    for s in range(20):
        r = np.random.default_rng([1, s])
        X = r.normal(size=(200, 3))
        Y = 0.4 * X @ r.normal(size=(3, 4)) + r.normal(size=(200, 4))
        rho = canonical_decomposition(centred(X), centred(Y)).correlations[0]
        worst_oracle = max(worst_oracle, abs(rho - brute_force_rho(X, Y, seed=s)))
    r = np.random.default_rng([1, 99])
    X = r.normal(size=(200, 3))
    Y = 0.4 * X @ r.normal(size=(3, 4)) + r.normal(size=(200, 4))
    base = canonical_decomposition(centred(X), centred(Y)).correlations
    worst_affine = 0.0
    for _ in range(100):
        A = r.normal(size=(3, 3)) + 3 * np.eye(3)
        B = r.normal(size=(4, 4)) + 3 * np.eye(4)
        Xt, Yt = X @ A + r.normal(size=3), Y @ B + r.normal(size=4)
        worst_affine = max(worst_affine,
                           np.abs(canonical_decomposition(centred(Xt), centred(Yt)).correlations - base).max())
    elapsed = time.perf_counter() - t0
    report("C1", worst_oracle < 1e-3 and worst_affine < 1e-8 and elapsed < 60,
           f"max |rho1 - brute force| = {worst_oracle:.2e} (< 1e-3), max affine drift = {worst_affine:.2e} "
           f"(< 1e-8), {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------- C2


def test_c02_significance_reductions():
    worst_f = 0.0
    for n in (10, 57, 300, 1000):
        r = np.random.default_rng([2, n])
        x = r.normal(size=n)
        y = 0.3 * x + r.normal(size=n)
        fit = stats.linregress(x, y)
        fitted = fit.intercept + fit.slope * x
        F = ((fitted - y.mean()) ** 2).sum() / (((y - fitted) ** 2).sum() / (n - 2))
        stat, pval = cca_pvalue([abs(np.corrcoef(x, y)[0, 1])], n, 1, 1, "rao")
        worst_f = max(worst_f, abs(stat - F) / F, abs(pval - fit.pvalue) / fit.pvalue)
    mpmath.mp.dps = 50
    lam = (1 - mpmath.mpf("0.5") ** 2) * (1 - mpmath.mpf("0.1") ** 2)
    expected = -(100 - 1 - mpmath.mpf(2 + 3 + 1) / 2) * mpmath.log(lam)
    stat, _ = cca_pvalue([0.5, 0.1], 100, 2, 3, "bartlett")
    err_b = abs(stat - float(expected))
    report("C2", worst_f < 1e-9 and err_b < 1e-9,
           f"Rao F vs regression F max relative error = {worst_f:.1e}; Bartlett {stat:.6f} vs closed form "
           f"{float(expected):.6f}, error {err_b:.1e} (< 1e-9)")


# ---------------------------------------------------------------- C3


def test_c03_fwer_calibration():
    t0 = time.perf_counter()
    method = make_method("cca-block")
    rejections = 0
    for g in range(400):
        gm = simulate_genome(50, 300, seed=[3, g], n_traits=20)
        out = run_scan(method, gm.X, gm.Y, build_blocks(gm.X.snps), n_perm=100, alpha=0.05, seed=g)
        rejections += bool(out.result.significant)
    rate, elapsed = rejections / 400, time.perf_counter() - t0
    report("C3", 0.02 <= rate <= 0.08 and elapsed < 600,
           f"family-wise rejection rate {rate:.4f} over 400 null genomes (target [0.02, 0.08]), {elapsed:.0f}s")


# ---------------------------------------------------------------- C4


def whole_profile_scores(beta, reps, offset, n=500, rho=0.99):
    out = {"single": [], "manova": [], "block": []}
    for r in range(reps):
        ds = simulate_dataset(whole_profile_config(beta, seed=offset + r, n=n, target_rho=rho))
        X, Y = centred(ds.X.values), centred(ds.Y.values)
        out["single"].append(score_block_cca_single(X, Y).score)
        out["block"].append(score_block_cca(X, Y).score)
        out["manova"].append(manova_score(ds.X.values, Y).score)
    return out


def test_c04_power_ordering():
    t0 = time.perf_counter()
    null = whole_profile_scores(0.0, 400, 0)
    eff = whole_profile_scores(C4_BETA, 400, 100_000)
    pw = {m: empirical_power(eff[m], null[m]) for m in ("single", "manova")}
    rej = {m: split_null_rejection(null[m]) for m in ("single", "manova")}
    ok = (pw["single"] >= pw["manova"] - 0.02 and min(pw.values()) >= 0.5
          and all(abs(v - 0.05) <= 0.03 for v in rej.values()))
    report("C4", ok and time.perf_counter() - t0 < 1800,
           f"power CCA-single {pw['single']:.3f}, MANOVA {pw['manova']:.3f}; null rejection "
           f"{rej['single']:.3f} / {rej['manova']:.3f}; {time.perf_counter() - t0:.0f}s")


# ---------------------------------------------------------------- C5


def test_c05_correlation_benefit():
    power = {}
    for k in (1, 80):
        null, eff = [], []
        for r in range(400):
            ds = simulate_dataset(subgroup_config(0.0, k, seed=r))
            null.append(score_block_cca(centred(ds.X.values), centred(ds.Y.values)).score)
            ds = simulate_dataset(subgroup_config(C5_BETA, k, seed=100_000 + r))
            eff.append(score_block_cca(centred(ds.X.values), centred(ds.Y.values)).score)
        power[k] = empirical_power(eff, null)
    ok = power[1] - power[80] >= 0.1 and 0.4 <= power[1] <= 0.9
    report("C5", ok, f"effect {C5_BETA}: CCA-block power {power[1]:.3f} at corr_power=1 (in [0.4, 0.9]) vs "
                     f"{power[80]:.3f} at corr_power=80, gain {power[1] - power[80]:.3f} (>= 0.1)")


# ---------------------------------------------------------------- C6


def test_c06_block_vs_single_tradeoff():
    pw = {}
    for rho in (0.6, 0.99):
        null = whole_profile_scores(0.0, 200, 0, n=1000, rho=rho)
        eff = whole_profile_scores(C6_BETA, 200, 100_000, n=1000, rho=rho)
        pw[rho] = {m: empirical_power(eff[m], null[m]) for m in ("single", "block")}
    low_ok = pw[0.6]["block"] >= pw[0.6]["single"]
    diff = abs(pw[0.99]["block"] - pw[0.99]["single"])
    report("C6", low_ok and diff <= 0.05,
           f"rho~0.6: block {pw[0.6]['block']:.3f} vs single {pw[0.6]['single']:.3f} "
           f"({'ok' if low_ok else 'violated'}); rho~0.99: block {pw[0.99]['block']:.3f} vs single "
           f"{pw[0.99]['single']:.3f}, |diff| {diff:.3f} (<= 0.05)")


# ---------------------------------------------------------------- C7


def test_c07_sparse_window_dominance():
    C = metabolite_correlation()
    hits = {"scca-window1": 0, "scca-ld-block": 0}
    for r in range(50):
        cb = int(np.random.default_rng([7, r]).integers(10))
        gm = simulate_genome(10, 500, C, seed=[7, 1000 + r], causal_block=cb, beta_max=C7_BETA,
                             affected_traits=whole_profile_affected())
        part = build_blocks(gm.X.snps)
        for name in hits:
            # one window spans the whole 10-block genome
            scores = score_blocks(make_method(name, window_min_snps=10**6, seed=r), gm.X, gm.Y, part)
            hits[name] += max(scores, key=lambda s: s.score).block_id == cb
    w1, direct = hits["scca-window1"] / 50, hits["scca-ld-block"] / 50
    report("C7", w1 - direct >= 0.2,
           f"top-1 recovery window1 {w1:.2f} vs ld-block {direct:.2f}, gain {w1 - direct:+.2f} (>= 0.2)")


# ---------------------------------------------------------------- C8


def gflasso_fixture(seed, n=60, q=4, p=5):
    r = np.random.default_rng([8, seed])
    X = centred(r.normal(size=(n, q)))
    noise = np.sqrt(0.8) * r.normal(size=(n, 1)) + np.sqrt(0.2) * r.normal(size=(n, p))
    Y = X @ (r.normal(size=(q, p)) * (r.random((q, p)) < 0.5)) + noise
    return X, centred(Y), r


def test_c08_gflasso_solver():
    grid = (0.0, 0.1, 1.0, 10.0)
    trace_ok, worst_ols, worst_fused = True, 0.0, 0.0
    for s in range(100):
        X, Y, r = gflasso_fixture(s)
        graph = correlation_graph(Y, 0.3)
        lam, gamma = grid[s % 4], grid[(s // 4) % 4]
        m = gflasso_fit(X, Y, graph, lam, gamma)
        t = np.asarray(m.objective_trace)
        trace_ok &= bool(np.all(np.diff(t) <= 0)) and np.isclose(
            t[-1], gflasso_objective(X, Y, graph, lam, gamma, m.B), rtol=1e-9, atol=1e-9)
        ols = np.linalg.solve(X.T @ X, X.T @ Y)
        worst_ols = max(worst_ols, np.abs(gflasso_fit(X, Y, graph, 0.0, 0.0).B - ols).max())
        # r = 1 fused pair: with b_1 = b_2 the minimizer is OLS on the mean of the two traits
        Y2 = Y[:, :2]
        pair = CorrelationGraph(np.array([[0, 1]]), np.array([1.0]), 0.7, 2)
        B = gflasso_fit(X, Y2, pair, 0.0, 1e4).B
        b = np.linalg.solve(X.T @ X, X.T @ Y2.mean(axis=1))
        worst_fused = max(worst_fused, np.abs(B - b[:, None]).max())
    report("C8", trace_ok and worst_ols < 1e-6 and worst_fused < 1e-3,
           f"traces non-increasing on 100 fixtures: {trace_ok}; max |B - OLS| = {worst_ols:.1e} (< 1e-6); "
           f"max fused-pair error = {worst_fused:.1e} (< 1e-3)")


# ---------------------------------------------------------------- C9


def confounded_data(rep, beta, n=500, p=50, r=5):
    rng = np.random.default_rng([9, rep, int(round(beta * 1000))])
    blk = founder_block(10, 0.9, n_individuals=n, seed=[9, rep])
    X = centred(blk.genotypes)
    Y = rng.normal(size=(n, r)) @ rng.normal(size=(r, p)) + rng.normal(size=(n, p))
    Y[:, :5] += beta * X[:, [blk.causal]]
    return X, centred(Y)


def best_pair(X, Y):
    return pairwise_block_score(pairwise_scores(X, Y), "best").score


def test_c09_confounder_residualization():
    raw = {0.0: [], C9_BETA: []}
    res = {0.0: [], C9_BETA: []}
    for beta, offset in ((0.0, 0), (C9_BETA, 100_000)):
        for rep in range(200):
            X, Y = confounded_data(offset + rep, beta)
            raw[beta].append(best_pair(X, Y))
            res[beta].append(best_pair(X, residualize_factors(Y, fit_latent_factors(Y, 5))))
    p_raw = empirical_power(raw[C9_BETA], raw[0.0])
    p_res = empirical_power(res[C9_BETA], res[0.0])
    report("C9", p_res - p_raw >= 0.1,
           f"best-pair power raw {p_raw:.3f} vs residualized {p_res:.3f}, gain {p_res - p_raw:+.3f} (>= 0.1)")


# ---------------------------------------------------------------- C10


def test_c10_noise_fidelity():
    worst = 0.0
    for k in (1, 2, 10, 80):
        ds = simulate_dataset(whole_profile_config(0.0, seed=k, n=10_000, corr_power=k))
        target = hadamard_power(metabolite_correlation(), k)
        worst = max(worst, np.abs(np.corrcoef(ds.Y.values, rowvar=False) - target).max())
    min_eig = min(np.linalg.eigvalsh(hadamard_power(C, k)).min()
                  for C in (metabolite_correlation(), vldl_correlation(), idl_correlation())
                  for k in (1, 2, 3, 5, 10, 20, 40, 80))
    report("C10", worst < 0.05 and min_eig >= -1e-10,
           f"max elementwise correlation error {worst:.4f} (< 0.05) at n=10,000; min eigenvalue over "
           f"Hadamard-powered fixtures {min_eig:.3e} (>= -1e-10)")


# ---------------------------------------------------------------- C11


def test_c11_determinism_and_performance(tmp_path):
    gm = simulate_genome(1000, 500, metabolite_correlation(), seed=11)
    data.write_genotypes(gm.X, tmp_path / "g.tsv")
    data.write_phenotypes(gm.Y, tmp_path / "p.tsv")
    times, outputs = {}, {}
    for threads in (1, 2, 4):
        out = tmp_path / f"t{threads}"
        t0 = time.perf_counter()
        rc = main(["scan", "--method", "cca-block", "--geno", str(tmp_path / "g.tsv"), "--pheno",
                   str(tmp_path / "p.tsv"), "--out", str(out), "--perms", "100", "--seed", "11",
                   "--threads", str(threads)])
        times[threads] = time.perf_counter() - t0
        assert rc == 0
        outputs[threads] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    identical = outputs[1] == outputs[2] == outputs[4]
    speedup = times[1] / times[4]
    cores = len(os.sched_getaffinity(0))
    report("C11", identical and times[4] < 900 and speedup >= 2.0,
           f"byte-identical across 1/2/4 threads: {identical}; wall time {times[1]:.0f}s / {times[2]:.0f}s / "
           f"{times[4]:.0f}s (< 900s); speedup 1->4 threads {speedup:.2f}x (>= 2) on {cores} available core(s)")
