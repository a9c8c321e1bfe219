"""Benchmark data: planted single-SNP effects on correlated multivariate traits.

Genotypes are resampled whole rows of a source LD-block, a causal SNP adds
``x * beta_k`` to the affected traits, correlated Gaussian noise is added and
the causal column is optionally removed so only its correlated neighbours
remain observable.

Real LD-blocks and the real trait correlation matrix are not distributed,
so this module also builds stand-ins: founder-haplotype LD-blocks whose
causal SNP has a tunable correlation with its closest neighbour, and a
137-trait nested-block correlation matrix organised in lipid-like groups.
"""
from __future__ import annotations

import logging
import numbers
from dataclasses import dataclass, field

import numpy as np

from .data import GenotypeMatrix, PhenotypeMatrix, SnpMeta, format_float
from .errors import ValidationError

logger = logging.getLogger(__name__)

TRAIT_GROUPS = (
    ("VLDL", 31), ("IDL", 6), ("LDL", 18), ("HDL", 26), ("CHOL", 9),
    ("GLY", 10), ("APO", 4), ("FA", 15), ("AA", 8), ("MISC", 10),
)
# (group loading, subclass sizes, subclass loading, lipoprotein-factor loading)
_GROUP_DESIGN = {
    "VLDL": (0.75, (6, 5, 5, 5, 5, 5), 0.35, 0.35),
    "IDL": (0.80, (6,), 0.30, 0.30),
    "LDL": (0.70, (6, 6, 6), 0.35, 0.30),
    "HDL": (0.65, (7, 7, 6, 6), 0.40, -0.20),
    "CHOL": (0.60, (9,), 0.25, 0.30),
    "GLY": (0.60, (10,), 0.25, 0.30),
    "APO": (0.60, (4,), 0.25, 0.25),
    "FA": (0.60, (5, 5, 5), 0.35, 0.10),
    "AA": (0.50, (8,), 0.20, 0.00),
    "MISC": (0.30, (10,), 0.15, 0.00),
}
FIXTURE_SEED = 1729
POOL_SIZE = 568


def trait_groups():
    """Mapping group name -> column indices in the 137-trait fixture."""
    out, start = {}, 0
    for name, size in TRAIT_GROUPS:
        out[name] = np.arange(start, start + size)
        start += size
    return out


def trait_names():
    return [f"{name}_{i + 1}" for name, size in TRAIT_GROUPS for i in range(size)]


def metabolite_correlation(seed=FIXTURE_SEED):
    """137 x 137 nested-block correlation matrix ``L L' + diag(1 - h^2)``.

    Factors: one global, one shared by the apoB-lipoprotein groups (HDL
    loads negatively), one per group and one per subclass within a group.
    """
    rng = np.random.default_rng(seed)
    groups = trait_groups()
    p = sum(size for _, size in TRAIT_GROUPS)
    n_sub = sum(len(_GROUP_DESIGN[g][1]) for g, _ in TRAIT_GROUPS)
    L = np.zeros((p, 2 + len(TRAIT_GROUPS) + n_sub))
    sub_col = 2 + len(TRAIT_GROUPS)
    for gi, (name, _) in enumerate(TRAIT_GROUPS):
        g_load, subs, s_load, lp_load = _GROUP_DESIGN[name]
        idx = groups[name]
        jitter = lambda: 1.0 + 0.08 * rng.uniform(-1, 1, size=len(idx))  # noqa: E731
        L[idx, 0] = 0.25 * jitter()
        L[idx, 1] = lp_load * jitter()
        L[idx, 2 + gi] = g_load * jitter()
        start = 0
        for size in subs:
            L[idx[start:start + size], sub_col] = s_load * jitter()[:size]
            start += size
            sub_col += 1
    h2 = (L**2).sum(axis=1)
    scale = np.minimum(1.0, np.sqrt(0.97 / h2))
    L *= scale[:, None]
    C = L @ L.T
    np.fill_diagonal(C, 1.0)
    return C


def vldl_correlation():
    idx = trait_groups()["VLDL"]
    return metabolite_correlation()[np.ix_(idx, idx)]


def idl_correlation():
    idx = trait_groups()["IDL"]
    return metabolite_correlation()[np.ix_(idx, idx)]


def check_correlation(C, tol=1e-10):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("correlation matrix must be square")
    if not np.allclose(C, C.T, atol=1e-12):
        raise ValidationError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(C), 1.0, atol=1e-12):
        raise ValidationError("correlation matrix must have a unit diagonal")
    if np.linalg.eigvalsh(C)[0] < -tol:
        raise ValidationError("correlation matrix is not positive semidefinite")
    return C


def hadamard_power(corr, k):
    """Elementwise ``k``-th power; integer ``k >= 1`` keeps the matrix a valid correlation matrix."""
    if isinstance(k, bool) or not (isinstance(k, numbers.Integral) or (isinstance(k, float) and k.is_integer())):
        raise ValidationError(f"Hadamard exponent must be a positive integer, got {k!r}")
    k = int(k)
    if k < 1:
        raise ValidationError(f"Hadamard exponent must be a positive integer, got {k}")
    C = np.asarray(corr, dtype=float) ** k
    np.fill_diagonal(C, 1.0)
    return C


def symmetric_sqrt(C):
    w, V = np.linalg.eigh(C)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def pve_bound(beta_max, var_x):
    """Upper bound ``b^2 v / (b^2 v + 1)`` on the variance explained by one causal SNP."""
    if beta_max < 0 or var_x < 0:
        raise ValidationError("beta_max and var_x must be non-negative")
    s = beta_max**2 * var_x
    return s / (s + 1.0)


# ---------------------------------------------------------------- LD blocks

@dataclass(frozen=True)
class SourceBlock:
    """Genotype pool of one LD-block with a known causal column."""

    genotypes: np.ndarray  # n_individuals x q, int8 in {0,1,2}
    causal: int
    tag: int
    rho: float  # max |corr| between causal and any other column in the pool


def _col_corr(a, B):
    a = a - a.mean()
    B = B - B.mean(axis=0)
    den = np.sqrt((a @ a) * (B**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (a @ B) / den
    return np.nan_to_num(r)


def founder_block(n_snps=22, target_rho=0.99, n_individuals=POOL_SIZE, seed=0, n_founders=8,
                  causal_freq=0.2, mutation_rate=0.01, min_maf=0.05):
    """LD-block built from a few founder haplotypes.

    The causal SNP marks one founder (allele frequency about ``causal_freq``),
    so it is close to a linear function of the other SNPs, which mark random
    founder subsets. One tag SNP copies the causal allele with random
    haplotype flips until its genotype correlation with the causal SNP
    drops to ``target_rho``; other SNPs are kept below that correlation.
    """
    if n_snps < 2:
        raise ValidationError("a source block needs at least two SNPs")
    if not 0 < target_rho <= 1:
        raise ValidationError("target_rho must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    n_hap = 2 * n_individuals
    freqs = np.concatenate([[causal_freq], rng.dirichlet(np.full(n_founders - 1, 2.0)) * (1 - causal_freq)])
    labels = rng.choice(n_founders, size=n_hap, p=freqs)

    def genos(h):
        return (h[0::2] + h[1::2]).astype(np.int8)

    def mutate(h):
        flip = rng.random(n_hap) < mutation_rate
        return np.where(flip, 1 - h, h)

    causal_h = mutate((labels == 0).astype(np.int8))
    causal_g = genos(causal_h).astype(float)

    tag_h = causal_h.copy()
    for i in rng.permutation(n_hap):
        if _col_corr(genos(tag_h).astype(float), causal_g[:, None])[0] <= target_rho:
            break
        tag_h[i] = 1 - tag_h[i]
    cols = [genos(tag_h)]
    limit = max(target_rho - 0.03, 0.0)
    attempts = 0
    while len(cols) < n_snps - 1:
        attempts += 1
        if attempts > 10000:
            raise ValidationError("could not build a source block with the requested correlation")
        subset = rng.random(n_founders) < 0.5
        if subset.all() or not subset.any():
            continue
        g = genos(mutate(subset[labels].astype(np.int8)))
        maf = g.mean() / 2
        if min(maf, 1 - maf) < min_maf:
            continue
        if abs(_col_corr(g.astype(float), causal_g[:, None])[0]) > limit:
            continue
        cols.append(g)
    order = rng.permutation(n_snps)
    causal, tag = int(order[0]), int(order[1])
    out = np.empty((n_individuals, n_snps), dtype=np.int8)
    out[:, causal] = causal_g
    others = [j for j in range(n_snps) if j != causal]
    out[:, tag] = cols[0]
    rest = [j for j in others if j != tag]
    for j, c in zip(rest, cols[1:]):
        out[:, j] = c
    rho = float(np.max(np.abs(_col_corr(causal_g, out[:, others].astype(float)))))
    return SourceBlock(out, causal, tag, rho)


def select_causal_snp(genotypes, target_rho):
    """Column whose largest absolute correlation with the other columns is nearest ``target_rho``."""
    G = np.asarray(genotypes, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.nan_to_num(np.corrcoef(G, rowvar=False))
    np.fill_diagonal(R, 0.0)
    best = np.abs(R).max(axis=1)
    return int(np.argmin(np.abs(best - target_rho)))


def block_snps(n_snps, block_index=0, chrom="1", prefix="snp"):
    """Metadata for one block: SNPs 0.002 cM apart, blocks 0.1 cM apart."""
    base_bp = 1_000_000 + block_index * 100_000
    base_cm = block_index * 0.1
    return [SnpMeta(f"{prefix}{block_index}_{j}", chrom, base_bp + 1000 * j, round(base_cm + 0.002 * j, 6))
            for j in range(n_snps)]


def source_matrix(block, block_index=0):
    G = block.genotypes if isinstance(block, SourceBlock) else np.asarray(block)
    ids = tuple(f"src{i}" for i in range(len(G)))
    return GenotypeMatrix(G.astype(float), tuple(block_snps(G.shape[1], block_index)), ids)


def sample_genotypes(source, n, seed):
    """Draw ``n`` whole rows from ``source`` uniformly with replacement."""
    vals = np.asarray(getattr(source, "values", source), dtype=float)
    if len(vals) < 1:
        raise ValidationError("source block has no rows")
    rows = np.random.default_rng(seed).integers(0, len(vals), size=n)
    ids = tuple(f"s{i:05d}" for i in range(n))
    snps = getattr(source, "snps", None) or tuple(block_snps(vals.shape[1]))
    return GenotypeMatrix(vals[rows], tuple(snps), ids)


# -------------------------------------------------------------- datasets

@dataclass(frozen=True)
class SimulationConfig:
    source: GenotypeMatrix
    n: int
    causal_snps: tuple  # ((column, remove_after), ...)
    beta_max: float
    affected_traits: tuple  # ((trait, sign), ...)
    noise_corr: np.ndarray
    corr_power: int = 1
    seed: int = 0
    block_id: int = 0
    trait_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "causal_snps", tuple((int(j), bool(r)) for j, r in self.causal_snps))
        object.__setattr__(self, "affected_traits", tuple((int(k), int(s)) for k, s in self.affected_traits))
        check_correlation(self.noise_corr)
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.beta_max < 0:
            raise ValidationError("beta_max must be non-negative")
        if self.beta_max > 0 and not self.affected_traits:
            raise ValidationError("a non-zero effect needs affected traits")
        p = len(self.noise_corr)
        for k, s in self.affected_traits:
            if not 0 <= k < p or s not in (-1, 1):
                raise ValidationError(f"invalid affected trait ({k}, {s})")
        if self.trait_names and len(self.trait_names) != p:
            raise ValidationError("trait_names does not match the correlation matrix")
        hadamard_power(np.eye(1), self.corr_power)


@dataclass(frozen=True)
class SimulationTruth:
    block_ids: tuple
    removed_snp_ids: tuple
    rho: tuple  # per removed causal SNP
    affected: tuple
    effects: tuple  # length-p effect vector per causal SNP


@dataclass(frozen=True)
class SimulatedDataset:
    X: GenotypeMatrix
    Y: PhenotypeMatrix
    truth: SimulationTruth
    causal_values: np.ndarray = field(default=None, repr=False)


def correlated_noise(n, corr, rng):
    return rng.standard_normal((n, len(corr))) @ symmetric_sqrt(corr)


def simulate_dataset(config):
    """Sample genotypes, plant effects, add correlated noise and drop flagged causal columns."""
    src = config.source
    q = src.n_snps
    for j, _ in config.causal_snps:
        if not 0 <= j < q:
            raise ValidationError(f"causal SNP index {j} out of range for a {q}-SNP block")
    geno_ss, eff_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(3)
    G = sample_genotypes(src, config.n, np.random.default_rng(geno_ss))
    X = G.values
    p = len(config.noise_corr)
    eff_rng = np.random.default_rng(eff_ss)
    Y = np.zeros((config.n, p))
    effects = []
    for j, _ in config.causal_snps:
        e = np.zeros(p)
        if config.beta_max > 0:
            for k, s in config.affected_traits:
                e[k] = s * eff_rng.uniform(0.75 * config.beta_max, config.beta_max)
        Y += np.outer(X[:, j] - X[:, j].mean(), e)
        effects.append(e)
    corr = hadamard_power(config.noise_corr, config.corr_power)
    Y += correlated_noise(config.n, corr, np.random.default_rng(noise_ss))
    removed = sorted({j for j, r in config.causal_snps if r})
    keep = [j for j in range(q) if j not in removed]
    rhos = []
    for j in removed:
        r = _col_corr(X[:, j], X[:, keep]) if keep else np.zeros(1)
        rhos.append(float(min(1.0, np.max(np.abs(r)))))
    names = tuple(config.trait_names) or tuple(f"trait{k + 1}" for k in range(p))
    truth = SimulationTruth((config.block_id,), tuple(G.snps[j].snp_id for j in removed), tuple(rhos),
                            config.affected_traits, tuple(effects))
    causal = X[:, [j for j, _ in config.causal_snps]]
    return SimulatedDataset(G.take_columns(keep), PhenotypeMatrix(Y, names, G.sample_ids), truth, causal)


_SOURCES = {}


def scenario_source(n_snps, target_rho, seed):
    """Cached source block of a scenario (shared by all replicates of one setting)."""
    key = (n_snps, target_rho, seed)
    if key not in _SOURCES:
        _SOURCES[key] = founder_block(n_snps, target_rho, seed=seed)
    return _SOURCES[key]


def whole_profile_affected():
    """23 traits in three correlated groups; the HDL group has the opposite sign."""
    g = trait_groups()
    return (tuple((int(k), 1) for k in g["VLDL"][:10]) + tuple((int(k), 1) for k in g["LDL"][:6])
            + tuple((int(k), -1) for k in g["HDL"][:7]))


def whole_profile_config(beta_max, seed=0, n=500, n_snps=22, target_rho=0.99, source_seed=2013,
                         corr_power=1):
    blk = scenario_source(n_snps, target_rho, source_seed)
    return SimulationConfig(source_matrix(blk), n, ((blk.causal, True),), beta_max,
                            whole_profile_affected() if beta_max > 0 else (), metabolite_correlation(),
                            corr_power, seed, 0, tuple(trait_names()))


def subgroup_config(beta_max, corr_power=1, seed=0, n=500, n_snps=22, target_rho=0.99, source_seed=2013,
                    n_affected=10, group="VLDL"):
    """VLDL (31 traits) or IDL (6 traits) noise; the first ``n_affected`` traits share a sign."""
    blk = scenario_source(n_snps, target_rho, source_seed)
    corr = vldl_correlation() if group == "VLDL" else idl_correlation()
    names = tuple(f"{group}_{i + 1}" for i in range(len(corr)))
    affected = tuple((k, 1) for k in range(n_affected)) if beta_max > 0 else ()
    return SimulationConfig(source_matrix(blk), n, ((blk.causal, True),), beta_max, affected, corr,
                            corr_power, seed, 0, names)


# ---------------------------------------------------------------- genomes

@dataclass(frozen=True)
class SimulatedGenome:
    X: GenotypeMatrix
    Y: PhenotypeMatrix
    block_sizes: tuple
    truth: SimulationTruth | None


def genome_block_sizes(n_blocks, seed, low=3, high=22):
    return tuple(int(s) for s in np.random.default_rng([seed, 7]).integers(low, high + 1, size=n_blocks))


def simulate_genome(n_blocks=50, n=300, noise_corr=None, seed=0, block_sizes=None, causal_block=None,
                    beta_max=0.0, affected_traits=(), target_rho=0.99, n_traits=20):
    """Multi-block genome of independent founder blocks plus correlated phenotypes.

    With ``causal_block`` set, that block's causal SNP carries the effect and
    is removed from the genotypes.
    """
    if noise_corr is None:
        idx = trait_groups()["HDL"][:n_traits]
        noise_corr = metabolite_correlation()[np.ix_(idx, idx)]
    noise_corr = check_correlation(noise_corr)
    sizes = tuple(block_sizes) if block_sizes is not None else genome_block_sizes(n_blocks, seed)
    cols, snps, causal_x, removed_id, rho = [], [], None, (), ()
    for b, size in enumerate(sizes):
        blk = founder_block(size, target_rho, n_individuals=n, seed=[seed, b])
        meta = block_snps(size, b)
        keep = list(range(size))
        if b == causal_block:
            causal_x = blk.genotypes[:, blk.causal].astype(float)
            keep.remove(blk.causal)
            removed_id = (meta[blk.causal].snp_id,)
            rho = (blk.rho,)
        cols.append(blk.genotypes[:, keep])
        snps.extend(meta[j] for j in keep)
    X = np.concatenate(cols, axis=1).astype(float)
    p = len(noise_corr)
    rng = np.random.default_rng([seed, 11])
    Y = correlated_noise(n, noise_corr, rng)
    truth = None
    if causal_block is not None:
        e = np.zeros(p)
        for k, s in affected_traits:
            e[k] = s * rng.uniform(0.75 * beta_max, beta_max)
        Y += np.outer(causal_x - causal_x.mean(), e)
        truth = SimulationTruth((causal_block,), removed_id, rho, tuple(affected_traits), (e,))
    ids = tuple(f"s{i:05d}" for i in range(n))
    names = tuple(f"trait{k + 1}" for k in range(p))
    return SimulatedGenome(GenotypeMatrix(X, tuple(snps), ids), PhenotypeMatrix(Y, names, ids), sizes, truth)


def write_truth(truth, path):
    """``truth.tsv``: one row per causal SNP (or one row with empty fields)."""
    header = "causal_block_id\tremoved_snp_ids\trealized_rho\taffected_traits\teffects\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header)
        if truth is None:
            return
        affected = ",".join(str(k) for k, _ in truth.affected)
        removed = ",".join(truth.removed_snp_ids)
        rho = ",".join(format_float(r) for r in truth.rho)
        for e in truth.effects or (None,):
            eff = "" if e is None or not np.any(e) else ",".join(format_float(e[k]) for k, _ in truth.affected)
            for b in truth.block_ids:
                fh.write(f"{b}\t{removed}\t{rho}\t{affected}\t{eff}\n")
