"""Genotype/phenotype containers, TSV loaders, QC filters and preprocessing.

Genotype file (``*.geno.tsv``), one row per SNP::

    snp_id  chrom  pos_bp  pos_cM  <sample_id> ...

with genotype cells in ``{0, 1, 2, NA}`` (minor-allele counts). Phenotype and
covariate files have one row per sample::

    sample_id  <trait> ...

with numeric cells only.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

GENO_FIXED_COLUMNS = ("snp_id", "chrom", "pos_bp", "pos_cM")
_GENO_CODES = {"0": 0.0, "1": 1.0, "2": 2.0, "NA": np.nan}


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SnpMeta:
    snp_id: str
    chrom: str
    pos_bp: int
    pos_cM: float


@dataclass(frozen=True)
class GenotypeMatrix:
    """Samples x SNPs additive-coded genotypes.

    ``values`` holds NaN for missing calls until :func:`preprocess` imputes
    them. After preprocessing ``values`` is centred and ``means`` stores the
    per-SNP means that were subtracted, so ``values + means`` recovers the
    (mean-imputed) 0/1/2 scale.
    """

    values: np.ndarray
    snps: tuple
    sample_ids: tuple
    means: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "snps", tuple(self.snps))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if self.means is not None:
            object.__setattr__(self, "means", _frozen(self.means))
        n, q = self.values.shape
        if q != len(self.snps):
            raise ValidationError(f"genotype matrix has {q} columns but {len(self.snps)} SNP records")
        if n != len(self.sample_ids):
            raise ValidationError(f"genotype matrix has {n} rows but {len(self.sample_ids)} sample ids")

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_snps(self):
        return self.values.shape[1]

    @property
    def snp_ids(self):
        return [s.snp_id for s in self.snps]

    @property
    def missing(self):
        return np.isnan(self.values)

    def raw(self):
        """Genotypes on the 0/1/2 scale (imputed entries fractional)."""
        if self.means is None:
            return np.array(self.values)
        return self.values + self.means

    def take_columns(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(
            self,
            values=self.values[:, idx],
            snps=[self.snps[i] for i in idx],
            means=None if self.means is None else self.means[idx],
        )

    def take_rows(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, values=self.values[idx], sample_ids=[self.sample_ids[i] for i in idx])


@dataclass(frozen=True)
class PhenotypeMatrix:
    values: np.ndarray
    trait_names: tuple
    sample_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "trait_names", tuple(self.trait_names))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        n, p = self.values.shape
        if p != len(self.trait_names):
            raise ValidationError(f"phenotype matrix has {p} columns but {len(self.trait_names)} trait names")
        if n != len(self.sample_ids):
            raise ValidationError(f"phenotype matrix has {n} rows but {len(self.sample_ids)} sample ids")

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_traits(self):
        return self.values.shape[1]

    def take_rows(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, values=self.values[idx], sample_ids=[self.sample_ids[i] for i in idx])

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class CovariateMatrix:
    values: np.ndarray
    names: tuple
    sample_ids: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValidationError("covariate matrix columns do not match covariate names")
        if self.sample_ids and len(self.sample_ids) != self.values.shape[0]:
            raise ValidationError("covariate matrix rows do not match sample ids")


# ---------------------------------------------------------------------------
# loading


def _read_rows(path):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        for lineno, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield lineno, row


def load_genotypes(path):
    """Read a ``*.geno.tsv`` file into a :class:`GenotypeMatrix`.

    Missing calls (``NA``) become NaN and stay missing until
    :func:`preprocess`.
    """
    rows = _read_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError("empty genotype file", path) from None
    if tuple(header[:4]) != GENO_FIXED_COLUMNS:
        raise ParseError(f"header must start with {'/'.join(GENO_FIXED_COLUMNS)}", path, lineno)
    sample_ids = header[4:]
    if not sample_ids:
        raise ParseError("genotype file has no sample columns", path, lineno)
    _check_unique(sample_ids, "sample_id", path)

    snps, columns, seen = [], [], set()
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, lineno)
        snp_id, chrom = row[0], row[1]
        if not snp_id:
            raise ParseError("empty snp_id", path, lineno)
        if snp_id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate snp_id {snp_id!r}")
        seen.add(snp_id)
        try:
            pos_bp = int(row[2])
            pos_cm = float(row[3])
        except ValueError:
            raise ParseError("pos_bp must be an integer and pos_cM a real", path, lineno) from None
        if pos_bp < 0 or not pos_cm >= 0:
            raise ParseError("positions must be non-negative", path, lineno)
        try:
            col = [_GENO_CODES[c.strip()] for c in row[4:]]
        except KeyError as exc:
            raise ParseError(f"genotype value {exc.args[0]!r} not in {{0,1,2,NA}}", path, lineno) from None
        snps.append(SnpMeta(snp_id, chrom, pos_bp, pos_cm))
        columns.append(col)
    if not snps:
        raise ParseError("genotype file has no SNP rows", path)
    values = np.array(columns, dtype=float).T
    return GenotypeMatrix(values, snps, sample_ids)


def _load_sample_table(path, kind):
    rows = _read_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(f"empty {kind} file", path) from None
    if header[0] != "sample_id":
        raise ParseError("header must start with sample_id", path, lineno)
    names = header[1:]
    if not names:
        raise ParseError(f"{kind} file has no value columns", path, lineno)
    if any(not n.strip() for n in names):
        raise ValidationError(f"{path}: empty {kind} column name in header")
    _check_unique(names, f"{kind} name", path)
    ids, data = [], []
    for lineno, row in rows:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, lineno)
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            raise ParseError("non-numeric cell", path, lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite cell", path, lineno)
        ids.append(row[0])
        data.append(vals)
    if not ids:
        raise ParseError(f"{kind} file has no sample rows", path)
    _check_unique(ids, "sample_id", path)
    return np.array(data, dtype=float), names, ids


def load_phenotypes(path):
    values, names, ids = _load_sample_table(path, "trait")
    return PhenotypeMatrix(values, names, ids)


def load_covariates(path):
    values, names, ids = _load_sample_table(path, "covariate")
    return CovariateMatrix(values, names, ids)


def _check_unique(items, what, path):
    seen = set()
    for it in items:
        if it in seen:
            raise ValidationError(f"{path}: duplicate {what} {it!r}")
        seen.add(it)


# ---------------------------------------------------------------------------
# writing (used by the simulator and round-trip tests)


def format_float(x):
    """Fixed 9-significant-digit rendering used by every TSV writer."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return format(float(x), ".9g")


def write_genotypes(G, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(GENO_FIXED_COLUMNS + tuple(G.sample_ids)) + "\n")
        raw = G.raw()
        for j, s in enumerate(G.snps):
            cells = ["NA" if np.isnan(v) else str(int(round(v))) for v in raw[:, j]]
            fh.write("\t".join([s.snp_id, s.chrom, str(s.pos_bp), format_float(s.pos_cM)] + cells) + "\n")


def write_sample_table(ids, names, values, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(["sample_id", *names]) + "\n")
        for sid, row in zip(ids, values):
            fh.write("\t".join([sid, *map(format_float, row)]) + "\n")


def write_phenotypes(Y, path):
    write_sample_table(Y.sample_ids, Y.trait_names, Y.values, path)


# ---------------------------------------------------------------------------
# QC and preprocessing


def align_samples(G, Y):
    """Restrict both matrices to their common samples, in ``G``'s row order."""
    in_y = {sid: i for i, sid in enumerate(Y.sample_ids)}
    g_idx = [i for i, sid in enumerate(G.sample_ids) if sid in in_y]
    if not g_idx:
        raise ValidationError("genotype and phenotype files share no sample ids")
    y_idx = [in_y[G.sample_ids[i]] for i in g_idx]
    return G.take_rows(g_idx), Y.take_rows(y_idx)


def genotype_counts(values):
    """Per-SNP counts of genotypes 0, 1 and 2 ignoring missing calls."""
    v = np.asarray(values)
    return np.stack([(v == k).sum(axis=0) for k in (0, 1, 2)], axis=1)


def minor_allele_frequency(counts):
    counts = np.asarray(counts, dtype=float)
    n = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = (counts[:, 1] + 2 * counts[:, 2]) / (2 * n)
    p = np.where(n > 0, p, 0.0)
    return np.minimum(p, 1 - p)


def hwe_pvalue(counts):
    """1-df chi-square Hardy-Weinberg test on observed genotype counts.

    Expected counts use the sample allele frequency. Monomorphic SNPs get
    p-value 1.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    n = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = (counts[:, 1] + 2 * counts[:, 2]) / (2 * n)
        expected = np.stack([n * (1 - p) ** 2, 2 * n * p * (1 - p), n * p**2], axis=1)
        chi2 = ((counts - expected) ** 2 / expected).sum(axis=1)
    poly = (n > 0) & (p > 0) & (p < 1)
    out = np.ones(len(counts))
    out[poly] = stats.chi2.sf(chi2[poly], 1)
    return out


def qc_filter(G, maf_min=0.02, hwe_p_min=1e-5):
    """Drop SNPs with MAF below ``maf_min`` or HWE p-value below ``hwe_p_min``."""
    if np.any(~np.isin(G.values[~np.isnan(G.values)], (0.0, 1.0, 2.0))):
        raise ValidationError("qc_filter expects raw genotype codes in {0,1,2,missing}")
    counts = genotype_counts(G.values)
    keep = (minor_allele_frequency(counts) >= maf_min) & (hwe_pvalue(counts) >= hwe_p_min)
    if not keep.any():
        raise ValidationError("quality control removed every SNP")
    dropped = int((~keep).sum())
    if dropped:
        logger.info("QC removed %d of %d SNPs", dropped, G.n_snps)
    return G.take_columns(np.flatnonzero(keep))


def _covariates_for(C, sample_ids):
    if not C.sample_ids:
        if C.values.shape[0] != len(sample_ids):
            raise ValidationError("covariate rows do not match the phenotype rows")
        return np.asarray(C.values)
    pos = {sid: i for i, sid in enumerate(C.sample_ids)}
    missing = [sid for sid in sample_ids if sid not in pos]
    if missing:
        raise ValidationError(f"covariates missing for {len(missing)} samples, e.g. {missing[0]!r}")
    return np.asarray(C.values)[[pos[sid] for sid in sample_ids]]


def residualize(Y, C):
    """Residuals of an OLS fit of every column of ``Y`` on ``[1, C]``."""
    Y = np.asarray(Y, dtype=float)
    design = np.column_stack([np.ones(len(Y)), np.asarray(C, dtype=float)])
    coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    return Y - design @ coef


def preprocess(G, Y, C=None, scale_Y=False):
    """Impute, centre, optionally residualize on covariates and scale.

    Missing genotypes are replaced by the per-SNP mean; SNPs left without
    variance are dropped with a warning. Every phenotype column is
    residualized on ``[1, C]`` when covariates are given, then centred and,
    with ``scale_Y``, scaled to unit sample standard deviation.
    """
    if G.sample_ids != Y.sample_ids:
        raise ValidationError("genotypes and phenotypes are not aligned; call align_samples first")
    X = np.array(G.values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        means = np.nanmean(X, axis=0)
    all_missing = np.isnan(means)
    means = np.where(all_missing, 0.0, means)
    X = np.where(np.isnan(X), means, X)
    X = X - means
    var = X.var(axis=0)
    ok = (var > 1e-12) & ~all_missing
    if not ok.all():
        bad = [G.snps[j].snp_id for j in np.flatnonzero(~ok)]
        warnings.warn(f"dropping {len(bad)} zero-variance SNP(s): {', '.join(bad[:5])}", stacklevel=2)
    if not ok.any():
        raise ValidationError("no SNP with non-zero variance remains")
    keep = np.flatnonzero(ok)
    G_out = GenotypeMatrix(X[:, keep], [G.snps[j] for j in keep], G.sample_ids, means=means[keep])

    V = np.array(Y.values, dtype=float)
    scale_ref = V.std(axis=0, ddof=1) if len(V) > 1 else np.ones(V.shape[1])
    if C is not None and C.values.shape[1] > 0:
        V = residualize(V, _covariates_for(C, Y.sample_ids))
    V = V - V.mean(axis=0)
    sd = V.std(axis=0, ddof=1) if len(V) > 1 else np.zeros(V.shape[1])
    for k, name in enumerate(Y.trait_names):
        if not sd[k] > 1e-10 * max(scale_ref[k], 1e-300):
            raise ValidationError(f"phenotype {name!r} has zero variance after preprocessing")
    if scale_Y:
        V = V / sd
        V = V - V.mean(axis=0)
    return G_out, Y.with_values(V)
