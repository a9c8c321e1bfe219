import numpy as np
import pytest

from blockscan.data import SnpMeta


def write_geno(path, snps, sample_ids, cells):
    """Write a genotype TSV; ``cells`` is a list of per-SNP string lists."""
    lines = ["\t".join(["snp_id", "chrom", "pos_bp", "pos_cM", *sample_ids])]
    for s, row in zip(snps, cells):
        lines.append("\t".join([s.snp_id, s.chrom, str(s.pos_bp), repr(s.pos_cM), *row]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_table(path, names, ids, rows):
    lines = ["\t".join(["sample_id", *names])]
    lines += ["\t".join([i, *map(str, r)]) for i, r in zip(ids, rows)]
    path.write_text("\n".join(lines) + "\n")
    return path


def make_snps(cms, chrom="1"):
    return [SnpMeta(f"rs{j}", chrom, 1000 + 10 * j, float(c)) for j, c in enumerate(cms)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
