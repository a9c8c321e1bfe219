"""LD-block partitioning by genetic-map gaps and window assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class LdBlock:
    block_id: int
    chrom: str
    start: int  # half-open column range [start, end)
    end: int

    @property
    def n_snps(self):
        return self.end - self.start

    @property
    def columns(self):
        return range(self.start, self.end)


@dataclass(frozen=True)
class Window:
    window_id: int
    chrom: str
    blocks: tuple  # block ids, contiguous
    total_snps: int


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple
    snps: tuple

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def n_snps(self):
        return len(self.snps)

    def bp_range(self, block):
        return self.snps[block.start].pos_bp, self.snps[block.end - 1].pos_bp

    def block_of_column(self):
        """Block index of every SNP column."""
        out = [0] * len(self.snps)
        for b in self.blocks:
            for j in b.columns:
                out[j] = b.block_id
        return out


def build_blocks(snps, gap_cM=0.01):
    """Split an ordered SNP list into LD-blocks.

    A block starts at every chromosome start and at every SNP lying more
    than ``gap_cM`` centimorgans after its predecessor. Chromosomes must
    occupy contiguous runs of columns, sorted by base-pair position.
    """
    if not gap_cM > 0:
        raise ValidationError("gap_cM must be positive")
    snps = tuple(snps)
    if not snps:
        raise ValidationError("cannot partition an empty SNP list")
    blocks, seen_chroms = [], set()
    start = 0
    for j in range(1, len(snps) + 1):
        if j < len(snps):
            prev, cur = snps[j - 1], snps[j]
            if cur.chrom == prev.chrom:
                if cur.pos_bp <= prev.pos_bp or cur.pos_cM < prev.pos_cM:
                    raise ValidationError(
                        f"SNPs not sorted on chromosome {cur.chrom}: {prev.snp_id} then {cur.snp_id}")
                if not cur.pos_cM - prev.pos_cM > gap_cM:
                    continue
            elif cur.chrom in seen_chroms:
                raise ValidationError(f"chromosome {cur.chrom} is not contiguous in the SNP order")
        chrom = snps[start].chrom
        blocks.append(LdBlock(len(blocks), chrom, start, j))
        if j < len(snps) and snps[j].chrom != chrom:
            seen_chroms.add(chrom)
        start = j
    return BlockPartition(tuple(blocks), snps)


def build_windows(partition, min_snps=2000):
    """Greedily merge neighbouring blocks into windows of at least ``min_snps``.

    Windows never cross chromosomes; the last window of a chromosome may be
    smaller than ``min_snps``.
    """
    if min_snps < 1:
        raise ValidationError("min_snps must be >= 1")
    windows, current, count = [], [], 0

    def close():
        nonlocal current, count
        if current:
            windows.append(Window(len(windows), partition[current[0]].chrom, tuple(current), count))
        current, count = [], 0

    for b in partition:
        if current and partition[current[0]].chrom != b.chrom:
            close()
        current.append(b.block_id)
        count += b.n_snps
        if count >= min_snps:
            close()
    close()
    return windows


def window_columns(partition, window):
    first, last = partition[window.blocks[0]], partition[window.blocks[-1]]
    return range(first.start, last.end)


def write_blocks(partition, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("block_id\tchrom\tstart_bp\tend_bp\tn_snps\n")
        for b in partition:
            s, e = partition.bp_range(b)
            fh.write(f"{b.block_id}\t{b.chrom}\t{s}\t{e}\t{b.n_snps}\n")


def single_block(n_snps, chrom="1"):
    """Partition treating all ``n_snps`` columns as one block (no metadata)."""
    if n_snps < 1 or not math.isfinite(n_snps):
        raise ValidationError("a block needs at least one SNP")
    return BlockPartition((LdBlock(0, chrom, 0, int(n_snps)),), ())
