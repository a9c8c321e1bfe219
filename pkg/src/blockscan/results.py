"""Per-block score record shared by every scoring method."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

OK = "ok"
UNTESTABLE = "untestable"
EMPTY_SUPPORT = "empty_support"


@dataclass
class BlockScore:
    """Score of one LD-block under one method.

    ``weights`` holds one non-negative importance value per SNP of the block
    (absolute canonical weights or -log10 p-values, depending on the method).
    Untestable blocks carry ``score = nan``.
    """

    block_id: int
    score: float
    pvalue: Optional[float] = None
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    status: str = OK

    @property
    def testable(self):
        return self.status != UNTESTABLE and not math.isnan(self.score)

    @classmethod
    def untestable(cls, block_id, n_snps):
        return cls(block_id, math.nan, None, np.zeros(n_snps), UNTESTABLE)


def neg_log10(logp):
    """-log10 p from a natural-log p-value, clamped at zero."""
    return max(0.0, -float(logp) / math.log(10.0))
