"""Grouped (partially non-autoregressive) decoding: target partitioning,
block decoder masks, and the grouped loss.

A target of m spans is divided into n_g groups of consecutive spans; each
position is predicted from the source plus the target prefix of its own
group only. n_g=1 reproduces standard teacher forcing exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .corruption import TASK_MT, TrainingExample
from .errors import DataError


@dataclass(frozen=True)
class GroupPartition:
    """Contiguous half-open ranges covering [0, target_len) exactly."""

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.ranges:
            raise DataError("a partition needs at least one range")
        prev = 0
        for l, r in self.ranges:
            if l != prev or r <= l:
                raise DataError(f"ranges must be contiguous and nonempty, got {self.ranges}")
            prev = r

    @property
    def n_g(self) -> int:
        return len(self.ranges)

    @property
    def target_len(self) -> int:
        return self.ranges[-1][1]

    @property
    def starts(self) -> tuple[int, ...]:
        return tuple(l for l, _ in self.ranges)

    def group_of(self, i: int) -> int:
        for j, (l, r) in enumerate(self.ranges):
            if l <= i < r:
                return j
        raise DataError(f"position {i} outside the partition")


@dataclass(frozen=True)
class AttentionMaskSpec:
    """Decoder self-attention predicate: allowed[i, k] iff k <= i in the same group.

    group_starts lists positions whose teacher-forcing input is <bos>
    (their in-group target context is empty).
    """

    allowed: np.ndarray
    group_starts: tuple[int, ...]


def _balanced_sizes(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + 1] * rem + [base] * (parts - rem)


def partition_groups(example: TrainingExample, n_g: int) -> GroupPartition:
    """Divide the target into n_g groups of consecutive spans.

    With m spans and n_g not dividing m, the first m mod n_g groups take one
    extra span; n_g larger than m is clamped to m. MT targets (a single
    logical span) are split into n_g near-equal contiguous token segments
    instead.
    """
    if n_g < 1:
        raise DataError("n_g must be at least 1")
    T = len(example.target_ids)
    if T == 0:
        raise DataError("cannot partition an empty target")
    if example.task == TASK_MT:
        k = min(n_g, T)
        sizes = _balanced_sizes(T, k)
    else:
        starts = list(example.target_span_starts)
        m = len(starts)
        if m == 0:
            raise DataError("span task example has no span starts")
        if starts[0] != 0:
            raise DataError("first span must start at target position 0")
        k = min(n_g, m)
        run_sizes = _balanced_sizes(m, k)
        sizes = []
        idx = 0
        for run in run_sizes:
            first = starts[idx]
            nxt = starts[idx + run] if idx + run < m else T
            sizes.append(nxt - first)
            idx += run
    ranges = []
    pos = 0
    for size in sizes:
        ranges.append((pos, pos + size))
        pos += size
    return GroupPartition(ranges=tuple(ranges))


def single_group(target_len: int) -> GroupPartition:
    """The n_g=1 degenerate partition (standard autoregressive decoding)."""
    return GroupPartition(ranges=((0, target_len),))


def build_decoder_mask(p: GroupPartition, target_len: int) -> AttentionMaskSpec:
    """Block-lower-triangular self-attention mask for a partition."""
    if p.target_len != target_len:
        raise DataError(f"partition covers {p.target_len} positions, target has {target_len}")
    allowed = np.zeros((target_len, target_len), dtype=bool)
    for l, r in p.ranges:
        for i in range(l, r):
            allowed[i, l : i + 1] = True
    return AttentionMaskSpec(allowed=allowed, group_starts=p.starts)


def pnat_loss(
    log_probs: torch.Tensor | np.ndarray,
    target_ids: Sequence[int],
    p: GroupPartition,
) -> torch.Tensor:
    """Grouped negative log likelihood: -sum_j sum_{i in group j} log p(y_i | ...).

    log_probs must come from a forward pass under the matching decoder mask;
    this reduces to the plain sequence loss when n_g=1.
    """
    lp = torch.as_tensor(log_probs)
    T = len(target_ids)
    if lp.ndim != 2 or lp.shape[0] != T:
        raise DataError(f"log_probs shape {tuple(lp.shape)} does not match target length {T}")
    if p.target_len != T:
        raise DataError(f"partition covers {p.target_len} positions, target has {T}")
    idx = torch.as_tensor(list(target_ids), dtype=torch.long, device=lp.device)
    return -lp.gather(1, idx.unsqueeze(1)).sum()
