"""Span selection and input/target construction for the four pretraining tasks.

SC masks spans of one sentence; MT maps a sentence to its translation; TPSC
masks spans of the pair's concatenation; TSC masks spans of one side and
appends the other side as uncorrupted context. Corrupted inputs replace each
masked span with a unique sentinel; targets concatenate the masked spans,
each prefixed by its sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import DataError
from .vocab import Vocabulary

if TYPE_CHECKING:  # pragma: no cover
    from .pnat import GroupPartition

TASK_SC = "SC"
TASK_MT = "MT"
TASK_TPSC = "TPSC"
TASK_TSC = "TSC"
ALL_TASKS = (TASK_SC, TASK_MT, TASK_TPSC, TASK_TSC)

DEFAULT_NOISE_DENSITY = 0.5
DEFAULT_MEAN_SPAN_LEN = 3


@dataclass(frozen=True)
class SpanMaskPlan:
    """Sorted, disjoint, non-touching token spans selected within one sentence."""

    sentence_len: int
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        prev_end = -1
        for start, length in self.spans:
            if length < 1:
                raise DataError(f"span length must be >= 1, got {length}")
            if start <= prev_end:  # disjoint and never adjacent
                raise DataError(f"span at {start} touches the previous span")
            if start + length > self.sentence_len:
                raise DataError(f"span ({start},{length}) exceeds sentence length {self.sentence_len}")
            prev_end = start + length

    @property
    def n_masked(self) -> int:
        return sum(length for _, length in self.spans)


@dataclass
class TrainingExample:
    task: str
    input_ids: list[int]
    target_ids: list[int]
    target_span_starts: list[int]
    groups: "GroupPartition | None" = None


def _uniform_composition(rng: np.random.Generator, total: int, parts: int, min_part: int) -> list[int]:
    """Uniform composition of `total` into `parts` ordered parts, each >= min_part."""
    free = total - parts * min_part
    if free < 0:
        raise DataError(f"cannot split {total} into {parts} parts of at least {min_part}")
    if parts == 1:
        return [total]
    slots = free + parts - 1
    bars = np.sort(rng.choice(slots, size=parts - 1, replace=False))
    sizes = []
    prev = -1
    for b in bars:
        sizes.append(int(b - prev - 1))
        prev = int(b)
    sizes.append(int(slots - 1 - prev))
    return [s + min_part for s in sizes]


def sample_spans(
    length: int,
    noise_density: float,
    mean_span_len: int,
    rng: np.random.Generator,
) -> SpanMaskPlan:
    """Random span plan: round(length*density) masked tokens (at least one),
    split into round(masked/mean_span_len) spans, lengths and gaps uniform
    among valid compositions. Spans never touch, so density 1.0 forces a
    single span covering the sentence.
    """
    if length <= 0:
        raise DataError("cannot sample spans over an empty sentence")
    if not 0 < noise_density <= 1:
        raise DataError(f"noise_density must be in (0, 1], got {noise_density}")
    if not 1 <= mean_span_len <= length:
        raise DataError(f"mean_span_len must be in 1..{length}, got {mean_span_len}")
    n_masked = max(1, int(round(length * noise_density)))
    n_masked = min(n_masked, length)
    span_count = max(1, int(round(n_masked / mean_span_len)))
    # spans are separated by at least one unmasked token
    span_count = min(span_count, n_masked, length - n_masked + 1)
    lengths = _uniform_composition(rng, n_masked, span_count, 1)
    # gaps: leading/trailing >= 0, interior >= 1
    interior = span_count - 1
    slack = length - n_masked - interior
    raw_gaps = _uniform_composition(rng, slack, span_count + 1, 0)
    spans = []
    pos = raw_gaps[0]
    for k in range(span_count):
        spans.append((pos, lengths[k]))
        pos += lengths[k]
        if k < span_count - 1:
            pos += raw_gaps[k + 1] + 1
    return SpanMaskPlan(sentence_len=length, spans=tuple(spans))


def apply_gi(v: Vocabulary, s: Sequence[int], plan: SpanMaskPlan) -> list[int]:
    """Corrupted input: the k-th span (left to right) becomes sentinel [M_k]."""
    if plan.sentence_len != len(s):
        raise DataError(f"plan is for length {plan.sentence_len}, sentence has {len(s)}")
    if len(plan.spans) > v.sentinel_count:
        raise DataError(f"{len(plan.spans)} spans exceed the sentinel budget {v.sentinel_count}")
    out: list[int] = []
    cursor = 0
    for k, (start, length) in enumerate(plan.spans, start=1):
        out.extend(s[cursor:start])
        out.append(v.sentinel(k))
        cursor = start + length
    out.extend(s[cursor:])
    return out


def apply_go(v: Vocabulary, s: Sequence[int], plan: SpanMaskPlan) -> list[int]:
    """Span target: concatenation of the masked spans, each starting with its sentinel."""
    if plan.sentence_len != len(s):
        raise DataError(f"plan is for length {plan.sentence_len}, sentence has {len(s)}")
    if len(plan.spans) > v.sentinel_count:
        raise DataError(f"{len(plan.spans)} spans exceed the sentinel budget {v.sentinel_count}")
    out: list[int] = []
    for k, (start, length) in enumerate(plan.spans, start=1):
        out.append(v.sentinel(k))
        out.extend(s[start : start + length])
    return out


def target_span_starts(plan: SpanMaskPlan) -> list[int]:
    """Index in the span target where each sentinel sits."""
    starts = []
    pos = 0
    for _, length in plan.spans:
        starts.append(pos)
        pos += 1 + length
    return starts


def reconstruct(v: Vocabulary, gi_out: Sequence[int], go_out: Sequence[int]) -> list[int]:
    """Splice span contents back at sentinel positions; inverse of (g_i, g_o)."""
    contents: dict[int, list[int]] = {}
    current: list[int] | None = None
    target_sentinels = []
    for tok in go_out:
        if v.is_sentinel(tok):
            current = []
            contents[tok] = current
            target_sentinels.append(tok)
        else:
            if current is None:
                raise DataError("span target does not start with a sentinel")
            current.append(tok)
    out: list[int] = []
    input_sentinels = []
    for tok in gi_out:
        if v.is_sentinel(tok):
            input_sentinels.append(tok)
            if tok not in contents:
                raise DataError(f"sentinel {v.tokens[tok]} missing from the span target")
            out.extend(contents[tok])
        else:
            out.append(tok)
    if input_sentinels != target_sentinels:
        raise DataError("sentinel sequences of input and target do not match")
    return out


def make_sc(
    v: Vocabulary,
    s: Sequence[int],
    noise_density: float = DEFAULT_NOISE_DENSITY,
    mean_span_len: int = DEFAULT_MEAN_SPAN_LEN,
    rng: np.random.Generator | None = None,
) -> TrainingExample:
    """Monolingual span corruption: g_i(s) -> g_o(s)."""
    rng = np.random.default_rng() if rng is None else rng
    plan = sample_spans(len(s), noise_density, min(mean_span_len, len(s)), rng)
    return TrainingExample(
        task=TASK_SC,
        input_ids=apply_gi(v, s, plan),
        target_ids=apply_go(v, s, plan),
        target_span_starts=target_span_starts(plan),
    )


def make_mt(e: Sequence[int], f: Sequence[int]) -> TrainingExample:
    """Translation: e in, f out, one logical span starting at target index 0."""
    if not e or not f:
        raise DataError("machine translation needs two nonempty sides")
    return TrainingExample(
        task=TASK_MT,
        input_ids=list(e),
        target_ids=list(f),
        target_span_starts=[0],
    )


def _map_spans_across_boundary(spans: Sequence[tuple[int, int]], e_len: int) -> tuple[tuple[int, int], ...]:
    """Map spans sampled over e++f (no separator) onto e ++ <sep> ++ f.

    A span crossing the boundary is truncated at it, so every masked span
    stays inside one language; spans landing in f shift right by one for the
    separator.
    """
    mapped = []
    for start, length in spans:
        if start < e_len < start + length:
            mapped.append((start, e_len - start))
        elif start >= e_len:
            mapped.append((start + 1, length))
        else:
            mapped.append((start, length))
    return tuple(mapped)


def make_tpsc(
    v: Vocabulary,
    e: Sequence[int],
    f: Sequence[int],
    noise_density: float = DEFAULT_NOISE_DENSITY,
    mean_span_len: int = DEFAULT_MEAN_SPAN_LEN,
    rng: np.random.Generator | None = None,
) -> TrainingExample:
    """Pair span corruption over c = e ++ <sep> ++ f; the separator is unmaskable."""
    if not e or not f:
        raise DataError("pair span corruption needs two nonempty sides")
    rng = np.random.default_rng() if rng is None else rng
    c = list(e) + [v.sep_id] + list(f)
    virtual_len = len(e) + len(f)
    virtual = sample_spans(virtual_len, noise_density, min(mean_span_len, virtual_len), rng)
    plan = SpanMaskPlan(
        sentence_len=len(c), spans=_map_spans_across_boundary(virtual.spans, len(e))
    )
    return TrainingExample(
        task=TASK_TPSC,
        input_ids=apply_gi(v, c, plan),
        target_ids=apply_go(v, c, plan),
        target_span_starts=target_span_starts(plan),
    )


def make_tsc(
    v: Vocabulary,
    e: Sequence[int],
    f: Sequence[int],
    noise_density: float = DEFAULT_NOISE_DENSITY,
    mean_span_len: int = DEFAULT_MEAN_SPAN_LEN,
    rng: np.random.Generator | None = None,
) -> TrainingExample:
    """One-sided span corruption: corrupt e or f (coin flip), give the other
    side uncorrupted after a separator. Input [g_i(x); <sep>; other] -> g_o(x).

    The side draw happens before the span plan, so a run can be replayed from
    the same generator state.
    """
    if not e or not f:
        raise DataError("translation span corruption needs two nonempty sides")
    rng = np.random.default_rng() if rng is None else rng
    corrupt_e = bool(rng.integers(0, 2) == 0)
    corrupted, other = (list(e), list(f)) if corrupt_e else (list(f), list(e))
    plan = sample_spans(len(corrupted), noise_density, min(mean_span_len, len(corrupted)), rng)
    return TrainingExample(
        task=TASK_TSC,
        input_ids=apply_gi(v, corrupted, plan) + [v.sep_id] + other,
        target_ids=apply_go(v, corrupted, plan),
        target_span_starts=target_span_starts(plan),
    )


def example_to_json_dict(ex: TrainingExample) -> dict:
    """JSON-lines record: integer id arrays plus group ranges."""
    return {
        "task": ex.task,
        "input": list(ex.input_ids),
        "target": list(ex.target_ids),
        "span_starts": list(ex.target_span_starts),
        "groups": [[l, r] for l, r in ex.groups.ranges] if ex.groups is not None else [],
    }
