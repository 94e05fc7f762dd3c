"""Corpus ingestion, synthetic cipher parallel data with gold alignments, and
temperature-based sampling over corpora of unequal size."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .vocab import DEFAULT_SENTINEL_COUNT, Vocabulary

log = logging.getLogger(__name__)

# Sparse Markov chain used for cipher sentences: each token has a handful of
# likely successors, so masked-span prediction has real signal to learn.
_CIPHER_SUCCESSORS = 8
_CIPHER_GEOMETRIC = 0.5


@dataclass
class MonolingualCorpus:
    lang: str
    sentences: list[list[int]]

    def __post_init__(self) -> None:
        if not self.lang:
            raise DataError("language code must be nonempty")
        for s in self.sentences:
            if not s:
                raise DataError("monolingual corpus contains an empty sentence")


@dataclass
class ParallelCorpus:
    lang_pair: tuple[str, str]
    pairs: list[tuple[list[int], list[int]]]
    gold_alignments: list[set[tuple[int, int]]] | None = None
    n_rejected: int = 0

    def __post_init__(self) -> None:
        for e, f in self.pairs:
            if not e or not f:
                raise DataError("parallel corpus contains an empty side")
        if self.gold_alignments is not None:
            if len(self.gold_alignments) != len(self.pairs):
                raise DataError("gold alignment count does not match pair count")
            for (e, f), links in zip(self.pairs, self.gold_alignments):
                for i, j in links:
                    if not (0 <= i < len(e) and 0 <= j < len(f)):
                        raise DataError(f"alignment link ({i},{j}) out of bounds")


@dataclass
class SamplingDistribution:
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights <= 0):
            raise DataError("sampling weights must be strictly positive")
        if abs(float(self.weights.sum()) - 1.0) >= 1e-12:
            raise DataError("sampling weights must sum to 1")


def load_monolingual(path: str | os.PathLike, lang: str, v: Vocabulary) -> MonolingualCorpus:
    """One sentence per line; blank lines are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read monolingual file {path}: {e}") from e
    sentences = [v.encode(line) for line in text.splitlines() if line.strip()]
    if not sentences:
        raise DataError(f"no usable lines in {path}")
    return MonolingualCorpus(lang=lang, sentences=sentences)


def load_parallel(path: str | os.PathLike, langs: tuple[str, str], v: Vocabulary) -> ParallelCorpus:
    """UTF-8 TSV with exactly two nonempty tab-separated columns per line.

    Malformed lines are dropped; the count is logged and kept on the corpus.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read parallel file {path}: {e}") from e
    pairs: list[tuple[list[int], list[int]]] = []
    rejected = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0].strip() or not cols[1].strip():
            rejected += 1
            continue
        pairs.append((v.encode(cols[0]), v.encode(cols[1])))
    if not pairs:
        raise DataError(f"no well-formed pairs in {path} ({rejected} lines rejected)")
    if rejected:
        log.warning("%s: rejected %d malformed lines", path, rejected)
    return ParallelCorpus(lang_pair=langs, pairs=pairs, n_rejected=rejected)


def cipher_vocabulary(vocab_size: int, sentinel_count: int = DEFAULT_SENTINEL_COUNT) -> Vocabulary:
    """Canonical vocabulary for cipher corpora: a0..a{V-1} then b0..b{V-1}."""
    if vocab_size < 4:
        raise ConfigError("cipher vocab_size must be at least 4")
    surface = [f"a{i}" for i in range(vocab_size)] + [f"b{i}" for i in range(vocab_size)]
    return Vocabulary(surface, sentinel_count=sentinel_count)


def _cipher_chain(rng: np.random.Generator, vocab_size: int):
    """Start distribution + per-token successor table for cipher sentences."""
    start = 1.0 / (np.arange(vocab_size) + 2.0)
    start /= start.sum()
    n_succ = min(_CIPHER_SUCCESSORS, vocab_size)
    succ_p = _CIPHER_GEOMETRIC ** np.arange(n_succ)
    succ_p /= succ_p.sum()
    succ = np.stack([rng.choice(vocab_size, size=n_succ, replace=False) for _ in range(vocab_size)])
    return np.cumsum(start), succ, np.cumsum(succ_p)


def _cipher_sentence(rng: np.random.Generator, start_cdf, succ, succ_cdf, length: int) -> np.ndarray:
    # inverse-CDF sampling; one uniform block per sentence keeps this fast
    u = rng.random(length)
    toks = np.empty(length, dtype=np.int64)
    toks[0] = min(np.searchsorted(start_cdf, u[0], side="right"), len(start_cdf) - 1)
    branch = np.minimum(np.searchsorted(succ_cdf, u[1:], side="right"), len(succ_cdf) - 1)
    for t in range(1, length):
        toks[t] = succ[toks[t - 1], branch[t - 1]]
    return toks


def generate_cipher_corpus(
    seed: int,
    vocab_size: int,
    n_pairs: int,
    sentence_len_range: tuple[int, int] = (4, 12),
    reorder_window: int = 3,
    sentinel_count: int = DEFAULT_SENTINEL_COUNT,
) -> ParallelCorpus:
    """Parallel corpus of two synthetic languages related by a token bijection.

    Side a sentences follow a seeded sparse Markov chain; side b applies the
    bijection tokenwise and then shuffles positions inside windows of
    reorder_window, so the gold alignment (a positional bijection) is known
    exactly. Ids refer to cipher_vocabulary(vocab_size, sentinel_count).
    Fully deterministic given the seed.
    """
    if vocab_size < 4:
        raise ConfigError("vocab_size must be at least 4")
    if n_pairs < 1:
        raise ConfigError("n_pairs must be at least 1")
    if reorder_window < 1:
        raise ConfigError("reorder_window must be at least 1")
    lo, hi = sentence_len_range
    if not (1 <= lo <= hi):
        raise ConfigError(f"bad sentence_len_range {sentence_len_range}")
    v = cipher_vocabulary(vocab_size, sentinel_count)
    a_base = v.n_specials
    b_base = a_base + vocab_size

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(vocab_size)
    start, succ, succ_p = _cipher_chain(rng, vocab_size)

    pairs: list[tuple[list[int], list[int]]] = []
    alignments: list[set[tuple[int, int]]] = []
    for _ in range(n_pairs):
        length = int(rng.integers(lo, hi + 1))
        e_idx = _cipher_sentence(rng, start, succ, succ_p, length)
        # order[t] = index of the source token placed at target position t
        order = np.arange(length)
        for ws in range(0, length, reorder_window):
            we = min(ws + reorder_window, length)
            order[ws:we] = ws + rng.permutation(we - ws)
        f_idx = perm[e_idx[order]]
        pairs.append(
            ([int(a_base + i) for i in e_idx], [int(b_base + j) for j in f_idx])
        )
        alignments.append({(int(order[t]), t) for t in range(length)})
    return ParallelCorpus(lang_pair=("a", "b"), pairs=pairs, gold_alignments=alignments)


def generate_cipher_monolingual(
    seed: int,
    vocab_size: int,
    n_sentences: int,
    sentence_len_range: tuple[int, int] = (4, 12),
    lang: str = "a",
    sentinel_count: int = DEFAULT_SENTINEL_COUNT,
) -> MonolingualCorpus:
    """Independent monolingual sentences over one cipher language's tokens.

    Side b uses the same chain shapes with its own seed stream, so the two
    monolingual corpora are not translations of each other.
    """
    if lang not in ("a", "b"):
        raise ConfigError("cipher languages are 'a' and 'b'")
    if n_sentences < 1:
        raise ConfigError("n_sentences must be at least 1")
    lo, hi = sentence_len_range
    if not (1 <= lo <= hi):
        raise ConfigError(f"bad sentence_len_range {sentence_len_range}")
    v = cipher_vocabulary(vocab_size, sentinel_count)
    base = v.n_specials + (vocab_size if lang == "b" else 0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    start, succ, succ_p = _cipher_chain(rng, vocab_size)
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(lo, hi + 1))
        idx = _cipher_sentence(rng, start, succ, succ_p, length)
        sentences.append([int(base + i) for i in idx])
    return MonolingualCorpus(lang=lang, sentences=sentences)


def sampling_distribution(sizes: Sequence[int], alpha: float) -> SamplingDistribution:
    """Exponent-normalized proportions: w_i = q_i^alpha / sum_j q_j^alpha.

    q_i are the empirical corpus proportions; alpha=1 is proportional
    sampling and alpha=0 uniform.
    """
    sizes_arr = np.asarray(sizes, dtype=np.float64)
    if sizes_arr.size == 0:
        raise DataError("need at least one corpus size")
    if np.any(sizes_arr <= 0):
        raise DataError("all corpus sizes must be positive")
    if alpha < 0:
        raise ConfigError("alpha must be nonnegative")
    q = sizes_arr / sizes_arr.sum()
    w = q**alpha
    return SamplingDistribution(weights=w / w.sum())


# -- file formats -------------------------------------------------------------


def _atomic_write_text(path: str | os.PathLike, data: str) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def write_monolingual(path: str | os.PathLike, corpus: MonolingualCorpus, v: Vocabulary) -> None:
    _atomic_write_text(path, "\n".join(v.decode(s) for s in corpus.sentences) + "\n")


def write_parallel(path: str | os.PathLike, corpus: ParallelCorpus, v: Vocabulary) -> None:
    lines = [f"{v.decode(e)}\t{v.decode(f)}" for e, f in corpus.pairs]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_alignments(path: str | os.PathLike, corpus: ParallelCorpus) -> None:
    """Pharaoh format: per line, space-separated i-j links, sorted."""
    if corpus.gold_alignments is None:
        raise DataError("corpus has no gold alignments")
    lines = [
        " ".join(f"{i}-{j}" for i, j in sorted(links)) for links in corpus.gold_alignments
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_alignments(path: str | os.PathLike) -> list[set[tuple[int, int]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read alignment file {path}: {e}") from e
    out = []
    for line in text.splitlines():
        links = set()
        for item in line.split():
            i, _, j = item.partition("-")
            links.add((int(i), int(j)))
        out.append(links)
    return out
