"""Token/id mapping with the reserved control tokens used by corruption and task formatting.

Id layout is fixed: ``<pad> <bos> <eos> <sep> <unk>``, the four entity tags,
the contiguous sentinel block ``[M_1]..[M_S]``, then surface tokens. Surface
ids are assigned by descending corpus frequency (ties lexicographic), so a
vocabulary is a pure function of its input token streams.
"""

from __future__ import annotations

import hashlib
import os
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, VocabError

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
SEP_TOKEN = "<sep>"
UNK_TOKEN = "<unk>"
ENTITY_TAG_TOKENS = ("<loc>", "<per>", "<org>", "<misc>")
ENTITY_TAG_NAMES = ("LOC", "PER", "ORG", "MISC")
BASE_SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, SEP_TOKEN, UNK_TOKEN) + ENTITY_TAG_TOKENS

DEFAULT_SENTINEL_COUNT = 100


def sentinel_token(k: int) -> str:
    """Surface form of the k-th mask sentinel (1-based)."""
    return f"[M_{k}]"


def special_tokens(sentinel_count: int) -> tuple[str, ...]:
    """All reserved tokens in id order for a given sentinel budget."""
    return BASE_SPECIAL_TOKENS + tuple(sentinel_token(k) for k in range(1, sentinel_count + 1))


class Vocabulary:
    """Dense, immutable token<->id map with reserved specials at the front."""

    def __init__(self, surface_tokens: Sequence[str], sentinel_count: int = DEFAULT_SENTINEL_COUNT):
        if sentinel_count <= 0:
            raise VocabError("sentinel_count must be positive")
        specials = special_tokens(sentinel_count)
        special_set = set(specials)
        seen: set[str] = set()
        for tok in surface_tokens:
            if tok in special_set:
                raise VocabError(f"surface token collides with a special token: {tok!r}")
            if not tok or any(ch.isspace() for ch in tok):
                raise VocabError(f"surface tokens must be nonempty and contain no whitespace: {tok!r}")
            if tok in seen:
                raise VocabError(f"duplicate surface token: {tok!r}")
            seen.add(tok)
        self.sentinel_count = sentinel_count
        self.tokens: tuple[str, ...] = specials + tuple(surface_tokens)
        self.id_of: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        # Corpus tokenization may only ever produce surface ids (or <unk>).
        self._surface_ids: dict[str, int] = {t: self.id_of[t] for t in surface_tokens}

    # -- fixed special ids ---------------------------------------------------

    pad_id = 0
    bos_id = 1
    eos_id = 2
    sep_id = 3
    unk_id = 4

    @property
    def entity_tag_ids(self) -> dict[str, int]:
        """Tag name (LOC/PER/ORG/MISC) -> token id."""
        base = len(BASE_SPECIAL_TOKENS) - len(ENTITY_TAG_TOKENS)
        return {name: base + i for i, name in enumerate(ENTITY_TAG_NAMES)}

    @property
    def sentinel_base(self) -> int:
        return len(BASE_SPECIAL_TOKENS)

    @property
    def n_specials(self) -> int:
        return len(BASE_SPECIAL_TOKENS) + self.sentinel_count

    def sentinel(self, k: int) -> int:
        """Id of the k-th sentinel, k in 1..sentinel_count."""
        if not 1 <= k <= self.sentinel_count:
            raise VocabError(f"sentinel index {k} outside 1..{self.sentinel_count}")
        return self.sentinel_base + k - 1

    def is_sentinel(self, token_id: int) -> bool:
        return self.sentinel_base <= token_id < self.sentinel_base + self.sentinel_count

    def sentinel_index(self, token_id: int) -> int:
        """Inverse of sentinel(): 1-based k for a sentinel id."""
        if not self.is_sentinel(token_id):
            raise VocabError(f"id {token_id} is not a sentinel")
        return token_id - self.sentinel_base + 1

    def is_special(self, token_id: int) -> bool:
        return token_id < self.n_specials

    # -- encode/decode -------------------------------------------------------

    def encode(self, text: str) -> list[int]:
        """Whitespace tokenization; unknown (or special-shaped) tokens map to <unk>."""
        return [self._surface_ids.get(tok, self.unk_id) for tok in text.split()]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise VocabError(f"token id {i} out of range 0..{len(self.tokens) - 1}")
            out.append(self.tokens[i])
        return " ".join(out)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def fingerprint(self) -> str:
        """Content hash used to detect checkpoint/vocabulary mismatches."""
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    # -- serialization: one token per line, line number == id -----------------

    def save(self, path: str | os.PathLike) -> None:
        data = "\n".join(self.tokens) + "\n"
        tmp = Path(path).with_name(Path(path).name + ".tmp")
        tmp.write_text(data, encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"cannot read vocabulary file {path}: {e}") from e
        tokens = [ln for ln in lines if ln != ""]
        n_base = len(BASE_SPECIAL_TOKENS)
        if tuple(tokens[:n_base]) != BASE_SPECIAL_TOKENS:
            raise VocabError(f"vocabulary file {path} does not start with the reserved specials")
        sentinel_count = 0
        while n_base + sentinel_count < len(tokens) and tokens[n_base + sentinel_count] == sentinel_token(sentinel_count + 1):
            sentinel_count += 1
        if sentinel_count == 0:
            raise VocabError(f"vocabulary file {path} has no sentinel block")
        return cls(tokens[n_base + sentinel_count:], sentinel_count=sentinel_count)


def build_vocabulary(
    corpora: Iterable[Iterable[str] | str],
    max_size: int,
    sentinel_count: int = DEFAULT_SENTINEL_COUNT,
) -> Vocabulary:
    """Frequency vocabulary over token streams, capped at max_size total ids.

    max_size counts the reserved specials; the surface budget is
    max_size - n_specials. Ties in frequency break lexicographically, so the
    result does not depend on stream order. Tokens that collide with a
    reserved surface form are skipped (they can never be produced by
    tokenization and would encode to <unk> anyway).
    """
    if sentinel_count <= 0:
        raise VocabError("sentinel_count must be positive")
    special_set = set(special_tokens(sentinel_count))
    budget = max_size - len(special_set)
    if budget <= 0:
        raise VocabError(
            f"max_size {max_size} must exceed the {len(special_set)} reserved special tokens"
        )
    counts: Counter[str] = Counter()
    n_streams = 0
    for stream in corpora:
        n_streams += 1
        toks = stream.split() if isinstance(stream, str) else stream
        for tok in toks:
            if tok in special_set:
                continue
            counts[tok] += 1
    if n_streams == 0 or not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    surface = [tok for tok, _ in ranked[:budget]]
    return Vocabulary(surface, sentinel_count=sentinel_count)
