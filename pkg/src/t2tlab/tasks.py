"""Text-to-text conversion of classification/QA/NER examples and the
constrained greedy decoders.

Input templates: <bos> segment <eos> [segment <eos>]; targets always run
<bos> ... <eos>. No task prefix is prepended. Constrained decoding restricts
each argmax to the task's allowed set: a trie over the label strings, the
passage token set, or the entity-tag automaton.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch

from .errors import DataError, DecodeError
from .model import ModelConfig, encode, next_token_logits
from .vocab import Vocabulary

KIND_CLASSIFICATION = "classification"
KIND_QA = "qa"
KIND_NER = "ner"
KIND_GENERATION = "generation"
TASK_KINDS = (KIND_CLASSIFICATION, KIND_QA, KIND_NER, KIND_GENERATION)


class _TrieNode(dict):
    terminal = False


class LabelTrie:
    """Token-id trie over the label strings; decoding walks it so exactly one
    complete label is emitted."""

    def __init__(self, v: Vocabulary, labels: Sequence[str]):
        if not labels:
            raise DataError("label set is empty")
        self.root = _TrieNode()
        for label in labels:
            ids = v.encode(label)
            if not ids or v.unk_id in ids:
                raise DataError(f"label {label!r} does not tokenize into the vocabulary")
            node = self.root
            for tok in ids:
                node = node.setdefault(tok, _TrieNode())
            node.terminal = True

    def allowed(self, prefix: Sequence[int], eos_id: int) -> list[int]:
        node = self.root
        for tok in prefix:
            if tok not in node:
                raise DecodeError("decoded prefix left the label trie")
            node = node[tok]
        out = sorted(node.keys())
        if node.terminal:
            out.append(eos_id)
        return out


@dataclass
class ClassificationConstraint:
    labels: tuple[str, ...]


@dataclass
class QaConstraint:
    passage_token_ids: frozenset[int]
    answer_in_passage: bool


@dataclass
class NerConstraint:
    source_token_ids: frozenset[int]


@dataclass
class FormattedExample:
    input_ids: list[int]
    target_ids: list[int]
    task_kind: str
    constraint: ClassificationConstraint | QaConstraint | NerConstraint | None = None


def _wrap_segments(v: Vocabulary, segments: list[str]) -> list[int]:
    out = [v.bos_id]
    for seg in segments:
        ids = v.encode(seg)
        if not ids:
            raise DataError("input segment is empty")
        out.extend(ids)
        out.append(v.eos_id)
    return out


def format_classification(
    v: Vocabulary,
    sent_a: str,
    sent_b: str | None,
    label: str,
    label_set: Sequence[str],
) -> FormattedExample:
    """<bos> A <eos> [B <eos>] -> <bos> label <eos>."""
    if label not in label_set:
        raise DataError(f"label {label!r} not in the label set {sorted(label_set)}")
    segments = [sent_a] if sent_b is None else [sent_a, sent_b]
    return FormattedExample(
        input_ids=_wrap_segments(v, segments),
        target_ids=[v.bos_id] + v.encode(label) + [v.eos_id],
        task_kind=KIND_CLASSIFICATION,
        constraint=ClassificationConstraint(labels=tuple(label_set)),
    )


def format_qa(v: Vocabulary, passage: str, question: str, answer: str) -> FormattedExample:
    """<bos> passage <eos> question <eos> -> <bos> answer <eos>; the decoding
    vocabulary is the passage token set plus <eos>. If the answer is not
    fully covered by the passage the example is kept but flagged (constrained
    decoding cannot reach it)."""
    passage_ids = v.encode(passage)
    answer_ids = v.encode(answer)
    reachable = set(answer_ids) <= set(passage_ids)
    return FormattedExample(
        input_ids=_wrap_segments(v, [passage, question]),
        target_ids=[v.bos_id] + answer_ids + [v.eos_id],
        task_kind=KIND_QA,
        constraint=QaConstraint(
            passage_token_ids=frozenset(passage_ids), answer_in_passage=reachable
        ),
    )


def bio_to_entities(tokens: Sequence[str], bio_tags: Sequence[str]) -> list[tuple[str, str]]:
    """BIO tags -> (tag, span text) in input order; I without a matching B is an error."""
    if len(tokens) != len(bio_tags):
        raise DataError("tokens and tags differ in length")
    entities: list[tuple[str, list[str]]] = []
    open_tag: str | None = None
    for tok, tag in zip(tokens, bio_tags):
        if tag == "O":
            open_tag = None
        elif tag.startswith("B-"):
            open_tag = tag[2:]
            entities.append((open_tag, [tok]))
        elif tag.startswith("I-"):
            if open_tag != tag[2:]:
                raise DataError(f"I-{tag[2:]} without a matching B tag")
            entities[-1][1].append(tok)
        else:
            raise DataError(f"malformed BIO tag {tag!r}")
    return [(tag, " ".join(toks)) for tag, toks in entities]


def format_ner(v: Vocabulary, tokens: Sequence[str], bio_tags: Sequence[str]) -> FormattedExample:
    """<bos> sentence <eos> -> <bos> [<tag> entity tokens <sep>]* <eos>.

    Entity-span targets sidestep decoding a long run of O tags."""
    entities = bio_to_entities(tokens, bio_tags)
    tag_ids = v.entity_tag_ids
    target = [v.bos_id]
    for tag, text in entities:
        if tag not in tag_ids:
            raise DataError(f"unknown entity tag {tag!r}")
        target.append(tag_ids[tag])
        target.extend(v.encode(text))
        target.append(v.sep_id)
    target.append(v.eos_id)
    source_ids = v.encode(" ".join(tokens))
    return FormattedExample(
        input_ids=_wrap_segments(v, [" ".join(tokens)]),
        target_ids=target,
        task_kind=KIND_NER,
        constraint=NerConstraint(source_token_ids=frozenset(source_ids)),
    )


class NerEntity(NamedTuple):
    tag: str
    text: str
    start: int | None  # source token span, matched greedily left to right
    end: int | None


def parse_ner_output(v: Vocabulary, decoded: Sequence[int], source_tokens: Sequence[str]) -> list[NerEntity]:
    """Inverse of format_ner for scoring: split the decoded sequence at entity
    tags/<sep> and match each span back to the source greedily."""
    tag_of_id = {tid: name for name, tid in v.entity_tag_ids.items()}
    ids = [t for t in decoded if t not in (v.bos_id, v.eos_id)]
    raw: list[tuple[str, list[int]]] = []
    current: list[int] | None = None
    for tok in ids:
        if tok in tag_of_id:
            if current is not None and current:
                raise DataError("entity tag inside an unterminated span")
            current = []
            raw.append((tag_of_id[tok], current))
        elif tok == v.sep_id:
            if current is None:
                raise DataError("<sep> before any entity tag")
            current = None
        else:
            if current is None:
                raise DataError("entity tokens outside a tagged span")
            current.append(tok)
    entities: list[NerEntity] = []
    cursor = 0
    src = list(source_tokens)
    for tag, span_ids in raw:
        words = v.decode(span_ids).split() if span_ids else []
        start = end = None
        if words:
            for pos in range(cursor, len(src) - len(words) + 1):
                if src[pos : pos + len(words)] == words:
                    start, end = pos, pos + len(words)
                    cursor = end
                    break
        entities.append(NerEntity(tag=tag, text=" ".join(words), start=start, end=end))
    return entities


def _allowed_ids(
    v: Vocabulary,
    example: FormattedExample,
    generated: list[int],
    trie: LabelTrie | None,
) -> list[int]:
    c = example.constraint
    if isinstance(c, ClassificationConstraint):
        return trie.allowed(generated, v.eos_id)
    if isinstance(c, QaConstraint):
        return sorted(c.passage_token_ids | {v.eos_id})
    if isinstance(c, NerConstraint):
        at_boundary = not generated or generated[-1] == v.sep_id
        if at_boundary:
            return sorted(set(v.entity_tag_ids.values()) | {v.eos_id})
        return sorted(c.source_token_ids | {v.sep_id})
    raise DecodeError(f"no constraint payload on a {example.task_kind} example")


def constrained_greedy_decode(
    params: dict,
    cfg: ModelConfig,
    v: Vocabulary,
    example: FormattedExample,
    max_len: int = 32,
) -> list[int]:
    """Greedy decoding over the allowed-token set only; argmax ties go to the
    lowest id, so the result is a pure function of the inputs. Returns the
    target-format sequence <bos> ...; <eos> appears only if it was decoded
    before the max_len cutoff."""
    if example.constraint is None:
        raise DecodeError("example has no constraint payload")
    trie = None
    if isinstance(example.constraint, ClassificationConstraint):
        trie = LabelTrie(v, example.constraint.labels)
    enc_out = encode(params, cfg, example.input_ids)[-1]
    generated: list[int] = []
    with torch.no_grad():
        while len(generated) < max_len - 1:
            logits = next_token_logits(params, cfg, enc_out, [v.bos_id] + generated)
            allowed = _allowed_ids(v, example, generated, trie)
            if not allowed:
                raise DecodeError("empty allowed set")
            scores = logits[torch.as_tensor(allowed, dtype=torch.long)].numpy()
            generated.append(allowed[int(np.argmax(scores))])  # first max: lowest id
            if generated[-1] == v.eos_id:
                break
    return [v.bos_id] + generated


def greedy_decode(
    params: dict,
    cfg: ModelConfig,
    v: Vocabulary,
    input_ids: Sequence[int],
    max_len: int = 32,
) -> list[int]:
    """Unconstrained greedy decoding for generation-style tasks."""
    enc_out = encode(params, cfg, input_ids)[-1]
    generated: list[int] = []
    with torch.no_grad():
        while len(generated) < max_len - 1:
            logits = next_token_logits(params, cfg, enc_out, [v.bos_id] + generated)
            generated.append(int(np.argmax(logits.numpy())))
            if generated[-1] == v.eos_id:
                break
    return [v.bos_id] + generated


def strip_specials(v: Vocabulary, ids: Sequence[int]) -> str:
    """Detokenize for metric computation: drop control tokens, join with spaces."""
    return v.decode([t for t in ids if not v.is_special(t)])
