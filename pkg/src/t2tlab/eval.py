"""Analysis metrics: cross-lingual sentence retrieval per encoder layer,
transfer gap, mutual-argmax word alignment + AER, ROUGE-1/2/L, QA EM/F1,
NER span F1, and plain accuracy. Everything is pure and order-independent."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np
import torch

from .errors import DataError
from .model import ModelConfig, encode
from .vocab import Vocabulary

# -- representations -----------------------------------------------------------


def sentence_representations(
    params: dict,
    cfg: ModelConfig,
    v: Vocabulary,
    sentences: Sequence[Sequence[int]],
    layer: int,
) -> np.ndarray:
    """Mean-pooled encoder states over non-special positions, one row per
    sentence. layer 0 is the embedding sum; layer n_layers_enc the final
    normalized output."""
    if not 0 <= layer <= cfg.n_layers_enc:
        raise DataError(f"layer must be in 0..{cfg.n_layers_enc}")
    reps = []
    with torch.no_grad():
        for sent in sentences:
            keep = [i for i, t in enumerate(sent) if not v.is_special(t)]
            if not keep:
                raise DataError("sentence has no non-special tokens to pool")
            states = encode(params, cfg, sent)[layer]
            reps.append(states[keep].mean(dim=0).to(torch.float64).numpy())
    return np.stack(reps)


def token_representations(
    params: dict,
    cfg: ModelConfig,
    sentence: Sequence[int],
    layer: int = -1,
) -> np.ndarray:
    """Per-token encoder states of one sentence (last layer by default)."""
    with torch.no_grad():
        return encode(params, cfg, sentence)[layer].to(torch.float64).numpy()


# -- retrieval ------------------------------------------------------------------


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise DataError("zero vector in representations")
    return (a / na) @ (b / nb).T


def retrieval_accuracy(src_reps: np.ndarray, tgt_reps: np.ndarray) -> tuple[float, float, float]:
    """accuracy@1 by cosine nearest neighbor, both directions plus the mean.

    Row i of each matrix is the representation of the i-th sentence of a
    translation pair; a hit is nearest-neighbor index == own index.
    """
    src_reps = np.asarray(src_reps, dtype=np.float64)
    tgt_reps = np.asarray(tgt_reps, dtype=np.float64)
    if src_reps.shape != tgt_reps.shape or src_reps.ndim != 2 or src_reps.shape[0] == 0:
        raise DataError("representation matrices must be equal-shaped and nonempty")
    sim = _cosine_matrix(src_reps, tgt_reps)
    n = sim.shape[0]
    fwd = float(np.mean(np.argmax(sim, axis=1) == np.arange(n)))
    rev = float(np.mean(np.argmax(sim, axis=0) == np.arange(n)))
    return fwd, rev, (fwd + rev) / 2.0


def retrieval_by_layer(
    params: dict,
    cfg: ModelConfig,
    v: Vocabulary,
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
) -> list[tuple[int, float, float, float]]:
    """(layer, src->tgt acc, tgt->src acc, mean) for every encoder layer."""
    out = []
    for layer in range(cfg.n_layers_enc + 1):
        src = sentence_representations(params, cfg, v, [e for e, _ in pairs], layer)
        tgt = sentence_representations(params, cfg, v, [f for _, f in pairs], layer)
        fwd, rev, mean = retrieval_accuracy(src, tgt)
        out.append((layer, fwd, rev, mean))
    return out


# -- transfer gap ---------------------------------------------------------------


def transfer_gap(en_score: float, non_en_scores: Sequence[float]) -> float:
    """English score minus the mean non-English score (lower = better transfer)."""
    if len(non_en_scores) == 0:
        raise DataError("need at least one non-English score")
    return float(en_score) - float(np.mean(np.asarray(non_en_scores, dtype=np.float64)))


# -- word alignment ---------------------------------------------------------------


def mutual_argmax_align(sim: np.ndarray) -> set[tuple[int, int]]:
    """Link (i, j) iff j is row i's argmax and i is column j's argmax
    (ties -> lowest index)."""
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.size == 0:
        raise DataError("similarity matrix must be a nonempty 2-d array")
    if not np.all(np.isfinite(sim)):
        raise DataError("similarity matrix must be finite")
    row_best = np.argmax(sim, axis=1)
    col_best = np.argmax(sim, axis=0)
    return {(i, int(row_best[i])) for i in range(sim.shape[0]) if col_best[row_best[i]] == i}


def align_pair(
    params: dict,
    cfg: ModelConfig,
    e: Sequence[int],
    f: Sequence[int],
) -> set[tuple[int, int]]:
    """Mutual-argmax alignment from last-encoder-layer cosine similarities."""
    re_ = token_representations(params, cfg, e)
    rf = token_representations(params, cfg, f)
    return mutual_argmax_align(_cosine_matrix(re_, rf))


def aer(
    pred: set[tuple[int, int]],
    gold_sure: set[tuple[int, int]],
    gold_possible: set[tuple[int, int]] | None = None,
) -> float:
    """Alignment error rate: 1 - (|A∩S| + |A∩P|) / (|A| + |S|), defined as 0
    when both A and S are empty. Sure-only gold uses P = S."""
    possible = gold_sure if gold_possible is None else gold_possible
    if not gold_sure <= possible:
        raise DataError("sure links must be a subset of possible links")
    denom = len(pred) + len(gold_sure)
    if denom == 0:
        return 0.0
    return 1.0 - (len(pred & gold_sure) + len(pred & possible)) / denom


# -- ROUGE ----------------------------------------------------------------------


def _tokens(x: str | Sequence[str]) -> list[str]:
    return x.split() if isinstance(x, str) else list(x)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rouge_n(candidate: str | Sequence[str], reference: str | Sequence[str], n: int) -> tuple[float, float, float]:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise DataError("n must be at least 1")
    cand, ref = _tokens(candidate), _tokens(reference)
    cg = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
    rg = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    if not cg or not rg:
        return 0.0, 0.0, 0.0
    overlap = sum(min(c, rg[g]) for g, c in cg.items())
    p = overlap / sum(cg.values())
    r = overlap / sum(rg.values())
    return p, r, _f1(p, r)


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence via the rolling two-row recurrence."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: str | Sequence[str], reference: str | Sequence[str]) -> tuple[float, float, float]:
    """LCS-based precision/recall/F1."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(cand, ref)
    p, r = lcs / len(cand), lcs / len(ref)
    return p, r, _f1(p, r)


# -- task metrics -----------------------------------------------------------------


def _normalize(text: str) -> str:
    return " ".join(text.split())


def qa_scores(pred: str, gold: str) -> tuple[float, float]:
    """(exact match after whitespace normalization, token-overlap F1)."""
    em = float(_normalize(pred) == _normalize(gold))
    pt, gt = _normalize(pred).split(), _normalize(gold).split()
    if not pt or not gt:
        return em, float(pt == gt)
    overlap = sum((Counter(pt) & Counter(gt)).values())
    p, r = overlap / len(pt), overlap / len(gt)
    return em, _f1(p, r)


def ner_f1(pred_entities: Sequence[tuple[str, str]], gold_entities: Sequence[tuple[str, str]]) -> float:
    """Exact (tag, span text) set match F1."""
    pred, gold = set(pred_entities), set(gold_entities)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hits = len(pred & gold)
    return _f1(hits / len(pred), hits / len(gold))


def accuracy(preds: Sequence, golds: Sequence) -> float:
    if len(preds) != len(golds):
        raise DataError("prediction and gold lists differ in length")
    if not preds:
        raise DataError("nothing to score")
    return sum(p == g for p, g in zip(preds, golds)) / len(preds)
