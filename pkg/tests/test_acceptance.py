"""Acceptance suite: one test per criterion, each printing a PASS line
(run `pytest tests/test_acceptance.py -s` to see them inline).

The pretraining experiment (criterion 9) runs four 2k-step desk-scale jobs
and takes a few minutes; everything else is fast.
"""

import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
import torch

from conftest import finite_difference_check

from t2tlab import corruption as corr
from t2tlab.cli import main as cli_main
from t2tlab.corpus import (
    MonolingualCorpus,
    ParallelCorpus,
    cipher_vocabulary,
    generate_cipher_corpus,
)
from t2tlab.eval import aer, lcs_length, mutual_argmax_align, retrieval_by_layer, transfer_gap
from t2tlab.model import ModelConfig, encode, forward, init_params, next_token_logits
from t2tlab.pnat import GroupPartition, build_decoder_mask, pnat_loss, single_group
from t2tlab.tasks import (
    constrained_greedy_decode,
    format_classification,
    format_ner,
    format_qa,
    strip_specials,
)
from t2tlab.trainer import PretrainPlan, pretrain
from t2tlab.vocab import Vocabulary


def ok(n: int, text: str) -> None:
    print(f"\nACCEPTANCE {n:2d} PASS  {text}")


def tiny_cfg(vocab_size: int, max_len: int = 32) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size, n_layers_enc=1, n_layers_dec=1, d_model=8, d_ff=16,
        n_heads=2, max_len=max_len,
    )


def random_partition(rng: np.random.Generator, T: int) -> GroupPartition:
    inner = rng.integers(1, T, size=int(rng.integers(0, 4))) if T > 1 else []
    cuts = sorted(set(int(c) for c in inner) | {0, T})
    return GroupPartition(ranges=tuple((cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)))


# -- 1: grouped loss with one group equals plain teacher forcing -------------------


def test_01_single_group_reduces_to_teacher_forcing():
    V = 14
    cfg = tiny_cfg(V)
    rng = np.random.default_rng(101)
    worst = 0.0
    params = None
    for i in range(500):
        if i % 50 == 0:
            params = init_params(cfg, 1000 + i)
        src = [int(t) for t in rng.integers(2, V, size=rng.integers(1, 6))]
        tgt = [int(t) for t in rng.integers(2, V, size=rng.integers(1, 7))]
        trace = forward(params, cfg, src, tgt)  # mask=None: one group
        logp = torch.log_softmax(trace.logits, dim=-1)
        grouped = pnat_loss(logp, tgt, single_group(len(tgt))).item()
        # independent oracle: per-position prefix decoding
        enc_out = encode(params, cfg, src)[-1]
        eq1 = 0.0
        for i_pos in range(len(tgt)):
            step = torch.log_softmax(next_token_logits(params, cfg, enc_out, tgt[:i_pos]), dim=-1)
            eq1 -= step[tgt[i_pos]].item()
        worst = max(worst, abs(grouped - eq1))
    assert worst < 1e-10, worst
    ok(1, f"n_g=1 grouped loss equals teacher forcing on 500 instances (max |diff| {worst:.2e})")


# -- 2: out-of-group perturbations never touch in-group logits ----------------------


def test_02_conditioning_contract_is_bitwise():
    V = 14
    cfg = tiny_cfg(V)
    rng = np.random.default_rng(202)
    checked = 0
    for inst in range(40):
        params = init_params(cfg, 2000 + inst)
        T = int(rng.integers(2, 13))
        p = random_partition(rng, T)
        mask = build_decoder_mask(p, T)
        src = [int(t) for t in rng.integers(2, V, size=rng.integers(1, 6))]
        tgt = [int(t) for t in rng.integers(2, V, size=T)]
        base = forward(params, cfg, src, tgt, mask).logits
        for t in range(T):
            bumped = list(tgt)
            bumped[t] = 2 + (bumped[t] - 2 + 1) % (V - 2)
            pert = forward(params, cfg, src, bumped, mask).logits
            for i in range(T):
                if p.group_of(i) != p.group_of(t):
                    assert torch.equal(base[i], pert[i]), (inst, t, i)
                    checked += 1
    ok(2, f"out-of-group perturbation left {checked} in-group logit rows bitwise unchanged")


# -- 3: corruption round trips -------------------------------------------------------


def test_03_round_trip_per_task_family():
    v = cipher_vocabulary(24, sentinel_count=40)
    a_lo, a_hi = v.n_specials, v.n_specials + 24
    b_lo, b_hi = a_hi, a_hi + 24
    rng = np.random.default_rng(303)
    for _ in range(1000):
        s = [int(t) for t in rng.integers(a_lo, a_hi, size=rng.integers(1, 40))]
        ex = corr.make_sc(v, s, float(rng.uniform(0.1, 1.0)), min(3, len(s)), rng)
        assert corr.reconstruct(v, ex.input_ids, ex.target_ids) == s
    for _ in range(1000):
        e = [int(t) for t in rng.integers(a_lo, a_hi, size=rng.integers(1, 20))]
        f = [int(t) for t in rng.integers(b_lo, b_hi, size=rng.integers(1, 20))]
        ex = corr.make_tpsc(v, e, f, float(rng.uniform(0.1, 1.0)), 3, rng)
        assert corr.reconstruct(v, ex.input_ids, ex.target_ids) == e + [v.sep_id] + f
    for _ in range(1000):
        e = [int(t) for t in rng.integers(a_lo, a_hi, size=rng.integers(1, 20))]
        f = [int(t) for t in rng.integers(b_lo, b_hi, size=rng.integers(1, 20))]
        ex = corr.make_tsc(v, e, f, float(rng.uniform(0.1, 1.0)), 3, rng)
        cut = ex.input_ids.index(v.sep_id)
        content = [t for t in ex.target_ids if not v.is_sentinel(t)]
        corrupted = e if all(t < a_hi for t in content) else f
        assert corr.reconstruct(v, ex.input_ids[:cut], ex.target_ids) == corrupted
    ok(3, "reconstruct(g_i, g_o) == original for 1000 sentences per family (SC, TPSC, TSC)")


# -- 4: masked fraction tracks the configured density --------------------------------


def test_04_noise_density_statistics():
    rng = np.random.default_rng(404)
    report = []
    for density in (0.15, 0.3, 0.5, 1.0):
        fractions = np.empty(10000)
        for i in range(10000):
            plan = corr.sample_spans(512, density, 3, rng)
            fractions[i] = plan.n_masked / 512
        err = abs(float(fractions.mean()) - density)
        assert err < 0.02, (density, err)
        report.append(f"{density}:{fractions.mean():.4f}")
    ok(4, f"masked fraction at len=512 within ±0.02 of target for {', '.join(report)}")


# -- 5: full-density one-sided corruption degenerates to translation ------------------


def test_05_tsc_at_full_density_is_translation():
    v = cipher_vocabulary(24, sentinel_count=10)
    corpus = generate_cipher_corpus(55, 24, 1000, (3, 10), 3, sentinel_count=10)
    rng = np.random.default_rng(505)
    for e, f in corpus.pairs:
        ex = corr.make_tsc(v, e, f, 1.0, 3, rng)
        assert ex.target_ids[0] == v.sentinel(1)
        assert ex.target_ids[1:] in (e, f)  # the complete corrupted sentence
        assert len(ex.target_span_starts) == 1
    ok(5, "density 1.0 one-sided corruption decodes the whole sentence on 1k pairs")


# -- 6: analytic gradients vs central differences -------------------------------------


def test_06_gradient_check_both_masks():
    V = 12
    cfg = tiny_cfg(V, max_len=16)
    rng = np.random.default_rng(606)
    params = init_params(cfg, 66)
    examples = [
        corr.TrainingExample(task="SC", input_ids=[2, 3, 4, 5], target_ids=[6, 7, 8, 9, 10, 11], target_span_starts=[0, 2, 4]),
        corr.TrainingExample(task="SC", input_ids=[7, 8, 9], target_ids=[2, 3, 4, 5], target_span_starts=[0, 2]),
    ]
    causal = [single_group(len(ex.target_ids)) for ex in examples]
    grouped = [
        GroupPartition(ranges=((0, 2), (2, 4), (4, 6))),
        GroupPartition(ranges=((0, 2), (2, 4))),
    ]
    worst_causal = finite_difference_check(params, cfg, examples, causal, 200, rng)
    worst_grouped = finite_difference_check(params, cfg, examples, grouped, 200, rng)
    assert worst_causal < 1e-4, worst_causal
    assert worst_grouped < 1e-4, worst_grouped
    ok(6, f"max relative gradient error: causal {worst_causal:.2e}, grouped {worst_grouped:.2e} (200 coords each)")


# -- 7: transfer gap on the published per-language scores ------------------------------


def test_07_transfer_gap_reproduction():
    en = 75.4
    non_en = [62.0, 62.1, 58.9, 58.9, 57.7, 59.0, 55.7, 52.7, 58.4, 55.0, 55.2, 53.6, 42.4, 50.7]
    gap = transfer_gap(en, non_en)
    assert abs(gap - 19.5) < 0.05, gap
    ok(7, f"transfer gap over the 14 published non-English scores = {gap:.4f} (target 19.5 ± 0.05)")


# -- 8: constrained decoding soundness --------------------------------------------------


def _is_valid_ner(v: Vocabulary, out: list[int], source_ids: list[int]) -> bool:
    """Independent rule checker: entity tags or <eos> after <bos>/<sep>,
    otherwise source tokens or <sep>."""
    tag_ids = set(v.entity_tag_ids.values())
    src = set(source_ids)
    if out[0] != v.bos_id:
        return False
    at_boundary = True
    for tok in out[1:]:
        if tok == v.eos_id:
            return at_boundary
        if at_boundary:
            if tok not in tag_ids:
                return False
            at_boundary = False
        elif tok == v.sep_id:
            at_boundary = True
        elif tok not in src:
            return False
    return True  # truncated before <eos>


def test_08_constrained_decoding_soundness():
    words = [f"w{i}" for i in range(20)]
    v = Vocabulary(words + ["yes", "no", "maybe", "not", "sure"], sentinel_count=4)
    cfg = tiny_cfg(len(v), max_len=16)
    labels = ["yes", "no", "maybe", "not sure"]
    rng = np.random.default_rng(808)
    params = None
    n = 1000
    for i in range(n):
        if i % 100 == 0:
            params = init_params(cfg, 8000 + i)
        text = " ".join(words[int(k)] for k in rng.integers(20, size=rng.integers(1, 6)))
        ex = format_classification(v, text, None, labels[i % 4], labels)
        out = constrained_greedy_decode(params, cfg, v, ex, max_len=8)
        assert strip_specials(v, out) in labels
    for i in range(n):
        if i % 100 == 0:
            params = init_params(cfg, 9000 + i)
        passage = " ".join(words[int(k)] for k in rng.integers(20, size=rng.integers(2, 8)))
        question = " ".join(words[int(k)] for k in rng.integers(20, size=rng.integers(1, 4)))
        ex = format_qa(v, passage, question, passage.split()[0])
        out = constrained_greedy_decode(params, cfg, v, ex, max_len=10)
        body = [t for t in out if t not in (v.bos_id, v.eos_id)]
        assert set(body) <= ex.constraint.passage_token_ids
    for i in range(n):
        if i % 100 == 0:
            params = init_params(cfg, 10000 + i)
        toks = [words[int(k)] for k in rng.integers(20, size=rng.integers(1, 6))]
        tags = ["O"] * len(toks)
        tags[0] = "B-LOC"
        ex = format_ner(v, toks, tags)
        out = constrained_greedy_decode(params, cfg, v, ex, max_len=12)
        assert _is_valid_ner(v, out, v.encode(" ".join(toks))), v.decode(out)
    ok(8, f"{n} random-parameter decodes per task all satisfied their constraint")


# -- 9: desk pretraining: losses fall, translation task aligns the encoder ---------------


@pytest.fixture(scope="module")
def desk_world():
    n_pairs, n_mono = 20000, 10000
    full = generate_cipher_corpus(0, 64, n_pairs + 2 * n_mono, (4, 12), 3)
    para = ParallelCorpus(
        lang_pair=full.lang_pair,
        pairs=full.pairs[:n_pairs],
        gold_alignments=full.gold_alignments[:n_pairs],
    )
    mono = [
        MonolingualCorpus("a", [e for e, _ in full.pairs[n_pairs : n_pairs + n_mono]]),
        MonolingualCorpus("b", [f for _, f in full.pairs[n_pairs + n_mono :]]),
    ]
    return cipher_vocabulary(64), mono, para


def test_09_desk_pretraining_direction(desk_world):
    v, mono, para = desk_world
    held_out = para.pairs[-128:]
    window = 100
    results = {}
    lines = []
    for task in ("none", "MT", "TPSC", "TSC"):
        cfg = ModelConfig(vocab_size=len(v))
        plan = PretrainPlan(cross_task=task, steps=2000, warmup_steps=100, seed=0)
        params, _, rows = pretrain(plan, mono, [para], v, cfg)
        losses = [r[2] for r in rows]
        means = [float(np.mean(losses[i : i + window])) for i in range(0, len(losses), window)]
        comparisons = len(means) - 1
        decreases = sum(1 for a, b in zip(means, means[1:]) if b < a)
        assert decreases >= math.ceil(0.9 * comparisons), (task, decreases, comparisons)
        acc = retrieval_by_layer(params, cfg, v, held_out)[-1][3]
        results[task] = acc
        lines.append(f"{task}: windows {decreases}/{comparisons} down, retrieval@1 {acc:.3f}")
    assert results["TSC"] >= results["none"] + 0.10, results
    ok(9, "; ".join(lines) + f"; TSC-SC gap {results['TSC'] - results['none']:+.3f} (>= +0.100)")


# -- 10: metric oracles -------------------------------------------------------------------


def test_10_metric_oracles():
    rng = np.random.default_rng(1010)

    def lcs_oracle(a, b):
        @lru_cache(maxsize=None)
        def rec(i, j):
            if i == 0 or j == 0:
                return 0
            if a[i - 1] == b[j - 1]:
                return rec(i - 1, j - 1) + 1
            return max(rec(i - 1, j), rec(i, j - 1))

        return rec(len(a), len(b))

    vocab = list("abcde")
    for _ in range(100):
        x = tuple(str(t) for t in rng.choice(vocab, size=rng.integers(1, 16)))
        y = tuple(str(t) for t in rng.choice(vocab, size=rng.integers(1, 16)))
        assert lcs_length(x, y) == lcs_oracle(x, y)
    for _ in range(100):
        sim = rng.normal(size=(int(rng.integers(1, 8)), int(rng.integers(1, 8))))
        links = mutual_argmax_align(sim)
        expected = set()
        for i in range(sim.shape[0]):
            for j in range(sim.shape[1]):
                ri = min(np.flatnonzero(sim[i] == sim[i].max()))
                cj = min(np.flatnonzero(sim[:, j] == sim[:, j].max()))
                if ri == j and cj == i:
                    expected.add((i, j))
        assert links == expected
    assert aer({(1, 1)}, {(1, 1)}) == 0.0
    assert abs(aer({(1, 1), (2, 2)}, {(1, 1)}) - 1 / 3) < 1e-15
    assert aer({(9, 9)}, {(1, 1)}) == 1.0
    ok(10, "ROUGE-L LCS, mutual-argmax, and AER all match their independent oracles")


# -- 11: byte-identical reruns of the whole pipeline ----------------------------------------


def test_11_pipeline_reproducibility(tmp_path):
    captured = {}
    for tag in ("r1", "r2"):
        base = tmp_path / tag
        data = base / "data"
        assert cli_main([
            "gen-data", "--out", str(data), "--seed", "7",
            "--vocab-size", "64", "--n-pairs", "2000", "--n-mono", "1000",
        ]) == 0
        dump = base / "dump"
        assert cli_main([
            "corrupt", "--out", str(dump), "--task", "TSC",
            "--vocab", str(data / "vocab.txt"),
            "--parallel", str(data / "para.a-b.tsv"), "--limit", "200",
        ]) == 0
        run = base / "run"
        assert cli_main([
            "pretrain", "--out", str(run), "--data", str(data),
            "--steps", "50", "--warmup", "10", "--batch-size", "8",
        ]) == 0
        ev = base / "eval"
        assert cli_main([
            "eval", "--out", str(ev),
            "--checkpoint", str(run / "checkpoint.bin"),
            "--vocab", str(data / "vocab.txt"),
            "--data", str(data), "--eval-pairs", "64",
        ]) == 0
        captured[tag] = {
            "dump": (dump / "examples.jsonl").read_bytes(),
            "checkpoint": (run / "checkpoint.bin").read_bytes(),
            "train_metrics": (run / "metrics.csv").read_bytes(),
            "retrieval": (ev / "retrieval.csv").read_bytes(),
            "eval_metrics": (ev / "metrics.csv").read_bytes(),
        }
    assert captured["r1"] == captured["r2"]
    ok(11, "gen-data -> corrupt -> pretrain(50) -> eval reruns are byte-identical")
