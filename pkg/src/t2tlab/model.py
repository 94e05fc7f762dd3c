"""Small encoder-decoder transformer over named parameter tensors.

Pre-norm blocks, learned absolute positions, embeddings shared between
encoder, decoder, and the output projection. All ops run through torch so
gradients are exact; tests check them against central finite differences.
The decoder self-attention takes an explicit boolean mask, which is how the
grouped decoding objective is realized.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from .corruption import TrainingExample
from .errors import ConfigError, ModelError
from .pnat import AttentionMaskSpec, GroupPartition, build_decoder_mask, single_group

LN_EPS = 1e-6
EMBED_INIT_STD = 0.02
BOS_ID = 1  # fixed by the vocabulary layout
PAD_ID = 0

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelConfig:
    vocab_size: int
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    d_model: int = 64
    d_ff: int = 128
    n_heads: int = 4
    max_len: int = 128
    dropout: float = 0.0
    dtype: str = "float64"

    def __post_init__(self) -> None:
        for name in ("vocab_size", "n_layers_enc", "n_layers_dec", "d_model", "d_ff", "n_heads", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    @classmethod
    def desk(cls, vocab_size: int, **overrides) -> "ModelConfig":
        return cls(vocab_size=vocab_size, **overrides)

    @classmethod
    def small(cls, vocab_size: int, **overrides) -> "ModelConfig":
        # 8-head variant of the 512/1024 8+8-layer shape (512 is not divisible by 6)
        kw = dict(
            n_layers_enc=8, n_layers_dec=8, d_model=512, d_ff=1024, n_heads=8, max_len=512
        )
        kw.update(overrides)
        return cls(vocab_size=vocab_size, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ForwardTrace:
    """Per-layer encoder states (embeddings first, final-norm output last) and
    decoder logits; tensors stay attached to the autograd graph."""

    encoder_states: list[torch.Tensor]
    logits: torch.Tensor
    attentions: list[torch.Tensor] | None = None


def _attention_param_names(prefix: str) -> list[str]:
    return [f"{prefix}.{w}" for w in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]


def parameter_spec(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list for every parameter array."""
    d, ff, V, L = cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_len
    spec: list[tuple[str, tuple[int, ...]]] = [
        ("emb", (V, d)),
        ("pos_enc", (L, d)),
        ("pos_dec", (L, d)),
    ]

    def attn(prefix: str) -> None:
        for name in _attention_param_names(prefix):
            spec.append((name, (d,) if name.split(".")[-1].startswith("b") else (d, d)))

    def block_tail(prefix: str) -> None:
        spec.extend(
            [
                (f"{prefix}.ffn.w1", (d, ff)),
                (f"{prefix}.ffn.b1", (ff,)),
                (f"{prefix}.ffn.w2", (ff, d)),
                (f"{prefix}.ffn.b2", (d,)),
            ]
        )

    for i in range(cfg.n_layers_enc):
        p = f"enc.{i}"
        spec.extend([(f"{p}.ln1.g", (d,)), (f"{p}.ln1.b", (d,))])
        attn(f"{p}.attn")
        spec.extend([(f"{p}.ln2.g", (d,)), (f"{p}.ln2.b", (d,))])
        block_tail(p)
    spec.extend([("enc.final_ln.g", (d,)), ("enc.final_ln.b", (d,))])
    for i in range(cfg.n_layers_dec):
        p = f"dec.{i}"
        spec.extend([(f"{p}.ln1.g", (d,)), (f"{p}.ln1.b", (d,))])
        attn(f"{p}.self")
        spec.extend([(f"{p}.ln2.g", (d,)), (f"{p}.ln2.b", (d,))])
        attn(f"{p}.cross")
        spec.extend([(f"{p}.ln3.g", (d,)), (f"{p}.ln3.b", (d,))])
        block_tail(p)
    spec.extend([("dec.final_ln.g", (d,)), ("dec.final_ln.b", (d,))])
    return spec


def init_std(name: str, shape: tuple[int, ...]) -> float:
    """Init scale per parameter kind: 0 for biases/LN shifts, exactly 1 for LN
    gains, 0.02 for embeddings, fan-in scaled normal for projections."""
    leaf = name.split(".")[-1]
    if leaf in ("b", "bq", "bk", "bv", "bo", "b1", "b2"):
        return 0.0
    if leaf == "g":
        return 0.0  # constant ones
    if name in ("emb", "pos_enc", "pos_dec"):
        return EMBED_INIT_STD
    return 1.0 / math.sqrt(shape[0])


def init_params(cfg: ModelConfig, seed: int) -> dict[str, torch.Tensor]:
    """Deterministic parameter set: same seed, same bytes."""
    gen = torch.Generator().manual_seed(seed)
    dt = cfg.torch_dtype
    params: dict[str, torch.Tensor] = {}
    for name, shape in parameter_spec(cfg):
        leaf = name.split(".")[-1]
        if leaf == "g":
            t = torch.ones(shape, dtype=dt)
        else:
            std = init_std(name, shape)
            if std == 0.0:
                t = torch.zeros(shape, dtype=dt)
            else:
                t = torch.empty(shape, dtype=dt)
                t.normal_(0.0, std, generator=gen)
        params[name] = t.requires_grad_(True)
    return params


def _layer_norm(x: torch.Tensor, g: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + LN_EPS) * g + b


def _mha(
    params: dict,
    prefix: str,
    x_q: torch.Tensor,
    x_kv: torch.Tensor,
    n_heads: int,
    allowed: torch.Tensor,
    attn_sink: list | None = None,
) -> torch.Tensor:
    """Multi-head attention; allowed is a bool mask broadcastable to
    (B, 1, Lq, Lk). Disallowed scores are -inf before the softmax, so masked
    keys contribute exactly zero."""
    B, Lq, d = x_q.shape
    Lk = x_kv.shape[1]
    dh = d // n_heads
    q = (x_q @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"]).view(B, Lq, n_heads, dh).transpose(1, 2)
    k = (x_kv @ params[f"{prefix}.wk"] + params[f"{prefix}.bk"]).view(B, Lk, n_heads, dh).transpose(1, 2)
    v = (x_kv @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"]).view(B, Lk, n_heads, dh).transpose(1, 2)
    scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
    scores = scores.masked_fill(~allowed, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    if attn_sink is not None:
        attn_sink.append(weights)
    out = (weights @ v).transpose(1, 2).reshape(B, Lq, d)
    return out @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def _ffn(params: dict, prefix: str, x: torch.Tensor) -> torch.Tensor:
    h = torch.relu(x @ params[f"{prefix}.ffn.w1"] + params[f"{prefix}.ffn.b1"])
    return h @ params[f"{prefix}.ffn.w2"] + params[f"{prefix}.ffn.b2"]


def _check_ids(cfg: ModelConfig, ids: torch.Tensor, what: str) -> None:
    if ids.numel() and (int(ids.max()) >= cfg.vocab_size or int(ids.min()) < 0):
        raise ModelError(f"{what} contains a token id outside 0..{cfg.vocab_size - 1}")


def _check_len(cfg: ModelConfig, n: int, what: str) -> None:
    if n > cfg.max_len:
        raise ModelError(f"{what} length {n} exceeds max_len {cfg.max_len}")


def encode_batch(
    params: dict,
    cfg: ModelConfig,
    src: torch.Tensor,
    src_mask: torch.Tensor,
    attn_sink: list | None = None,
) -> list[torch.Tensor]:
    """Encoder stack over (B, Ls) ids with (B, Ls) validity mask.

    Returns n_layers_enc+1 states: the embedding sum first, then each layer's
    residual stream, with the final layer normalized (it is the encoder
    output fed to cross-attention).
    """
    _check_ids(cfg, src, "source")
    _check_len(cfg, src.shape[1], "source")
    Ls = src.shape[1]
    x = params["emb"][src] + params["pos_enc"][:Ls]
    states = [x]
    allowed = src_mask[:, None, None, :]
    for i in range(cfg.n_layers_enc):
        p = f"enc.{i}"
        h = _layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        x = x + _mha(params, f"{p}.attn", h, h, cfg.n_heads, allowed, attn_sink)
        x = x + _ffn(params, p, _layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"]))
        states.append(x)
    states[-1] = _layer_norm(states[-1], params["enc.final_ln.g"], params["enc.final_ln.b"])
    return states


def decode_batch(
    params: dict,
    cfg: ModelConfig,
    enc_out: torch.Tensor,
    src_mask: torch.Tensor,
    dec_in: torch.Tensor,
    self_allowed: torch.Tensor,
    attn_sink: list | None = None,
) -> torch.Tensor:
    """Decoder stack: (B, Lt) teacher-forcing inputs -> (B, Lt, V) logits.

    self_allowed is (B, Lt, Lt) bool; cross-attention may always see every
    real source position.
    """
    _check_ids(cfg, dec_in, "decoder input")
    _check_len(cfg, dec_in.shape[1], "target")
    Lt = dec_in.shape[1]
    y = params["emb"][dec_in] + params["pos_dec"][:Lt]
    self_mask = self_allowed[:, None, :, :]
    cross_mask = src_mask[:, None, None, :]
    for i in range(cfg.n_layers_dec):
        p = f"dec.{i}"
        h = _layer_norm(y, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        y = y + _mha(params, f"{p}.self", h, h, cfg.n_heads, self_mask, attn_sink)
        h = _layer_norm(y, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        y = y + _mha(params, f"{p}.cross", h, enc_out, cfg.n_heads, cross_mask, attn_sink)
        y = y + _ffn(params, p, _layer_norm(y, params[f"{p}.ln3.g"], params[f"{p}.ln3.b"]))
    y = _layer_norm(y, params["dec.final_ln.g"], params["dec.final_ln.b"])
    return y @ params["emb"].T


def decoder_inputs(target_ids: Sequence[int], group_starts: Sequence[int], bos_id: int = BOS_ID) -> list[int]:
    """Teacher-forcing inputs: previous target token, except group starts get
    <bos> (their in-group context is empty). With one group this is the
    usual shift-right."""
    starts = set(group_starts)
    if 0 not in starts:
        raise ModelError("position 0 must be a group start")
    return [bos_id if i in starts else target_ids[i - 1] for i in range(len(target_ids))]


def _as_long(x, name: str) -> torch.Tensor:
    t = torch.as_tensor(x, dtype=torch.long)
    if t.ndim != 1:
        raise ModelError(f"{name} must be one-dimensional")
    return t


def forward(
    params: dict,
    cfg: ModelConfig,
    input_ids: Sequence[int],
    target_ids: Sequence[int],
    mask: AttentionMaskSpec | None = None,
    collect_attn: bool = False,
) -> ForwardTrace:
    """Single-example forward pass under a grouped decoder mask.

    mask=None means one group (plain causal decoding). logits[i] is the
    prediction of target_ids[i].
    """
    src = _as_long(input_ids, "input_ids").unsqueeze(0)
    tgt = _as_long(target_ids, "target_ids")
    if tgt.numel() == 0:
        raise ModelError("target must be nonempty")
    if mask is None:
        mask = build_decoder_mask(single_group(len(target_ids)), len(target_ids))
    if mask.allowed.shape != (len(target_ids), len(target_ids)):
        raise ModelError("mask shape does not match target length")
    dec_in = _as_long(decoder_inputs(list(target_ids), mask.group_starts), "decoder inputs").unsqueeze(0)
    src_mask = torch.ones_like(src, dtype=torch.bool)
    self_allowed = torch.as_tensor(mask.allowed, dtype=torch.bool).unsqueeze(0)
    sink: list | None = [] if collect_attn else None
    states = encode_batch(params, cfg, src, src_mask, sink)
    logits = decode_batch(params, cfg, states[-1], src_mask, dec_in, self_allowed, sink)
    return ForwardTrace(
        encoder_states=[s[0] for s in states],
        logits=logits[0],
        attentions=[a[0] for a in sink] if sink is not None else None,
    )


def encode(params: dict, cfg: ModelConfig, input_ids: Sequence[int]) -> list[torch.Tensor]:
    """Encoder-only pass for one sentence; returns per-layer (Ls, d) states."""
    src = _as_long(input_ids, "input_ids").unsqueeze(0)
    src_mask = torch.ones_like(src, dtype=torch.bool)
    return [s[0] for s in encode_batch(params, cfg, src, src_mask)]


def next_token_logits(
    params: dict,
    cfg: ModelConfig,
    enc_out: torch.Tensor,
    prefix_ids: Sequence[int],
    bos_id: int = BOS_ID,
) -> torch.Tensor:
    """Logits for the token following prefix_ids, reusing a cached encoder
    output from encode(); plain causal decoding."""
    dec_in = _as_long([bos_id] + list(prefix_ids), "decoder inputs").unsqueeze(0)
    L = dec_in.shape[1]
    self_allowed = torch.tril(torch.ones((1, L, L), dtype=torch.bool))
    src_mask = torch.ones((1, enc_out.shape[0]), dtype=torch.bool)
    logits = decode_batch(params, cfg, enc_out.unsqueeze(0), src_mask, dec_in, self_allowed)
    return logits[0, -1]


# -- batched training path -----------------------------------------------------


def collate(
    cfg: ModelConfig,
    items: list[tuple[Sequence[int], Sequence[int], GroupPartition]],
    pad_id: int = PAD_ID,
    bos_id: int = BOS_ID,
) -> dict[str, torch.Tensor]:
    """Pad (input, target, partition) triples into batch tensors.

    Padded decoder rows attend only to themselves so every softmax row has a
    finite entry; loss gathering skips them via tgt_mask.
    """
    B = len(items)
    if B == 0:
        raise ModelError("batch must be nonempty")
    Ls = max(len(inp) for inp, _, _ in items)
    Lt = max(len(tgt) for _, tgt, _ in items)
    _check_len(cfg, Ls, "source")
    _check_len(cfg, Lt, "target")
    src = torch.full((B, Ls), pad_id, dtype=torch.long)
    src_mask = torch.zeros((B, Ls), dtype=torch.bool)
    dec_in = torch.full((B, Lt), pad_id, dtype=torch.long)
    tgt = torch.full((B, Lt), pad_id, dtype=torch.long)
    tgt_mask = torch.zeros((B, Lt), dtype=torch.bool)
    self_allowed = torch.eye(Lt, dtype=torch.bool).unsqueeze(0).repeat(B, 1, 1)
    for b, (inp, target, part) in enumerate(items):
        if len(target) == 0:
            raise ModelError("target must be nonempty")
        n_in, n_tg = len(inp), len(target)
        src[b, :n_in] = torch.as_tensor(list(inp), dtype=torch.long)
        src_mask[b, :n_in] = True
        tgt[b, :n_tg] = torch.as_tensor(list(target), dtype=torch.long)
        tgt_mask[b, :n_tg] = True
        spec = build_decoder_mask(part, n_tg)
        self_allowed[b, :n_tg, :n_tg] = torch.as_tensor(spec.allowed)
        dec_in[b, :n_tg] = torch.as_tensor(
            decoder_inputs(list(target), spec.group_starts, bos_id), dtype=torch.long
        )
    return {
        "src": src,
        "src_mask": src_mask,
        "dec_in": dec_in,
        "tgt": tgt,
        "tgt_mask": tgt_mask,
        "self_allowed": self_allowed,
    }


def batch_loss(params: dict, cfg: ModelConfig, batch: dict[str, torch.Tensor]) -> torch.Tensor:
    """Mean over examples of the per-example grouped NLL (sum over positions)."""
    states = encode_batch(params, cfg, batch["src"], batch["src_mask"])
    logits = decode_batch(
        params, cfg, states[-1], batch["src_mask"], batch["dec_in"], batch["self_allowed"]
    )
    logp = torch.log_softmax(logits, dim=-1)
    gathered = logp.gather(2, batch["tgt"].unsqueeze(-1)).squeeze(-1)
    per_example = -(gathered * batch["tgt_mask"].to(gathered.dtype)).sum(dim=1)
    return per_example.mean()


def loss_and_grads(
    params: dict,
    cfg: ModelConfig,
    examples: list[TrainingExample],
    partitions: list[GroupPartition],
) -> tuple[float, dict[str, torch.Tensor]]:
    """Joint loss over a batch of examples plus exact gradients per parameter."""
    if len(examples) != len(partitions):
        raise ModelError("one partition per example required")
    items = [(ex.input_ids, ex.target_ids, p) for ex, p in zip(examples, partitions)]
    loss = batch_loss(params, cfg, collate(cfg, items))
    if not torch.isfinite(loss):
        raise ModelError(f"non-finite loss: {loss.item()}")
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    out = {
        n: (g if g is not None else torch.zeros_like(params[n])) for n, g in zip(names, grads)
    }
    return loss.item(), out
