"""Joint pretraining loop (span corruption + one cross-lingual task, summed
per step), Adam with linear warmup/decay and global-norm clipping, and the
plain text-to-text fine-tuning loop.

Every random draw is keyed on (seed, absolute step), so a resumed run
reproduces the uninterrupted trajectory and two runs from the same seed
produce identical bytes.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import corruption
from .checkpoint import Checkpoint, load_checkpoint, params_to_tensors, save_checkpoint
from .corpus import MonolingualCorpus, ParallelCorpus, sampling_distribution
from .corruption import TASK_MT, TASK_TPSC, TASK_TSC, TrainingExample
from .errors import ConfigError, DataError, ModelError
from .model import ModelConfig, batch_loss, collate, init_params
from .pnat import partition_groups, single_group
from .vocab import Vocabulary

METRICS_HEADER = ("step", "lr", "loss_total", "loss_sc", "loss_x", "grad_norm")
CROSS_TASKS = (TASK_MT, TASK_TPSC, TASK_TSC, "none")


@dataclass
class OptimizerState:
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    base_lr: float = 1e-3
    warmup_steps: int = 100
    total_steps: int = 2000
    clip_norm: float = 1.0

    @classmethod
    def create(cls, params: dict[str, torch.Tensor], **hyper) -> "OptimizerState":
        m = {n: torch.zeros_like(p) for n, p in params.items()}
        v = {n: torch.zeros_like(p) for n, p in params.items()}
        return cls(m=m, v=v, **hyper)

    def scalars(self) -> dict:
        return {
            "t": self.t,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "base_lr": self.base_lr,
            "warmup_steps": self.warmup_steps,
            "total_steps": self.total_steps,
            "clip_norm": self.clip_norm,
        }


def lr_at(step: int, opt: OptimizerState) -> float:
    """Linear warmup 0 -> base_lr over warmup_steps, then linear decay to 0
    at total_steps."""
    if opt.total_steps <= opt.warmup_steps:
        raise ConfigError("total_steps must exceed warmup_steps")
    if step < 0:
        raise ConfigError("step must be nonnegative")
    if opt.warmup_steps > 0 and step <= opt.warmup_steps:
        return opt.base_lr * step / opt.warmup_steps
    frac = (opt.total_steps - step) / (opt.total_steps - opt.warmup_steps)
    return opt.base_lr * max(0.0, frac)


def global_grad_norm(grads: dict[str, torch.Tensor]) -> float:
    total = 0.0
    for name in sorted(grads):
        total += float((grads[name].to(torch.float64) ** 2).sum())
    return total**0.5


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    opt: OptimizerState,
) -> dict[str, torch.Tensor]:
    """One bias-corrected Adam update, clipping grads to clip_norm first.

    Mutates params and opt in place (t advances, then the schedule rate for
    the new step applies) and returns params.
    """
    if set(grads) != set(params):
        raise ModelError("gradient names do not match parameter names")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ModelError(f"gradient shape mismatch for {name}")
        if not torch.isfinite(g).all():
            raise ModelError(f"non-finite gradient in {name}")
    norm = global_grad_norm(grads)
    scale = opt.clip_norm / norm if (opt.clip_norm > 0 and norm > opt.clip_norm) else 1.0
    opt.t += 1
    lr = lr_at(opt.t, opt)
    bc1 = 1.0 - opt.beta1**opt.t
    bc2 = 1.0 - opt.beta2**opt.t
    with torch.no_grad():
        for name in params:
            g = grads[name] * scale
            opt.m[name].mul_(opt.beta1).add_(g, alpha=1.0 - opt.beta1)
            opt.v[name].mul_(opt.beta2).addcmul_(g, g, value=1.0 - opt.beta2)
            m_hat = opt.m[name] / bc1
            v_hat = opt.v[name] / bc2
            params[name] -= lr * m_hat / (v_hat.sqrt() + opt.eps)
    return params


@dataclass
class PretrainPlan:
    cross_task: str = TASK_TSC  # MT | TPSC | TSC | none (span corruption only)
    steps: int = 2000
    batch_size: int = 16
    n_g: int = 3
    noise_density: float = 0.5
    mean_span_len: int = 3
    alpha: float = 0.7
    seed: int = 0
    base_lr: float = 1e-3
    warmup_steps: int = 100
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    holdout: int = 128
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.cross_task not in CROSS_TASKS:
            raise ConfigError(f"cross_task must be one of {CROSS_TASKS}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be at least 1")
        if not 0 < self.noise_density <= 1:
            raise ConfigError("noise_density must be in (0, 1]")


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Stream for one training step; stable across resumes."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))


def _clip_seq(seq: list[int], n: int) -> list[int]:
    return seq if len(seq) <= n else seq[:n]


def _draw_sc_batch(
    plan: PretrainPlan,
    cfg: ModelConfig,
    v: Vocabulary,
    mono: list[MonolingualCorpus],
    weights: np.ndarray,
    rng: np.random.Generator,
) -> list[TrainingExample]:
    out = []
    for _ in range(plan.batch_size):
        ci = int(rng.choice(len(mono), p=weights))
        sent = mono[ci].sentences[int(rng.integers(len(mono[ci].sentences)))]
        sent = _clip_seq(sent, cfg.max_len)
        out.append(corruption.make_sc(v, sent, plan.noise_density, plan.mean_span_len, rng))
    return out


def _draw_cross_batch(
    plan: PretrainPlan,
    cfg: ModelConfig,
    v: Vocabulary,
    parallel: list[ParallelCorpus],
    weights: np.ndarray,
    usable: list[int],
    rng: np.random.Generator,
) -> list[TrainingExample]:
    side_cap = (cfg.max_len - 1) // 2
    out = []
    for _ in range(plan.batch_size):
        ci = int(rng.choice(len(parallel), p=weights))
        e, f = parallel[ci].pairs[int(rng.integers(usable[ci]))]
        e, f = _clip_seq(e, side_cap), _clip_seq(f, side_cap)
        if plan.cross_task == TASK_MT:
            if rng.integers(0, 2) == 1:
                e, f = f, e
            out.append(corruption.make_mt(e, f))
        elif plan.cross_task == TASK_TPSC:
            out.append(corruption.make_tpsc(v, e, f, plan.noise_density, plan.mean_span_len, rng))
        else:
            out.append(corruption.make_tsc(v, e, f, plan.noise_density, plan.mean_span_len, rng))
    return out


def _examples_loss(
    params: dict,
    cfg: ModelConfig,
    examples: list[TrainingExample],
    n_g: int,
) -> torch.Tensor:
    parts = [partition_groups(ex, n_g) for ex in examples]
    items = [(ex.input_ids, ex.target_ids, p) for ex, p in zip(examples, parts)]
    return batch_loss(params, cfg, collate(cfg, items))


def write_metrics_csv(path: str | os.PathLike, rows: list[tuple]) -> None:
    lines = [",".join(METRICS_HEADER)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _save(
    path: str | os.PathLike,
    params: dict,
    opt: OptimizerState,
    cfg: ModelConfig,
    v: Vocabulary,
    extra: dict | None = None,
) -> None:
    opt_arrays = {}
    for name in params:
        opt_arrays[f"m/{name}"] = opt.m[name]
        opt_arrays[f"v/{name}"] = opt.v[name]
    info = {"vocab_sha": v.fingerprint()}
    info.update(extra or {})
    save_checkpoint(
        path,
        step=opt.t,
        params=params,
        optimizer_scalars=opt.scalars(),
        opt_arrays=opt_arrays,
        config=cfg.to_dict(),
        extra=info,
    )


def restore(ckpt: Checkpoint, v: Vocabulary | None = None) -> tuple[dict, OptimizerState, ModelConfig]:
    """Rebuild params, optimizer state, and config from a checkpoint."""
    if v is not None and ckpt.extra.get("vocab_sha") not in (None, v.fingerprint()):
        raise ConfigError("checkpoint was trained with a different vocabulary")
    cfg = ModelConfig(**ckpt.config)
    params = params_to_tensors(ckpt.params)
    sc = dict(ckpt.optimizer)
    m = {n: torch.from_numpy(ckpt.opt_arrays[f"m/{n}"].copy()) for n in params} if ckpt.opt_arrays else {
        n: torch.zeros_like(p) for n, p in params.items()
    }
    vv = {n: torch.from_numpy(ckpt.opt_arrays[f"v/{n}"].copy()) for n in params} if ckpt.opt_arrays else {
        n: torch.zeros_like(p) for n, p in params.items()
    }
    opt = OptimizerState(m=m, v=vv, **sc)
    return params, opt, cfg


def pretrain(
    plan: PretrainPlan,
    mono: list[MonolingualCorpus],
    parallel: list[ParallelCorpus],
    v: Vocabulary,
    cfg: ModelConfig,
    out_dir: str | os.PathLike | None = None,
    resume: Checkpoint | None = None,
) -> tuple[dict, OptimizerState, list[tuple]]:
    """Run the joint objective: each step draws one span-corruption batch and,
    unless cross_task is none, one cross-lingual batch; the two losses are
    summed and applied in a single update. Returns params, optimizer state,
    and the metric rows that also land in metrics.csv."""
    if not mono:
        raise DataError("pretraining needs at least one monolingual corpus")
    if plan.cross_task != "none" and not parallel:
        raise DataError(f"cross task {plan.cross_task} needs a parallel corpus")
    mono_w = sampling_distribution([len(c.sentences) for c in mono], plan.alpha).weights
    par_w = None
    usable: list[int] = []
    if plan.cross_task != "none":
        usable = [
            len(c.pairs) - plan.holdout if len(c.pairs) > plan.holdout else len(c.pairs)
            for c in parallel
        ]
        par_w = sampling_distribution(usable, plan.alpha).weights

    if resume is not None:
        params, opt, cfg_saved = restore(resume, v)
        if cfg_saved.to_dict() != cfg.to_dict():
            raise ConfigError("checkpoint model config does not match the requested config")
        opt.total_steps = plan.steps
    else:
        params = init_params(cfg, plan.seed)
        opt = OptimizerState.create(
            params,
            beta1=plan.beta1,
            beta2=plan.beta2,
            eps=plan.eps,
            base_lr=plan.base_lr,
            warmup_steps=plan.warmup_steps,
            total_steps=plan.steps,
            clip_norm=plan.clip_norm,
        )

    rows: list[tuple] = []
    while opt.t < plan.steps:
        step = opt.t + 1
        rng = step_rng(plan.seed, step)
        sc_examples = _draw_sc_batch(plan, cfg, v, mono, mono_w, rng)
        loss_sc_t = _examples_loss(params, cfg, sc_examples, plan.n_g)
        if plan.cross_task != "none":
            x_examples = _draw_cross_batch(plan, cfg, v, parallel, par_w, usable, rng)
            loss_x_t = _examples_loss(params, cfg, x_examples, plan.n_g)
            total_t = loss_sc_t + loss_x_t
        else:
            loss_x_t = None
            total_t = loss_sc_t
        if not torch.isfinite(total_t):
            raise ModelError(f"non-finite loss at step {step}")
        names = list(params)
        grads = dict(zip(names, torch.autograd.grad(total_t, [params[n] for n in names])))
        gnorm = global_grad_norm(grads)
        adam_step(params, grads, opt)
        loss_sc = loss_sc_t.item()
        loss_x = loss_x_t.item() if loss_x_t is not None else 0.0
        rows.append((opt.t, lr_at(opt.t, opt), loss_sc + loss_x, loss_sc, loss_x, gnorm))
        if out_dir is not None and plan.checkpoint_every and opt.t % plan.checkpoint_every == 0:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            _save(Path(out_dir) / f"checkpoint_step{opt.t}.bin", params, opt, cfg, v)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _save(out / "checkpoint.bin", params, opt, cfg, v, extra={"cross_task": plan.cross_task})
        write_metrics_csv(out / "metrics.csv", rows)
    return params, opt, rows


@dataclass
class FinetunePlan:
    steps: int = 500
    batch_size: int = 8
    seed: int = 0
    base_lr: float = 3e-4
    warmup_steps: int = 10
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    checkpoint_every: int = 0


def finetune(
    ckpt: Checkpoint,
    dataset: list[tuple[list[int], list[int]]],
    plan: FinetunePlan,
    v: Vocabulary,
    out_dir: str | os.PathLike | None = None,
    resume: bool = False,
) -> tuple[dict, OptimizerState, list[tuple]]:
    """Plain text-to-text fine-tuning: always one group (standard teacher
    forcing), whatever grouping was used at pretraining time. dataset items
    are (input_ids, target_ids)."""
    if not dataset:
        raise DataError("fine-tuning dataset is empty")
    if ckpt.extra.get("vocab_sha") not in (None, v.fingerprint()):
        raise ConfigError("checkpoint was trained with a different vocabulary")
    cfg = ModelConfig(**ckpt.config)
    for inp, tgt in dataset:
        if not inp or not tgt:
            raise DataError("fine-tuning examples need nonempty input and target")
    params = params_to_tensors(ckpt.params)
    if resume:
        params, opt, _ = restore(ckpt, v)
        opt.total_steps = plan.steps
    else:
        opt = OptimizerState.create(
            params,
            beta1=plan.beta1,
            beta2=plan.beta2,
            eps=plan.eps,
            base_lr=plan.base_lr,
            warmup_steps=plan.warmup_steps,
            total_steps=plan.steps,
            clip_norm=plan.clip_norm,
        )
    rows: list[tuple] = []
    while opt.t < plan.steps:
        step = opt.t + 1
        rng = step_rng(plan.seed, step)
        idx = rng.integers(len(dataset), size=plan.batch_size)
        items = []
        for i in idx:
            inp, tgt = dataset[int(i)]
            items.append((inp, tgt, single_group(len(tgt))))
        loss_t = batch_loss(params, cfg, collate(cfg, items))
        if not torch.isfinite(loss_t):
            raise ModelError(f"non-finite loss at step {step}")
        names = list(params)
        grads = dict(zip(names, torch.autograd.grad(loss_t, [params[n] for n in names])))
        gnorm = global_grad_norm(grads)
        adam_step(params, grads, opt)
        loss = loss_t.item()
        rows.append((opt.t, lr_at(opt.t, opt), loss, loss, 0.0, gnorm))
        if out_dir is not None and plan.checkpoint_every and opt.t % plan.checkpoint_every == 0:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            _save(Path(out_dir) / f"checkpoint_step{opt.t}.bin", params, opt, cfg, v)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _save(out / "checkpoint.bin", params, opt, cfg, v)
        write_metrics_csv(out / "metrics.csv", rows)
    return params, opt, rows
