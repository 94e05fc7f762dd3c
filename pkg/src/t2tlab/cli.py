"""Command-line entry point.

Subcommands: gen-data, corrupt, pretrain, finetune, eval, sweep-noise.
Options resolve as defaults < config file (flat key=value lines) < explicit
flags, and every run writes its fully resolved config next to its outputs,
so a run is reproducible from that file and the seed alone. Failures exit
nonzero with a single machine-parsable line: `error: <category>: <message>`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corruption, eval as evalmod, report, tasks, trainer
from .checkpoint import load_checkpoint, params_to_tensors
from .corpus import (
    MonolingualCorpus,
    ParallelCorpus,
    cipher_vocabulary,
    generate_cipher_corpus,
    load_monolingual,
    load_parallel,
    read_alignments,
    write_alignments,
    write_monolingual,
    write_parallel,
)
from .errors import ConfigError, DataError, T2TError
from .model import ModelConfig
from .pnat import partition_groups
from .trainer import FinetunePlan, PretrainPlan, finetune, pretrain, restore
from .vocab import Vocabulary

# defaults per subcommand; config-file keys and flag names match these
GEN_DATA_DEFAULTS = {
    "seed": 0,
    "vocab_size": 64,
    "n_pairs": 20000,
    "n_mono": 20000,
    "len_min": 4,
    "len_max": 12,
    "reorder_window": 3,
    "sentinels": 100,
}

CORRUPT_DEFAULTS = {
    "task": "SC",
    "vocab": "",
    "mono": "",
    "parallel": "",
    "lang": "a",
    "langs": "a-b",
    "density": 0.5,
    "mean_span_len": 3,
    "n_g": 3,
    "seed": 0,
    "limit": 0,
}

MODEL_DEFAULTS = {
    "preset": "desk",
    "enc_layers": 0,
    "dec_layers": 0,
    "d_model": 0,
    "d_ff": 0,
    "heads": 0,
    "max_len": 0,
    "dtype": "",
}

PRETRAIN_DEFAULTS = {
    "data": "",
    "cross_task": "TSC",
    "steps": 2000,
    "batch_size": 16,
    "n_g": 3,
    "density": 0.5,
    "mean_span_len": 3,
    "alpha": 0.7,
    "seed": 0,
    "lr": 1e-3,
    "warmup": 100,
    "clip": 1.0,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-6,
    "holdout": 128,
    "checkpoint_every": 0,
    "resume": "",
    **MODEL_DEFAULTS,
}

FINETUNE_DEFAULTS = {
    "checkpoint": "",
    "vocab": "",
    "data": "",
    "task_kind": "",
    "labels": "",
    "steps": 500,
    "batch_size": 8,
    "seed": 0,
    "lr": 3e-4,
    "warmup": 10,
    "clip": 1.0,
    "resume": 0,
}

EVAL_DEFAULTS = {
    "checkpoint": "",
    "vocab": "",
    "data": "",
    "eval_pairs": 128,
    "task_data": "",
    "task_kind": "",
    "labels": "",
    "max_decode_len": 32,
    "transfer_en": float("nan"),
    "transfer_rest": "",
}

SWEEP_DEFAULTS = {k: v for k, v in PRETRAIN_DEFAULTS.items() if k != "resume"}
SWEEP_DEFAULTS.update({"densities": "0.15,0.3,0.5,1.0", "steps": 200, "eval_pairs": 128})


def _load_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _coerce(key: str, raw: str, defaults: dict):
    proto = defaults[key]
    try:
        if isinstance(proto, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e


def resolve_options(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit CLI flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        for key, raw in _load_config_file(args.config).items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            resolved[key] = _coerce(key, raw, defaults)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    return resolved


def write_resolved(out_dir: Path, opts: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={opts[k]}" for k in sorted(opts)]
    tmp = out_dir / "config.resolved.tmp"
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, out_dir / "config.resolved")


def _add_options(sub: argparse.ArgumentParser, defaults: dict) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--out", required=True, help="output directory")
    for key, proto in defaults.items():
        flag = "--" + key.replace("_", "-")
        sub.add_argument(flag, dest=key, type=type(proto), default=None)


def _model_config(opts: dict, vocab_size: int) -> ModelConfig:
    preset = ModelConfig.small if opts["preset"] == "small" else ModelConfig.desk
    cfg = preset(vocab_size)
    overrides = {
        "n_layers_enc": opts["enc_layers"],
        "n_layers_dec": opts["dec_layers"],
        "d_model": opts["d_model"],
        "d_ff": opts["d_ff"],
        "n_heads": opts["heads"],
        "max_len": opts["max_len"],
    }
    kw = {k: v for k, v in overrides.items() if v}
    if opts["dtype"]:
        kw["dtype"] = opts["dtype"]
    return preset(vocab_size, **kw) if kw else cfg


# -- subcommands ---------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    opts = resolve_options(args, GEN_DATA_DEFAULTS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_pairs, n_mono = opts["n_pairs"], opts["n_mono"]
    v = cipher_vocabulary(opts["vocab_size"], opts["sentinels"])
    # one stream: first the parallel pairs, then fresh pairs whose sides
    # become the two monolingual corpora (same token process, no overlap)
    full = generate_cipher_corpus(
        opts["seed"],
        opts["vocab_size"],
        n_pairs + 2 * n_mono,
        (opts["len_min"], opts["len_max"]),
        opts["reorder_window"],
        opts["sentinels"],
    )
    para = ParallelCorpus(
        lang_pair=full.lang_pair,
        pairs=full.pairs[:n_pairs],
        gold_alignments=full.gold_alignments[:n_pairs],
    )
    mono_a = [e for e, _ in full.pairs[n_pairs : n_pairs + n_mono]]
    mono_b = [f for _, f in full.pairs[n_pairs + n_mono :]]
    v.save(out / "vocab.txt")
    write_parallel(out / "para.a-b.tsv", para, v)
    write_alignments(out / "para.a-b.align", para)
    write_monolingual(out / "mono.a.txt", MonolingualCorpus("a", mono_a), v)
    write_monolingual(out / "mono.b.txt", MonolingualCorpus("b", mono_b), v)
    write_resolved(out, opts)
    print(f"wrote {n_pairs} pairs and 2x{n_mono} monolingual sentences to {out}")
    return 0


def cmd_corrupt(args: argparse.Namespace) -> int:
    opts = resolve_options(args, CORRUPT_DEFAULTS)
    task = opts["task"]
    if task not in corruption.ALL_TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {corruption.ALL_TASKS}")
    if not opts["vocab"]:
        raise ConfigError("corrupt needs --vocab")
    v = Vocabulary.load(opts["vocab"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    limit = opts["limit"] or None
    records = []
    if task == corruption.TASK_SC:
        if not opts["mono"]:
            raise ConfigError("task SC needs --mono")
        sentences = load_monolingual(opts["mono"], opts["lang"], v).sentences[:limit]
        for i, s in enumerate(sentences):
            rng = trainer.step_rng(opts["seed"], i)
            ex = corruption.make_sc(v, s, opts["density"], opts["mean_span_len"], rng)
            ex.groups = partition_groups(ex, opts["n_g"])
            records.append(ex)
    else:
        if not opts["parallel"]:
            raise ConfigError(f"task {task} needs --parallel")
        langs = tuple(opts["langs"].split("-"))
        if len(langs) != 2:
            raise ConfigError(f"--langs must look like src-tgt, got {opts['langs']!r}")
        pairs = load_parallel(opts["parallel"], langs, v).pairs[:limit]
        for i, (e, f) in enumerate(pairs):
            rng = trainer.step_rng(opts["seed"], i)
            if task == corruption.TASK_MT:
                ex = corruption.make_mt(e, f)
            elif task == corruption.TASK_TPSC:
                ex = corruption.make_tpsc(v, e, f, opts["density"], opts["mean_span_len"], rng)
            else:
                ex = corruption.make_tsc(v, e, f, opts["density"], opts["mean_span_len"], rng)
            ex.groups = partition_groups(ex, opts["n_g"])
            records.append(ex)
    lines = [json.dumps(corruption.example_to_json_dict(ex), sort_keys=True) for ex in records]
    tmp = out / "examples.jsonl.tmp"
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, out / "examples.jsonl")
    write_resolved(out, opts)
    print(f"wrote {len(records)} {task} examples to {out / 'examples.jsonl'}")
    return 0


def _load_training_data(data_dir: str, v: Vocabulary):
    data = Path(data_dir)
    mono = []
    for path in sorted(data.glob("mono.*.txt")):
        lang = path.name.split(".")[1]
        mono.append(load_monolingual(path, lang, v))
    parallel = []
    alignments = {}
    for path in sorted(data.glob("para.*.tsv")):
        langs = tuple(path.name.split(".")[1].split("-"))
        corpus = load_parallel(path, langs, v)
        align_path = path.with_suffix(".align")
        if align_path.exists():
            corpus.gold_alignments = read_alignments(align_path)
        parallel.append(corpus)
    if not mono:
        raise DataError(f"no mono.*.txt files under {data_dir}")
    return mono, parallel


def cmd_pretrain(args: argparse.Namespace) -> int:
    opts = resolve_options(args, PRETRAIN_DEFAULTS)
    if not opts["data"]:
        raise ConfigError("pretrain needs --data (directory from gen-data)")
    out = Path(args.out)
    v = Vocabulary.load(Path(opts["data"]) / "vocab.txt")
    mono, parallel = _load_training_data(opts["data"], v)
    cfg = _model_config(opts, len(v))
    plan = PretrainPlan(
        cross_task=opts["cross_task"],
        steps=opts["steps"],
        batch_size=opts["batch_size"],
        n_g=opts["n_g"],
        noise_density=opts["density"],
        mean_span_len=opts["mean_span_len"],
        alpha=opts["alpha"],
        seed=opts["seed"],
        base_lr=opts["lr"],
        warmup_steps=opts["warmup"],
        clip_norm=opts["clip"],
        beta1=opts["beta1"],
        beta2=opts["beta2"],
        eps=opts["eps"],
        holdout=opts["holdout"],
        checkpoint_every=opts["checkpoint_every"],
    )
    resume = load_checkpoint(opts["resume"]) if opts["resume"] else None
    out.mkdir(parents=True, exist_ok=True)
    _, _, rows = pretrain(plan, mono, parallel, v, cfg, out_dir=out, resume=resume)
    report.plot_training_curves(rows, out / "training_loss.png")
    write_resolved(out, opts)
    print(f"pretrained {opts['steps']} steps (cross task {plan.cross_task}); outputs in {out}")
    return 0


def _read_jsonl(path: str) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read dataset {path}: {e}") from e
    records = []
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{ln}: bad JSON: {e}") from e
    if not records:
        raise DataError(f"no records in {path}")
    return records


def _format_task_records(v: Vocabulary, records: list[dict], task_kind: str, labels: list[str]):
    """JSON-lines task records -> FormattedExample list (+ gold payloads)."""
    formatted = []
    if task_kind == tasks.KIND_CLASSIFICATION:
        if not labels:
            labels = sorted({r["label"] for r in records})
        for r in records:
            formatted.append(
                tasks.format_classification(v, r["a"], r.get("b"), r["label"], labels)
            )
    elif task_kind == tasks.KIND_QA:
        for r in records:
            formatted.append(tasks.format_qa(v, r["passage"], r["question"], r["answer"]))
    elif task_kind == tasks.KIND_NER:
        for r in records:
            formatted.append(tasks.format_ner(v, r["tokens"], r["tags"]))
    elif task_kind == tasks.KIND_GENERATION:
        for r in records:
            formatted.append(
                tasks.FormattedExample(
                    input_ids=[v.bos_id] + v.encode(r["source"]) + [v.eos_id],
                    target_ids=[v.bos_id] + v.encode(r["target"]) + [v.eos_id],
                    task_kind=tasks.KIND_GENERATION,
                )
            )
    else:
        raise ConfigError(f"task_kind must be one of {tasks.TASK_KINDS}")
    return formatted


def cmd_finetune(args: argparse.Namespace) -> int:
    opts = resolve_options(args, FINETUNE_DEFAULTS)
    for key in ("checkpoint", "vocab", "data", "task_kind"):
        if not opts[key]:
            raise ConfigError(f"finetune needs --{key.replace('_', '-')}")
    v = Vocabulary.load(opts["vocab"])
    ckpt = load_checkpoint(opts["checkpoint"])
    records = _read_jsonl(opts["data"])
    labels = [s for s in opts["labels"].split(",") if s]
    formatted = _format_task_records(v, records, opts["task_kind"], labels)
    dataset = [(ex.input_ids, ex.target_ids) for ex in formatted]
    plan = FinetunePlan(
        steps=opts["steps"],
        batch_size=opts["batch_size"],
        seed=opts["seed"],
        base_lr=opts["lr"],
        warmup_steps=opts["warmup"],
        clip_norm=opts["clip"],
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finetune(ckpt, dataset, plan, v, out_dir=out, resume=bool(opts["resume"]))
    write_resolved(out, opts)
    print(f"fine-tuned {opts['steps']} steps on {len(dataset)} examples; outputs in {out}")
    return 0


def _eval_parallel_analyses(params, cfg, v, data_dir: str, n_eval: int):
    """Held-out retrieval per layer + mean AER over gold-aligned pairs."""
    data = Path(data_dir)
    tsv = sorted(data.glob("para.*.tsv"))
    if not tsv:
        raise DataError(f"no para.*.tsv under {data_dir}")
    langs = tuple(tsv[0].name.split(".")[1].split("-"))
    corpus = load_parallel(tsv[0], langs, v)
    align_path = tsv[0].with_suffix(".align")
    gold = read_alignments(align_path) if align_path.exists() else None
    pairs = corpus.pairs[-n_eval:]
    retrieval_rows = []
    by_layer = evalmod.retrieval_by_layer(params, cfg, v, pairs)
    for layer, fwd, rev, mean in by_layer:
        retrieval_rows.append((layer, "src2tgt", fwd))
        retrieval_rows.append((layer, "tgt2src", rev))
        retrieval_rows.append((layer, "mean", mean))
    metric_rows = [("retrieval_acc1_last_layer", "mean", by_layer[-1][3])]
    if gold is not None:
        gold_eval = gold[-n_eval:]
        aers = [
            evalmod.aer(evalmod.align_pair(params, cfg, e, f), links)
            for (e, f), links in zip(pairs, gold_eval)
        ]
        metric_rows.append(("aer", "mean", float(np.mean(aers))))
    return retrieval_rows, metric_rows


def _eval_task(params, cfg, v, opts) -> list[tuple[str, str, float]]:
    records = _read_jsonl(opts["task_data"])
    kind = opts["task_kind"]
    labels = [s for s in opts["labels"].split(",") if s]
    formatted = _format_task_records(v, records, kind, labels)
    max_len = opts["max_decode_len"]
    rows: list[tuple[str, str, float]] = []
    if kind == tasks.KIND_CLASSIFICATION:
        preds, golds = [], []
        for ex, r in zip(formatted, records):
            out = tasks.constrained_greedy_decode(params, cfg, v, ex, max_len)
            preds.append(tasks.strip_specials(v, out))
            golds.append(r["label"])
        rows.append(("accuracy", kind, evalmod.accuracy(preds, golds)))
    elif kind == tasks.KIND_QA:
        ems, f1s = [], []
        for ex, r in zip(formatted, records):
            out = tasks.constrained_greedy_decode(params, cfg, v, ex, max_len)
            em, f1 = evalmod.qa_scores(tasks.strip_specials(v, out), r["answer"])
            ems.append(em)
            f1s.append(f1)
        rows.append(("em", kind, float(np.mean(ems))))
        rows.append(("f1", kind, float(np.mean(f1s))))
    elif kind == tasks.KIND_NER:
        f1s = []
        for ex, r in zip(formatted, records):
            out = tasks.constrained_greedy_decode(params, cfg, v, ex, max_len)
            pred = [(ent.tag, ent.text) for ent in tasks.parse_ner_output(v, out, r["tokens"])]
            gold = tasks.bio_to_entities(r["tokens"], r["tags"])
            f1s.append(evalmod.ner_f1(pred, gold))
        rows.append(("f1", kind, float(np.mean(f1s))))
    else:  # generation
        r1s, r2s, rls = [], [], []
        for ex, r in zip(formatted, records):
            out = tasks.greedy_decode(params, cfg, v, ex.input_ids, max_len)
            hyp = tasks.strip_specials(v, out)
            r1s.append(evalmod.rouge_n(hyp, r["target"], 1)[2])
            r2s.append(evalmod.rouge_n(hyp, r["target"], 2)[2])
            rls.append(evalmod.rouge_l(hyp, r["target"])[2])
        rows.append(("rouge1_f1", kind, float(np.mean(r1s))))
        rows.append(("rouge2_f1", kind, float(np.mean(r2s))))
        rows.append(("rougeL_f1", kind, float(np.mean(rls))))
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    opts = resolve_options(args, EVAL_DEFAULTS)
    if not opts["checkpoint"] or not opts["vocab"]:
        raise ConfigError("eval needs --checkpoint and --vocab")
    v = Vocabulary.load(opts["vocab"])
    ckpt = load_checkpoint(opts["checkpoint"])
    if ckpt.extra.get("vocab_sha") not in (None, v.fingerprint()):
        raise ConfigError("checkpoint was trained with a different vocabulary")
    cfg = ModelConfig(**ckpt.config)
    params = params_to_tensors(ckpt.params, requires_grad=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metric_rows: list[tuple[str, str, float]] = []
    if opts["data"]:
        retrieval_rows, par_rows = _eval_parallel_analyses(
            params, cfg, v, opts["data"], opts["eval_pairs"]
        )
        report.write_retrieval_report(out / "retrieval.csv", retrieval_rows)
        report.plot_retrieval_by_layer(retrieval_rows, out / "retrieval_by_layer.png")
        metric_rows.extend(par_rows)
    if opts["task_data"]:
        if not opts["task_kind"]:
            raise ConfigError("--task-data needs --task-kind")
        metric_rows.extend(_eval_task(params, cfg, v, opts))
    if opts["transfer_rest"]:
        rest = [float(s) for s in opts["transfer_rest"].split(",") if s]
        en = opts["transfer_en"]
        if en != en:  # NaN: flag not given
            raise ConfigError("--transfer-rest needs --transfer-en")
        metric_rows.append(("transfer_gap", "scores", evalmod.transfer_gap(en, rest)))
    if not metric_rows:
        raise ConfigError("eval has nothing to do: give --data, --task-data, or transfer scores")
    report.write_metric_report(out / "metrics.csv", metric_rows)
    write_resolved(out, opts)
    for name, subset, value in metric_rows:
        print(f"{name}[{subset}] = {value:.6f}")
    return 0


def cmd_sweep_noise(args: argparse.Namespace) -> int:
    opts = resolve_options(args, SWEEP_DEFAULTS)
    if not opts["data"]:
        raise ConfigError("sweep-noise needs --data")
    densities = [float(s) for s in str(opts["densities"]).split(",") if s]
    if not densities:
        raise ConfigError("empty density list")
    for d in densities:
        if not 0 < d <= 1:
            raise ConfigError(f"noise density {d} outside (0, 1]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    v = Vocabulary.load(Path(opts["data"]) / "vocab.txt")
    mono, parallel = _load_training_data(opts["data"], v)
    cfg = _model_config(opts, len(v))
    sweep_rows = []
    for d in densities:
        run_dir = out / f"density_{d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        plan = PretrainPlan(
            cross_task=opts["cross_task"],
            steps=opts["steps"],
            batch_size=opts["batch_size"],
            n_g=opts["n_g"],
            noise_density=d,
            mean_span_len=opts["mean_span_len"],
            alpha=opts["alpha"],
            seed=opts["seed"],
            base_lr=opts["lr"],
            warmup_steps=opts["warmup"],
            clip_norm=opts["clip"],
            beta1=opts["beta1"],
            beta2=opts["beta2"],
            eps=opts["eps"],
            holdout=opts["holdout"],
        )
        params, _, rows = pretrain(plan, mono, parallel, v, cfg, out_dir=run_dir)
        eval_pairs = parallel[0].pairs[-opts["eval_pairs"] :]
        by_layer = evalmod.retrieval_by_layer(params, cfg, v, eval_pairs)
        sweep_rows.append(
            {
                "density": d,
                "final_loss_total": rows[-1][2],
                "final_loss_sc": rows[-1][3],
                "final_loss_x": rows[-1][4],
                "retrieval_mean": by_layer[-1][3],
            }
        )
    header = ("density", "final_loss_total", "final_loss_sc", "final_loss_x", "retrieval_mean")
    report.write_csv(out / "sweep.csv", header, [[r[k] for k in header] for r in sweep_rows])
    report.plot_noise_sweep(sweep_rows, out / "noise_sweep.png")
    write_resolved(out, opts)
    print(f"swept densities {densities}; outputs in {out}")
    return 0


COMMANDS = {
    "gen-data": (cmd_gen_data, GEN_DATA_DEFAULTS, "generate a cipher corpus with gold alignments"),
    "corrupt": (cmd_corrupt, CORRUPT_DEFAULTS, "dump corrupted training examples as JSON lines"),
    "pretrain": (cmd_pretrain, PRETRAIN_DEFAULTS, "run the joint pretraining loop"),
    "finetune": (cmd_finetune, FINETUNE_DEFAULTS, "fine-tune a checkpoint on a task dataset"),
    "eval": (cmd_eval, EVAL_DEFAULTS, "retrieval/alignment/task metrics for a checkpoint"),
    "sweep-noise": (cmd_sweep_noise, SWEEP_DEFAULTS, "pretrain+eval once per noise density"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="t2tlab")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_, defaults, help_text) in COMMANDS.items():
        sub = subs.add_parser(name, help=help_text)
        _add_options(sub, defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    import torch

    torch.set_num_threads(1)  # desk-scale tensors: sync overhead outweighs parallelism
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except T2TError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
