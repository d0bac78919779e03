"""Command-line harness wiring the full pipeline.

Subcommands: gen-synthetic, train-kg, train-sum, summarize, eval-rouge,
run-ablation. Configuration files are plain `key=value` lines whose keys
mirror the config dataclass fields; `--seed` and a few convenience flags
override them. Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ablation import AblationConfig, run_ablation, write_ablation_csv
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Pair, Vocabulary, load_corpus
from .decoding import DecodeConfig, paper_decode_config, summarize_document, toy_decode_config
from .evaluation import teacher_forced_eval
from .linking import Gazetteer, tokenize
from .model import ModelConfig, Summarizer, paper_config, toy_config
from .rouge import score_pair
from .synthetic import SyntheticTaskSpec, gen_synthetic
from .training import (
    TrainConfig,
    paper_train_config,
    toy_train_config,
    train_summarizer,
    write_loss_trace,
)
from .transe import (
    KnowledgeGraph,
    TransEConfig,
    link_prediction_eval,
    load_entity_names_tsv,
    load_entity_vectors_tsv,
    load_triples_tsv,
    transe_train,
)

__all__ = ["main"]


def read_config_file(path) -> dict[str, str]:
    """Plain-text `key=value` pairs; blank lines and `#` comments ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def apply_overrides(instance, overrides: dict[str, str]):
    """Coerce string values onto matching scalar dataclass fields; returns
    the set of keys that were consumed."""
    used = set()
    fields = {f.name: f for f in dataclasses.fields(instance)}
    for key, raw in overrides.items():
        f = fields.get(key)
        if f is None:
            continue
        if f.type in ("int", int):
            value = int(raw)
        elif f.type in ("float", float):
            value = float(raw)
        elif f.type in ("str", str):
            value = raw
        else:
            continue  # structured fields are not file-configurable
        setattr(instance, key, value)
        used.add(key)
    if hasattr(instance, "__post_init__"):
        instance.__post_init__()
    return used


def _load_config_arg(args) -> dict[str, str]:
    return read_config_file(args.config) if getattr(args, "config", None) else {}


def _require_consumed(overrides: dict[str, str], used: set):
    unknown = sorted(set(overrides) - used)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")


# ------------------------------------------------------------- subcommands


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticTaskSpec(
        task=args.task,
        n_entities=args.n_entities,
        n_relations=args.n_relations,
        n_train=args.n_train,
        n_heldout=args.n_heldout,
        vocab_size=args.vocab_size,
        seed=args.seed,
    )
    data = gen_synthetic(spec)
    data.write_files(args.out_dir)
    print(
        f"wrote {len(data.train_pairs)} train / {len(data.heldout_pairs)} heldout pairs, "
        f"{len(data.kg.triples)} triples, {len(data.gazetteer)} gazetteer entries to {args.out_dir}"
    )
    return 0


def _infer_kg(triples, names) -> KnowledgeGraph:
    n_ent = max((max(t.h, t.t) for t in triples), default=-1) + 1
    n_rel = max((t.l for t in triples), default=-1) + 1
    if names:
        n_ent = max(n_ent, max(names) + 1)
    return KnowledgeGraph(n_ent, n_rel, triples, names or {})


def cmd_train_kg(args) -> int:
    triples = load_triples_tsv(args.triples)
    names = load_entity_names_tsv(args.names) if args.names else {}
    kg = _infer_kg(triples, names)
    config = TransEConfig()
    overrides = _load_config_arg(args)
    _require_consumed(overrides, apply_overrides(config, overrides))
    if args.seed is not None:
        config.seed = args.seed
    emb, trace = transe_train(kg, config)
    emb.save_entities_tsv(args.out)
    if args.trace:
        write_loss_trace(trace, args.trace)
    print(f"trained {kg.entity_count} entities / {kg.relation_count} relations "
          f"for {config.epochs} epochs; final epoch loss {trace[-1]:.6f}")
    if args.eval:
        mean_rank, hits = link_prediction_eval(kg, emb, k=args.hits_k)
        print(f"link prediction on training triples: mean_rank={mean_rank:.2f} hits@{args.hits_k}={hits:.3f}")
    return 0


def _model_config_for(args, overrides) -> ModelConfig:
    base = paper_config() if args.preset == "paper" else toy_config()
    apply_overrides(base, overrides)
    return base


def cmd_train_sum(args) -> int:
    overrides = _load_config_arg(args)
    pairs = load_corpus(args.corpus)
    gazetteer = Gazetteer.load_tsv(args.gazetteer) if args.gazetteer else None

    model_cfg = _model_config_for(args, overrides)
    train_cfg = paper_train_config() if args.preset == "paper" else toy_train_config()
    used = apply_overrides(train_cfg, overrides)
    used |= apply_overrides(model_cfg, overrides)
    decode_keys = {f.name for f in dataclasses.fields(DecodeConfig)}
    _require_consumed(overrides, used | decode_keys)
    if args.seed is not None:
        train_cfg.seed = args.seed
    if args.steps is not None:
        train_cfg.steps = args.steps

    vocab = Vocabulary.from_token_lists(
        [tokenize(p.article) for p in pairs] + [tokenize(p.summary) for p in pairs]
    )
    model_cfg.vocab_size = 0  # set from the vocabulary at construction

    entity_vectors = None
    if model_cfg.entity_mode == "kg":
        if not args.entities:
            raise ValueError("entity_mode=kg needs --entities (TransE export TSV)")
        entity_vectors = load_entity_vectors_tsv(args.entities)
    elif model_cfg.entity_mode == "random":
        if model_cfg.entity_count <= 0:
            if gazetteer is None or not len(gazetteer):
                raise ValueError("entity_mode=random needs entity_count or a gazetteer")
            model_cfg.entity_count = max(gazetteer.entity_ids()) + 1

    model = Summarizer(model_cfg, vocab, seed=train_cfg.seed, entity_vectors=entity_vectors)
    trace = train_summarizer(pairs, model, gazetteer, train_cfg, log_every=args.log_every)
    save_checkpoint(model, args.out)
    if args.trace:
        write_loss_trace(trace, args.trace)
    final = trace[-1] if trace else float("nan")
    print(f"trained {train_cfg.steps} steps on {len(pairs)} pairs; final step loss {final:.6f}; "
          f"checkpoint -> {args.out}")
    return 0


def _decode_config_for(args, overrides) -> DecodeConfig:
    base = paper_decode_config() if args.preset == "paper" else toy_decode_config()
    apply_overrides(base, overrides)
    return base


def cmd_summarize(args) -> int:
    overrides = _load_config_arg(args)
    model = load_checkpoint(args.checkpoint)
    gazetteer = Gazetteer.load_tsv(args.gazetteer) if args.gazetteer else Gazetteer()
    config = _decode_config_for(args, overrides)
    pairs = load_corpus(args.input)

    def work(pair: Pair) -> str:
        return summarize_document(model, pair.article, gazetteer, config)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            candidates = list(pool.map(work, pairs))
    else:
        candidates = [work(p) for p in pairs]

    with open(args.output, "w", encoding="utf-8") as fh:
        for pair, cand in zip(pairs, candidates):
            fh.write(json.dumps({"candidate": cand, "reference": pair.summary}) + "\n")
    print(f"summarized {len(pairs)} documents -> {args.output}")
    return 0


def cmd_eval_rouge(args) -> int:
    rows = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "candidate" not in obj or "reference" not in obj:
                raise ValueError(f"{args.input}:{lineno}: need 'candidate' and 'reference' fields")
            rows.append((obj["candidate"], obj["reference"]))

    def work(row):
        cand, ref = row
        return score_pair(tokenize(cand), tokenize(ref))

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            scores = list(pool.map(work, rows))
    else:
        scores = [work(r) for r in rows]

    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("id,r1_f,r2_f,rl_f\n")
        sums = np.zeros(3)
        for i, s in enumerate(scores):
            vals = (s["rouge1"].f1, s["rouge2"].f1, s["rougeL"].f1)
            sums += np.array(vals)
            fh.write(f"{i},{vals[0]:.6f},{vals[1]:.6f},{vals[2]:.6f}\n")
        if scores:
            means = sums / len(scores)
            fh.write(f"mean,{means[0]:.6f},{means[1]:.6f},{means[2]:.6f}\n")
    print(f"scored {len(scores)} pairs -> {args.output}")
    return 0


def cmd_run_ablation(args) -> int:
    from .synthetic import SyntheticData
    import os

    train_pairs = load_corpus(os.path.join(args.data_dir, "train.jsonl"))
    heldout_pairs = load_corpus(os.path.join(args.data_dir, "heldout.jsonl"))
    triples = load_triples_tsv(os.path.join(args.data_dir, "triples.tsv"))
    names = load_entity_names_tsv(os.path.join(args.data_dir, "entity_names.tsv"))
    gazetteer = Gazetteer.load_tsv(os.path.join(args.data_dir, "gazetteer.tsv"))
    kg = _infer_kg(triples, names)
    data = SyntheticData(train_pairs, heldout_pairs, kg, gazetteer)

    seeds = tuple(int(s) for s in args.seeds.split(","))
    config = AblationConfig(seeds=seeds)
    overrides = _load_config_arg(args)
    used = apply_overrides(config, overrides)
    used |= apply_overrides(config.transe, overrides)
    _require_consumed(overrides, used)
    if args.steps is not None:
        config.steps = args.steps

    result = run_ablation(data, config)
    write_ablation_csv(result, args.out)
    for name in ("vanilla_baseline", "vanilla_random_entity", "vanilla_kg_entity", "xl_kg_entity"):
        print(f"{name:24s} mean heldout team-token accuracy {result.mean_accuracy(name):.3f}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entsum",
        description="Entity-aware Transformer-XL summarizer: data generation, training, decoding, scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic task (copy or entity_lookup)")
    p.add_argument("--task", choices=("copy", "entity_lookup"), default="entity_lookup")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-entities", type=int, default=40)
    p.add_argument("--n-relations", type=int, default=2)
    p.add_argument("--n-train", type=int, default=12)
    p.add_argument("--n-heldout", type=int, default=8)
    p.add_argument("--vocab-size", type=int, default=40)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train-kg", help="learn TransE embeddings from a triples file")
    p.add_argument("--triples", required=True)
    p.add_argument("--names")
    p.add_argument("--out", required=True, help="entity embedding TSV export")
    p.add_argument("--trace", help="per-epoch loss CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="key=value file (d_ent, gamma, lr, epochs, batch_size)")
    p.add_argument("--eval", action="store_true", help="report link-prediction metrics")
    p.add_argument("--hits-k", type=int, default=1)
    p.set_defaults(func=cmd_train_kg)

    p = sub.add_parser("train-sum", help="train the summarizer on a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--gazetteer")
    p.add_argument("--entities", help="TransE entity embedding TSV (entity_mode=kg)")
    p.add_argument("--trace", help="per-step loss CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int)
    p.add_argument("--preset", choices=("toy", "paper"), default="toy")
    p.add_argument("--config", help="key=value file (ModelConfig / TrainConfig fields)")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train_sum)

    p = sub.add_parser("summarize", help="beam-search decode articles from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="JSONL corpus (articles; summaries become references)")
    p.add_argument("--output", required=True, help="JSONL with candidate/reference fields")
    p.add_argument("--gazetteer")
    p.add_argument("--preset", choices=("toy", "paper"), default="toy")
    p.add_argument("--config", help="key=value file (DecodeConfig fields)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval-rouge", help="ROUGE-1/2/L F1 for candidate/reference JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="CSV id,r1_f,r2_f,rl_f plus mean row")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval_rouge)

    p = sub.add_parser("run-ablation", help="train the four-model grid on entity_lookup data")
    p.add_argument("--data-dir", required=True, help="directory from gen-synthetic")
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--steps", type=int)
    p.add_argument("--config", help="key=value file (AblationConfig / TransEConfig fields)")
    p.set_defaults(func=cmd_run_ablation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
