"""Operator command line: dataset prep, training, scoring and reports.

Every command is deterministic given its inputs and seed, and every
artifact embeds a short hash of the effective settings plus the seed:
JSONL files carry one leading ``{"meta": ...}`` record, JSON reports a
``meta`` key, the training CSV a leading comment line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.
"""

import argparse
import copy
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .aspects import (
    AspectTaxonomy,
    CommentRecord,
    augment_comments,
    lda_fit,
    prepare_comment_docs,
    select_num_topics,
    train_aspect_classifier,
    train_sentiment_scorer,
    umass_coherence,
)
from .checkpoint import load_checkpoint
from .corpus import (
    RankedPair,
    Story,
    build_pairs,
    corpus_stats,
    filter_stories,
    generate_negative,
    parse_stories,
    split_by_prompt,
)
from .errors import (
    ConfigError,
    ContractViolation,
    DataError,
    EmptyTextError,
    NumericFailure,
    StoryTooShortError,
)
from .jsonl import dumps, read_jsonl, write_json, write_jsonl
from .metrics import (
    MetricReport,
    bleu_avg,
    corpus_perplexity,
    correlation_pvalue,
    kendall,
    pairwise_accuracy,
    recall_at_k,
    render_report,
    rouge,
    score_distance,
    spearman,
)
from .model import Model, ModelConfig, frozen, predict_aspects, predict_preference
from .training import TrainConfig, TrainData, Trainer, score_texts
from .vocab import Vocabulary, build_vocab, tokenize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# settings bundles: "desk" is the runnable default; "paper" documents the
# original full-scale schedule and is not expected to converge on a laptop
PRESETS = {
    "desk": {
        "seed": 0,
        "model": {"d_model": 64, "n_enc_layers": 1, "n_dec_layers": 1,
                  "n_heads": 2, "window": 16, "max_len": 128, "n_aspects": 10,
                  "dropout": 0.0},
        "train": {"batch_size": 16, "margin": 0.3, "peak_lr": 1e-3,
                  "warmup_frac": 0.1, "epochs": 8, "objective": "rank",
                  "use_ps": True, "use_aspects": False, "use_comments": False,
                  "use_negatives": False, "comment_max_len": 24,
                  "eval_every": 0},
        "data": {"stories": None, "pairs_train": None, "pairs_val": None,
                 "comments": None, "negatives": None, "vocab": None,
                 "vocab_size": 2000, "taxonomy": None},
    },
    "paper": {
        "seed": 0,
        "model": {"d_model": 128, "n_enc_layers": 2, "n_dec_layers": 2,
                  "n_heads": 4, "window": 32, "max_len": 512, "n_aspects": 10,
                  "dropout": 0.1},
        "train": {"batch_size": 16, "margin": 0.3, "peak_lr": 4e-6,
                  "warmup_frac": 0.1, "epochs": 8, "objective": "rank",
                  "use_ps": True, "use_aspects": True, "use_comments": True,
                  "use_negatives": False, "comment_max_len": 64,
                  "eval_every": 0},
        "data": {"stories": None, "pairs_train": None, "pairs_val": None,
                 "comments": None, "negatives": None, "vocab": None,
                 "vocab_size": 8000, "taxonomy": None},
    },
}


def settings_hash(settings: dict) -> str:
    return hashlib.sha256(dumps(settings).encode("utf-8")).hexdigest()[:16]


def _meta(settings: dict, seed: int) -> dict:
    return {"config_hash": settings_hash(settings), "seed": int(seed)}


def write_artifact_jsonl(path, records, settings: dict, seed: int,
                         extra_meta: dict | None = None) -> None:
    meta = _meta(settings, seed)
    if extra_meta:
        meta.update(extra_meta)
    write_jsonl(path, [{"meta": meta}] + list(records))


def data_records(path) -> list[dict]:
    """JSONL records with any leading meta entries stripped."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file missing: {path}")
    return [r for r in read_jsonl(path) if "meta" not in r]


def _deep_update(dst: dict, src: dict) -> dict:
    for key, value in src.items():
        if isinstance(value, dict) and isinstance(dst.get(key), dict):
            _deep_update(dst[key], value)
        else:
            dst[key] = value
    return dst


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key.path=value, got '{assignment}'")
    key, _, raw = assignment.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config section '{part}' in '{key}'")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key '{key}'")
    node[parts[-1]] = value


def load_run_config(args) -> dict:
    cfg = copy.deepcopy(PRESETS[args.preset])
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file missing: {path}")
        try:
            _deep_update(cfg, json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    for assignment in args.set or []:
        _apply_set(cfg, assignment)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _load_stories(path) -> dict[str, Story]:
    stories, rejects = parse_stories(data_records(path))
    if rejects:
        raise DataError(f"{path}: {len(rejects)} malformed story records")
    return {s.id: s for s in stories}


def _load_pairs(path) -> list[RankedPair]:
    return [RankedPair(prompt_id=r["prompt_id"], high_id=r["high_id"],
                       low_id=r["low_id"]) for r in data_records(path)]


def _load_comment_records(path) -> list[CommentRecord]:
    return [CommentRecord.from_record(r) for r in data_records(path)]


# -- prepare-pairs -----------------------------------------------------------

def cmd_prepare(args) -> int:
    settings = {"command": "prepare-pairs", "min_words": args.min_words,
                "max_words": args.max_words, "exclude_from": args.exclude_from,
                "exclude_to": args.exclude_to, "high_min": args.high_min,
                "low_max": args.low_max, "ratios": args.ratios,
                "max_pairs_per_prompt": args.max_pairs_per_prompt,
                "seed": args.seed}
    records = data_records(args.input)
    stories, bad = parse_stories(records)
    kept, rejected = filter_stories(stories, min_words=args.min_words,
                                    max_words=args.max_words,
                                    exclude_from=args.exclude_from,
                                    exclude_to=args.exclude_to)
    pairs = build_pairs(kept, high_min=args.high_min, low_max=args.low_max,
                        max_pairs_per_prompt=args.max_pairs_per_prompt)
    if not pairs:
        raise DataError("no ranked pairs survive filtering; relax --min-words/"
                        "--max-words or the vote thresholds")
    ratios = tuple(float(x) for x in args.ratios.split(","))
    splits = split_by_prompt(pairs, ratios=ratios, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_artifact_jsonl(out / "stories.jsonl",
                         [s.to_record() for s in kept], settings, args.seed)
    for name in ("train", "val", "test"):
        write_artifact_jsonl(out / f"{name}_pairs.jsonl",
                             [{"prompt_id": p.prompt_id, "high_id": p.high_id,
                               "low_id": p.low_id} for p in splits[name]],
                             settings, args.seed)
    stats = corpus_stats(splits, kept)
    stats.update({"parse_rejects": len(bad), "filter_rejects": len(rejected),
                  "meta": _meta(settings, args.seed)})
    write_json(out / "stats.json", stats)
    print(f"kept {len(kept)} stories, {len(pairs)} pairs "
          f"(train {len(splits['train'])}, val {len(splits['val'])}, "
          f"test {len(splits['test'])}) -> {out}")
    return EXIT_OK


# -- make-negatives ----------------------------------------------------------

def cmd_make_negatives(args) -> int:
    kinds = args.kinds.split(",")
    unknown = sorted(set(kinds) - {"shuffle", "repeat", "substitute"})
    if unknown:
        raise ConfigError(f"unknown perturbation kinds: {', '.join(unknown)}")
    settings = {"command": "make-negatives", "kinds": kinds, "seed": args.seed}
    stories = _load_stories(args.input)
    records, skipped = [], {}
    for sid in sorted(stories):
        for kind in kinds:
            try:
                neg = generate_negative(stories[sid], kind, seed=args.seed)
            except (StoryTooShortError, DataError):
                skipped[kind] = skipped.get(kind, 0) + 1
                continue
            records.append({"source_story_id": neg.source_story_id,
                            "kind": neg.kind, "text": neg.text})
    if not records:
        raise DataError("no negatives could be generated")
    write_artifact_jsonl(args.out, records, settings, args.seed,
                         extra_meta={"skipped": skipped})
    print(f"wrote {len(records)} negatives "
          f"({len(skipped)} kinds had skips: {skipped or 'none'}) -> {args.out}")
    return EXIT_OK


# -- extract-aspects ---------------------------------------------------------

def cmd_extract_aspects(args) -> int:
    texts = [r["text"] for r in data_records(args.input)]
    docs, words = prepare_comment_docs(texts, min_count=args.min_count)
    if not docs:
        raise DataError("no usable comments after tokenization")
    settings = {"command": "extract-aspects", "topics": args.topics,
                "candidates": args.candidates, "iterations": args.iterations,
                "min_count": args.min_count, "seed": args.seed}
    if args.topics:
        n_topics = args.topics
    else:
        candidates = [int(c) for c in args.candidates.split(",")]
        n_topics = select_num_topics(docs, words, candidates, seed=args.seed,
                                     iterations=args.iterations)
    model = lda_fit(docs, words, n_topics, iterations=args.iterations,
                    seed=args.seed)
    top = model.top_words(args.top_words)
    coherence = umass_coherence(model, docs, top_n=args.top_words)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"n_topics": n_topics, "umass_coherence": coherence,
              "top_words": {str(t): top[t] for t in range(n_topics)},
              "meta": _meta(settings, args.seed)}
    write_json(out / "topics.json", report)
    names = [f"topic-{t} ({'/'.join(top[t][:3])})" for t in range(n_topics)]
    AspectTaxonomy(names=names, groups=["discovered"] * n_topics).save(
        out / "taxonomy.json", meta=_meta(settings, args.seed))
    print(f"{n_topics} topics (UMass {coherence:.2f}); "
          f"edit {out / 'taxonomy.json'} to name them")
    for t in range(n_topics):
        print(f"  topic {t}: {' '.join(top[t])}")
    return EXIT_OK


# -- augment-comments --------------------------------------------------------

def cmd_augment(args) -> int:
    crowd = _load_comment_records(args.crowd)
    raw = data_records(args.raw)
    n_aspects = args.n_aspects
    if args.taxonomy:
        n_aspects = len(AspectTaxonomy.load(args.taxonomy))
    settings = {"command": "augment-comments", "n_aspects": n_aspects,
                "confidence": args.confidence, "min_words": args.min_words,
                "max_words": args.max_words, "per_aspect_cap": args.cap,
                "epochs": args.epochs, "lr": args.lr, "seed": args.seed}
    classifier = train_aspect_classifier(crowd, n_aspects=n_aspects,
                                         epochs=args.epochs, lr=args.lr,
                                         seed=args.seed)
    scorer = train_sentiment_scorer(crowd, epochs=args.epochs, lr=args.lr,
                                    seed=args.seed)
    kept, audit = augment_comments(raw, classifier, scorer,
                                   confidence=args.confidence,
                                   min_words=args.min_words,
                                   max_words=args.max_words,
                                   per_aspect_cap=args.cap)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_artifact_jsonl(out / "augmented.jsonl",
                         [r.to_record() for r in kept], settings, args.seed)
    audit["meta"] = _meta(settings, args.seed)
    write_json(out / "audit.json", audit)
    print(f"kept {audit['kept']}/{audit['total']} comments "
          f"(length {audit['rejected_length']}, confidence "
          f"{audit['rejected_confidence']}, cap {audit['rejected_cap']})")
    return EXIT_OK


# -- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_run_config(args)
    data_cfg = cfg["data"]
    for key in ("stories", "pairs_train", "pairs_val"):
        if not data_cfg.get(key):
            raise ConfigError(f"data.{key} must be set (config file or --set)")
    train_cfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    if train_cfg.use_comments and not data_cfg.get("taxonomy"):
        raise ConfigError("comment training needs data.taxonomy naming the "
                          "aspect heads")
    stories = _load_stories(data_cfg["stories"])
    train_pairs = _load_pairs(data_cfg["pairs_train"])
    val_pairs = _load_pairs(data_cfg["pairs_val"])
    comments: dict[str, list[CommentRecord]] = {}
    texts = [s.text for s in stories.values()]
    if data_cfg.get("comments"):
        for rec in _load_comment_records(data_cfg["comments"]):
            comments.setdefault(rec.story_id, []).append(rec)
            texts.append(rec.text)
    if data_cfg.get("taxonomy"):
        taxonomy = AspectTaxonomy.load(data_cfg["taxonomy"])
        if len(taxonomy) != cfg["model"]["n_aspects"]:
            raise ConfigError(f"taxonomy has {len(taxonomy)} aspects but "
                              f"model.n_aspects={cfg['model']['n_aspects']}")
        bad = sorted({r.aspect for rs in comments.values() for r in rs
                      if r.aspect is not None and r.aspect >= len(taxonomy)})
        if bad:
            raise DataError(f"comment aspect ids outside taxonomy: {bad}")
    negatives: dict[str, list[str]] = {}
    if data_cfg.get("negatives"):
        for r in data_records(data_cfg["negatives"]):
            negatives.setdefault(r["source_story_id"], []).append(r["text"])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if data_cfg.get("vocab"):
        vocab = Vocabulary.load(data_cfg["vocab"])
    else:
        vocab = build_vocab(texts, size=data_cfg["vocab_size"],
                            n_aspects=cfg["model"]["n_aspects"])
        vocab.save(out / "vocab.txt")
    model_cfg = ModelConfig(**{**cfg["model"], "vocab_size": len(vocab)})
    model = Model(model_cfg, vocab, rng=rng_mod.stream(cfg["seed"], "init"))
    trainer = Trainer(model, TrainData(stories=stories,
                                       train_pairs=train_pairs,
                                       val_pairs=val_pairs,
                                       comments=comments,
                                       negatives=negatives), train_cfg)
    ckpt_path = out / "model.ckpt"
    log_path = out / "train_log.csv"
    result = trainer.train(checkpoint_path=ckpt_path, log_path=log_path,
                           resume=args.resume)
    meta = _meta(cfg, cfg["seed"])
    log_body = log_path.read_text(encoding="utf-8")
    log_path.write_text(f"# config_hash={meta['config_hash']} "
                        f"seed={meta['seed']}\n" + log_body, encoding="utf-8")
    files = {}
    for name in ("model.ckpt", "train_log.csv", "vocab.txt"):
        fp = out / name
        if fp.exists():
            files[name] = hashlib.sha256(fp.read_bytes()).hexdigest()[:16]
    manifest = {"meta": meta, "steps": trainer.step,
                "best_val_acc": result.best_val_acc,
                "best_step": result.best_step,
                "final_val_acc": result.final_val_acc,
                "files": files,
                "config": cfg}
    write_json(out / "manifest.json", manifest)
    print(f"trained {trainer.step} steps; best val acc "
          f"{result.best_val_acc:.4f} at step {result.best_step} -> {out}")
    return EXIT_OK


# -- score -------------------------------------------------------------------

def _load_model(checkpoint_path, vocab_path) -> Model:
    ck = load_checkpoint(checkpoint_path)
    vocab = Vocabulary.load(vocab_path)
    return Model(ck.config, vocab, params=ck.params)


def cmd_score(args) -> int:
    model = _load_model(args.checkpoint, args.vocab)
    settings = {"command": "score", "checkpoint": str(args.checkpoint),
                "top_aspects": args.top_aspects,
                "max_new_tokens": args.max_new_tokens, "beam": args.beam,
                "seed": args.seed}
    records = data_records(args.stories)
    outputs, failures = [], 0
    for rec in records:
        sid = rec.get("id", "")
        try:
            ids = tokenize(rec["text"], model.vocab, model.config.max_len)
            with frozen(model.params):
                v_s, _, _ = model.encode_stories([ids])
                p_s = float(predict_preference(model.params, v_s).data[0])
                a_c_t, a_r_t = predict_aspects(model.params, v_s)
                a_c = a_c_t.data[0]
                a_r = a_r_t.data[0]
            top = np.argsort(-a_c, kind="stable")[: args.top_aspects]
            comments = {}
            for k in top.tolist():
                toks = model.generate_comment(ids, k,
                                              max_new_tokens=args.max_new_tokens,
                                              beam=args.beam)
                comments[str(k)] = model.vocab.decode(toks)
            outputs.append({"id": sid, "p_s": p_s,
                            "a_c": [float(x) for x in a_c],
                            "a_r": [float(x) for x in a_r],
                            "comments": comments})
        except (KeyError, EmptyTextError, ContractViolation, DataError) as exc:
            outputs.append({"id": sid, "error": f"{type(exc).__name__}: {exc}"})
            failures += 1
    write_artifact_jsonl(args.out, outputs, settings, args.seed,
                         extra_meta={"failures": failures})
    print(f"scored {len(outputs) - failures}/{len(records)} stories -> {args.out}")
    return EXIT_OK


# -- compare -----------------------------------------------------------------

def _prompt_texts(path) -> dict[str, str]:
    table = {}
    for r in data_records(path):
        pid = r["prompt_id"]
        if pid in table:
            raise DataError(f"{path}: duplicate prompt_id '{pid}'")
        table[pid] = r["text"]
    return table


def cmd_compare(args) -> int:
    model = _load_model(args.checkpoint, args.vocab)
    settings = {"command": "compare", "checkpoint": str(args.checkpoint),
                "seed": args.seed}
    side_a = _prompt_texts(args.stories_a)
    side_b = _prompt_texts(args.stories_b)
    shared = sorted(set(side_a) & set(side_b))
    if not shared:
        raise DataError("no shared prompt ids between the two files")
    scores_a = score_texts(model, [side_a[p] for p in shared])
    scores_b = score_texts(model, [side_b[p] for p in shared])
    a_wins = int(np.sum(scores_a > scores_b))
    b_wins = int(np.sum(scores_b > scores_a))
    ties = len(shared) - a_wins - b_wins
    report = {
        "n_shared_prompts": len(shared),
        "a_wins": a_wins, "b_wins": b_wins, "ties": ties,
        "a_win_pct": 100.0 * a_wins / len(shared),
        "b_win_pct": 100.0 * b_wins / len(shared),
        "mean_score_a": float(np.mean(scores_a)),
        "mean_score_b": float(np.mean(scores_b)),
        "preferred": "A" if a_wins > b_wins else ("B" if b_wins > a_wins
                                                  else "tie"),
        "note": "pairwise win percentage is the headline figure; mean "
                "scores are shown for reference only",
        "meta": _meta(settings, args.seed),
    }
    if args.out:
        write_json(args.out, report)
    print(f"A wins {report['a_win_pct']:.1f}%  B wins {report['b_win_pct']:.1f}%"
          f"  ties {ties}/{len(shared)}  "
          f"(mean A {report['mean_score_a']:.4f}, "
          f"mean B {report['mean_score_b']:.4f})")
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    model = _load_model(args.checkpoint, args.vocab)
    spec_path = Path(args.eval_spec)
    if not spec_path.exists():
        raise ConfigError(f"eval spec missing: {spec_path}")
    try:
        spec = json.loads(spec_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec_path}: not valid JSON: {exc}") from exc
    settings = {"command": "evaluate", "checkpoint": str(args.checkpoint),
                "eval_spec": spec, "seed": args.seed}
    report = MetricReport()
    skipped: list[str] = []

    if spec.get("pairs"):
        if not spec.get("stories"):
            skipped.append("ranking (needs 'stories' alongside 'pairs')")
        else:
            stories = _load_stories(spec["stories"])
            pairs = _load_pairs(spec["pairs"])
            hi = score_texts(model, [stories[p.high_id].text for p in pairs])
            lo = score_texts(model, [stories[p.low_id].text for p in pairs])
            report.acc = pairwise_accuracy(zip(hi, lo))
            report.dis = score_distance(zip(hi, lo))
    elif spec.get("stories"):
        skipped.append("ranking (needs 'pairs')")

    if spec.get("judgments"):
        recs = data_records(spec["judgments"])
        human = np.asarray([float(r["human"]) for r in recs])
        pred = score_texts(model, [r["text"] for r in recs])
        report.rho = spearman(pred, human)
        report.tau = kendall(pred, human)
        n_perm = int(spec.get("n_permutations", 2000))
        report.rho_p = correlation_pvalue(pred, human, statistic="spearman",
                                          n_perm=n_perm, seed=args.seed)
        report.tau_p = correlation_pvalue(pred, human, statistic="kendall",
                                          n_perm=n_perm, seed=args.seed)

    if spec.get("aspect_annotations"):
        if not spec.get("stories"):
            skipped.append("aspect recall (needs 'stories')")
        else:
            stories = _load_stories(spec["stories"])
            recs = data_records(spec["aspect_annotations"])
            ks = [int(k) for k in spec.get("recall_ks", (1, 3, 5))]
            sums = {k: 0.0 for k in ks}
            for r in recs:
                ids = tokenize(stories[r["story_id"]].text, model.vocab,
                               model.config.max_len)
                with frozen(model.params):
                    v_s, _, _ = model.encode_stories([ids])
                    a_c = predict_aspects(model.params, v_s)[0].data[0]
                for k in ks:
                    sums[k] += recall_at_k(a_c, r["aspects"], k)
            report.recall = {k: sums[k] / len(recs) for k in ks}

    if spec.get("comment_references"):
        if not spec.get("stories"):
            skipped.append("generation (needs 'stories')")
        else:
            stories = _load_stories(spec["stories"])
            recs = data_records(spec["comment_references"])
            refs_by_key: dict[tuple, list[str]] = {}
            for r in recs:
                refs_by_key.setdefault((r["story_id"], int(r["aspect"])),
                                       []).append(r["text"])
            bleus, rouges, ppl_items = [], [], []
            for (sid, k), refs in sorted(refs_by_key.items()):
                ids = tokenize(stories[sid].text, model.vocab,
                               model.config.max_len)
                toks = model.generate_comment(ids, k,
                                              max_new_tokens=args.max_new_tokens)
                hyp = model.vocab.decode(toks).split()
                ref_tokens = [t.split() for t in refs]
                bleus.append(bleu_avg(hyp, ref_tokens))
                rouges.append(max(rouge(hyp, rt) for rt in ref_tokens))
                for t in refs:
                    body = [model.vocab.id_of(w) for w in t.split()]
                    comment_ids = np.asarray(
                        [model.vocab.bos_id] + body + [model.vocab.eos_id])
                    ppl_items.append((ids, k, comment_ids))
            report.bleu = float(np.mean(bleus))
            report.rouge_l = float(np.mean(rouges))
            report.ppl = corpus_perplexity(model, ppl_items)

    table = render_report(report)
    print(table, end="")
    if skipped:
        print("skipped: " + "; ".join(skipped))
    if args.out:
        payload = report.to_dict()
        payload["meta"] = _meta(settings, args.seed)
        if skipped:
            payload["skipped"] = skipped
        write_json(args.out, payload)
    return EXIT_OK


# -- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storyeval",
        description="Train and run the story preference evaluator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-pairs", help="filter stories and build "
                       "ranked train/val/test pairs")
    p.add_argument("input", help="raw stories JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-words", type=int, default=200)
    p.add_argument("--max-words", type=int, default=800)
    p.add_argument("--exclude-from", default=None,
                   help="start of excluded date window (YYYY-MM-DD)")
    p.add_argument("--exclude-to", default=None)
    p.add_argument("--high-min", type=int, default=50)
    p.add_argument("--low-max", type=int, default=0)
    p.add_argument("--max-pairs-per-prompt", type=int, default=None)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("make-negatives", help="write perturbed negative "
                       "stories for coherence training")
    p.add_argument("input", help="stories JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", default="shuffle,repeat,substitute")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_negatives)

    p = sub.add_parser("extract-aspects", help="discover aspect topics from "
                       "comments with LDA")
    p.add_argument("input", help="comments JSONL with a 'text' field")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--topics", type=int, default=None,
                   help="fixed topic count (skips selection)")
    p.add_argument("--candidates", default="5,10,15")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--top-words", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_extract_aspects)

    p = sub.add_parser("augment-comments", help="label unannotated comments "
                       "with trained filter classifiers")
    p.add_argument("--crowd", required=True, help="labeled comments JSONL")
    p.add_argument("--raw", required=True, help="unlabeled comments JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--n-aspects", type=int, default=10)
    p.add_argument("--confidence", type=float, default=0.9)
    p.add_argument("--min-words", type=int, default=15)
    p.add_argument("--max-words", type=int, default=50)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="train the evaluator")
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                   help="override a config value, e.g. train.epochs=4")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("score", help="score stories and generate comments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--stories", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-aspects", type=int, default=3)
    p.add_argument("--max-new-tokens", type=int, default=40)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("compare", help="pairwise-compare two story sets "
                       "sharing prompt ids")
    p.add_argument("stories_a")
    p.add_argument("stories_b")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("evaluate", help="run the metric suite per an eval "
                       "spec file")
    p.add_argument("eval_spec", help="JSON file naming metric inputs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--max-new-tokens", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, EmptyTextError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
