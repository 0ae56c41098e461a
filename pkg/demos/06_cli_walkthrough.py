"""The operator command line, one session end to end.

Synthesizes a raw story dump plus crowd comments, then drives the real
CLI entry point through prepare-pairs, extract-aspects, train, score
and evaluate.  Every artifact lands in a fresh temp directory and every
file embeds the config hash and seed it was produced under.
"""

import json
import tempfile
from pathlib import Path

from storyeval import cli
from storyeval.jsonl import write_jsonl
from storyeval.synthetic import make_aspect_comments, make_preference_corpus


def run(*argv: str) -> None:
    print(f"\n$ storyeval {' '.join(argv)}")
    code = cli.main(list(argv))
    assert code == 0, f"exit code {code}"


def main():
    root = Path(tempfile.mkdtemp(prefix="storyeval-walkthrough-"))
    print(f"working under {root}")

    stories = make_preference_corpus(n_prompts=36, seed=4)
    comments = make_aspect_comments(stories, seed=4)
    write_jsonl(root / "raw.jsonl", [s.to_record() for s in stories])
    write_jsonl(root / "comments.jsonl", [c.to_record() for c in comments])

    run("prepare-pairs", str(root / "raw.jsonl"),
        "--out-dir", str(root / "prep"),
        "--min-words", "20", "--max-words", "120",
        "--ratios", "0.6,0.2,0.2")
    stats = json.loads((root / "prep" / "stats.json").read_text())
    print("  split sizes:", {s: stats[s]["pairs"]
                             for s in ("train", "val", "test")})

    run("extract-aspects", str(root / "comments.jsonl"),
        "--out-dir", str(root / "aspects"),
        "--topics", "10", "--iterations", "200")

    cfg = {
        "seed": 1,
        "model": {"d_model": 48, "window": 16, "max_len": 64},
        "train": {"epochs": 25, "batch_size": 8, "peak_lr": 1e-3,
                  "use_aspects": True, "use_comments": True,
                  "comment_max_len": 12},
        "data": {"stories": str(root / "prep" / "stories.jsonl"),
                 "pairs_train": str(root / "prep" / "train_pairs.jsonl"),
                 "pairs_val": str(root / "prep" / "val_pairs.jsonl"),
                 "comments": str(root / "comments.jsonl"),
                 "taxonomy": str(root / "aspects" / "taxonomy.json"),
                 "vocab_size": 500},
    }
    (root / "cfg.json").write_text(json.dumps(cfg, indent=2))
    run("train", "--config", str(root / "cfg.json"),
        "--out-dir", str(root / "run"))
    manifest = json.loads((root / "run" / "manifest.json").read_text())
    print(f"  manifest config_hash {manifest['meta']['config_hash']}, "
          f"file hashes for {sorted(manifest['files'])}")

    run("score", "--checkpoint", str(root / "run" / "model.ckpt"),
        "--vocab", str(root / "run" / "vocab.txt"),
        "--stories", str(root / "prep" / "stories.jsonl"),
        "--out", str(root / "scored.jsonl"), "--top-aspects", "2")
    lines = (root / "scored.jsonl").read_text().splitlines()
    first = json.loads(lines[1])
    print(f"  leading meta record: {lines[0][:72]}...")
    print(f"  {first['id']}: p_s {first['p_s']:.3f}, "
          f"comment on aspect {list(first['comments'])[0]}: "
          f"'{list(first['comments'].values())[0]}'")

    # the eval spec names whichever inputs exist; missing counterparts
    # are skipped and listed in the report
    by_id = {s.id: s for s in stories}
    test_pairs = [r for r in map(json.loads,
                                 (root / "prep" / "test_pairs.jsonl")
                                 .read_text().splitlines()) if "meta" not in r]
    test_ids = sorted({i for p in test_pairs
                       for i in (p["high_id"], p["low_id"])})
    write_jsonl(root / "judgments.jsonl",
                [{"text": by_id[i].text, "human": by_id[i].upvotes}
                 for i in test_ids])
    ann: dict[str, list[int]] = {}
    for c in comments:
        if c.story_id in test_ids:
            ann.setdefault(c.story_id, []).append(c.aspect)
    write_jsonl(root / "annotations.jsonl",
                [{"story_id": sid, "aspects": ks} for sid, ks in sorted(ann.items())])
    write_jsonl(root / "references.jsonl",
                [{"story_id": c.story_id, "aspect": c.aspect, "text": c.text}
                 for c in comments if c.story_id in test_ids[:4]])
    spec = {"stories": str(root / "prep" / "stories.jsonl"),
            "pairs": str(root / "prep" / "test_pairs.jsonl"),
            "judgments": str(root / "judgments.jsonl"),
            "aspect_annotations": str(root / "annotations.jsonl"),
            "comment_references": str(root / "references.jsonl"),
            "recall_ks": [1, 3],
            "n_permutations": 500}
    (root / "eval_spec.json").write_text(json.dumps(spec, indent=2))
    run("evaluate", str(root / "eval_spec.json"),
        "--checkpoint", str(root / "run" / "model.ckpt"),
        "--vocab", str(root / "run" / "vocab.txt"),
        "--out", str(root / "report.json"))

    print(f"\nartifacts kept under {root}")


if __name__ == "__main__":
    main()
