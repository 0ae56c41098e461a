"""End-to-end command line tests on tiny corpora."""

import json
from pathlib import Path

import numpy as np
import pytest

from storyeval import cli
from storyeval.aspects import AspectTaxonomy
from storyeval.jsonl import read_jsonl, write_json, write_jsonl
from storyeval.synthetic import make_aspect_comments, make_preference_corpus

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden" / "prepare"
FIXTURE = DATA / "stories_fixture.jsonl"

PREPARE_FLAGS = ["--min-words", "10", "--max-words", "100",
                 "--ratios", "0.5,0.25,0.25", "--seed", "7"]


def run(argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    """Shared prepared corpus + one short training run."""
    root = tmp_path_factory.mktemp("smoke")
    stories = make_preference_corpus(n_prompts=16, seed=0)
    write_jsonl(root / "raw.jsonl", [s.to_record() for s in stories])
    comments = make_aspect_comments(stories, seed=0)
    write_jsonl(root / "comments.jsonl", [c.to_record() for c in comments])
    assert run(["prepare-pairs", root / "raw.jsonl", "--out-dir", root / "prep",
                "--min-words", 20, "--max-words", 120]) == 0
    AspectTaxonomy.default().save(root / "taxonomy.json")
    cfg = {
        "seed": 0,
        "model": {"d_model": 24, "window": 8, "max_len": 96},
        "train": {"epochs": 3, "peak_lr": 1e-3, "batch_size": 8,
                  "use_aspects": True, "use_comments": True},
        "data": {"stories": str(root / "prep" / "stories.jsonl"),
                 "pairs_train": str(root / "prep" / "train_pairs.jsonl"),
                 "pairs_val": str(root / "prep" / "val_pairs.jsonl"),
                 "comments": str(root / "comments.jsonl"),
                 "taxonomy": str(root / "taxonomy.json"),
                 "vocab_size": 400},
    }
    (root / "cfg.json").write_text(json.dumps(cfg), encoding="utf-8")
    assert run(["train", "--config", root / "cfg.json",
                "--out-dir", root / "run"]) == 0
    return root


class TestPrepareGolden:
    FILES = ("stories.jsonl", "train_pairs.jsonl", "val_pairs.jsonl",
             "test_pairs.jsonl", "stats.json")

    def test_byte_identical(self, tmp_path):
        assert run(["prepare-pairs", FIXTURE, "--out-dir", tmp_path,
                    *PREPARE_FLAGS]) == 0
        for name in self.FILES:
            got = (tmp_path / name).read_bytes()
            want = (GOLDEN / name).read_bytes()
            assert got == want, f"{name} drifted from the frozen output"

    def test_pairs_match_brute_force(self, tmp_path):
        run(["prepare-pairs", FIXTURE, "--out-dir", tmp_path, *PREPARE_FLAGS])
        stories = read_jsonl(FIXTURE)
        expected = set()
        by_prompt: dict[str, list[dict]] = {}
        for s in stories:
            by_prompt.setdefault(s["prompt_id"], []).append(s)
        for pid, group in by_prompt.items():
            highs = [s for s in group if s["upvotes"] >= 50]
            lows = [s for s in group if s["upvotes"] <= 0]
            for h in highs:
                for lo in lows:
                    expected.add((pid, h["id"], lo["id"]))
        got = set()
        for name in ("train_pairs", "val_pairs", "test_pairs"):
            for r in read_jsonl(tmp_path / f"{name}.jsonl"):
                if "meta" in r:
                    continue
                got.add((r["prompt_id"], r["high_id"], r["low_id"]))
        assert got == expected

    def test_split_prompts_disjoint_random_fixtures(self, tmp_path):
        rng = np.random.default_rng(11)
        for trial in range(3):
            n_prompts = int(rng.integers(4, 12))
            records = []
            for p in range(n_prompts):
                for s in range(int(rng.integers(2, 5))):
                    up = int(rng.choice([-3, 0, 60, 150]))
                    records.append({
                        "id": f"t{trial}p{p}s{s}", "prompt_id": f"t{trial}p{p}",
                        "prompt": "x", "upvotes": up, "created_at": "2019-01-01",
                        "text": " ".join(f"w{i}" for i in range(30))})
            src = tmp_path / f"fix{trial}.jsonl"
            write_jsonl(src, records)
            out = tmp_path / f"out{trial}"
            code = run(["prepare-pairs", src, "--out-dir", out,
                        "--min-words", 10, "--max-words", 50,
                        "--seed", trial])
            if code == cli.EXIT_DATA:
                continue
            prompts = {}
            for name in ("train", "val", "test"):
                prompts[name] = {r["prompt_id"]
                                 for r in read_jsonl(out / f"{name}_pairs.jsonl")
                                 if "meta" not in r}
            assert not prompts["train"] & prompts["val"]
            assert not prompts["train"] & prompts["test"]
            assert not prompts["val"] & prompts["test"]

    def test_no_pairs_is_data_error(self, tmp_path):
        assert run(["prepare-pairs", FIXTURE, "--out-dir", tmp_path,
                    "--min-words", 5000]) == cli.EXIT_DATA

    def test_missing_input_is_data_error(self, tmp_path):
        assert run(["prepare-pairs", tmp_path / "nope.jsonl",
                    "--out-dir", tmp_path]) == cli.EXIT_DATA


class TestMakeNegatives:
    def test_deterministic_and_tagged(self, tmp_path):
        for name in ("a.jsonl", "b.jsonl"):
            assert run(["make-negatives", GOLDEN / "stories.jsonl",
                        "--out", tmp_path / name, "--seed", 5]) == 0
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        records = read_jsonl(tmp_path / "a.jsonl")
        assert "meta" in records[0] and "config_hash" in records[0]["meta"]
        kinds = {r["kind"] for r in records[1:]}
        assert kinds == {"shuffle", "repeat", "substitute"}

    def test_unknown_kind_is_config_error(self, tmp_path):
        assert run(["make-negatives", GOLDEN / "stories.jsonl",
                    "--out", tmp_path / "x.jsonl",
                    "--kinds", "bogus"]) == cli.EXIT_CONFIG


class TestExtractAspects:
    def test_fixed_topic_count(self, smoke, tmp_path):
        assert run(["extract-aspects", smoke / "comments.jsonl",
                    "--out-dir", tmp_path, "--topics", 2,
                    "--iterations", 60]) == 0
        report = json.loads((tmp_path / "topics.json").read_text())
        assert report["n_topics"] == 2
        assert set(report["top_words"]) == {"0", "1"}
        assert "config_hash" in report["meta"]
        taxonomy = AspectTaxonomy.load(tmp_path / "taxonomy.json")
        assert len(taxonomy) == 2

    def test_empty_comments_is_data_error(self, tmp_path):
        write_jsonl(tmp_path / "c.jsonl", [{"text": "a 1 2 3"}])
        assert run(["extract-aspects", tmp_path / "c.jsonl",
                    "--out-dir", tmp_path,
                    "--topics", 2]) == cli.EXIT_DATA


class TestAugment:
    def test_end_to_end(self, smoke, tmp_path):
        crowd = [r for r in read_jsonl(smoke / "comments.jsonl")]
        # scorer needs all five rating levels in its training data
        crowd += [{"story_id": "p0000_hi", "aspect": 2, "rating": 0.5,
                   "source": "crowd",
                   "text": f"the ending felt plain and vague overall take {i}"}
                  for i in range(4)]
        write_jsonl(tmp_path / "crowd.jsonl", crowd)
        write_jsonl(tmp_path / "raw.jsonl",
                    [{"text": r["text"] + " honestly"} for r in crowd[:12]]
                    + [{"text": "too short"}])
        assert run(["augment-comments", "--crowd", tmp_path / "crowd.jsonl",
                    "--raw", tmp_path / "raw.jsonl", "--out-dir", tmp_path,
                    "--min-words", 5, "--max-words", 30,
                    "--confidence", 0.4, "--epochs", 8]) == 0
        audit = json.loads((tmp_path / "audit.json").read_text())
        assert audit["total"] == 13
        assert audit["rejected_length"] >= 1
        kept = [r for r in read_jsonl(tmp_path / "augmented.jsonl")
                if "meta" not in r]
        assert audit["kept"] == len(kept)
        for r in kept:
            assert r["source"] == "augmented"
            assert 0.0 <= r["rating"] <= 1.0


class TestTrain:
    def test_artifacts(self, smoke):
        run_dir = smoke / "run"
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["meta"]["seed"] == 0
        assert set(manifest["files"]) == {"model.ckpt", "train_log.csv",
                                          "vocab.txt"}
        log = (run_dir / "train_log.csv").read_text().splitlines()
        assert log[0].startswith("# config_hash=")
        assert log[1] == "step,lr,L_ps,L_ac,L_ar,L_c,L_total"
        assert len(log) == 2 + manifest["steps"]

    def test_same_seed_runs_identical(self, smoke, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            assert run(["train", "--config", smoke / "cfg.json",
                        "--out-dir", tmp_path / name]) == 0
            outs.append((tmp_path / name / "train_log.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_override_changes_log(self, smoke, tmp_path):
        assert run(["train", "--config", smoke / "cfg.json", "--seed", 9,
                    "--out-dir", tmp_path / "r"]) == 0
        other = (tmp_path / "r" / "train_log.csv").read_text().splitlines()
        base = (smoke / "run" / "train_log.csv").read_text().splitlines()
        assert other[2:] != base[2:]

    def test_missing_data_is_config_error(self, tmp_path):
        assert run(["train", "--out-dir", tmp_path]) == cli.EXIT_CONFIG

    def test_unknown_override_is_config_error(self, smoke, tmp_path):
        assert run(["train", "--config", smoke / "cfg.json",
                    "--set", "train.nope=1",
                    "--out-dir", tmp_path]) == cli.EXIT_CONFIG

    def test_comments_without_taxonomy_is_config_error(self, smoke, tmp_path):
        assert run(["train", "--config", smoke / "cfg.json",
                    "--set", "data.taxonomy=null",
                    "--out-dir", tmp_path]) == cli.EXIT_CONFIG


class TestScore:
    def test_records_and_error_continuation(self, smoke, tmp_path):
        stories = [r for r in read_jsonl(smoke / "prep" / "stories.jsonl")
                   if "meta" not in r][:4]
        stories.insert(2, {"id": "broken", "text": ""})
        write_jsonl(tmp_path / "stories.jsonl", stories)
        assert run(["score", "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--stories", tmp_path / "stories.jsonl",
                    "--out", tmp_path / "scores.jsonl",
                    "--top-aspects", 2, "--max-new-tokens", 6]) == 0
        records = read_jsonl(tmp_path / "scores.jsonl")
        assert records[0]["meta"]["failures"] == 1
        body = records[1:]
        assert len(body) == 5
        assert body[2]["id"] == "broken" and "error" in body[2]
        for rec in body:
            if "error" in rec:
                continue
            assert 0.0 <= rec["p_s"] <= 1.0
            assert len(rec["a_c"]) == 10 and len(rec["a_r"]) == 10
            assert abs(sum(rec["a_c"]) - 1.0) < 1e-5
            assert len(rec["comments"]) == 2


class TestCompare:
    def _sides(self, smoke, tmp_path):
        stories = [r for r in read_jsonl(smoke / "prep" / "stories.jsonl")
                   if "meta" not in r]
        a = [{"prompt_id": r["prompt_id"], "text": r["text"]}
             for r in stories if r["id"].endswith("_hi")]
        b = [{"prompt_id": r["prompt_id"], "text": r["text"]}
             for r in stories if r["id"].endswith("_lo")]
        write_jsonl(tmp_path / "a.jsonl", a)
        write_jsonl(tmp_path / "b.jsonl", b)
        return tmp_path / "a.jsonl", tmp_path / "b.jsonl"

    def test_self_comparison_is_all_ties(self, smoke, tmp_path):
        a, _ = self._sides(smoke, tmp_path)
        assert run(["compare", a, a,
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--out", tmp_path / "r.json"]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert report["a_wins"] == 0 and report["b_wins"] == 0
        assert report["ties"] == report["n_shared_prompts"]
        assert report["preferred"] == "tie"

    def test_two_sides(self, smoke, tmp_path):
        a, b = self._sides(smoke, tmp_path)
        assert run(["compare", a, b,
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--out", tmp_path / "r.json"]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        total = report["a_wins"] + report["b_wins"] + report["ties"]
        assert total == report["n_shared_prompts"] > 0

    def test_no_shared_prompts_is_data_error(self, smoke, tmp_path):
        a, _ = self._sides(smoke, tmp_path)
        write_jsonl(tmp_path / "c.jsonl", [{"prompt_id": "zzz", "text": "w " * 30}])
        assert run(["compare", a, tmp_path / "c.jsonl",
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt"]) == cli.EXIT_DATA


class TestEvaluate:
    def test_partial_spec_reports_only_ranking(self, smoke, tmp_path):
        spec = {"stories": str(smoke / "prep" / "stories.jsonl"),
                "pairs": str(smoke / "prep" / "val_pairs.jsonl")}
        write_json(tmp_path / "spec.json", spec)
        assert run(["evaluate", tmp_path / "spec.json",
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--out", tmp_path / "report.json"]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert "acc" in report and "dis" in report
        assert "rho" not in report and "bleu" not in report
        assert "config_hash" in report["meta"]

    def test_missing_counterpart_listed_as_skipped(self, smoke, tmp_path):
        stories = [r for r in read_jsonl(smoke / "prep" / "stories.jsonl")
                   if "meta" not in r]
        annos = [{"story_id": stories[0]["id"], "aspects": [0, 3]}]
        write_jsonl(tmp_path / "annos.jsonl", annos)
        write_json(tmp_path / "spec.json",
                   {"aspect_annotations": str(tmp_path / "annos.jsonl")})
        assert run(["evaluate", tmp_path / "spec.json",
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--out", tmp_path / "report.json"]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert any("aspect" in s for s in report["skipped"])

    def test_full_spec(self, smoke, tmp_path):
        stories = [r for r in read_jsonl(smoke / "prep" / "stories.jsonl")
                   if "meta" not in r]
        judgments = [{"text": r["text"],
                      "human": 1.0 if r["id"].endswith("_hi") else 0.0}
                     for r in stories[:10]]
        write_jsonl(tmp_path / "judg.jsonl", judgments)
        comments = [r for r in read_jsonl(smoke / "comments.jsonl")
                    if "meta" not in r]
        annos = {}
        for c in comments:
            annos.setdefault(c["story_id"], set()).add(c["aspect"])
        write_jsonl(tmp_path / "annos.jsonl",
                    [{"story_id": s, "aspects": sorted(ks)}
                     for s, ks in sorted(annos.items())][:6])
        write_jsonl(tmp_path / "refs.jsonl",
                    [{"story_id": c["story_id"], "aspect": c["aspect"],
                      "text": c["text"]} for c in comments[:6]])
        write_json(tmp_path / "spec.json", {
            "stories": str(smoke / "prep" / "stories.jsonl"),
            "pairs": str(smoke / "prep" / "val_pairs.jsonl"),
            "judgments": str(tmp_path / "judg.jsonl"),
            "aspect_annotations": str(tmp_path / "annos.jsonl"),
            "comment_references": str(tmp_path / "refs.jsonl"),
            "recall_ks": [1, 3],
            "n_permutations": 100,
        })
        assert run(["evaluate", tmp_path / "spec.json",
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt",
                    "--out", tmp_path / "report.json",
                    "--max-new-tokens", 6]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        for key in ("acc", "dis", "rho", "rho_p", "tau", "tau_p",
                    "recall@1", "recall@3", "bleu", "rouge_l", "ppl"):
            assert key in report, key
        assert report["ppl"] > 1.0

    def test_bad_spec_is_config_error(self, smoke, tmp_path):
        (tmp_path / "spec.json").write_text("{not json", encoding="utf-8")
        assert run(["evaluate", tmp_path / "spec.json",
                    "--checkpoint", smoke / "run" / "model.ckpt",
                    "--vocab", smoke / "run" / "vocab.txt"]) == cli.EXIT_CONFIG
