"""Synthetic corpora with planted, learnable signals.

Used by the test suite and the demos to exercise the full pipeline
without the real crowdsourced data: preferred stories lean on one word
bank and rejected ones on another, so a small model can separate them
quickly, and aspect annotations are derived from the banks each story
actually drew from.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .aspects import CommentRecord, rating_from_class
from .corpus import Story

ASPECT_BANKS = (
    ("opening", "begins", "introduction", "hook", "premise", "prologue"),
    ("twist", "conflict", "middle", "turn", "tension", "escalates"),
    ("ending", "finale", "closure", "resolution", "conclusion", "coda"),
    ("character", "voice", "motive", "protagonist", "persona", "depth"),
    ("scene", "description", "landscape", "imagery", "detail", "backdrop"),
    ("heartwarming", "touching", "warm", "tender", "uplifting", "gentle"),
    ("sad", "tragedy", "grief", "tears", "mourning", "loss"),
    ("horror", "dread", "eerie", "haunted", "terror", "chilling"),
    ("funny", "hilarious", "witty", "comic", "absurd", "playful"),
    ("novel", "original", "inventive", "fresh", "brilliant", "clever"),
)

GOOD_BANK = ("luminous", "masterful", "graceful", "evocative", "polished",
             "deft", "resonant", "assured")
FLAT_BANK = ("plain", "listless", "muddled", "rushed", "clumsy", "stilted",
             "vague", "tepid")
FILLER = ("the", "a", "and", "then", "with", "into", "over", "under",
          "again", "still", "while", "near", "was", "were", "had", "very")


@dataclass
class SyntheticSpec:
    n_prompts: int = 500
    words_low: int = 40
    words_high: int = 80
    quality_rate: float = 0.35
    bank_rate: float = 0.15
    sentence_len: int = 12


def _pair_texts(rng, n_words: int, banks, spec: SyntheticSpec) -> tuple[str, str]:
    """Two stories that are exact word-for-word permutations of each other.

    Quality words open the preferred story and close the rejected one,
    so the class signal lives purely in word order: any bag-of-words
    readout (including an untrained encoder's) sees identical content.
    """
    slot_is_quality = rng.random(n_words) < spec.quality_rate
    shared = []
    for i in range(n_words):
        if slot_is_quality[i]:
            shared.append(None)
        elif rng.random() < spec.bank_rate / (1.0 - spec.quality_rate):
            bank = banks[rng.integers(len(banks))]
            shared.append(bank[rng.integers(len(bank))])
        else:
            shared.append(FILLER[rng.integers(len(FILLER))])
    q_slots = int(slot_is_quality.sum())
    n_good = (q_slots + 1) // 2
    good = [GOOD_BANK[rng.integers(len(GOOD_BANK))] for _ in range(n_good)]
    flat = [FLAT_BANK[rng.integers(len(FLAT_BANK))] for _ in range(q_slots - n_good)]

    def render(quality_words):
        toks, qi = [], 0
        for i in range(n_words):
            if slot_is_quality[i]:
                toks.append(quality_words[qi])
                qi += 1
            else:
                toks.append(shared[i])
            if (i + 1) % spec.sentence_len == 0:
                toks[-1] = toks[-1] + "."
        if not toks[-1].endswith("."):
            toks[-1] = toks[-1] + "."
        return " ".join(toks)

    return render(good + flat), render(flat + good)


def make_preference_corpus(n_prompts: int = 500, seed: int = 0,
                           spec: SyntheticSpec | None = None) -> list[Story]:
    """One preferred and one rejected story per prompt.

    Preferred stories carry upvotes that clear the default pairing
    threshold; rejected ones carry zero, so ``build_pairs`` recovers
    exactly one pair per prompt.
    """
    if spec is None:
        spec = SyntheticSpec(n_prompts=n_prompts)
    rng = rng_mod.stream(seed, "synthetic_corpus")
    stories = []
    for i in range(n_prompts):
        prompt_id = f"p{i:04d}"
        banks = [ASPECT_BANKS[j] for j in
                 rng.choice(len(ASPECT_BANKS), size=2, replace=False)]
        n_words = int(rng.integers(spec.words_low, spec.words_high + 1))
        hi_text, lo_text = _pair_texts(rng, n_words, banks, spec)
        for side, text, upvotes in (("hi", hi_text, 120), ("lo", lo_text, 0)):
            stories.append(Story(id=f"{prompt_id}_{side}", prompt_id=prompt_id,
                                 text=text, upvotes=upvotes,
                                 created_at="2020-06-01",
                                 prompt=f"synthetic prompt {i}"))
    return stories


def _banks_used(story: Story) -> list[int]:
    toks = set(w.rstrip(".") for w in story.text.split())
    return [k for k, bank in enumerate(ASPECT_BANKS) if toks & set(bank)]


def make_aspect_comments(stories: list[Story], seed: int = 0,
                         max_aspects: int = 2) -> list[CommentRecord]:
    """Crowd-style comments whose aspect and rating mirror the planted signal.

    Preferred stories get ratings from classes {4, 5}; rejected ones
    from {1, 2}.  Comment text reuses the aspect bank plus the quality
    bank so the same records can supervise comment generation.
    """
    rng = rng_mod.stream(seed, "synthetic_comments")
    records = []
    for story in stories:
        high = story.id.endswith("_hi")
        quality_bank = GOOD_BANK if high else FLAT_BANK
        for k in _banks_used(story)[:max_aspects]:
            cls = int(rng.integers(4, 6)) if high else int(rng.integers(1, 3))
            bank = ASPECT_BANKS[k]
            text = (f"the {bank[0]} and {bank[1]} felt "
                    f"{quality_bank[rng.integers(len(quality_bank))]} and "
                    f"{quality_bank[rng.integers(len(quality_bank))]} overall")
            records.append(CommentRecord(story_id=story.id, text=text,
                                         aspect=k, rating=rating_from_class(cls),
                                         source="crowd"))
    return records


def memorization_comments() -> list[str]:
    """Five fixed comments for decoder-memorization checks."""
    return [
        "the ending landed with real force",
        "a tender opening that hooked me",
        "the twist felt earned and clever",
        "vivid scene detail carried the tale",
        "sad and graceful from start to close",
    ]
