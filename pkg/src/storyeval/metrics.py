"""Evaluation metrics: ranking accuracy, correlations, recall, text overlap.

Rank correlations delegate to scipy for the point statistics; the
significance test is a seeded two-sided permutation test because the
desk-scale samples are small enough to make parametric p-values shaky.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from . import rng as rng_mod
from .errors import ContractViolation, UndefinedCorrelationError

SIGNIFICANCE_LEVEL = 0.01


def pairwise_accuracy(paired_scores) -> float:
    """Fraction of pairs where the high story outscored the low one.

    Exact ties count as incorrect.
    """
    pairs = list(paired_scores)
    if not pairs:
        raise ContractViolation("pairwise_accuracy needs at least one pair")
    wins = sum(1 for high, low in pairs if high > low)
    return wins / len(pairs)


def score_distance(paired_scores) -> float:
    """Mean signed gap p_high - p_low."""
    pairs = list(paired_scores)
    if not pairs:
        raise ContractViolation("score_distance needs at least one pair")
    return float(np.mean([high - low for high, low in pairs]))


def _check_corr_inputs(x, y, min_n: int):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractViolation("correlation inputs must be equal-length vectors")
    if len(x) < min_n:
        raise ContractViolation(f"need at least {min_n} points, got {len(x)}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("zero variance input")
    return x, y


def spearman(x, y) -> float:
    """Spearman rho with average ranks for ties."""
    x, y = _check_corr_inputs(x, y, 3)
    rho = _scipy_stats.spearmanr(x, y).statistic
    if not np.isfinite(rho):
        raise UndefinedCorrelationError("spearman undefined for these inputs")
    return float(rho)


def kendall(x, y) -> float:
    """Kendall tau-b (tie-corrected)."""
    x, y = _check_corr_inputs(x, y, 2)
    tau = _scipy_stats.kendalltau(x, y).statistic
    if not np.isfinite(tau):
        raise UndefinedCorrelationError("kendall undefined for these inputs")
    return float(tau)


_STATISTICS = {"spearman": spearman, "kendall": kendall}


def correlation_pvalue(x, y, statistic, n_perm: int = 10000, seed: int = 0) -> float:
    """Two-sided permutation p-value with add-one smoothing.

    ``statistic`` is 'spearman', 'kendall', or any callable of (x, y).
    """
    if isinstance(statistic, str):
        statistic = _STATISTICS[statistic]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 5:
        raise ContractViolation("permutation test needs n >= 5")
    observed = abs(statistic(x, y))
    rng = rng_mod.stream(seed, "correlation_pvalue")
    hits = 0
    shuffled = y.copy()
    for _ in range(n_perm):
        rng.shuffle(shuffled)
        if abs(statistic(x, shuffled)) >= observed:
            hits += 1
    return (1 + hits) / (n_perm + 1)


def is_significant(p: float) -> bool:
    return p <= SIGNIFICANCE_LEVEL


def recall_at_k(a_c, selected, k: int) -> float:
    """Fraction of human-selected aspects inside the top-k confidences.

    Confidence ties resolve toward the lower aspect index.
    """
    a_c = np.asarray(a_c, dtype=np.float64)
    chosen = set(int(i) for i in selected)
    if not chosen:
        raise ContractViolation("selected aspect set is empty")
    if not 1 <= k <= len(a_c):
        raise ContractViolation(f"k={k} outside [1, {len(a_c)}]")
    if any(i < 0 or i >= len(a_c) for i in chosen):
        raise ContractViolation("selected aspect index out of range")
    top = set(np.argsort(-a_c, kind="stable")[:k].tolist())
    return len(top & chosen) / len(chosen)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def bleu_avg(hypothesis: list[str], references: list[list[str]]) -> float:
    """Mean of BLEU-1..4 (per-order precision x brevity penalty).

    Modified n-gram precision clips counts against the best reference;
    zero-match orders for n >= 2 get add-one smoothing; orders the
    hypothesis is too short to form are skipped.
    """
    if not hypothesis:
        raise ContractViolation("empty hypothesis")
    refs = [list(r) for r in references]
    if not refs or any(not r for r in refs):
        raise ContractViolation("empty reference set")
    c = len(hypothesis)
    r = min((len(ref) for ref in refs),
            key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    scores = []
    for n in range(1, 5):
        hyp_counts = _ngram_counts(hypothesis, n)
        total = sum(hyp_counts.values())
        if total == 0:
            continue
        max_ref = Counter()
        for ref in refs:
            for gram, cnt in _ngram_counts(ref, n).items():
                if cnt > max_ref[gram]:
                    max_ref[gram] = cnt
        matches = sum(min(cnt, max_ref[gram]) for gram, cnt in hyp_counts.items())
        if matches == 0 and n >= 2:
            precision = 1.0 / (total + 1.0)
        else:
            precision = matches / total
        scores.append(bp * precision)
    return float(np.mean(scores))


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for tok in a:
        cur = [0] * (len(b) + 1)
        for j, other in enumerate(b, start=1):
            if tok == other:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge(hypothesis: list[str], reference: list[str]) -> float:
    """ROUGE-L F1 over token sequences."""
    if not hypothesis or not reference:
        raise ContractViolation("rouge needs non-empty inputs")
    lcs = _lcs_length(list(hypothesis), list(reference))
    if lcs == 0:
        return 0.0
    precision = lcs / len(hypothesis)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


def corpus_perplexity(model, items) -> float:
    """exp of the token-weighted mean NLL over (story, aspect, comment) items."""
    items = list(items)
    if not items:
        raise ContractViolation("empty comment corpus")
    total_nll = 0.0
    total_tokens = 0
    for story_ids, aspect_k, comment_ids in items:
        nll = model.teacher_forced_nll(story_ids, aspect_k, comment_ids, reduce="sum")
        total_nll += float(nll.data)
        total_tokens += len(comment_ids) - 1
    return math.exp(total_nll / total_tokens)


@dataclass
class MetricReport:
    """Aggregated evaluation results; unset fields mean 'not evaluated'."""

    acc: float | None = None
    dis: float | None = None
    rho: float | None = None
    rho_p: float | None = None
    tau: float | None = None
    tau_p: float | None = None
    recall: dict[int, float] = field(default_factory=dict)
    bleu: float | None = None
    rouge_l: float | None = None
    ppl: float | None = None

    def __post_init__(self):
        for name in ("acc",):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ContractViolation(f"{name} outside [0,1]")
        for name in ("rho", "tau"):
            v = getattr(self, name)
            if v is not None and not -1.0 - 1e-12 <= v <= 1.0 + 1e-12:
                raise ContractViolation(f"{name} outside [-1,1]")
        for k, v in self.recall.items():
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"recall@{k} outside [0,1]")

    def to_dict(self) -> dict:
        out = {}
        for name in ("acc", "dis", "rho", "rho_p", "tau", "tau_p", "bleu",
                     "rouge_l", "ppl"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        for k in sorted(self.recall):
            out[f"recall@{k}"] = self.recall[k]
        return out


def render_report(report: MetricReport) -> str:
    """Plain-text table of whichever metrics the report carries.

    Correlations get a trailing '*' when their permutation p-value is at
    or below 0.01.
    """
    rows: list[tuple[str, str]] = []

    def fmt(v):
        return f"{v:.4f}"

    if report.acc is not None:
        rows.append(("Acc", fmt(report.acc)))
    if report.dis is not None:
        rows.append(("Dis", fmt(report.dis)))
    for name, value, p in (("Spearman", report.rho, report.rho_p),
                           ("Kendall", report.tau, report.tau_p)):
        if value is None:
            continue
        star = "*" if p is not None and is_significant(p) else ""
        suffix = f" (p={p:.4f})" if p is not None else ""
        rows.append((name, fmt(value) + star + suffix))
    for k in sorted(report.recall):
        rows.append((f"R@{k}", fmt(report.recall[k])))
    if report.bleu is not None:
        rows.append(("BLEU1-4", fmt(report.bleu)))
    if report.rouge_l is not None:
        rows.append(("ROUGE-L", fmt(report.rouge_l)))
    if report.ppl is not None:
        rows.append(("PPL", fmt(report.ppl)))
    if not rows:
        return "(no metrics evaluated)\n"
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n"
