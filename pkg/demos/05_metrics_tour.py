"""The evaluation toolbox on worked toy examples.

Every number an evaluation run reports: pairwise accuracy and score
distance over preference pairs, rank correlations with permutation
p-values, aspect recall at k, BLEU / ROUGE-L for generated comments,
and the assembled report table.
"""

import numpy as np

from storyeval.metrics import (
    MetricReport,
    bleu_avg,
    correlation_pvalue,
    kendall,
    pairwise_accuracy,
    recall_at_k,
    render_report,
    rouge,
    score_distance,
    spearman,
)

# -- preference pairs ---------------------------------------------------------

paired = [(0.9, 0.2), (0.8, 0.6), (0.4, 0.5), (0.7, 0.1)]
print("paired (preferred, rejected) scores:", paired)
print(f"  pairwise accuracy: {pairwise_accuracy(paired):.3f}  (3 of 4 ordered)")
print(f"  mean score gap:    {score_distance(paired):+.3f}")

# -- rank correlations --------------------------------------------------------

rng = np.random.default_rng(0)
human = np.arange(20, dtype=float)
model_scores = human + rng.normal(0, 3.0, size=20)
rho = spearman(human, model_scores)
tau = kendall(human, model_scores)
rho_p = correlation_pvalue(human, model_scores, spearman, n_perm=2000, seed=0)
tau_p = correlation_pvalue(human, model_scores, kendall, n_perm=2000, seed=0)
print("\nnoisy monotone scores vs human ranks")
print(f"  spearman rho {rho:.3f} (p {rho_p:.4f}), kendall tau {tau:.3f} (p {tau_p:.4f})")

shuffled = rng.permutation(model_scores)
print(f"  after shuffling: rho {spearman(human, shuffled):+.3f} "
      f"(p {correlation_pvalue(human, shuffled, spearman, n_perm=2000, seed=0):.3f})")

# -- aspect recall ------------------------------------------------------------

confidences = np.array([0.05, 0.30, 0.02, 0.40, 0.03, 0.04, 0.06, 0.02, 0.05, 0.03])
chosen_by_humans = [1, 3, 6]
print(f"\nhumans picked aspects {chosen_by_humans}; model confidence "
      f"argmax is {int(np.argmax(confidences))}")
for k in (1, 3, 5):
    print(f"  recall@{k}: {recall_at_k(confidences, chosen_by_humans, k):.3f}")

# -- generation overlap -------------------------------------------------------

hyp = "the ending landed with real force".split()
refs = ["the ending landed with true force".split(),
        "a strong ending with real force".split()]
print("\ngenerated vs reference comments")
print(f"  BLEU (mean of 1..4-gram): {bleu_avg(hyp, refs):.3f}")
print(f"  ROUGE-L vs first ref:     {rouge(hyp, refs[0]):.3f}")

# -- the assembled report -----------------------------------------------------

report = MetricReport(acc=pairwise_accuracy(paired),
                      dis=score_distance(paired),
                      rho=rho, rho_p=rho_p, tau=tau, tau_p=tau_p,
                      recall={k: recall_at_k(confidences, chosen_by_humans, k)
                              for k in (1, 3, 5)},
                      bleu=bleu_avg(hyp, refs), rouge_l=rouge(hyp, refs[0]),
                      ppl=16.0)
print("\n" + render_report(report))
