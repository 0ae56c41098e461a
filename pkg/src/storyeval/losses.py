"""Training objectives: ranking hinges, aspect losses, comment MLE, joint sum.

All functions build autodiff graph nodes, so they accept Tensors from the
model heads (floats and numpy arrays are wrapped as constants).  Batched
inputs are averaged over the batch; single items pass through unchanged.

Cross-entropies clamp probabilities at 1e-12 before the log.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .errors import ContractViolation

LOG_EPS = 1e-12


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _batch_mean(x: Tensor) -> Tensor:
    return x.mean() if x.data.ndim > 0 else x


def _log_clamped(x: Tensor) -> Tensor:
    return ad.log(ad.clamp_min(x, LOG_EPS))


def margin_rank_loss(p_high, p_low, margin: float = 0.3) -> Tensor:
    """Hinge pushing the preferred story's score above the other by ``margin``."""
    if margin <= 0:
        raise ContractViolation("margin must be positive")
    p_high = _wrap(p_high)
    p_low = _wrap(p_low)
    return _batch_mean(ad.relu(p_low - p_high + margin))


def coherence_rank_loss(p_low, p_neg, margin: float = 0.3, enabled: bool = True) -> Tensor:
    """Second hinge: even the low story must beat a corrupted one."""
    if not enabled:
        raise ContractViolation("coherence loss requires negative samples to be enabled")
    return margin_rank_loss(p_low, p_neg, margin)


def confidence_loss(a_c, y_a_c) -> Tensor:
    """Multi-hot cross-entropy over aspect confidences.

    Targets stay unnormalized: each selected aspect contributes its own
    -log a_c[k] term.  ``normalize_targets=True`` on ``confidence_loss_ex``
    divides targets by their count instead.
    """
    return confidence_loss_ex(a_c, y_a_c, normalize_targets=False)


def confidence_loss_ex(a_c, y_a_c, normalize_targets: bool = False) -> Tensor:
    a_c = _wrap(a_c)
    y = np.asarray(y_a_c, dtype=np.float64)
    if y.shape != a_c.data.shape:
        raise ContractViolation("confidence targets must match a_c shape")
    counts = y.sum(axis=-1)
    if np.any(counts < 1):
        raise ContractViolation("each item needs at least one selected aspect")
    if normalize_targets:
        y = y / counts[..., None] if y.ndim > 1 else y / counts
    per_item = -(Tensor(y.astype(a_c.data.dtype)) * _log_clamped(a_c)).sum(axis=-1)
    return _batch_mean(per_item)


def rating_loss(a_r, y_a_r, selected) -> Tensor:
    """Binary cross-entropy on the selected aspects only.

    ``selected`` is an index collection for a single K-vector, or a 0/1
    mask matching a batched (B, K) input.  Items with nothing selected
    contribute zero and trigger a warning.
    """
    a_r = _wrap(a_r)
    y = np.asarray(y_a_r, dtype=np.float64)
    if a_r.data.ndim == 1:
        mask = np.zeros(a_r.data.shape, dtype=np.float64)
        idx = np.asarray(sorted(selected), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= a_r.data.shape[-1]):
            raise ContractViolation("selected aspect index out of range")
        mask[idx] = 1.0
    else:
        mask = np.asarray(selected, dtype=np.float64)
        if mask.shape != a_r.data.shape:
            raise ContractViolation("selection mask must match a_r shape")
    if mask.sum() == 0 or (mask.ndim > 1 and np.any(mask.sum(axis=-1) == 0)):
        warnings.warn("rating_loss: item with empty aspect selection contributes 0",
                      stacklevel=2)
    if mask.sum() == 0:
        return Tensor(np.zeros((), dtype=a_r.data.dtype))
    y_t = Tensor(y.astype(a_r.data.dtype))
    m_t = Tensor(mask.astype(a_r.data.dtype))
    bce = y_t * _log_clamped(a_r) + (1.0 - y_t) * _log_clamped(1.0 - a_r)
    per_item = -(m_t * bce).sum(axis=-1)
    return _batch_mean(per_item)


def sequence_nll(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None,
                 reduce: str = "mean") -> Tensor:
    """Teacher-forced negative log-likelihood of ``targets`` under ``logits``.

    ``mean`` divides by the number of unmasked target tokens (token-level,
    not per-sequence); ``sum`` leaves the total for perplexity bookkeeping.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.shape[:-1] != targets.shape:
        raise ContractViolation("logits and targets disagree on shape")
    if targets.size == 0:
        raise ContractViolation("empty target sequence")
    logp = ad.log_softmax(logits, axis=-1)
    picked = ad.gather_last(logp, targets)
    if mask is None:
        mask = np.ones(targets.shape, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    n_tokens = float(mask.sum())
    if n_tokens == 0:
        raise ContractViolation("mask removes every target token")
    total = -(picked * Tensor(mask.astype(logits.data.dtype))).sum()
    if reduce == "sum":
        return total
    if reduce == "mean":
        return total / n_tokens
    raise ContractViolation(f"unknown reduce '{reduce}'")


def discrimination_loss(p_s, label, smoothing: float = 0.0) -> Tensor:
    """Plain BCE of the preference score against a hard 0/1 label.

    Baseline objective: with ``smoothing`` s the target becomes
    label·(1−s) + (1−label)·s.
    """
    if not 0.0 <= smoothing < 0.5:
        raise ContractViolation("smoothing must be in [0, 0.5)")
    p_s = _wrap(p_s)
    y = np.asarray(label, dtype=np.float64)
    target = y * (1.0 - smoothing) + (1.0 - y) * smoothing
    t = Tensor(np.asarray(target, dtype=p_s.data.dtype))
    bce = -(t * _log_clamped(p_s) + (1.0 - t) * _log_clamped(1.0 - p_s))
    return _batch_mean(bce)


@dataclass
class LossBreakdown:
    """Per-step components plus their fixed-order total.

    ``L_total`` is always ((L_ps + L_ac) + L_ar) + L_c in 64-bit floats,
    so recomputing it from a logged row reproduces the stored value
    bitwise.  ``graph_total`` is the matching autodiff node for backward.
    """

    L_ps: float
    L_ac: float
    L_ar: float
    L_c: float
    L_total: float
    graph_total: Tensor | None = None

    def __post_init__(self):
        for name in ("L_ps", "L_ac", "L_ar", "L_c"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be non-negative")


def joint_loss(l_ps, l_ac=0.0, l_ar=0.0, l_c=0.0) -> LossBreakdown:
    """Unweighted sum of enabled components (disabled ones pass 0)."""
    ref = next((p for p in (l_ps, l_ac, l_ar, l_c) if isinstance(p, Tensor)), None)
    parts = [p if isinstance(p, Tensor) else as_tensor(p, ref)
             for p in (l_ps, l_ac, l_ar, l_c)]
    graph = ((parts[0] + parts[1]) + parts[2]) + parts[3]
    f = [float(p.data) for p in parts]
    total = ((f[0] + f[1]) + f[2]) + f[3]
    return LossBreakdown(L_ps=f[0], L_ac=f[1], L_ar=f[2], L_c=f[3],
                         L_total=total, graph_total=graph)
