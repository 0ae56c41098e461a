"""Optimizer update rule and learning-rate schedule spot checks."""

import numpy as np
import pytest

from storyeval.autodiff import Tensor
from storyeval.errors import ContractViolation
from storyeval.optim import AdamW, LrSchedule, lr_at, steps_per_epoch


def make_param(value, grad):
    p = Tensor(np.array([value]), requires_grad=True)
    p.grad = np.array([grad])
    return p


def test_first_step_moves_by_roughly_lr():
    p = make_param(1.0, 0.5)
    opt = AdamW({"p": p}, weight_decay=0.0)
    opt.step(lr=0.1)
    assert abs(float(p.data[0]) - 0.9) < 1e-6
    assert opt.step_count == 1


def test_zero_grad_leaves_param_unchanged():
    p = make_param(1.0, 0.0)
    opt = AdamW({"p": p}, weight_decay=0.0)
    opt.step(lr=0.1)
    assert float(p.data[0]) == 1.0


def test_decoupled_decay_only():
    p = make_param(1.0, 0.0)
    opt = AdamW({"p": p}, weight_decay=0.1)
    opt.step(lr=0.1)
    assert abs(float(p.data[0]) - 0.99) < 1e-12


def test_missing_grad_is_a_contract_violation():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW({"p": p})
    with pytest.raises(ContractViolation):
        opt.step(lr=0.1)


def test_grads_left_untouched_by_step():
    p = make_param(1.0, 0.5)
    opt = AdamW({"p": p}, weight_decay=0.0)
    opt.step(lr=0.1)
    assert np.array_equal(p.grad, [0.5])


def test_adamw_matches_reference_over_several_steps():
    # independent recompute of the textbook update rule
    rng = np.random.default_rng(0)
    val = rng.standard_normal(4)
    grads = [rng.standard_normal(4) for _ in range(5)]
    p = Tensor(val.copy(), requires_grad=True)
    opt = AdamW({"p": p}, weight_decay=0.01)

    ref = val.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    for t, g in enumerate(grads, start=1):
        p.grad = g.copy()
        opt.step(lr=0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1 - 0.9 ** t)
        vhat = v / (1 - 0.999 ** t)
        ref = ref - 0.05 * (mhat / (np.sqrt(vhat) + 1e-8) + 0.01 * ref)
    assert np.allclose(p.data, ref, atol=1e-12)


def test_state_roundtrip_resumes_identically():
    rng = np.random.default_rng(1)
    p1 = Tensor(np.ones(3), requires_grad=True)
    p2 = Tensor(np.ones(3), requires_grad=True)
    a = AdamW({"p": p1})
    b = AdamW({"p": p2})
    g0 = rng.standard_normal(3)
    p1.grad = g0.copy()
    p2.grad = g0.copy()
    a.step(lr=0.1)
    b.step(lr=0.1)

    snap = a.state()
    c = AdamW({"p": Tensor(p1.data.copy(), requires_grad=True)})
    c.load_state(snap)
    g1 = rng.standard_normal(3)
    b.params["p"].grad = g1.copy()
    c.params["p"].grad = g1.copy()
    b.step(lr=0.1)
    c.step(lr=0.1)
    assert np.array_equal(b.params["p"].data, c.params["p"].data)
    assert c.step_count == 2


def test_lr_schedule_spot_values():
    sched = LrSchedule(peak_lr=4e-6, warmup_steps=100, total_steps=1000)
    assert lr_at(sched, 50) == pytest.approx(2e-6)
    assert lr_at(sched, 100) == pytest.approx(4e-6)
    assert lr_at(sched, 1000) == 0.0
    assert lr_at(sched, 0) == 0.0
    assert lr_at(sched, 1500) == 0.0


def test_lr_schedule_piecewise_linear_continuous_nonnegative():
    sched = LrSchedule(peak_lr=1.0, warmup_steps=7, total_steps=23)
    vals = [lr_at(sched, s) for s in range(24)]
    assert all(v >= 0 for v in vals)
    assert max(vals) == pytest.approx(1.0)
    assert vals.index(max(vals)) == 7
    ramp_deltas = {round(vals[i + 1] - vals[i], 12) for i in range(7)}
    decay_deltas = {round(vals[i + 1] - vals[i], 12) for i in range(7, 23)}
    assert len(ramp_deltas) == 1 and len(decay_deltas) == 1


def test_no_warmup_starts_at_peak():
    sched = LrSchedule(peak_lr=0.5, warmup_steps=0, total_steps=10)
    assert lr_at(sched, 0) == pytest.approx(0.5)


def test_warmup_longer_than_total_rejected():
    with pytest.raises(ContractViolation):
        LrSchedule(peak_lr=1.0, warmup_steps=11, total_steps=10)


def test_steps_per_epoch_rounds_up():
    assert steps_per_epoch(100, 16) == 7
    assert steps_per_epoch(96, 16) == 6
    assert steps_per_epoch(3, 16) == 1
