"""Metric values against hand-computed references, and loss behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdcnet.gradcheck import gradcheck
from hdcnet.losses import loss_mse, loss_normal, surface_normals, total_loss
from hdcnet.metrics import (
    MetricsAccumulator,
    compute_metrics,
    evaluation_mask,
)
from hdcnet.tensor import Tensor


# ------------------------------------------------------------------ metrics


def test_pinned_values():
    # pred [1,2,4] vs gt [2,2,2], worked by hand:
    # rmse = sqrt((1+0+4)/3), rel = (1/2+0+2/2)/3, mae = (1+0+2)/3,
    # ratios (2, 1, 2) so only the exact pixel clears every threshold
    r = compute_metrics(np.array([1.0, 2.0, 4.0]), np.array([2.0, 2.0, 2.0]))
    assert r.rmse == pytest.approx(np.sqrt(5.0 / 3.0), rel=1e-12)
    assert r.rel == pytest.approx(0.5, rel=1e-12)
    assert r.mae == pytest.approx(1.0, rel=1e-12)
    assert (r.d105, r.d110, r.d125) == (pytest.approx(100 / 3), pytest.approx(100 / 3), pytest.approx(100 / 3))


def test_pinned_values_dyadic():
    # pred [1, 1.5, 2, 0.5] vs gt all ones: every number is exact in
    # binary so the comparisons are allowed to be exact
    r = compute_metrics(np.array([1.0, 1.5, 2.0, 0.5]), np.ones(4))
    assert r.rmse == np.sqrt(0.375)
    assert r.rel == 0.5
    assert r.mae == 0.5
    assert (r.d105, r.d110, r.d125) == (25.0, 25.0, 25.0)


def test_identity_is_perfect():
    rng = np.random.default_rng(0)
    d = rng.uniform(0.5, 3.0, size=(7, 9))
    r = compute_metrics(d, d)
    assert r.as_tuple() == (0.0, 0.0, 0.0, 100.0, 100.0, 100.0)


def test_threshold_is_strict():
    # a ratio exactly at the threshold does not count as a hit; 1.25 and
    # the test values are dyadic, so there is no rounding to hide behind
    at = compute_metrics(np.array([1.25]), np.array([1.0]))
    assert at.d125 == 0.0
    under = compute_metrics(np.array([1.2490234375]), np.array([1.0]))
    assert under.d125 == 100.0


def test_nonpositive_pred_never_hits():
    r = compute_metrics(np.array([0.0, -1.0, 1.0]), np.array([1.0, 1.0, 1.0]))
    assert r.d125 == pytest.approx(100 / 3)
    assert np.isfinite(r.rel)


def test_mask_and_nonpositive_gt_excluded():
    pred = np.array([1.0, 5.0, 9.0, 2.0])
    gt = np.array([1.0, 5.0, 0.0, 2.0])  # third pixel has no ground truth
    mask = np.array([True, False, True, True])
    r = compute_metrics(pred, gt, mask)
    # only pixels 0 and 3 survive, both exact
    assert r.rmse == 0.0 and r.d105 == 100.0


def test_accumulator_pools_by_pixel():
    rng = np.random.default_rng(1)
    a = rng.uniform(0.5, 2.0, size=(3, 4))
    b = rng.uniform(0.5, 2.0, size=(9, 2))
    ga = rng.uniform(0.5, 2.0, size=(3, 4))
    gb = rng.uniform(0.5, 2.0, size=(9, 2))
    acc = MetricsAccumulator()
    acc.update(a, ga)
    acc.update(b, gb)
    pooled = acc.report()
    flat = compute_metrics(
        np.concatenate([a.ravel(), b.ravel()]), np.concatenate([ga.ravel(), gb.ravel()])
    )
    assert pooled.as_tuple() == pytest.approx(flat.as_tuple(), rel=1e-12)


def test_empty_report_raises():
    acc = MetricsAccumulator()
    with pytest.raises(ValueError, match="no valid pixels"):
        acc.report()
    acc.update(np.ones(3), np.zeros(3))  # all gt missing: still nothing
    with pytest.raises(ValueError, match="no valid pixels"):
        acc.report()


def test_shape_mismatches_rejected():
    acc = MetricsAccumulator()
    with pytest.raises(ValueError, match="pred"):
        acc.update(np.ones(3), np.ones(4))
    with pytest.raises(ValueError, match="mask"):
        acc.update(np.ones(3), np.ones(3), np.ones(4, dtype=bool))


def test_csv_row_format():
    r = compute_metrics(np.array([1.0, 2.0, 4.0]), np.array([2.0, 2.0, 2.0]))
    row = r.csv_row()
    assert row.split(",")[1] == "0.500000"
    assert len(row.split(",")) == 6


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_rmse_dominates_mae_and_deltas_are_monotone(seed):
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0.05, 4.0, size=37)
    gt = rng.uniform(0.05, 4.0, size=37)
    r = compute_metrics(pred, gt)
    assert r.rmse >= r.mae - 1e-12
    assert r.d105 <= r.d110 <= r.d125


def test_evaluation_mask_policy():
    valid = np.array([[True, True], [False, True]])
    transp = np.array([[True, False], [True, False]])
    np.testing.assert_array_equal(
        evaluation_mask(valid, transp), np.array([[True, False], [False, False]])
    )
    # without a transparency mask (or with an empty one) fall back to valid
    np.testing.assert_array_equal(evaluation_mask(valid, None), valid)
    np.testing.assert_array_equal(evaluation_mask(valid, np.zeros_like(transp)), valid)


# ------------------------------------------------------------------- losses


def _t(arr, grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


def test_mse_pinned():
    pred = _t([[1.0, 2.0], [3.0, 4.0]])
    gt = _t(np.ones((2, 2)))
    full = loss_mse(pred, gt, np.ones((2, 2), dtype=bool))
    assert full.item() == pytest.approx((0 + 1 + 4 + 9) / 4, rel=1e-12)
    part = loss_mse(pred, gt, np.array([[True, False], [False, True]]))
    assert part.item() == pytest.approx((0 + 9) / 2, rel=1e-12)


def test_mse_batched_shape():
    pred = _t(np.full((2, 1, 3, 3), 2.0))
    gt = _t(np.ones((2, 1, 3, 3)))
    m = np.ones((2, 3, 3), dtype=bool)  # [N,H,W] masks are accepted
    assert loss_mse(pred, gt, m).item() == pytest.approx(1.0)


def test_empty_mask_rejected():
    pred, gt = _t(np.ones((3, 3))), _t(np.ones((3, 3)))
    with pytest.raises(ValueError, match="no pixels"):
        loss_mse(pred, gt, np.zeros((3, 3), dtype=bool))


def test_normals_are_unit_and_flat_is_straight_up():
    flat = _t(np.full((4, 5), 1.7))
    n = surface_normals(flat)
    assert n.shape == (3, 4, 5)
    np.testing.assert_array_equal(n.data[0], 0.0)
    np.testing.assert_array_equal(n.data[1], 0.0)
    np.testing.assert_array_equal(n.data[2], 1.0)
    rng = np.random.default_rng(2)
    bumpy = _t(rng.uniform(0.5, 2.0, size=(5, 6)))
    nb = surface_normals(bumpy)
    np.testing.assert_allclose((nb.data**2).sum(axis=0), 1.0, rtol=1e-12)


def test_normals_need_three_pixels():
    with pytest.raises(ValueError, match=">= 3"):
        surface_normals(_t(np.ones((2, 5))))


def test_normal_loss_pinned_ramp():
    # pred is a unit ramp in x, gt is flat: normals are (-1,0,1)/sqrt(2)
    # vs (0,0,1), and one-sided border differences see the same slope,
    # so the masked mean is 1 - 1/sqrt(2) everywhere.  Tolerance is
    # float32-ish: scalar constants such as 1/n live in the training
    # dtype even when the depth arrays are float64.
    H, W = 4, 6
    ramp = np.tile(np.arange(W, dtype=np.float64), (H, 1))
    val = loss_normal(_t(ramp), _t(np.ones((H, W))), np.ones((H, W), dtype=bool))
    assert val.item() == pytest.approx(1.0 - 1.0 / np.sqrt(2.0), rel=1e-7)


def test_normal_loss_zero_on_identical():
    rng = np.random.default_rng(3)
    d = rng.uniform(0.5, 2.0, size=(5, 7))
    val = loss_normal(_t(d), _t(d.copy()), np.ones((5, 7), dtype=bool))
    assert abs(val.item()) < 1e-12


def test_total_loss_composition():
    rng = np.random.default_rng(4)
    pred = _t(rng.uniform(0.5, 2.0, size=(4, 5)))
    gt = _t(rng.uniform(0.5, 2.0, size=(4, 5)))
    m = np.ones((4, 5), dtype=bool)
    mse = loss_mse(pred, gt, m).item()
    nrm = loss_normal(pred, gt, m).item()
    assert total_loss(pred, gt, m, lam=0.25).item() == pytest.approx(mse + 0.25 * nrm, rel=1e-12)
    assert total_loss(pred, gt, m, lam=0.0).item() == mse
    with pytest.raises(ValueError, match="nonnegative"):
        total_loss(pred, gt, m, lam=-0.1)


def test_loss_gradcheck():
    rng = np.random.default_rng(5)
    pred = _t(rng.uniform(0.8, 1.6, size=(1, 1, 4, 5)), grad=True)
    gt = _t(rng.uniform(0.8, 1.6, size=(1, 1, 4, 5)))
    m = np.ones((1, 4, 5), dtype=bool)
    m[0, 1, 2] = False
    res = gradcheck(lambda: total_loss(pred, gt, m, lam=0.1), [pred], rtol=1e-4)
    assert res.ok, res.message()
