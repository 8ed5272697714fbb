"""Evaluation metrics: RMSE, REL, MAE, and threshold accuracies.

Plain numpy with float64 accumulation; an accumulator pools pixels
across samples so a dataset gets one report.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

THRESHOLDS = (1.05, 1.10, 1.25)
CSV_HEADER = "rmse,rel,mae,d105,d110,d125"


@dataclass
class MetricsReport:
    rmse: float
    rel: float
    mae: float
    d105: float
    d110: float
    d125: float

    def csv_row(self) -> str:
        vals = (self.rmse, self.rel, self.mae, self.d105, self.d110, self.d125)
        return ",".join(f"{v:.6f}" for v in vals)

    def as_tuple(self):
        return (self.rmse, self.rel, self.mae, self.d105, self.d110, self.d125)


def evaluation_mask(valid_mask: np.ndarray, transparent_mask: np.ndarray | None) -> np.ndarray:
    """Evaluate on transparent & valid where transparency exists, else valid."""
    valid = np.asarray(valid_mask, dtype=bool)
    if transparent_mask is not None and np.asarray(transparent_mask).any():
        return valid & np.asarray(transparent_mask, dtype=bool)
    return valid


class MetricsAccumulator:
    def __init__(self):
        self.n = 0
        self.sum_sq = 0.0
        self.sum_abs = 0.0
        self.sum_rel = 0.0
        self.hits = [0, 0, 0]

    def update(self, pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None):
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt, dtype=np.float64)
        if pred.shape != gt.shape:
            raise ValueError(f"pred {pred.shape} vs gt {gt.shape}")
        m = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if m.shape != pred.shape:
            raise ValueError(f"mask {m.shape} vs depth {pred.shape}")
        m = m & (gt > 0)
        if not m.any():
            return
        d = pred[m]
        g = gt[m]
        err = d - g
        self.n += d.size
        self.sum_sq += float((err * err).sum())
        self.sum_abs += float(np.abs(err).sum())
        self.sum_rel += float((np.abs(err) / g).sum())
        with np.errstate(divide="ignore"):
            ratio = np.where(d > 0, np.maximum(d / g, g / d), np.inf)
        for i, t in enumerate(THRESHOLDS):
            self.hits[i] += int((ratio < t).sum())

    def report(self) -> MetricsReport:
        if self.n == 0:
            raise ValueError("metrics: no valid pixels accumulated")
        d = [100.0 * h / self.n for h in self.hits]
        return MetricsReport(
            rmse=float(np.sqrt(self.sum_sq / self.n)),
            rel=self.sum_rel / self.n,
            mae=self.sum_abs / self.n,
            d105=d[0],
            d110=d[1],
            d125=d[2],
        )


def compute_metrics(pred, gt, mask=None) -> MetricsReport:
    acc = MetricsAccumulator()
    acc.update(pred, gt, mask)
    return acc.report()
