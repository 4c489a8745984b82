"""Regression losses returning (scalar, gradient w.r.t. predictions)."""

from __future__ import annotations

import numpy as np


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements; grad = 2(pred-target)/N."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def mape_loss(pred: np.ndarray, target: np.ndarray):
    """Mean of |A - P| / A over samples. Targets must be positive.

    The kink at P = A takes subgradient 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if np.any(target <= 0.0):
        raise ValueError("mape_loss requires strictly positive targets")
    err = np.abs(target - pred) / target
    loss = float(np.mean(err))
    grad = np.sign(pred - target) / (target * err.size)
    return loss, grad
