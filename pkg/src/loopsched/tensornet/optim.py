"""Adam with per-parameter freeze flags and learning-rate scales."""

from __future__ import annotations

from . import kernels
from .core import ParameterStore


def adam_step(store: ParameterStore, base_lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
    """One update over all non-frozen parameters.

    Effective rate is base_lr * lr_scale. Frozen parameters are skipped
    entirely: values, moments and step counters stay untouched, so the first
    step after unfreezing behaves like a fresh first Adam step.
    """
    beta1, beta2 = betas
    for p in store:
        if p.frozen:
            continue
        p.t += 1
        c1 = 1.0 - beta1 ** p.t
        c2 = 1.0 - beta2 ** p.t
        kernels.adam_update(p.value.ravel(), p.grad.ravel(), p.m.ravel(), p.v.ravel(),
                            base_lr * p.lr_scale, beta1, beta2, eps, c1, c2)
