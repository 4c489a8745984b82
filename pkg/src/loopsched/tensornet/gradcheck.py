"""Finite-difference verification of hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    worst_param: str = ""
    worst_index: int = -1
    n_checked: int = 0
    per_param: dict = field(default_factory=dict)

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(closure, store, eps: float = 1e-5, max_coords_per_param: int = 8,
               seed: int = 0) -> GradCheckReport:
    """Central finite differences vs analytic gradients.

    closure(compute_grad) -> loss; with compute_grad=True it must zero the
    store's gradients, run backward and leave gradients in place. Coordinates
    are subsampled deterministically for large parameters.
    """
    closure(True)
    analytic = {p.name: p.grad.copy() for p in store}
    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for p in store:
        flat = p.value.ravel()
        n = flat.size
        if n <= max_coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        worst = 0.0
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            lo_plus = closure(False)
            flat[idx] = orig - eps
            lo_minus = closure(False)
            flat[idx] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * eps)
            a = analytic[p.name].ravel()[idx]
            scale = max(abs(a), abs(numeric), 1e-6)
            rel = abs(a - numeric) / scale
            report.n_checked += 1
            worst = max(worst, rel)
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst_param = p.name
                report.worst_index = int(idx)
        report.per_param[p.name] = worst
    return report
