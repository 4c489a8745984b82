"""Hot fused element-wise kernels with numba and pure-numpy twins.

Backend selection: set LOOPSCHED_BACKEND=numpy or LOOPSCHED_BACKEND=numba
before import; default is numba when importable. Both backends evaluate the
same per-element IEEE expression trees, so results are bit-identical; all
reductions and matmuls live outside these kernels and are shared.

Scope note: only transcendental-free combines are fused here. Scalar-loop
exp/tanh lose badly to numpy's SIMD implementations on this class of
hardware, so gate nonlinearities (forward) stay in shared numpy code.
benchmarks/bench_kernels.py measures both backends.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("LOOPSCHED_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise ValueError(f"LOOPSCHED_BACKEND must be 'numba' or 'numpy', got {_env!r}")

_want_numba = _env != "numpy"
_numba_ok = False
if _want_numba:
    try:
        from numba import njit
        _numba_ok = True
    except ImportError:
        if _env == "numba":
            raise
BACKEND = "numba" if _numba_ok else "numpy"


# -- Adam update --------------------------------------------------------------
# value -= lr_eff * (m/c1) / (sqrt(v/c2) + eps), with moments updated in place.
# c1, c2 are the bias corrections 1-beta^t, precomputed by the caller.

def _adam_update_numpy(value, grad, m, v, lr_eff, beta1, beta2, eps, c1, c2):
    m[:] = beta1 * m + (1.0 - beta1) * grad
    v[:] = beta2 * v + (1.0 - beta2) * grad * grad
    value -= lr_eff * (m / c1) / (np.sqrt(v / c2) + eps)


def _lstm_bwd_numpy(dh, dc_in, ig, fg, gg, og, tanh_c, c_prev, dz, dc_prev):
    do = dh * tanh_c
    dc = dc_in + dh * og * (1.0 - tanh_c * tanh_c)
    H = ig.shape[1]
    dz[:, 0 * H:1 * H] = (dc * gg) * ig * (1.0 - ig)
    dz[:, 1 * H:2 * H] = (dc * c_prev) * fg * (1.0 - fg)
    dz[:, 2 * H:3 * H] = (dc * ig) * (1.0 - gg * gg)
    dz[:, 3 * H:4 * H] = do * og * (1.0 - og)
    dc_prev[:] = dc * fg


def _relu_bwd_numpy(dy, z, dz):
    dz[:] = dy * (z > 0.0)


def _tanh_bwd_numpy(dy, y, dz):
    dz[:] = dy * (1.0 - y * y)


if _numba_ok:

    @njit(cache=True)
    def _adam_update_numba(value, grad, m, v, lr_eff, beta1, beta2, eps, c1, c2):
        for i in range(value.size):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            value[i] -= lr_eff * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

    @njit(cache=True)
    def _lstm_bwd_numba(dh, dc_in, ig, fg, gg, og, tanh_c, c_prev, dz, dc_prev):
        B, H = ig.shape
        for b in range(B):
            for j in range(H):
                do = dh[b, j] * tanh_c[b, j]
                dc = dc_in[b, j] + dh[b, j] * og[b, j] * (1.0 - tanh_c[b, j] * tanh_c[b, j])
                dz[b, j] = (dc * gg[b, j]) * ig[b, j] * (1.0 - ig[b, j])
                dz[b, H + j] = (dc * c_prev[b, j]) * fg[b, j] * (1.0 - fg[b, j])
                dz[b, 2 * H + j] = (dc * ig[b, j]) * (1.0 - gg[b, j] * gg[b, j])
                dz[b, 3 * H + j] = do * og[b, j] * (1.0 - og[b, j])
                dc_prev[b, j] = dc * fg[b, j]

    @njit(cache=True)
    def _relu_bwd_numba(dy, z, dz):
        for i in range(dy.size):
            dz.flat[i] = dy.flat[i] if z.flat[i] > 0.0 else 0.0

    @njit(cache=True)
    def _tanh_bwd_numba(dy, y, dz):
        for i in range(dy.size):
            dz.flat[i] = dy.flat[i] * (1.0 - y.flat[i] * y.flat[i])

    adam_update = _adam_update_numba
    lstm_bwd_gates = _lstm_bwd_numba
    relu_bwd = _relu_bwd_numba
    tanh_bwd = _tanh_bwd_numba
else:
    adam_update = _adam_update_numpy
    lstm_bwd_gates = _lstm_bwd_numpy
    relu_bwd = _relu_bwd_numpy
    tanh_bwd = _tanh_bwd_numpy

PAIRS = {
    "adam_update": (_adam_update_numpy, "_adam_update_numba"),
    "lstm_bwd_gates": (_lstm_bwd_numpy, "_lstm_bwd_numba"),
    "relu_bwd": (_relu_bwd_numpy, "_relu_bwd_numba"),
    "tanh_bwd": (_tanh_bwd_numpy, "_tanh_bwd_numba"),
}


def numpy_variant(name: str):
    return PAIRS[name][0]


def numba_variant(name: str):
    """The @njit twin, or None when numba is unavailable."""
    if not _numba_ok:
        return None
    return globals()[PAIRS[name][1]]
