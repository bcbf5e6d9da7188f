"""Hot numeric kernels: per-patch reductions over H x W x C arrays.

Every oracle query triggers at least one full pass over the image (patch
norms for the masks, weighted region energy for the synthetic oracles), so
these two reductions dominate attack runtime.  Each kernel has a numba
@njit build and a pure-numpy build; set PAR_NUMBA=0 to force the numpy
path (the default uses numba when importable).  benchmarks/bench_kernels.py
compares the two.
"""

import os

import numpy as np


def _patch_l2_norms_np(noise, patch_size):
    h, w, _ = noise.shape
    rows = -(-h // patch_size)
    cols = -(-w // patch_size)
    out = np.empty((rows, cols), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            block = noise[r * patch_size:(r + 1) * patch_size,
                          c * patch_size:(c + 1) * patch_size, :]
            out[r, c] = np.sqrt(np.sum(block * block))
    return out


def _region_weighted_energy_np(diff, patch_size, weights):
    norms = _patch_l2_norms_np(diff, patch_size)
    return float(np.sum(norms * weights))


def _numba_enabled():
    flag = os.environ.get("PAR_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


NUMBA_ACTIVE = False

if _numba_enabled():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
    if njit is not None:
        NUMBA_ACTIVE = True

        @njit(cache=True)
        def _patch_l2_norms_jit(noise, patch_size):
            h, w, ch = noise.shape
            rows = (h + patch_size - 1) // patch_size
            cols = (w + patch_size - 1) // patch_size
            out = np.empty((rows, cols), dtype=np.float64)
            for r in range(rows):
                i_hi = min((r + 1) * patch_size, h)
                for c in range(cols):
                    j_hi = min((c + 1) * patch_size, w)
                    acc = 0.0
                    for i in range(r * patch_size, i_hi):
                        for j in range(c * patch_size, j_hi):
                            for k in range(ch):
                                v = noise[i, j, k]
                                acc += v * v
                    out[r, c] = np.sqrt(acc)
            return out

        @njit(cache=True)
        def _region_weighted_energy_jit(diff, patch_size, weights):
            h, w, ch = diff.shape
            rows = (h + patch_size - 1) // patch_size
            cols = (w + patch_size - 1) // patch_size
            total = 0.0
            for r in range(rows):
                i_hi = min((r + 1) * patch_size, h)
                for c in range(cols):
                    wt = weights[r, c]
                    j_hi = min((c + 1) * patch_size, w)
                    acc = 0.0
                    for i in range(r * patch_size, i_hi):
                        for j in range(c * patch_size, j_hi):
                            for k in range(ch):
                                v = diff[i, j, k]
                                acc += v * v
                    total += wt * np.sqrt(acc)
            return total


def patch_l2_norms(noise, patch_size):
    """Per-patch l2 norm of an (H, W, C) array, channels pooled.

    Returns a (ceil(H/ps), ceil(W/ps)) float64 matrix; edge patches may be
    ragged.
    """
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    if NUMBA_ACTIVE:
        return _patch_l2_norms_jit(noise, patch_size)
    return _patch_l2_norms_np(noise, patch_size)


def region_weighted_energy(diff, patch_size, weights):
    """Sum of weights[r, c] * (l2 norm of diff on patch (r, c))."""
    diff = np.ascontiguousarray(diff, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if NUMBA_ACTIVE:
        return float(_region_weighted_energy_jit(diff, patch_size, weights))
    return _region_weighted_energy_np(diff, patch_size, weights)
