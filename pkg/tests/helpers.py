"""Shared test utilities: finite-difference gradients and error measures."""

from __future__ import annotations

import numpy as np


def finite_difference_grads(f, arrays, h: float = 1e-5):
    """Central-difference gradient of scalar ``f()`` w.r.t. each array.

    ``f`` must read the arrays in place on every call; the arrays are
    perturbed one element at a time and restored afterwards.
    """
    grads = []
    for arr in arrays:
        grad = np.zeros_like(arr)
        flat, gflat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(grad)
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise |a-b| / max(|a|, |b|, 1), reduced with max."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())
