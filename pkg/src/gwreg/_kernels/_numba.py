"""Numba-compiled batched kernels; same contracts as the numpy twins.

Loops are kept serial on purpose: results must be bit-identical across
reruns, and reduction order would change under ``prange``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def sqrt_psd_batch(mats):
    n, d, _ = mats.shape
    out = np.empty((n, d, d))
    for i in range(n):
        w, v = np.linalg.eigh(mats[i])
        for j in range(d):
            w[j] = np.sqrt(max(w[j], 0.0))
        root = (v * w) @ v.T
        out[i] = (root + root.T) / 2.0
    return out


@njit(cache=True)
def transport_batch(sqrt_ref, invsqrt_ref, covs):
    n, d, _ = covs.shape
    out = np.empty((n, d, d))
    for i in range(n):
        inner = sqrt_ref @ covs[i] @ sqrt_ref
        inner = (inner + inner.T) / 2.0
        w, v = np.linalg.eigh(inner)
        for j in range(d):
            w[j] = np.sqrt(max(w[j], 0.0))
        mid = (v * w) @ v.T
        s = invsqrt_ref @ mid @ invsqrt_ref
        out[i] = (s + s.T) / 2.0
    return out


@njit(cache=True)
def wasserstein_batch(means1, covs1, means2, covs2):
    # Bures term in product form ||s1 - s2 O||_F^2 (O = polar factor of
    # s2 s1): algebraically the closed-form trace term, but cancellation-free
    # for nearby inputs.
    n, d = means1.shape
    out = np.empty(n)
    for i in range(n):
        same = True
        for j in range(d):
            if means1[i, j] != means2[i, j]:
                same = False
                break
            for k in range(d):
                if covs1[i, j, k] != covs2[i, j, k]:
                    same = False
                    break
            if not same:
                break
        if same:
            out[i] = 0.0
            continue
        w1, v1 = np.linalg.eigh(covs1[i])
        for j in range(d):
            w1[j] = np.sqrt(max(w1[j], 0.0))
        s1 = (v1 * w1) @ v1.T
        w2, v2 = np.linalg.eigh(covs2[i])
        for j in range(d):
            w2[j] = np.sqrt(max(w2[j], 0.0))
        s2 = (v2 * w2) @ v2.T
        u, _, vt = np.linalg.svd(s2 @ s1)
        diff = s1 - s2 @ (u @ vt)
        bures = 0.0
        for j in range(d):
            for k in range(d):
                bures += diff[j, k] * diff[j, k]
        mean_part = 0.0
        for j in range(d):
            dm = means1[i, j] - means2[i, j]
            mean_part += dm * dm
        out[i] = np.sqrt(max(mean_part + bures, 0.0))
    return out
