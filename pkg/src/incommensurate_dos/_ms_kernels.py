"""Compiled kernels for the truncated momentum-lattice operator.

Index layout: lattice points ``(n1, n2)`` are grouped in blocks of fixed
``n2``; inside block ``b`` the admissible ``n1`` form the contiguous range
``lo[b] .. hi[b]`` stored at positions ``start[b] + n1 - lo[b]``.  The
first potential couples points inside a block (offsets in ``n1``), the
second couples points of equal ``n1`` in different blocks.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def cheb_step(y, x, dshift, a, lo, hi, start, c1, c2):
    """``y <- a * (H - shift) x - y`` where ``dshift = diag(H) - shift``."""
    n = x.size
    for i in range(n):
        y[i] = a * dshift[i] * x[i] - y[i]
    nb = lo.size
    D1 = c1.size - 1
    D2 = c2.size - 1
    for b in range(nb):
        s = start[b]
        w = hi[b] - lo[b] + 1
        for d in range(1, min(D1, w - 1) + 1):
            cd = a * c1[d]
            if cd == 0.0:
                continue
            for p in range(w - d):
                y[s + p] += cd * x[s + p + d]
                y[s + p + d] += cd * x[s + p]
    for b in range(nb):
        for d in range(1, D2 + 1):
            bb = b + d
            if bb >= nb:
                break
            cd = a * c2[d]
            if cd == 0.0:
                continue
            l0 = max(lo[b], lo[bb])
            h0 = min(hi[b], hi[bb])
            if l0 > h0:
                continue
            pb = start[b] + l0 - lo[b]
            pbb = start[bb] + l0 - lo[bb]
            for t in range(h0 - l0 + 1):
                y[pb + t] += cd * x[pbb + t]
                y[pbb + t] += cd * x[pb + t]


@numba.njit(cache=True, nogil=True)
def chebyshev_moments(dshift, inv_r, lo, hi, start, c1, c2, i0, n_moments):
    """``mu_m = <e_i0| T_m(Ht) |e_i0>`` for ``m < n_moments``.

    ``Ht = (H - shift) * inv_r``.  Uses ``mu_2m = 2 <v_m|v_m> - mu_0`` and
    ``mu_2m+1 = 2 <v_m+1|v_m> - mu_1`` so that only about ``n_moments / 2``
    products are needed.
    """
    n = dshift.size
    mu = np.empty(n_moments)
    v0 = np.zeros(n)
    v1 = np.zeros(n)
    v0[i0] = 1.0
    mu[0] = 1.0
    if n_moments == 1:
        return mu
    cheb_step(v1, v0, dshift, inv_r, lo, hi, start, c1, c2)
    mu[1] = v1[i0]
    n_half = (n_moments + 1) // 2
    two_a = 2.0 * inv_r
    for m in range(1, n_half):
        # v0 <- v_{m+1} = 2 Ht v_m - v_{m-1}
        cheb_step(v0, v1, dshift, two_a, lo, hi, start, c1, c2)
        aa = 0.0
        ab = 0.0
        for i in range(n):
            aa += v1[i] * v1[i]
            ab += v0[i] * v1[i]
        mu[2 * m] = 2.0 * aa - mu[0]
        if 2 * m + 1 < n_moments:
            mu[2 * m + 1] = 2.0 * ab - mu[1]
        tmp = v0
        v0 = v1
        v1 = tmp
    return mu


@numba.njit(cache=True, nogil=True)
def row_radius(lo, hi, start, c1, c2, n):
    """Gershgorin radius of every row (sum of |off-diagonal| entries)."""
    rad = np.zeros(n)
    nb = lo.size
    D1 = c1.size - 1
    D2 = c2.size - 1
    for b in range(nb):
        s = start[b]
        w = hi[b] - lo[b] + 1
        for d in range(1, min(D1, w - 1) + 1):
            cd = abs(c1[d])
            for p in range(w - d):
                rad[s + p] += cd
                rad[s + p + d] += cd
    for b in range(nb):
        for d in range(1, D2 + 1):
            bb = b + d
            if bb >= nb:
                break
            cd = abs(c2[d])
            l0 = max(lo[b], lo[bb])
            h0 = min(hi[b], hi[bb])
            if l0 > h0:
                continue
            pb = start[b] + l0 - lo[b]
            pbb = start[bb] + l0 - lo[bb]
            for t in range(h0 - l0 + 1):
                rad[pb + t] += cd
                rad[pbb + t] += cd
    return rad
