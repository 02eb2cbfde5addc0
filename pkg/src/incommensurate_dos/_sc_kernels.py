"""Compiled per-node kernels for the semiclassical linear forms.

For one phase-space node the band sums of L0, L1 and L2 are linear in the
test function ``f = gauss_sigma(E - .)``.  Every divided difference that
appears is expanded on the basis ``{f^(s)(c)}`` (``c`` a cluster centre of
the eigenvalues, ``s`` a derivative order), so that a node contributes

    sum_c sum_s w[c, s] sigma^-s He_s((E - c)/sigma) gauss_sigma(E - c)

to each curve.  Divided differences are tabulated for every multiset of
band indices of size 1..5 (sizes 3..5 carry ``f2``, ``f3``, ``f4``).
"""
from __future__ import annotations

import math

import numba
import numpy as np

MAX_SIZE = 5  # f4(a; b, c, d) = 24 f[a, a, b, c, d]
N_CURVES = 4  # L0, L1, L2 (reduced form), L2 (general form)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@numba.njit(cache=True)
def _binomials(nmax):
    B = np.zeros((nmax + 1, nmax + 1), dtype=np.int64)
    for n in range(nmax + 1):
        B[n, 0] = 1
        for r in range(1, n + 1):
            B[n, r] = B[n - 1, r - 1] + B[n - 1, r]
    return B


@numba.njit(cache=True)
def _rank(idx, k, B):
    # colex rank of the nondecreasing tuple idx[0..k-1]
    r = 0
    for i in range(k):
        r += B[idx[i] + i, i + 1]
    return r


@numba.njit(cache=True)
def _rank_sorted(a, b, c, d, e, k, B):
    # rank of the multiset {a, b, c, d, e}[:k], sorting in place
    t = np.empty(5, dtype=np.int64)
    t[0] = a
    t[1] = b
    t[2] = c
    t[3] = d
    t[4] = e
    for i in range(1, k):
        v = t[i]
        j = i - 1
        while j >= 0 and t[j] > v:
            t[j + 1] = t[j]
            j -= 1
        t[j + 1] = v
    return _rank(t, k, B)


@numba.njit(cache=True)
def _cluster(lam, n, gap):
    labels = np.zeros(n, dtype=np.int64)
    lab = 0
    for i in range(1, n):
        if lam[i] - lam[i - 1] > gap:
            lab += 1
        labels[i] = lab
    nc = lab + 1
    centers = np.empty(nc)
    lo = np.empty(nc)
    hi = np.empty(nc)
    for c in range(nc):
        lo[c] = np.inf
        hi[c] = -np.inf
    for i in range(n):
        c = labels[i]
        lo[c] = min(lo[c], lam[i])
        hi[c] = max(hi[c], lam[i])
    for c in range(nc):
        centers[c] = 0.5 * (lo[c] + hi[c])
    return labels, centers, nc


@numba.njit(cache=True)
def _tables(lam, n, labels, centers, nc, active, n_terms, B):
    """Divided-difference functionals for all multisets of size 1..MAX_SIZE.

    Row ``offset[k] + rank`` holds the coefficients of ``f[multiset]`` on
    the basis ``(cluster c, order s)`` flattened as ``c * n_orders + s``.
    Multisets made only of inactive clusters are left at zero.
    """
    n_orders = MAX_SIZE - 1 + n_terms + 1
    offset = np.zeros(MAX_SIZE + 2, dtype=np.int64)
    for k in range(1, MAX_SIZE + 1):
        offset[k + 1] = offset[k] + B[n + k - 1, k]
    tab = np.zeros((offset[MAX_SIZE + 1], nc * n_orders))
    inv_fact = np.empty(n_orders + 1)
    inv_fact[0] = 1.0
    for i in range(1, n_orders + 1):
        inv_fact[i] = inv_fact[i - 1] / i
    h = np.empty(n_terms + 1)
    idx = np.zeros(MAX_SIZE, dtype=np.int64)
    sub = np.zeros(MAX_SIZE, dtype=np.int64)
    for k in range(1, MAX_SIZE + 1):
        for i in range(k):
            idx[i] = 0
        while True:
            any_active = False
            for i in range(k):
                if active[labels[idx[i]]]:
                    any_active = True
                    break
            if any_active:
                row = offset[k] + _rank(idx, k, B)
                c0 = labels[idx[0]]
                c1 = labels[idx[k - 1]]
                m = k - 1
                if c0 == c1:
                    for t in range(n_terms + 1):
                        h[t] = 0.0
                    h[0] = 1.0
                    for i in range(k):
                        y = lam[idx[i]] - centers[c0]
                        for t in range(1, n_terms + 1):
                            h[t] += y * h[t - 1]
                    base = c0 * n_orders
                    for t in range(n_terms + 1):
                        tab[row, base + m + t] = h[t] * inv_fact[m + t]
                else:
                    # f[x0..xm] = (f[x1..xm] - f[x0..x_{m-1}]) / (xm - x0)
                    for i in range(m):
                        sub[i] = idx[i + 1]
                    r_hi = offset[k - 1] + _rank(sub, m, B)
                    for i in range(m):
                        sub[i] = idx[i]
                    r_lo = offset[k - 1] + _rank(sub, m, B)
                    inv = 1.0 / (lam[idx[k - 1]] - lam[idx[0]])
                    j0 = c0 * n_orders
                    j1 = (c1 + 1) * n_orders
                    for j in range(j0, j1):
                        tab[row, j] = (tab[r_hi, j] - tab[r_lo, j]) * inv
            # next nondecreasing tuple
            pos = k - 1
            while pos >= 0 and idx[pos] == n - 1:
                pos -= 1
            if pos < 0:
                break
            idx[pos] += 1
            for i in range(pos + 1, k):
                idx[i] = idx[pos]
    return tab, offset, n_orders


@numba.njit(cache=True)
def node_weights(lam, K, Xm, X2, n, sigma, e_lo, e_hi, window, gap, n_terms):
    """Basis weights of one node for the four curves.

    Returns ``(centers, active, W)`` with ``W`` of shape
    ``(N_CURVES, n_clusters, n_orders)``; ``W[..., s]`` already includes
    the factor ``sigma^-s`` of the Gaussian derivatives.
    """
    B = _binomials(n + MAX_SIZE + 1)
    labels, centers, nc = _cluster(lam, n, gap * sigma)
    active = np.zeros(nc, dtype=np.bool_)
    for c in range(nc):
        active[c] = (centers[c] > e_lo - window * sigma) and (centers[c] < e_hi + window * sigma)
    tab, offset, n_orders = _tables(lam, n, labels, centers, nc, active, n_terms, B)
    nrow = tab.shape[0]
    s = np.zeros((N_CURVES, nrow))

    for m in range(n):
        # L0: f(lam_m)
        s[0, offset[1] + _rank_sorted(m, 0, 0, 0, 0, 1, B)] += 1.0
        # f''(lam_m) = 2 f[m, m, m]; coefficient -1/8 X2_mm
        r = offset[3] + _rank_sorted(m, m, m, 0, 0, 3, B)
        w = 2.0 * (-0.125) * X2[m, m].real
        s[2, r] += w
        s[3, r] += w
        for q in range(n):
            # L1: -1/2 f2(m; q) Im(K_mq X_qm), f2 = 2 f[m, m, q]
            r = offset[3] + _rank_sorted(m, m, q, 0, 0, 3, B)
            s[1, r] += 2.0 * (-0.5) * (K[m, q] * Xm[q, m]).imag
            # (f3(m; q, q) - 2 f3(m; m, q)) |X_mq|^2 / 24, f3 = 6 f[m, m, ., .]
            a2 = abs(Xm[m, q]) ** 2
            r1 = offset[4] + _rank_sorted(m, m, q, q, 0, 4, B)
            r2 = offset[4] + _rank_sorted(m, m, m, q, 0, 4, B)
            s[2, r1] += 6.0 * a2 / 24.0
            s[2, r2] -= 12.0 * a2 / 24.0
            # general: -1/4 (2 f3(m; m, q) - f3(m; q, q)) / 3! |X_mq|^2
            s[3, r2] += -0.25 * 2.0 * a2
            s[3, r1] += 0.25 * a2

    for m in range(n):
        for a in range(n):
            for b in range(n):
                # f3(m; a, b) [K_ma X2_ab K_bm - 2 X2_ma K_ab K_bm] / 24
                t = (K[m, a] * X2[a, b] * K[b, m] - 2.0 * X2[m, a] * K[a, b] * K[b, m]).real
                r = offset[4] + _rank_sorted(m, m, a, b, 0, 4, B)
                s[2, r] += 6.0 * t / 24.0
                # general: -1/4 f3(m; a, b) / 3! (2 K_ab X2_ma K_bm - K_ma X2_ab K_bm)
                g = (2.0 * K[a, b] * X2[m, a] * K[b, m] - K[m, a] * X2[a, b] * K[b, m]).real
                s[3, r] += -0.25 * g

    for m in range(n):
        for a in range(n):
            Xma = Xm[m, a]
            Kma = K[m, a]
            for b in range(n):
                Kab = K[a, b]
                Xab = Xm[a, b]
                for c in range(n):
                    if not (active[labels[m]] or active[labels[a]]
                            or active[labels[b]] or active[labels[c]]):
                        continue
                    Kbc = K[b, c]
                    Xbc = Xm[b, c]
                    Xcm = Xm[c, m]
                    Kcm = K[c, m]
                    # reduced bracket, weight f4 / 48
                    red = (Xma * Kab * Kbc * Xcm + Kma * Xab * Xbc * Kcm
                           - 2.0 * (Xma * Xab * Kbc * Kcm).real).real
                    # general bracket with indices (m, n, p, q) = (m, a, b, c), weight f4 / 96
                    gen = ((Xma * Kab) * (Kbc * Xcm)
                           + (Xma * Kbc) * (Kab * Xcm)
                           + (Kma * Xbc) * (Xab * Kcm)
                           + (Kma * Xab) * (Xbc * Kcm)
                           - 2.0 * ((Kma * Xab) * (Kbc * Xcm)).real
                           - 2.0 * ((Xma * Kbc) * (Xab * Kcm)).real
                           + 2.0 * ((Xma * Kcm) * (Kab * Xbc - Xab * Kbc)).real).real
                    r = offset[5] + _rank_sorted(m, m, a, b, c, 5, B)
                    s[2, r] += 24.0 * red / 48.0
                    s[3, r] += 24.0 * gen / 96.0

    W = np.zeros((N_CURVES, nc, n_orders))
    ncol = nc * n_orders
    for cv in range(N_CURVES):
        for r in range(nrow):
            sr = s[cv, r]
            if sr != 0.0:
                for j in range(ncol):
                    W[cv, j // n_orders, j % n_orders] += sr * tab[r, j]
    inv_sig = 1.0 / sigma
    for o in range(n_orders):
        fac = inv_sig ** o
        for cv in range(N_CURVES):
            for c in range(nc):
                W[cv, c, o] *= fac
    return centers, active, W


@numba.njit(cache=True)
def accumulate_curves(out, E0, dE, nE, sigma, centers, active, W, window, scale):
    """Add ``scale * sum_c sum_s W[:, c, s] He_s(z) gauss(z)`` to ``out``."""
    n_orders = W.shape[2]
    he = np.empty(n_orders)
    inv_sig = 1.0 / sigma
    for c in range(centers.size):
        if not active[c]:
            continue
        x = centers[c]
        i0 = int(math.ceil((x - window * sigma - E0) / dE))
        i1 = int(math.floor((x + window * sigma - E0) / dE))
        if i0 < 0:
            i0 = 0
        if i1 > nE - 1:
            i1 = nE - 1
        for i in range(i0, i1 + 1):
            z = (E0 + i * dE - x) * inv_sig
            g = math.exp(-0.5 * z * z) * INV_SQRT_2PI * inv_sig * scale
            he[0] = 1.0
            if n_orders > 1:
                he[1] = z
            for o in range(1, n_orders - 1):
                he[o + 1] = z * he[o] - o * he[o - 1]
            for cv in range(W.shape[0]):
                acc = 0.0
                for o in range(n_orders):
                    acc += W[cv, c, o] * he[o]
                out[cv, i] += acc * g


@numba.njit(cache=True)
def sweep_nodes(out, lam, K, Xm, X2, counts, sigma, E0, dE, nE, window, gap, n_terms, scale):
    """Process a batch of nodes sequentially (deterministic order)."""
    e_hi = E0 + (nE - 1) * dE
    for i in range(lam.shape[0]):
        n = counts[i]
        if n == 0:
            continue
        centers, active, W = node_weights(lam[i, :n], K[i, :n, :n], Xm[i, :n, :n],
                                          X2[i, :n, :n], n, sigma, E0, e_hi,
                                          window, gap, n_terms)
        accumulate_curves(out, E0, dE, nE, sigma, centers, active, W, window, scale)
