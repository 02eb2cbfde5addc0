"""Second-order semiclassical expansion of the regularized DoS.

For a Gaussian test function ``f = gauss_sigma(E - .)`` the regularized
DoS of ``H_eps`` is approximated by ``L0(f) + eps L1(f) + eps^2 L2(f)``,
where each ``L_j`` is a phase-space average over ``(k, X)`` in
``(-pi, pi] x (-1/2, 1/2]`` of band sums built from the eigen-data of the
symbol:

* ``L0``: ``sum_n f(lambda_n)``;
* ``L1``: ``-1/2 sum_mn f2(m; n) Im(K_mn X_nm)``, times the orientation
  sign ``FIRST_ORDER_ORIENTATION``;
* ``L2``: terms in ``f''``, ``f3`` and ``f4`` contracted with ``K``,
  ``X`` and ``X2``.  Two algebraically equivalent forms exist (a general
  form and a shorter one valid in one dimension); both are evaluated.

All averages carry the factor ``1 / (2 pi)`` and use the midpoint rule on
uniform periodic grids.  Band sums keep the bands below
``E_max + 20 sigma + band_margin`` at each node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _sc_kernels
from .bloch_symbol import (band_cutoff, diagonalize_batch, midpoint_grid,
                           planewave_basis)
from .core_model import TWO_PI, DosCurve, EnergyGrid, PotentialSpec
from .divided_differences import CLUSTER_GAP, TAYLOR_TERMS
from .errors import DomainError
from .parallel import ordered_map

# Gaussians are evaluated within this many sigma of their centre
EVAL_WINDOW = 14.0
# X-chunk size bounding the memory of batched diagonalization
X_CHUNK = 1000
# Sign of the first-order term for H_eps = -1/2 d^2 + v1(x) + v2((1 + eps) x).
# With the symbol built on v2(x + X), the Weyl correspondence of the Bloch
# convention used here maps X to -eps x, so the odd term flips; a rational
# eps = 1/N supercell calculation confirms the sign.
FIRST_ORDER_ORIENTATION = -1.0


@dataclass(frozen=True)
class SemiclassicalQuadrature:
    """Phase-space grid and band truncation for the ``L_j`` integrals."""

    n_k: int = 200
    n_X: int = 500
    E_cut: float = 2000.0
    band_margin: float = 10.0

    def __post_init__(self):
        if self.n_k < 2 or self.n_X < 2:
            raise DomainError(f"n_k and n_X must be >= 2, got {self.n_k}, {self.n_X}")
        if not self.E_cut > 0:
            raise DomainError(f"E_cut must be positive, got {self.E_cut}")
        if not self.band_margin >= 0:
            raise DomainError(f"band_margin must be >= 0, got {self.band_margin}")

    @classmethod
    def full(cls):
        """Grid of the published figures (10^7 nodes)."""
        return cls(n_k=1000, n_X=10000, E_cut=10000.0)

    def as_dict(self) -> dict:
        return {"n_k": self.n_k, "n_X": self.n_X, "E_cut": self.E_cut,
                "band_margin": self.band_margin}


@dataclass(frozen=True)
class ExpansionResult:
    """``L0``, ``L1``, ``L2`` on an energy grid; ``L2_general`` is the
    general-form evaluation of ``L2`` kept for cross-checking."""

    L0: DosCurve
    L1: DosCurve
    L2: DosCurve
    L2_general: DosCurve
    meta: dict = field(default_factory=dict)

    def combined(self, eps: float) -> DosCurve:
        if eps < 0:
            raise DomainError(f"eps must be >= 0, got {eps}")
        if eps == 0:
            values = self.L0.values.copy()
        else:
            values = self.L0.values + eps * self.L1.values + eps**2 * self.L2.values
        meta = dict(self.meta)
        meta.update(method="semiclassical-order2", eps=eps)
        return DosCurve(self.L0.grid, values, meta, signed=True)


def _k_row(spec, quad, k, X, sigma, E0, dE, nE, cutoff, gap, n_terms):
    basis = planewave_basis(float(k), quad.E_cut)
    out = np.zeros((_sc_kernels.N_CURVES, nE))
    scale = 1.0 / (quad.n_k * quad.n_X)
    for start in range(0, X.size, X_CHUNK):
        Xc = X[start:start + X_CHUNK]
        data = diagonalize_batch(spec, basis, Xc, cutoff=cutoff)
        counts = np.count_nonzero(data.lambdas < cutoff, axis=1).astype(np.int64)
        nb = data.K.shape[-1]
        if nb == 0:
            continue
        _sc_kernels.sweep_nodes(
            out, np.ascontiguousarray(data.lambdas[:, :nb]),
            np.ascontiguousarray(data.K), np.ascontiguousarray(data.Xm),
            np.ascontiguousarray(data.X2), counts, sigma, E0, dE, nE,
            EVAL_WINDOW, gap, n_terms, scale)
    return out


@lru_cache(maxsize=16)
def _expansion_arrays(spec: PotentialSpec, quad: SemiclassicalQuadrature, grid: EnergyGrid,
                      sigma: float, threads: int | None, gap: float, n_terms: int):
    k = midpoint_grid(quad.n_k, -math.pi, TWO_PI)
    X = midpoint_grid(quad.n_X, -0.5, 1.0)
    cutoff = band_cutoff(grid.E_max, sigma, quad.band_margin)
    nE = grid.n_points

    def row(kk):
        return _k_row(spec, quad, kk, X, sigma, grid.E_min, grid.spacing, nE, cutoff,
                      gap, n_terms)

    total = np.zeros((_sc_kernels.N_CURVES, nE))
    for part in ordered_map(row, k, threads):
        total += part
    # the per-node weight (2 pi / n_k)(1 / n_X) / (2 pi) is applied in _k_row
    return total


def expansion_terms(spec: PotentialSpec, quad: SemiclassicalQuadrature, grid: EnergyGrid,
                    sigma: float, threads=None, gap: float = CLUSTER_GAP,
                    n_terms: int = TAYLOR_TERMS) -> ExpansionResult:
    """Evaluate ``L0``, ``L1`` and both forms of ``L2`` in one sweep."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    arr = _expansion_arrays(spec, quad, grid, float(sigma), threads, gap, n_terms)
    meta = {"sigma": float(sigma), **quad.as_dict(), **spec.as_dict(),
            "l1_orientation": FIRST_ORDER_ORIENTATION,
            "band_cutoff": band_cutoff(grid.E_max, sigma, quad.band_margin)}
    curves = [
        DosCurve(grid, arr[0], {**meta, "method": "semiclassical-L0"}, signed=False),
        DosCurve(grid, FIRST_ORDER_ORIENTATION * arr[1], {**meta, "method": "semiclassical-L1"},
                 signed=True),
        DosCurve(grid, arr[2], {**meta, "method": "semiclassical-L2"}, signed=True),
        DosCurve(grid, arr[3], {**meta, "method": "semiclassical-L2-general"}, signed=True),
    ]
    return ExpansionResult(*curves, meta=meta)


def l0_curve(spec, quad, grid, sigma, threads=None) -> DosCurve:
    return expansion_terms(spec, quad, grid, sigma, threads).L0


def l1_curve(spec, quad, grid, sigma, threads=None) -> DosCurve:
    return expansion_terms(spec, quad, grid, sigma, threads).L1


def l2_curve_1d(spec, quad, grid, sigma, threads=None) -> DosCurve:
    return expansion_terms(spec, quad, grid, sigma, threads).L2


def l2_curve_general(spec, quad, grid, sigma, threads=None) -> DosCurve:
    return expansion_terms(spec, quad, grid, sigma, threads).L2_general


def expansion_dos(spec, eps, quad, grid, sigma, threads=None) -> ExpansionResult:
    """Expansion terms plus the combined second-order curve in ``meta``."""
    res = expansion_terms(spec, quad, grid, sigma, threads)
    res.meta["combined"] = res.combined(eps)
    return res


# ---------------------------------------------------------------------------
# Per-node integrands (used to cross-check forms on synthetic data)


def node_integrands(lambdas, K, Xm, X2, grid: EnergyGrid, sigma: float,
                    gap: float = CLUSTER_GAP, n_terms: int = TAYLOR_TERMS) -> np.ndarray:
    """Band-sum integrands of one node on ``grid``, shape ``(4, n_points)``.

    Rows: ``L0``, ``L1``, ``L2`` (reduced form), ``L2`` (general form);
    no phase-space weight and no orientation sign are applied, so row 1 is
    the literal band sum ``-1/2 sum f2 Im(K X)``.  ``lambdas`` must be ascending.
    """
    lam = np.ascontiguousarray(lambdas, dtype=float)
    if np.any(np.diff(lam) < 0):
        raise DomainError("lambdas must be ascending")
    n = lam.size
    out = np.zeros((_sc_kernels.N_CURVES, grid.n_points))
    _sc_kernels.sweep_nodes(
        out, lam[None, :], np.ascontiguousarray(K, dtype=complex)[None],
        np.ascontiguousarray(Xm, dtype=complex)[None],
        np.ascontiguousarray(X2, dtype=complex)[None], np.array([n], dtype=np.int64),
        float(sigma), grid.E_min, grid.spacing, grid.n_points, EVAL_WINDOW, gap,
        n_terms, 1.0)
    return out
