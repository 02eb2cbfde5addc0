"""Operator-valued symbol ``h(k, X)`` on a plane-wave basis.

For fixed quasimomentum ``k`` and disregistry ``X`` the symbol is the
periodic Schrodinger operator

    h(k, X) = 1/2 (-i d/dx + k)^2 + v1_per(x) + v2_per(x + X)

on the unit torus.  In the basis ``exp(i G x)``, ``G`` in ``2 pi Z``, its
matrix entries are

    M[G, G'] = 1/2 (G + k)^2 delta_{G G'} + v1(G - G') + v2(G - G') exp(i (G - G') X).

Besides eigenpairs this module provides the matrix elements of the
velocity ``-i d/dx + k`` and of the first and second ``X``-derivatives of
the potential in the eigenbasis, which feed the semiclassical expansion,
and band Hessians from second-order perturbation theory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import TWO_PI, PotentialSpec
from .errors import DegenerateBandError, DomainError, NumericError
from .parallel import ordered_map

# minimal gap for band Hessians
DEGENERACY_GAP = 1e-6


@dataclass(frozen=True)
class PlanewaveBasis:
    """Reciprocal vectors ``G`` with ``(G + k)^2 / 2 < E_cut``, ascending."""

    k: float
    E_cut: float
    G: np.ndarray

    @property
    def size(self) -> int:
        return self.G.size

    @property
    def momenta(self) -> np.ndarray:
        return self.G + self.k


def planewave_basis(k: float, E_cut: float) -> PlanewaveBasis:
    if not E_cut > 0:
        raise DomainError(f"E_cut must be positive, got {E_cut}")
    kmax = math.sqrt(2.0 * E_cut)
    n_lo = math.floor((-kmax - k) / TWO_PI) - 1
    n_hi = math.ceil((kmax - k) / TWO_PI) + 1
    G = TWO_PI * np.arange(n_lo, n_hi + 1, dtype=float)
    G = G[0.5 * (G + k) ** 2 < E_cut]
    if G.size == 0:
        raise DomainError(f"empty plane-wave basis for k={k}, E_cut={E_cut}")
    G.setflags(write=False)
    return PlanewaveBasis(float(k), float(E_cut), G)


def _difference_kernels(spec: PotentialSpec, basis: PlanewaveBasis):
    D = basis.G[:, None] - basis.G[None, :]
    v1 = spec.coefficients(1, D)
    v2 = spec.coefficients(2, D)
    return D, v1, v2


def symbol_matrices(spec: PotentialSpec, basis: PlanewaveBasis, X) -> np.ndarray:
    """Symbol matrices for an array of disregistries, shape ``X.shape + (N, N)``."""
    X = np.asarray(X, dtype=float)
    D, v1, v2 = _difference_kernels(spec, basis)
    phase = np.exp(1j * np.multiply.outer(X, D))
    M = v2 * phase
    M += v1
    idx = np.arange(basis.size)
    M[..., idx, idx] += 0.5 * basis.momenta ** 2
    return M


def assemble_symbol_matrix(spec: PotentialSpec, basis: PlanewaveBasis, X: float) -> np.ndarray:
    """Hermitian matrix of ``h(k, X)`` in the basis built for ``k``."""
    return symbol_matrices(spec, basis, float(X))


@dataclass(frozen=True)
class SymbolEigenData:
    """Eigen-decomposition of ``h(k, X)`` and derived matrix elements.

    Attributes
    ----------
    lambdas : (N,) ascending eigenvalues.
    vectors : (N, N) plane-wave coefficients, column ``n`` is ``u_n``.
    K : velocity ``<u_m| -i d/dx + k |u_n>``.
    Xm : ``<u_m| d/dX V(., X) |u_n>``.
    X2 : ``<u_m| d^2/dX^2 V(., X) |u_n>``.
    """

    k: float
    X: float
    lambdas: np.ndarray
    vectors: np.ndarray
    K: np.ndarray
    Xm: np.ndarray
    X2: np.ndarray

    @property
    def n_bands(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class SymbolBatch:
    """Eigen-data for many disregistries at one ``k`` (leading axis = X)."""

    k: float
    X: np.ndarray
    lambdas: np.ndarray
    K: np.ndarray
    Xm: np.ndarray
    X2: np.ndarray

    def __len__(self):
        return self.X.size

    def node(self, i: int) -> SymbolEigenData:
        return SymbolEigenData(self.k, float(self.X[i]), self.lambdas[i], None,
                               self.K[i], self.Xm[i], self.X2[i])


def _eigh(M):
    try:
        lam, U = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        herm = float(np.max(np.abs(M - np.swapaxes(M, -1, -2).conj())))
        norm = float(np.max(np.abs(M)))
        raise NumericError(
            f"eigensolver failed ({exc}); max|M|={norm:.3e}, "
            f"max|M - M^H|={herm:.3e}"
        ) from exc
    return lam, U


def diagonalize_batch(spec: PotentialSpec, basis: PlanewaveBasis, X, n_bands=None,
                      cutoff=None) -> SymbolBatch:
    """Diagonalize ``h(k, X)`` for every ``X`` in a 1D array.

    Matrix elements are formed among the lowest ``n_bands`` states only;
    with ``cutoff`` given, ``n_bands`` is the largest number of eigenvalues
    below it over the batch.  All states are kept when both are ``None``.
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    D, _, v2 = _difference_kernels(spec, basis)
    M = symbol_matrices(spec, basis, X)
    lam, U = _eigh(M)
    if cutoff is not None:
        n_bands = int(np.count_nonzero(lam < cutoff, axis=-1).max(initial=0))
    if n_bands is not None:
        U = U[..., :n_bands]
    Uh = np.conj(np.swapaxes(U, -1, -2))
    K = Uh @ (basis.momenta[:, None] * U)
    dV = (1j * D * v2) * np.exp(1j * np.multiply.outer(X, D))
    Xm = Uh @ dV @ U
    dV *= 1j * D
    X2 = Uh @ dV @ U
    return SymbolBatch(basis.k, X, lam, K, Xm, X2)


def diagonalize_symbol(spec: PotentialSpec, basis: PlanewaveBasis, X: float) -> SymbolEigenData:
    """Full eigendecomposition of ``h(k, X)`` with matrix elements."""
    X = float(X)
    D, _, v2 = _difference_kernels(spec, basis)
    lam, U = _eigh(assemble_symbol_matrix(spec, basis, X))
    Uh = U.conj().T
    K = Uh @ (basis.momenta[:, None] * U)
    dV = (1j * D * v2) * np.exp(1j * D * X)
    Xm = Uh @ dV @ U
    X2 = Uh @ ((1j * D) * dV) @ U
    return SymbolEigenData(basis.k, X, lam, U, K, Xm, X2)


def periodic_grid(n: int, start: float, length: float) -> np.ndarray:
    """``n`` uniform points on the half-open interval ``(start, start + length]``."""
    if n < 2:
        raise DomainError(f"grid needs at least 2 points, got {n}")
    return start + length * np.arange(1, n + 1) / n


def midpoint_grid(n: int, start: float, length: float) -> np.ndarray:
    """``n`` cell midpoints of a uniform partition of ``[start, start + length]``."""
    if n < 2:
        raise DomainError(f"grid needs at least 2 points, got {n}")
    return start + length * (np.arange(n) + 0.5) / n


def k_grid(n: int) -> np.ndarray:
    return periodic_grid(n, -math.pi, TWO_PI)


def X_grid(n: int) -> np.ndarray:
    return periodic_grid(n, -0.5, 1.0)


@dataclass(frozen=True)
class BandSurface:
    """Samples ``E_j(k, X)`` on a rectangular grid, shape ``(k.size, X.size)``."""

    j: int
    k: np.ndarray
    X: np.ndarray
    samples: np.ndarray
    E_cut: float
    spec: PotentialSpec | None = None

    @property
    def shape(self):
        return self.samples.shape


def band_surfaces(spec: PotentialSpec, bands, k_values, X_values, E_cut: float,
                  threads=None) -> dict:
    """Several band surfaces from one sweep; returns ``{j: BandSurface}``."""
    bands = [int(j) for j in bands]
    if not bands or min(bands) < 1:
        raise DomainError(f"band indices must be >= 1, got {bands}")
    k_values = np.asarray(k_values, dtype=float)
    X_values = np.asarray(X_values, dtype=float)
    jmax = max(bands)

    def row(k):
        basis = planewave_basis(float(k), E_cut)
        if jmax > basis.size:
            raise DomainError(f"band {jmax} exceeds basis size {basis.size} at k={k}")
        lam = np.linalg.eigvalsh(symbol_matrices(spec, basis, X_values))
        return lam[:, :jmax]

    rows = np.stack(list(ordered_map(row, k_values, threads)))
    return {j: BandSurface(j, k_values, X_values, rows[:, :, j - 1].copy(), E_cut, spec)
            for j in bands}


def band_surface(spec: PotentialSpec, j: int, k_values, X_values, E_cut: float,
                 threads=None) -> BandSurface:
    """Sample band ``j`` (1-based) on the tensor grid ``k_values x X_values``."""
    return band_surfaces(spec, [j], k_values, X_values, E_cut, threads)[j]


@dataclass(frozen=True)
class BandHessian:
    energy: float
    A: float
    B: float
    C: float
    gradient: np.ndarray
    gap: float


def band_hessian(spec: PotentialSpec, j: int, k0: float, X0: float, E_cut: float) -> BandHessian:
    """Gradient and Hessian of band ``j`` at ``(k0, X0)`` by perturbation theory.

    With ``d_n = lambda_j - lambda_n``::

        A = 1 + 2 sum_n |K_jn|^2 / d_n
        B = 2 sum_n Re(K_jn X_nj) / d_n
        C = X2_jj + 2 sum_n |X_jn|^2 / d_n

    Raises
    ------
    DegenerateBandError
        If band ``j`` is within ``DEGENERACY_GAP`` of a neighbour.
    """
    basis = planewave_basis(k0, E_cut)
    if not 1 <= j <= basis.size:
        raise DomainError(f"band {j} outside 1..{basis.size}")
    data = diagonalize_symbol(spec, basis, X0)
    i = j - 1
    lam = data.lambdas
    d = lam[i] - lam
    d[i] = np.inf
    gap = float(np.min(np.abs(d)))
    if gap < DEGENERACY_GAP:
        raise DegenerateBandError(
            f"band {j} at (k={k0}, X={X0}) is degenerate (gap {gap:.3e})", gap)
    Kj = data.K[i]
    Xj = data.Xm[i]
    A = 1.0 + 2.0 * np.sum(np.abs(Kj) ** 2 / d)
    B = 2.0 * np.sum(np.real(Kj * data.Xm[:, i]) / d)
    C = data.X2[i, i].real + 2.0 * np.sum(np.abs(Xj) ** 2 / d)
    grad = np.array([data.K[i, i].real, data.Xm[i, i].real])
    return BandHessian(float(lam[i]), float(A), float(B), float(C), grad, gap)


def band_cutoff(E_max: float, sigma: float, margin: float = 10.0) -> float:
    """Energy below which bands are kept in semiclassical band sums."""
    return E_max + 20.0 * sigma + margin
