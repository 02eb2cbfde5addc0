"""Model definition: two periodic Gaussian wells, Gaussian test functions,
energy grids and sampled curves.

The Hamiltonian is

    H_eps = -1/2 d^2/dx^2 + v1_per(x) + v2_per((1 + eps) x),

where each ``vj_per`` is the 1-periodic sum of a negative Gaussian well
``-A_j * gauss_{sigma_j}(x - R)`` over ``R`` in the integers.  Every
numerical method in the package consumes the potential through its Fourier
coefficients, which are known in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, NumericError, UnsupportedOrderError

TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(TWO_PI)

# lattice-membership tolerance for G / (2 pi)
_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class PotentialSpec:
    """Amplitudes and widths of the two Gaussian wells.

    Parameters
    ----------
    wells : sequence of (float, float)
        ``(A_j, sigma_j)`` for ``j = 1`` (potential periodic in ``x``) and
        ``j = 2`` (potential periodic in ``(1 + eps) x``).  ``sigma_j`` is the
        standard deviation of the well, the lattice constant is 1.
    """

    wells: tuple = ((7.0, 0.05), (5.0, 0.05))

    def __post_init__(self):
        wells = tuple((float(a), float(s)) for a, s in self.wells)
        if len(wells) != 2:
            raise DomainError(f"expected two wells, got {len(wells)}")
        for j, (a, s) in enumerate(wells, start=1):
            if not math.isfinite(a):
                raise DomainError(f"well {j}: amplitude must be finite, got {a}")
            if not (s > 0.0 and math.isfinite(s)):
                raise DomainError(f"well {j}: width must be positive, got {s}")
        object.__setattr__(self, "wells", wells)

    @classmethod
    def from_parameters(cls, A1=7.0, A2=5.0, sigma1=0.05, sigma2=0.05):
        return cls(((A1, sigma1), (A2, sigma2)))

    @classmethod
    def free(cls, sigma=0.05):
        """Zero potential (both amplitudes vanish)."""
        return cls(((0.0, sigma), (0.0, sigma)))

    @property
    def amplitudes(self):
        return tuple(a for a, _ in self.wells)

    @property
    def widths(self):
        return tuple(s for _, s in self.wells)

    @property
    def is_free(self) -> bool:
        return all(a == 0.0 for a, _ in self.wells)

    def coefficients(self, well_index: int, G):
        """Closed-form Fourier coefficients, vectorised, without lattice check.

        ``G`` is assumed to lie in ``2 pi Z``; see :func:`fourier_coefficient`
        for the checked scalar version.
        """
        a, s = self.wells[_well(well_index)]
        G = np.asarray(G, dtype=float)
        return -a * np.exp(-0.5 * (s * G) ** 2)

    def coupling_range(self, well_index: int, rel_tol: float = 1e-16) -> int:
        """Largest ``n`` with ``|v_j(2 pi n)| >= rel_tol * A_j``."""
        _, s = self.wells[_well(well_index)]
        # exp(-(s G)^2 / 2) >= rel_tol  <=>  |G| <= sqrt(-2 log rel_tol) / s
        gmax = math.sqrt(-2.0 * math.log(rel_tol)) / s
        return int(math.floor(gmax / TWO_PI))

    def as_dict(self) -> dict:
        (a1, s1), (a2, s2) = self.wells
        return {"A1": a1, "A2": a2, "sigma1": s1, "sigma2": s2}


def _well(well_index: int) -> int:
    if well_index not in (1, 2):
        raise DomainError(f"well_index must be 1 or 2, got {well_index}")
    return well_index - 1


def fourier_coefficient(spec: PotentialSpec, well_index: int, G: float) -> complex:
    """Unit-cell Fourier coefficient of the periodized well ``j``.

    Returns ``-A_j exp(-sigma_j^2 G^2 / 2)``, i.e. the integral of
    ``v_per(x) exp(-i G x)`` over one cell.

    Raises
    ------
    DomainError
        If ``G`` is not an integer multiple of ``2 pi``.
    """
    n = G / TWO_PI
    if not math.isfinite(n) or abs(n - round(n)) > _LATTICE_TOL * max(1.0, abs(n)):
        raise DomainError(f"G = {G!r} is not in 2*pi*Z")
    return complex(spec.coefficients(well_index, TWO_PI * round(n)))


def periodized_well(spec: PotentialSpec, well_index: int, x, n_sigma: float = 12.0):
    """Real-space value of the periodized well ``j`` at ``x`` (period 1).

    Images with ``|x - R| > n_sigma * sigma_j`` are dropped; at the default
    cut their contribution is below ``A_j * 1e-31``.  Used as a test oracle.
    """
    a, s = spec.wells[_well(well_index)]
    x = np.asarray(x, dtype=float)
    frac = x - np.floor(x)
    rmax = int(math.ceil(n_sigma * s)) + 1
    out = np.zeros_like(frac)
    for R in range(-rmax, rmax + 2):
        d = frac - R
        keep = np.abs(d) <= n_sigma * s
        out += np.where(keep, np.exp(-0.5 * (d / s) ** 2), 0.0)
    return -a / (s * SQRT_2PI) * out


def fourier_series_well(spec: PotentialSpec, well_index: int, x, n_max: int):
    """Partial Fourier sum of the periodized well over ``|G| <= 2 pi n_max``."""
    x = np.asarray(x, dtype=float)
    n = np.arange(-n_max, n_max + 1)
    G = TWO_PI * n
    c = spec.coefficients(well_index, G)
    return np.real(np.exp(1j * np.multiply.outer(x, G)) @ c)


# ---------------------------------------------------------------------------
# Gaussian test function


def hermite_table(z, max_order: int):
    """Probabilists' Hermite polynomials ``He_0 .. He_max_order`` at ``z``.

    Returns an array of shape ``(max_order + 1,) + z.shape``.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty((max_order + 1,) + z.shape)
    out[0] = 1.0
    if max_order >= 1:
        out[1] = z
    for n in range(1, max_order):
        out[n + 1] = z * out[n] - n * out[n - 1]
    return out


def gaussian(x, sigma):
    """Normalised Gaussian ``exp(-x^2 / 2 sigma^2) / (sigma sqrt(2 pi))``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * SQRT_2PI)


@dataclass(frozen=True)
class GaussianTestFunction:
    """``f(y) = gauss_sigma(E - y)``, the smearing kernel centred at ``E``.

    ``f`` extends to an entire function, so it belongs to every analytic
    test-function class used by the semiclassical error bounds.
    """

    center: float
    sigma: float

    MAX_PUBLIC_ORDER = 4

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.center):
            raise DomainError(f"center must be finite, got {self.center}")

    def value(self, y):
        return gaussian(np.asarray(y, dtype=float) - self.center, self.sigma)

    def derivatives(self, y, max_order: int):
        """All y-derivatives of orders ``0 .. max_order`` at ``y``.

        ``d^n/dy^n gauss(E - y) = sigma^-n He_n((E - y)/sigma) gauss(E - y)``.
        Any order is allowed here; the checked public entry point is
        :meth:`derivative`.
        """
        y = np.asarray(y, dtype=float)
        z = (self.center - y) / self.sigma
        he = hermite_table(z, max_order)
        scale = self.sigma ** -np.arange(max_order + 1, dtype=float)
        scale = scale.reshape((-1,) + (1,) * z.ndim)
        return he * scale * gaussian(self.center - y, self.sigma)

    def derivative(self, y, order: int = 0):
        if not 0 <= order <= self.MAX_PUBLIC_ORDER:
            raise UnsupportedOrderError(
                f"derivative order {order} unsupported (0..{self.MAX_PUBLIC_ORDER})"
            )
        return self.derivatives(y, order)[order]


def evaluate_test_function(f: GaussianTestFunction, y, order: int = 0):
    """``order``-th derivative of ``y -> gauss_sigma(E - y)`` at ``y``."""
    return f.derivative(y, order)


# ---------------------------------------------------------------------------
# Grids and curves


@dataclass(frozen=True)
class EnergyGrid:
    E_min: float = -20.0
    E_max: float = 20.0
    n_points: int = 801

    def __post_init__(self):
        if not self.E_min < self.E_max:
            raise DomainError(f"E_min ({self.E_min}) must be < E_max ({self.E_max})")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise DomainError(f"n_points must be an integer >= 2, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        return (self.E_max - self.E_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.E_min, self.E_max, self.n_points)

    def window_mask(self, lo, hi):
        E = self.points
        return (E >= lo - 1e-12) & (E <= hi + 1e-12)


# tolerated negative excursion of a direct DoS curve
NEGATIVITY_TOL = 1e-8


@dataclass(frozen=True)
class DosCurve:
    """Values sampled on an :class:`EnergyGrid` plus provenance metadata.

    ``signed=False`` marks a direct density-of-states curve; those must be
    nonnegative up to ``NEGATIVITY_TOL``.  Expansion coefficients and
    differences are ``signed=True``.
    """

    grid: EnergyGrid
    values: np.ndarray
    meta: Mapping = field(default_factory=dict)
    signed: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        values.setflags(write=False)
        if values.shape != (self.grid.n_points,):
            raise DomainError(
                f"values has shape {values.shape}, grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(values)):
            raise NumericError("curve contains non-finite values")
        if not self.signed and values.min(initial=0.0) < -NEGATIVITY_TOL:
            raise NumericError(
                f"direct DoS curve has negative value {values.min():.3e} "
                f"(tolerance {NEGATIVITY_TOL:g})"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def energies(self) -> np.ndarray:
        return self.grid.points

    def with_values(self, values, signed=None, **meta):
        m = dict(self.meta)
        m.update(meta)
        return DosCurve(self.grid, values, m, self.signed if signed is None else signed)


def free_dos_smeared(E, sigma, n_quad: int = 4001):
    """Gaussian-smeared free DoS ``(pi sqrt(2 e))^-1 * gauss_sigma`` at ``E``.

    The square-root singularity at ``e = 0`` is removed with ``e = t^2 / 2``,
    so that ``int_0^inf gauss(E - e) de / (pi sqrt(2 e)) =
    int_0^inf gauss(E - t^2/2) dt / pi``, which is evaluated by Gauss-Legendre
    quadrature on ``[0, t_max]``.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    t_max = math.sqrt(2.0 * (max(E.max(), 0.0) + 40.0 * sigma))
    x, w = np.polynomial.legendre.leggauss(n_quad)
    t = 0.5 * t_max * (x + 1.0)
    w = 0.5 * t_max * w
    vals = gaussian(E[:, None] - 0.5 * t[None, :] ** 2, sigma) @ w / math.pi
    return vals

