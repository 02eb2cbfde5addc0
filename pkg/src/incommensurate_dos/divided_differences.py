"""Weighted divided differences of a test function.

With ``f[x_0, ..., x_n]`` the ordinary (confluent) divided difference::

    f2(a; b)       = 2  f[a, a, b]
    f3(a; b, c)    = 6  f[a, a, b, c]
    f4(a; b, c, d) = 24 f[a, a, b, c, d]

:class:`DividedDifferenceKernel` implements these through the explicit
branch ladder (difference quotients, with closed forms whenever arguments
coincide up to a relative tolerance ``tau_c``).  Difference quotients lose
accuracy when arguments are close but not coincident, so the semiclassical
curves use :func:`divided_difference` / the compiled tables in
``_sc_kernels`` instead; those replace near-coincident groups of nodes by a
Taylor expansion about the group centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_model import GaussianTestFunction

DEFAULT_TAU_C = 1e-6
# nodes closer than this many sigma are grouped for Taylor evaluation
CLUSTER_GAP = 0.1
# Taylor terms beyond the divided-difference order
TAYLOR_TERMS = 12
# ladder hand-off: the closed forms divide by gap^4, so below LADDER_NEAR * sigma
# the kernel uses the cluster expansion with clusters this wide; radius up to
# ~sigma needs ~30 terms for a 1e-14 remainder
LADDER_NEAR = 0.5
LADDER_TAYLOR_TERMS = 30


@dataclass(frozen=True)
class PolynomialProbe:
    """Polynomial stand-in for the test function (exactness checks only).

    ``coefficients[i]`` multiplies ``y**i``.
    """

    coefficients: tuple

    @classmethod
    def monomial(cls, degree: int):
        return cls(tuple([0.0] * degree + [1.0]))

    def derivative(self, y, order: int = 0):
        p = np.polynomial.Polynomial(self.coefficients).deriv(order)
        return p(np.asarray(y, dtype=float))

    def derivatives(self, y, max_order: int):
        return np.stack([self.derivative(y, n) for n in range(max_order + 1)])


class DividedDifferenceKernel:
    """Branch-ladder evaluation of ``f2``, ``f3``, ``f4``.

    Parameters
    ----------
    f : GaussianTestFunction or PolynomialProbe
        Anything with ``derivative(y, order)`` for orders up to 4 and
        ``derivatives(y, max_order)``.
    tau_c : float
        Arguments ``x, y`` are treated as equal when
        ``|x - y| < tau_c * max(1, |x|, |y|)``.
    near : float or None
        Argument sets containing a pair that is distinct but closer than
        ``near * scale`` are delegated to :func:`divided_difference`, because
        the quotients of the ladder lose about ``eps / gap^n`` there.
        ``None`` disables the delegation (pure ladder).
    scale : float or None
        Length scale of ``f``; defaults to ``f.sigma`` when present, else 1.
    """

    def __init__(self, f, tau_c: float = DEFAULT_TAU_C, near: float | None = LADDER_NEAR,
                 scale: float | None = None):
        self.f = f
        self.tau_c = float(tau_c)
        self.near = near
        self.scale = float(scale if scale is not None else getattr(f, "sigma", 1.0))

    def _delegate(self, args) -> bool:
        if self.near is None:
            return False
        lim = self.near * self.scale
        for i in range(len(args)):
            for j in range(i + 1, len(args)):
                d = abs(args[i] - args[j])
                if d < lim and not self.same(args[i], args[j]):
                    return True
        return False

    def _taylor(self, nodes, weight):
        return weight * divided_difference(self.f, nodes, self.scale, self.near,
                                           LADDER_TAYLOR_TERMS)

    def _d(self, y, n):
        return float(self.f.derivative(y, n))

    def same(self, x, y) -> bool:
        return abs(x - y) < self.tau_c * max(1.0, abs(x), abs(y))

    # f2 and its derivatives in the second argument ----------------------

    def f2(self, a, b):
        if self._delegate((a, b)):
            return self._taylor([a, a, b], 2.0)
        if self.same(a, b):
            return self._d(a, 2)
        h = b - a
        return 2.0 * (self._d(b, 0) - self._d(a, 0) - h * self._d(a, 1)) / h**2

    def _f2_db(self, a, b):
        """d f2(a; b) / db."""
        if self.same(a, b):
            return self._d(a, 3) / 3.0
        h = b - a
        g = self._d(b, 0) - self._d(a, 0) - h * self._d(a, 1)
        return 2.0 * (self._d(b, 1) - self._d(a, 1)) / h**2 - 4.0 * g / h**3

    def _f2_dbb(self, a, b):
        """d^2 f2(a; b) / db^2."""
        if self.same(a, b):
            return self._d(a, 4) / 6.0
        h = b - a
        g = self._d(b, 0) - self._d(a, 0) - h * self._d(a, 1)
        g1 = self._d(b, 1) - self._d(a, 1)
        return 2.0 * self._d(b, 2) / h**2 - 8.0 * g1 / h**3 + 12.0 * g / h**4

    # f3 ----------------------------------------------------------------

    def f3(self, a, b, c):
        if self._delegate((a, b, c)):
            return self._taylor([a, a, b, c], 6.0)
        if not self.same(b, c):
            return 3.0 * (self.f2(a, c) - self.f2(a, b)) / (c - b)
        if not self.same(a, b):
            h = b - a
            return -12.0 * (self._d(b, 0) - self._d(a, 0)
                            - 0.5 * (self._d(b, 1) + self._d(a, 1)) * h) / h**3
        return self._d(a, 3)

    def _f3_dc(self, a, b, c):
        """d f3(a; b, c) / dc for b != c."""
        h = c - b
        return 3.0 * (self._f2_db(a, c) * h - (self.f2(a, c) - self.f2(a, b))) / h**2

    # f4 ----------------------------------------------------------------

    def f4(self, a, b, c, d):
        if self._delegate((a, b, c, d)):
            return self._taylor([a, a, b, c, d], 24.0)
        if not self.same(c, d):
            return 4.0 * (self.f3(a, b, d) - self.f3(a, b, c)) / (d - c)
        if not self.same(b, c):
            return 4.0 * self._f3_dc(a, b, c)
        if not self.same(a, b):
            return 6.0 * self._f2_dbb(a, b)
        return self._d(a, 4)


# ---------------------------------------------------------------------------
# Robust confluent divided differences



def _clusters(x, gap):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    labels = np.zeros(x.size, dtype=int)
    lab = 0
    for i in range(1, xs.size):
        if xs[i] - xs[i - 1] > gap:
            lab += 1
        labels[i] = lab
    return xs, labels


def divided_difference(f, nodes, scale: float, gap: float = CLUSTER_GAP,
                       taylor_terms: int = TAYLOR_TERMS) -> float:
    """Confluent divided difference ``f[x_0, ..., x_n]`` (repeats allowed).

    Nodes are sorted and split into groups wherever consecutive nodes are
    more than ``gap * scale`` apart.  Within one group the divided
    difference is the Taylor series about the group midpoint,
    ``sum_t f^(n+t)(c) / (n+t)! * h_t(x - c)`` with ``h_t`` the complete
    homogeneous symmetric polynomial; across groups the usual recursion is
    applied, whose denominators are then bounded below by ``gap * scale``.

    ``f`` must expose ``derivatives(y, max_order)``; for a Gaussian,
    ``scale`` should be its width.
    """
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("nodes must be a nonempty 1D sequence")
    xs, labels = _clusters(x, gap * scale)
    n = xs.size - 1
    max_order = n + taylor_terms
    centers = {}
    for lab in np.unique(labels):
        members = xs[labels == lab]
        centers[lab] = 0.5 * (members[0] + members[-1])
    derivs = {lab: np.asarray(f.derivatives(c, max_order), dtype=float)
              for lab, c in centers.items()}
    memo = {}

    def rec(i, j):
        key = (i, j)
        if key in memo:
            return memo[key]
        if labels[i] == labels[j]:
            lab = labels[i]
            y = xs[i:j + 1] - centers[lab]
            h = np.zeros(taylor_terms + 1)
            h[0] = 1.0
            for yy in y:
                for t in range(1, taylor_terms + 1):
                    h[t] += yy * h[t - 1]
            m = j - i
            fact = np.array([math.factorial(m + t) for t in range(taylor_terms + 1)], dtype=float)
            val = float(np.sum(derivs[lab][m:m + taylor_terms + 1] * h / fact))
        else:
            val = (rec(i + 1, j) - rec(i, j - 1)) / (xs[j] - xs[i])
        memo[key] = val
        return val

    return rec(0, n)


def robust_f2(f, a, b, scale):
    return 2.0 * divided_difference(f, [a, a, b], scale)


def robust_f3(f, a, b, c, scale):
    return 6.0 * divided_difference(f, [a, a, b, c], scale)


def robust_f4(f, a, b, c, d, scale):
    return 24.0 * divided_difference(f, [a, a, b, c, d], scale)


def kernel_for(center: float, sigma: float, tau_c: float = DEFAULT_TAU_C) -> DividedDifferenceKernel:
    return DividedDifferenceKernel(GaussianTestFunction(center, sigma), tau_c)

