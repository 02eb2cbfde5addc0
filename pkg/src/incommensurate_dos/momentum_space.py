"""Momentum-space evaluation of the regularized DoS.

For the separable potential, ``H_eps`` couples a plane wave of momentum
``xi`` only to momenta ``xi + G1 + (1 + eps) G2`` with ``(G1, G2)`` in
``(2 pi Z)^2``.  The regularized DoS is the ``xi``-average of the diagonal
matrix element ``[f(H(xi))]_00`` of the lattice operator

    [H(xi)]_{G, G'} = 1/2 |xi + G1 + (1 + eps) G2|^2 delta_{G G'}
                      + v1(G1 - G1') delta_{G2 G2'} + v2(G2 - G2') delta_{G1 G1'},

truncated to ``|G1 + (1+eps) G2| < W`` and ``|G1 - (1+eps) G2| < L``:

    nu(E) ~ h / (2 pi) * sum_{xi in grid of [-W, W]} [gauss_sigma(E - H(xi))]_00.

The matrix element is evaluated with Chebyshev moments (kernel polynomial
method) started from the unit vector at ``G = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.sparse.linalg import eigsh

from . import _ms_kernels
from .core_model import TWO_PI, DosCurve, EnergyGrid, GaussianTestFunction, PotentialSpec, gaussian
from .errors import ConfigurationError, DomainError, NumericError
from .parallel import ordered_map

# relative widening of Gershgorin bounds
BOUNDS_MARGIN = 0.05
# tolerated |mu_m| - 1 before the bounds are declared wrong
MOMENT_TOL = 1e-8
# default cap and factor of the fixed moment rule
MAX_MOMENTS = 2**16
FIXED_RULE_FACTOR = 6.0
# Gaussian kernels are summed within this many sigma of their centre
EVAL_WINDOW = 14.0


@dataclass(frozen=True)
class TruncationParams:
    """Momentum window ``W``, slow-direction window ``L``, ``xi``-spacing ``h``."""

    W: float
    L: float
    h: float

    def __post_init__(self):
        for name in ("W", "L", "h"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive, got {v}")

    def as_dict(self) -> dict:
        return {"W": self.W, "L": self.L, "h": self.h}


REDUCED_PROFILE = TruncationParams(40.0, 800.0, 0.1)
_PUBLISHED = {0.4: (80.0, 4000.0, 0.05), 0.08: (80.0, 5000.0, 0.01), 0.04: (80.0, 6000.0, 0.005)}


def error_balance_defaults(sigma: float) -> TruncationParams:
    """Truncation parameters for smearing ``sigma``.

    The published triplets are returned for ``sigma`` in {0.4, 0.08, 0.04};
    otherwise ``W = 80``, ``h`` proportional to ``sigma`` and ``L``
    proportional to ``sigma^-1 log(1/sigma)``, anchored at ``sigma = 0.4``.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    for s, triple in _PUBLISHED.items():
        if abs(sigma - s) <= 1e-12 * s:
            return TruncationParams(*triple)
    s0 = 0.4
    W0, L0, h0 = _PUBLISHED[s0]

    def growth(s):
        # sigma^-1 log(1/sigma) is not positive for sigma >= 1; use log(e/sigma)
        return math.log(math.e / s) / s

    return TruncationParams(W0, L0 * growth(sigma) / growth(s0), h0 * sigma / s0)


# ---------------------------------------------------------------------------
# Lattice structure


@dataclass(frozen=True)
class LatticeStructure:
    """Index set and couplings shared by all ``xi`` at fixed ``(eps, W, L)``."""

    eps: float
    W: float
    L: float
    n2: np.ndarray      # block labels
    lo: np.ndarray      # first n1 of each block
    hi: np.ndarray      # last n1 of each block
    start: np.ndarray   # storage offset of each block
    u: np.ndarray       # G1 + (1 + eps) G2 of every stored point
    c1: np.ndarray      # c1[d] = v1(2 pi d), d >= 0
    c2: np.ndarray
    zero_index: int

    @property
    def dim(self) -> int:
        return self.u.size

    def index_set(self) -> np.ndarray:
        """``(n1, n2)`` of every stored point, in storage order."""
        out = np.empty((self.dim, 2), dtype=np.int64)
        for b in range(self.n2.size):
            s = self.start[b]
            w = self.hi[b] - self.lo[b] + 1
            out[s:s + w, 0] = np.arange(self.lo[b], self.hi[b] + 1)
            out[s:s + w, 1] = self.n2[b]
        return out

    def diagonal(self, xi: float) -> np.ndarray:
        return 0.5 * (xi + self.u) ** 2 + self.c1[0] + self.c2[0]

    def radius(self) -> np.ndarray:
        return _ms_kernels.row_radius(self.lo, self.hi, self.start, self.c1, self.c2, self.dim)


def _n1_range(a, b):
    # integers n with a < 2 pi n < b
    lo = math.floor(a / TWO_PI) + 1
    hi = math.ceil(b / TWO_PI) - 1
    return lo, hi


def lattice_structure(spec: PotentialSpec, eps: float, W: float, L: float,
                      coupling_tol: float = 1e-16) -> LatticeStructure:
    """Enumerate ``|G1 + (1+eps) G2| < W``, ``|G1 - (1+eps) G2| < L``.

    Couplings with ``|v_j(2 pi d)| < coupling_tol * A_j`` are dropped.
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if not (W > 0 and L > 0):
        raise ConfigurationError(f"W and L must be positive, got W={W}, L={L}")
    s = 1.0 + eps
    n2max = int(math.ceil((W + L) / (2.0 * TWO_PI * s))) + 1
    blocks = []
    for n2 in range(-n2max, n2max + 1):
        g2 = s * TWO_PI * n2
        lo1, hi1 = _n1_range(-W - g2, W - g2)
        lo2, hi2 = _n1_range(-L + g2, L + g2)
        lo, hi = max(lo1, lo2), min(hi1, hi2)
        # exact re-check of the strict inequalities at the range ends
        while lo <= hi and not _inside(lo, n2, s, W, L):
            lo += 1
        while hi >= lo and not _inside(hi, n2, s, W, L):
            hi -= 1
        if lo <= hi:
            blocks.append((n2, lo, hi))
    if not blocks:
        raise ConfigurationError(f"empty index set for W={W}, L={L}, eps={eps}")
    n2 = np.array([b[0] for b in blocks], dtype=np.int64)
    lo = np.array([b[1] for b in blocks], dtype=np.int64)
    hi = np.array([b[2] for b in blocks], dtype=np.int64)
    width = hi - lo + 1
    start = np.concatenate([[0], np.cumsum(width)[:-1]]).astype(np.int64)
    u = np.concatenate([TWO_PI * (np.arange(l, h + 1) + s * m) for m, l, h in blocks])
    zb = np.nonzero(n2 == 0)[0]
    if zb.size == 0 or not lo[zb[0]] <= 0 <= hi[zb[0]]:
        raise ConfigurationError("index set does not contain G = (0, 0)")
    zero_index = int(start[zb[0]] - lo[zb[0]])
    D1 = min(spec.coupling_range(1, coupling_tol), int(width.max()))
    D2 = min(spec.coupling_range(2, coupling_tol), int(n2.size))
    c1 = spec.coefficients(1, TWO_PI * np.arange(D1 + 1))
    c2 = spec.coefficients(2, TWO_PI * np.arange(D2 + 1))
    return LatticeStructure(float(eps), float(W), float(L), n2, lo, hi, start, u,
                            np.ascontiguousarray(c1), np.ascontiguousarray(c2), zero_index)


def _inside(n1, n2, s, W, L):
    g1 = TWO_PI * n1
    g2 = s * TWO_PI * n2
    return abs(g1 + g2) < W and abs(g1 - g2) < L


@dataclass(frozen=True)
class MomentumLatticeOperator:
    """Truncated lattice operator at base momentum ``xi``."""

    structure: LatticeStructure
    xi: float

    @property
    def dim(self) -> int:
        return self.structure.dim

    @property
    def diag(self) -> np.ndarray:
        return self.structure.diagonal(self.xi)

    def matvec(self, x) -> np.ndarray:
        st = self.structure
        x = np.ascontiguousarray(x, dtype=float)
        y = np.zeros_like(x)
        _ms_kernels.cheb_step(y, x, self.diag, 1.0, st.lo, st.hi, st.start, st.c1, st.c2)
        return y

    def to_dense(self) -> np.ndarray:
        """Dense matrix (small instances only)."""
        n = self.dim
        if n > 20000:
            raise DomainError(f"dimension {n} too large for a dense matrix")
        return np.stack([self.matvec(e) for e in np.eye(n)], axis=1)

    def gershgorin_bounds(self, margin: float = BOUNDS_MARGIN):
        d = self.diag
        r = self.structure.radius()
        a, b = float(np.min(d - r)), float(np.max(d + r))
        pad = margin * (b - a) if b > a else margin * max(1.0, abs(a))
        return a - pad, b + pad


def build_lattice_operator(spec: PotentialSpec, eps: float, xi: float,
                           trunc: TruncationParams) -> MomentumLatticeOperator:
    st = lattice_structure(spec, eps, trunc.W, trunc.L)
    return MomentumLatticeOperator(st, float(xi))


# ---------------------------------------------------------------------------
# Chebyshev expansion


def _rescale(a, b):
    return 0.5 * (a + b), 0.5 * (b - a)


def chebyshev_nodes(n: int) -> np.ndarray:
    """Gauss-Chebyshev nodes ``cos(pi (k + 1/2) / n)``, descending."""
    return np.cos(math.pi * (np.arange(n) + 0.5) / n)


def gaussian_chebyshev_coefficients(E, sigma, a, b, n_moments):
    """Chebyshev coefficients of ``gauss_sigma(E - y)`` on ``[a, b]``.

    Gauss-Chebyshev quadrature on ``2 * n_moments`` nodes; returns an array
    of shape ``(len(E), n_moments)``.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    c, r = _rescale(a, b)
    N = 2 * n_moments
    y = c + r * chebyshev_nodes(N)
    vals = gaussian(E[:, None] - y[None, :], sigma)
    coef = dct(vals, type=2, axis=1) / N
    coef[:, 0] *= 0.5
    return coef[:, :n_moments]


def jackson_kernel(n_moments: int) -> np.ndarray:
    m = np.arange(n_moments)
    N = n_moments + 1
    return ((N - m) * np.cos(math.pi * m / N) + np.sin(math.pi * m / N) / math.tan(math.pi / N)) / N


@dataclass(frozen=True)
class ChebyshevPlan:
    """Moment count, spectral bounds and kernel for one Chebyshev expansion."""

    n_moments: int
    a: float
    b: float
    kernel: str = "none"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError(f"bounds must satisfy b > a, got ({self.a}, {self.b})")
        if self.n_moments < 3:
            raise DomainError(f"n_moments must be >= 3, got {self.n_moments}")
        if self.kernel not in ("none", "jackson"):
            raise DomainError(f"unknown kernel {self.kernel!r}")

    @property
    def center(self):
        return 0.5 * (self.a + self.b)

    @property
    def radius(self):
        return 0.5 * (self.b - self.a)

    def damping(self) -> np.ndarray:
        if self.kernel == "jackson":
            return jackson_kernel(self.n_moments)
        return np.ones(self.n_moments)

    def coefficients(self, f: GaussianTestFunction) -> np.ndarray:
        return gaussian_chebyshev_coefficients(f.center, f.sigma, self.a, self.b,
                                               self.n_moments)[0] * self.damping()


def fixed_moment_count(a, b, sigma, factor=FIXED_RULE_FACTOR, cap=MAX_MOMENTS) -> int:
    """``ceil(factor (b - a) / sigma)`` capped at ``cap``."""
    return int(min(cap, max(3, math.ceil(factor * (b - a) / sigma))))


def adaptive_moment_count(a, b, sigma, E_lo, E_hi, tol=1e-13, max_moments=2**20) -> int:
    """Smallest ``M`` beyond which every Chebyshev coefficient is below ``tol * max f``.

    Coefficients are computed for the Gaussians centred at ``E_lo``,
    ``E_hi`` and the energy of ``[E_lo, E_hi]`` closest to the middle of
    ``[a, b]`` (the slowest-decaying one).  An envelope test is used rather
    than a tail sum, which would be dominated by the round-off floor of the
    transform.  Falls back to the uncapped fixed rule if the envelope is
    never met.
    """
    c, r = _rescale(a, b)
    trial = int(min(max_moments, max(16, math.ceil(FIXED_RULE_FACTOR * (b - a) / sigma))))
    probes = np.unique(np.clip([E_lo, E_hi, c], E_lo, E_hi))
    coef = gaussian_chebyshev_coefficients(probes, sigma, a, b, trial)
    fmax = 1.0 / (sigma * math.sqrt(TWO_PI))
    envelope = np.maximum.accumulate(np.abs(coef[:, ::-1]), axis=1)[:, ::-1].max(axis=0)
    ok = np.nonzero(envelope < tol * fmax)[0]
    m = int(ok[0]) if ok.size else trial
    return max(3, m)


def make_plan(a, b, sigma, E_lo=None, E_hi=None, rule="adaptive", kernel="none",
              tol=1e-13) -> ChebyshevPlan:
    if rule == "fixed":
        M = fixed_moment_count(a, b, sigma)
    elif rule == "adaptive":
        lo = a if E_lo is None else E_lo
        hi = b if E_hi is None else E_hi
        M = adaptive_moment_count(a, b, sigma, lo, hi, tol)
    else:
        raise DomainError(f"unknown moment rule {rule!r}")
    return ChebyshevPlan(M, float(a), float(b), kernel, {"rule": rule, "tol": tol})


def moments(op: MomentumLatticeOperator, plan: ChebyshevPlan) -> np.ndarray:
    st = op.structure
    c, r = plan.center, plan.radius
    d = op.diag
    if d.min() < plan.a or d.max() > plan.b:
        raise NumericError("plan bounds do not bracket the operator diagonal; widen the bounds")
    mu = _ms_kernels.chebyshev_moments(d - c, 1.0 / r, st.lo, st.hi, st.start, st.c1, st.c2,
                                       st.zero_index, plan.n_moments)
    worst = float(np.max(np.abs(mu)))
    if not math.isfinite(worst) or worst > 1.0 + MOMENT_TOL:
        raise NumericError(
            f"Chebyshev moments diverge (max |mu| = {worst:.3e}); spectral bounds "
            f"[{plan.a:.6g}, {plan.b:.6g}] are too narrow, widen them")
    return mu


def kpm_local_dos(op: MomentumLatticeOperator, f: GaussianTestFunction, plan: ChebyshevPlan) -> float:
    """``[f(H)]_00`` as ``sum_m c_m mu_m``."""
    return float(np.dot(plan.coefficients(f), moments(op, plan)))


def moments_dense(H, plan: ChebyshevPlan, index: int = 0) -> np.ndarray:
    """Chebyshev moments ``<e_i| T_m(Ht) |e_i>`` of a dense Hermitian matrix."""
    H = np.asarray(H)
    c, r = plan.center, plan.radius
    Ht = (H - c * np.eye(H.shape[0])) / r
    v0 = np.zeros(H.shape[0], dtype=H.dtype)
    v0[index] = 1.0
    v1 = Ht @ v0
    mu = np.empty(plan.n_moments)
    mu[0] = 1.0
    mu[1] = v1[index].real
    for m in range(2, plan.n_moments):
        v0, v1 = v1, 2.0 * (Ht @ v1) - v0
        mu[m] = v1[index].real
    return mu


def dense_gershgorin(H, margin=BOUNDS_MARGIN):
    H = np.asarray(H)
    d = np.real(np.diag(H))
    r = np.sum(np.abs(H), axis=1) - np.abs(np.diag(H))
    a, b = float(np.min(d - r)), float(np.max(d + r))
    pad = margin * (b - a) if b > a else margin * max(1.0, abs(a))
    return a - pad, b + pad


def dense_lanczos_bounds(H, margin=BOUNDS_MARGIN):
    """Extremal Ritz values widened by their residual norms and ``margin``.

    Gershgorin discs of a dense matrix overshoot the spectrum by a factor
    growing like ``sqrt(n)``, which inflates the moment count by the same
    factor.  Each Ritz value is within its residual of an eigenvalue, and
    the Chebyshev recursion is checked for divergence, so a loose residual
    estimate cannot go unnoticed.
    """
    H = np.asarray(H)
    n = H.shape[0]
    if n <= 32:
        return dense_gershgorin(H, margin)
    ends = []
    for which in ("SA", "LA"):
        theta, vec = eigsh(H, k=1, which=which, tol=1e-8)
        res = float(np.linalg.norm(H @ vec[:, 0] - theta[0] * vec[:, 0]))
        ends.append((float(theta[0]), res))
    (a, ra), (b, rb) = ends
    pad = margin * (b - a)
    return a - ra - pad, b + rb + pad


def kpm_dense(H, f: GaussianTestFunction, rule="adaptive", index=0, bounds="lanczos") -> float:
    """KPM evaluation of ``[f(H)]_ii`` for a dense Hermitian matrix.

    ``bounds`` is ``"lanczos"`` (tight, default) or ``"gershgorin"``.
    """
    if bounds == "lanczos":
        a, b = dense_lanczos_bounds(H)
    elif bounds == "gershgorin":
        a, b = dense_gershgorin(H)
    else:
        raise ConfigurationError(f"unknown bounds rule {bounds!r}")
    plan = make_plan(a, b, f.sigma, f.center, f.center, rule=rule)
    mu = moments_dense(H, plan, index)
    if not np.all(np.abs(mu) <= 1.0 + MOMENT_TOL):
        raise NumericError("Chebyshev moments diverge; spectral bounds are too narrow")
    return float(np.dot(plan.coefficients(f), mu))


# ---------------------------------------------------------------------------
# DoS curve


def xi_grid(W: float, h: float):
    """Midpoints of the uniform partition of ``[-W, W]`` into cells of width ~h.

    Returns ``(nodes, h_eff)`` where ``h_eff = 2 W / round(2 W / h)``.
    """
    n = max(2, int(round(2.0 * W / h)))
    h_eff = 2.0 * W / n
    return -W + h_eff * (np.arange(n) + 0.5), h_eff


def _sum_nodes(G, a, b, grid: EnergyGrid, sigma):
    """``out[E] = sum_k gauss_sigma(E - e_k) G[k]`` with Chebyshev node energies."""
    N = G.size
    c, r = _rescale(a, b)
    e = (c + r * chebyshev_nodes(N))[::-1]
    G = G[::-1]
    out = np.empty(grid.n_points)
    w = EVAL_WINDOW * sigma
    for i, E in enumerate(grid.points):
        i0, i1 = np.searchsorted(e, [E - w, E + w])
        out[i] = np.dot(gaussian(E - e[i0:i1], sigma), G[i0:i1])
    return out


def momentum_space_dos(spec: PotentialSpec, eps: float, grid: EnergyGrid, sigma: float,
                       trunc: TruncationParams, threads=None, rule: str = "adaptive",
                       kernel: str = "none", tol: float = 1e-13, n_buckets: int = 8,
                       use_symmetry: bool = True) -> DosCurve:
    """Regularized DoS ``h / (2 pi) sum_xi [gauss_sigma(E - H(xi))]_00`` on ``grid``.

    The ``xi`` nodes are grouped into ``n_buckets`` ranges of ``|xi|``; all
    nodes of a bucket share one set of spectral bounds and one Chebyshev
    plan, so their weighted moments can be summed before the (linear)
    reconstruction.  With ``use_symmetry`` only ``xi > 0`` is computed and
    weighted twice, which is exact for even wells.
    """
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    st = lattice_structure(spec, eps, trunc.W, trunc.L)
    xi, h_eff = xi_grid(trunc.W, trunc.h)
    weights = np.full(xi.size, h_eff / TWO_PI)
    if use_symmetry:
        keep = xi > 0
        weights = np.where(keep, 2.0 * weights, weights)
        keep |= np.isclose(xi, 0.0, atol=1e-14 * trunc.W)
        xi, weights = xi[keep], weights[keep]
    order = np.argsort(np.abs(xi), kind="stable")
    xi, weights = xi[order], weights[order]
    radius = st.radius()
    dmin = st.c1[0] + st.c2[0]
    groups = np.array_split(np.arange(xi.size), max(1, min(n_buckets, xi.size)))
    total = np.zeros(grid.n_points)
    plans = []
    for g in groups:
        if g.size == 0:
            continue
        ximax = np.abs(xi[g]).max()
        a = float(np.min(dmin - radius))
        b = float(np.max(0.5 * (ximax + np.abs(st.u)) ** 2 + dmin + radius))
        pad = BOUNDS_MARGIN * (b - a)
        plan = make_plan(a - pad, b + pad, sigma, grid.E_min, grid.E_max, rule, kernel, tol)
        plans.append(plan)
        c, r = plan.center, plan.radius

        def one(j, plan=plan, c=c, r=r):
            d = st.diagonal(xi[j])
            mu = _ms_kernels.chebyshev_moments(d - c, 1.0 / r, st.lo, st.hi, st.start,
                                               st.c1, st.c2, st.zero_index, plan.n_moments)
            worst = float(np.max(np.abs(mu)))
            if not math.isfinite(worst) or worst > 1.0 + MOMENT_TOL:
                raise NumericError(
                    f"Chebyshev moments diverge at xi={xi[j]} (max |mu| = {worst:.3e}); "
                    "widen the spectral bounds")
            return mu

        acc = np.zeros(plan.n_moments)
        for j, mu in zip(g, ordered_map(one, g, threads)):
            acc += weights[j] * mu
        acc *= plan.damping()
        N = 2 * plan.n_moments
        padded = np.zeros(N)
        padded[:plan.n_moments] = acc
        Gk = dct(padded, type=3) / N
        total += _sum_nodes(Gk, plan.a, plan.b, grid, sigma)
    meta = {"method": "momentum-space", "eps": float(eps), "sigma": float(sigma),
            **trunc.as_dict(), "h_eff": h_eff, "dim": st.dim, "n_xi": int(xi.size),
            "moment_rule": rule, "kernel": kernel, "tol": tol, "n_buckets": len(plans),
            "n_moments": [p.n_moments for p in plans], "symmetry": bool(use_symmetry),
            **spec.as_dict()}
    return DosCurve(grid, total, meta, signed=False)
