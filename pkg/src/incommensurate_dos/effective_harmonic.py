"""Critical points of band surfaces and the harmonic effective model.

Near a non-degenerate critical point ``p = (k0, X0)`` of ``E_j(k, X)`` the
band is approximated by ``E(p) + 1/2 (A kappa^2 + 2 B kappa Y + C Y^2)``.
Dropping ``B``, quantization with ``kappa -> -i d/dx`` and ``Y -> eps x``
gives the oscillator

    H_eff = E(p) - 1/2 A d^2/dx^2 + 1/2 eps^2 C x^2,

with levels ``E(p) + eps omega (n + 1/2)``, ``omega = sign(A) sqrt(A C)``,
and eigenfunctions of length ``ell`` with ``ell^2 = |A| / (eps |omega|)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_hermite, eval_laguerre, gammaln

from .bloch_symbol import BandSurface, band_hessian
from .core_model import TWO_PI, DosCurve, EnergyGrid, PotentialSpec, gaussian
from .errors import (DegenerateBandError, DomainError, ModelInapplicableError,
                     UnsupportedOrderError)

SEED_GRID = 256
GRADIENT_TOL = 1e-8
MAX_NEWTON = 50
MERGE_DISTANCE = 1e-4
# |B| above this fraction of sqrt|AC| triggers a warning
B_SMALLNESS = 1e-2
MAX_WIGNER_LEVEL = 10
DEFAULT_WINDOW_HALF = 2.0
LEVEL_MARGIN_SIGMAS = 6.0


@dataclass(frozen=True)
class CriticalPointRecord:
    """A refined critical point of band ``band`` (1-based).

    ``omega`` is ``None`` unless ``A C > 0``.  ``classification`` is one of
    ``min``, ``max``, ``saddle``, ``degenerate``.
    """

    band: int
    k0: float
    X0: float
    energy: float
    A: float
    B: float
    C: float
    omega: float | None
    classification: str
    gradient_norm: float
    iterations: int
    notes: tuple = ()

    @property
    def has_frequency(self) -> bool:
        return self.omega is not None

    def as_dict(self) -> dict:
        return {"band": self.band, "k0": self.k0, "X0": self.X0, "E": self.energy,
                "A": self.A, "B": self.B, "C": self.C, "omega": self.omega,
                "classification": self.classification,
                "gradient_norm": self.gradient_norm, "iterations": self.iterations,
                "notes": list(self.notes)}


def frequency(A: float, C: float):
    """``sign(A) sqrt(A C)``, or ``None`` when ``A C <= 0``."""
    AC = A * C
    if not AC > 0:
        return None
    return math.copysign(math.sqrt(AC), A)


def classify(A: float, B: float, C: float) -> str:
    det = A * C - B * B
    if det > 0:
        return "min" if A > 0 else "max"
    if det < 0:
        return "saddle"
    return "degenerate"


def _wrap_k(k):
    # into (-pi, pi]
    return math.pi - ((math.pi - k) % TWO_PI)


def _wrap_X(X):
    # into (-1/2, 1/2]
    return 0.5 - ((0.5 - X) % 1.0)


def _periodic_distance(a, b):
    dk = abs(a[0] - b[0]) % TWO_PI
    dX = abs(a[1] - b[1]) % 1.0
    return math.hypot(min(dk, TWO_PI - dk), min(dX, 1.0 - dX))


def seed_points(samples: np.ndarray, periodic=(True, True)):
    """Grid nodes that look like extrema or saddles of a sampled surface.

    A node is an extremum candidate if it is ``>=`` (or ``<=``) all eight
    neighbours, and a saddle candidate if the sign of ``neighbour - node``
    changes at least four times around the neighbour ring.  Returns an
    array of ``(i, j)`` index pairs.
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim != 2 or min(S.shape) < 3:
        raise DomainError(f"surface must be 2D with >= 3 nodes per axis, got {S.shape}")
    pad = np.pad(S, 1, mode="wrap")
    if not periodic[0]:
        pad[0, :], pad[-1, :] = np.nan, np.nan
    if not periodic[1]:
        pad[:, 0], pad[:, -1] = np.nan, np.nan
    ring = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    n0, n1 = S.shape
    diffs = np.stack([pad[1 + di:1 + di + n0, 1 + dj:1 + dj + n1] - S for di, dj in ring])
    valid = np.all(np.isfinite(diffs), axis=0)
    with np.errstate(invalid="ignore"):
        is_min = np.all(diffs >= 0, axis=0) & np.any(diffs > 0, axis=0)
        is_max = np.all(diffs <= 0, axis=0) & np.any(diffs < 0, axis=0)
        sgn = np.sign(diffs)
        changes = np.sum(sgn != np.roll(sgn, 1, axis=0), axis=0)
    is_saddle = (changes >= 4) & np.all(sgn != 0, axis=0)
    return np.argwhere(valid & (is_min | is_max | is_saddle))


def refine_critical_point(spec: PotentialSpec, band: int, k: float, X: float, E_cut: float,
                          tol: float = GRADIENT_TOL, max_iter: int = MAX_NEWTON,
                          seed_energy: float = math.nan) -> CriticalPointRecord:
    """Newton iteration on the gradient with the analytic Hessian.

    ``seed_energy`` is reported for degenerate records whose band touches
    a neighbour before any Hessian could be formed.
    """
    notes = []
    it = 0
    hess = None
    g = np.array([np.inf, np.inf])
    try:
        for it in range(1, max_iter + 1):
            hess = band_hessian(spec, band, k, X, E_cut)
            g = hess.gradient
            if np.linalg.norm(g) < tol:
                break
            H = np.array([[hess.A, hess.B], [hess.B, hess.C]])
            if abs(np.linalg.det(H)) < 1e-12 * max(1.0, np.abs(H).max() ** 2):
                notes.append("singular Hessian")
                break
            step = np.linalg.solve(H, -g)
            k, X = k + step[0], X + step[1]
    except DegenerateBandError as exc:
        notes.append(f"band degeneracy (gap {exc.gap:.2e})")
    k, X = _wrap_k(k), _wrap_X(X)
    gnorm = float(np.linalg.norm(g))
    if hess is None or notes or not gnorm < tol:
        if not notes:
            notes.append(f"no convergence after {max_iter} iterations")
        A = B = C = math.nan
        E = seed_energy
        if hess is not None:
            A, B, C, E = hess.A, hess.B, hess.C, hess.energy
        return CriticalPointRecord(band, k, X, E, A, B, C, None, "degenerate", gnorm, it,
                                   tuple(notes))
    A, B, C = hess.A, hess.B, hess.C
    cls = classify(A, B, C)
    omega = frequency(A, C) if cls in ("min", "max") else None
    if omega is not None and abs(B) > B_SMALLNESS * math.sqrt(abs(A * C)):
        notes.append(f"|B| = {abs(B):.3e} is not small; the harmonic model drops it")
    return CriticalPointRecord(band, k, X, hess.energy, A, B, C, omega, cls, gnorm, it,
                               tuple(notes))


def find_critical_points(surface: BandSurface, spec: PotentialSpec | None = None,
                         E_cut: float | None = None) -> list[CriticalPointRecord]:
    """Locate, refine and classify the critical points of a band surface.

    The surface is assumed to sample a full period in ``k`` (length 2 pi)
    and in ``X`` (length 1).  Records are sorted by energy, then ``k0``.
    """
    spec = surface.spec if spec is None else spec
    E_cut = surface.E_cut if E_cut is None else E_cut
    if spec is None:
        raise DomainError("a PotentialSpec is required for refinement")
    seeds = seed_points(surface.samples)
    records: list[CriticalPointRecord] = []
    for i, j in seeds:
        rec = refine_critical_point(spec, surface.j, float(surface.k[i]), float(surface.X[j]), E_cut,
                                    seed_energy=float(surface.samples[i, j]))
        if not _is_duplicate(rec, records):
            records.append(rec)
    records.sort(key=lambda r: (math.inf if math.isnan(r.energy) else r.energy, r.k0, r.X0))
    return records


def _is_duplicate(rec, records):
    for other in records:
        if _periodic_distance((rec.k0, rec.X0), (other.k0, other.X0)) < MERGE_DISTANCE:
            return True
        # flat valleys of X-independent bands collapse to one record per k
        if (rec.classification == other.classification == "degenerate"
                and abs(rec.energy - other.energy) < 1e-8
                and _periodic_distance((rec.k0, 0.0), (other.k0, 0.0)) < MERGE_DISTANCE):
            return True
    return False


# ---------------------------------------------------------------------------
# Oscillator levels and harmonic DoS


def _require_frequency(record: CriticalPointRecord) -> float:
    if record.omega is None:
        raise ModelInapplicableError(
            f"critical point of band {record.band} at ({record.k0:.6g}, {record.X0:.6g}) "
            f"has no oscillator frequency (classification {record.classification})")
    return record.omega


def oscillator_levels(record: CriticalPointRecord, eps: float, n_max: int) -> np.ndarray:
    """``E(p) + eps omega (n + 1/2)`` for ``n = 0..n_max``."""
    omega = _require_frequency(record)
    if eps < 0:
        raise DomainError(f"eps must be >= 0, got {eps}")
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    n = np.arange(n_max + 1)
    return record.energy + eps * omega * (n + 0.5)


@dataclass(frozen=True)
class HarmonicDosModel:
    """Oscillator records contributing to the harmonic DoS.

    A record contributes at ``E`` iff ``|E(p) - E| < window_half``; its
    levels are kept while ``|E_n - E(p)| < window_half + 6 sigma``.
    Records without a frequency are skipped.
    """

    records: tuple
    eps: float
    sigma: float
    window_half: float = DEFAULT_WINDOW_HALF

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(r for r in self.records if r.has_frequency))
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not self.window_half > 0:
            raise DomainError(f"window_half must be positive, got {self.window_half}")

    def level_count(self, record: CriticalPointRecord) -> int:
        reach = self.window_half + LEVEL_MARGIN_SIGMAS * self.sigma
        return int(math.floor(reach / (self.eps * abs(record.omega)) - 0.5)) + 1

    def levels(self, record: CriticalPointRecord) -> np.ndarray:
        return oscillator_levels(record, self.eps, max(0, self.level_count(record) - 1))


def harmonic_dos(model: HarmonicDosModel, grid: EnergyGrid) -> DosCurve:
    """``eps * sum_p sum_n gauss_sigma(E - E_{p,n})`` under the window rule."""
    E = grid.points
    values = np.zeros(grid.n_points)
    for rec in model.records:
        inside = np.abs(E - rec.energy) < model.window_half
        if not inside.any():
            continue
        lev = model.levels(rec)
        values[inside] += model.eps * gaussian(E[inside, None] - lev[None, :], model.sigma).sum(axis=1)
    meta = {"method": "harmonic", "eps": model.eps, "sigma": model.sigma,
            "window_half": model.window_half, "n_records": len(model.records)}
    return DosCurve(grid, values, meta)


# ---------------------------------------------------------------------------
# Wigner transforms


def oscillator_length_squared(record: CriticalPointRecord, eps: float) -> float:
    omega = _require_frequency(record)
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return abs(record.A) / (eps * abs(omega))


def _check_level(n):
    if not 0 <= n <= MAX_WIGNER_LEVEL or int(n) != n:
        raise UnsupportedOrderError(f"oscillator level must be an integer in 0..{MAX_WIGNER_LEVEL}, got {n}")
    return int(n)


def hermite_function(n: int, x, ell: float) -> np.ndarray:
    """Normalized oscillator eigenfunction of length ``ell``."""
    n = _check_level(n)
    x = np.asarray(x, dtype=float) / ell
    lognorm = -0.5 * (n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi) + math.log(ell))
    return math.exp(lognorm) * eval_hermite(n, x) * np.exp(-0.5 * x * x)


def wigner_closed_form(n: int, kappa, Y, ell: float) -> np.ndarray:
    """``(-1)^n / pi exp(-r) L_n(2 r)`` with ``r = Y^2 / ell^2 + ell^2 kappa^2``."""
    n = _check_level(n)
    r = np.asarray(Y, dtype=float) ** 2 / ell**2 + ell**2 * np.asarray(kappa, dtype=float) ** 2
    return (-1.0) ** n / math.pi * np.exp(-r) * eval_laguerre(n, 2.0 * r)


def wigner_direct(n: int, kappa, Y, ell: float, n_nodes: int = 4001) -> np.ndarray:
    """Defining integral ``1/pi int u(Y + y) u(Y - y) exp(2 i kappa y) dy``.

    Trapezoid rule on ``|y| <= ell (sqrt(2 n + 1) + 10)``; ``u`` is real so
    only the cosine part survives.
    """
    n = _check_level(n)
    kappa, Y = np.broadcast_arrays(np.asarray(kappa, dtype=float), np.asarray(Y, dtype=float))
    R = ell * (math.sqrt(2 * n + 1) + 10.0)
    y = np.linspace(-R, R, n_nodes)
    out = np.empty(kappa.shape)
    for idx in np.ndindex(kappa.shape):
        prod = hermite_function(n, Y[idx] + y, ell) * hermite_function(n, Y[idx] - y, ell)
        out[idx] = np.trapezoid(prod * np.cos(2.0 * kappa[idx] * y), y) / math.pi
    return out


@dataclass(frozen=True)
class WignerField:
    """Wigner transform of the ``n``-th oscillator state on a ``(k, X)`` window.

    ``values[i, j]`` is the (real) transform at ``(k[i], X[j])`` with
    ``kappa = k - k0`` and ``Y = (X - X0) / eps``.
    """

    n: int
    eps: float
    record: CriticalPointRecord
    k: np.ndarray
    X: np.ndarray
    values: np.ndarray
    ell: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def normalization(self) -> float:
        """``int int W dkappa dY`` by the trapezoid rule (equals 1 for a full window)."""
        Y = (self.X - self.record.X0) / self.eps
        return float(np.trapezoid(np.trapezoid(self.values, Y, axis=1), self.k))


def wigner_field(record: CriticalPointRecord, eps: float, n: int, n_k: int = 201,
                 n_X: int = 201, extent: float | None = None) -> WignerField:
    """Closed-form Wigner transform sampled around ``(k0, X0)``.

    The window covers ``|kappa| <= extent / ell`` and
    ``|Y| <= extent * ell``; the default ``extent`` is
    ``sqrt(2 n + 1) + 5``, which contains all but a negligible part of
    the state.
    """
    n = _check_level(n)
    ell2 = oscillator_length_squared(record, eps)
    ell = math.sqrt(ell2)
    extent = math.sqrt(2 * n + 1) + 5.0 if extent is None else float(extent)
    k = record.k0 + np.linspace(-extent / ell, extent / ell, n_k)
    X = record.X0 + eps * np.linspace(-extent * ell, extent * ell, n_X)
    kappa = (k - record.k0)[:, None]
    Y = ((X - record.X0) / eps)[None, :]
    return WignerField(n, float(eps), record, k, X, wigner_closed_form(n, kappa, Y, ell), ell)


# ---------------------------------------------------------------------------
# Level-set overlay


@dataclass(frozen=True)
class OverlayData:
    """Iso-contours as polylines in ``(k, X)`` coordinates, keyed by level."""

    surface_contours: dict = field(default_factory=dict)
    field_contours: dict = field(default_factory=dict)

    def rows(self):
        """Flat ``(family, level, polyline, k, X)`` tuples for tabular output."""
        for family, data in (("surface", self.surface_contours), ("wigner", self.field_contours)):
            for level, lines in data.items():
                for i, line in enumerate(lines):
                    for k, X in line:
                        yield family, level, i, k, X


def contour_polylines(samples, x_axis, y_axis, levels) -> dict:
    """Marching-squares contours mapped from index to axis coordinates."""
    from skimage.measure import find_contours

    S = np.asarray(samples, dtype=float)
    xi = np.arange(len(x_axis))
    yi = np.arange(len(y_axis))
    out = {}
    for level in levels:
        lines = []
        if np.nanmin(S) < level < np.nanmax(S):
            for c in find_contours(S, level):
                lines.append(np.column_stack([np.interp(c[:, 0], xi, x_axis),
                                              np.interp(c[:, 1], yi, y_axis)]))
        out[float(level)] = lines
    return out


def level_set_overlay(surface: BandSurface, wfield: WignerField, surface_levels=None,
                      field_levels=None, n_levels: int = 8) -> OverlayData:
    """Iso-contours of ``E_j`` and of ``|W|`` over the Wigner window.

    Default levels are ``n_levels`` equally spaced values strictly inside
    the range of each function on the window.
    """
    k, X = np.asarray(surface.k), np.asarray(surface.X)
    if (wfield.k.min() < k.min() or wfield.k.max() > k.max()
            or wfield.X.min() < X.min() or wfield.X.max() > X.max()):
        raise DomainError("Wigner window is not inside the surface window")
    ik = np.nonzero((k >= wfield.k.min()) & (k <= wfield.k.max()))[0]
    iX = np.nonzero((X >= wfield.X.min()) & (X <= wfield.X.max()))[0]
    ik = np.arange(max(ik.min() - 1, 0), min(ik.max() + 2, k.size))
    iX = np.arange(max(iX.min() - 1, 0), min(iX.max() + 2, X.size))
    S = surface.samples[np.ix_(ik, iX)]
    mag = wfield.magnitude

    def default(vals):
        lo, hi = float(np.min(vals)), float(np.max(vals))
        if not hi > lo:
            return []
        return list(lo + (hi - lo) * (np.arange(n_levels) + 0.5) / n_levels)

    surface_levels = default(S) if surface_levels is None else surface_levels
    field_levels = default(mag) if field_levels is None else field_levels
    return OverlayData(contour_polylines(S, k[ik], X[iX], surface_levels),
                       contour_polylines(mag, wfield.k, wfield.X, field_levels))


def table_rows(records) -> list[dict]:
    return [r.as_dict() for r in records]


def warn_large_coupling(records):
    """Emit a warning for every record whose mixed derivative is not small."""
    for r in records:
        for note in r.notes:
            if note.startswith("|B|"):
                warnings.warn(f"band {r.band} at ({r.k0:.4f}, {r.X0:.4f}): {note}", stacklevel=2)
