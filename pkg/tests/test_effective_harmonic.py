import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import norm

from incommensurate_dos import effective_harmonic as eh
from incommensurate_dos.bloch_symbol import BandSurface, X_grid, band_surface, band_surfaces, k_grid
from incommensurate_dos.core_model import EnergyGrid
from incommensurate_dos.errors import DomainError, ModelInapplicableError, UnsupportedOrderError
from oracles import supercell_dos

# published (E, A, C, omega) at the labelled critical points of bands 1-3
PUBLISHED = {
    "1": (-14.046, -1.435, -132.008, -13.762),
    "2": (-7.662, 2.618, 210.261, 23.461),
    "3&4": (10.133, -32.886, -1692.295, -235.907),
    "5&6": (11.287, 36.267, 1910.1673, 263.204),
}


def record(E=-7.662, A=2.618, C=210.261, k0=math.pi, X0=0.5, band=2, B=0.0):
    omega = eh.frequency(A, C)
    return eh.CriticalPointRecord(band, k0, X0, E, A, B, C, omega, eh.classify(A, B, C), 0.0, 1)


@pytest.fixture(scope="module")
def model_records(model):
    surfaces = band_surfaces(model, [1, 2, 3], k_grid(64), X_grid(64), 2000.0)
    return {j: eh.find_critical_points(surfaces[j]) for j in (1, 2, 3)}


def nearest(records, E):
    return min(records, key=lambda r: abs(r.energy - E))


class TestCriticalPoints:
    def test_band_one_extremum(self, model_records):
        E, A, C, omega = PUBLISHED["1"]
        r = nearest(model_records[1], E)
        assert r.classification == "max"
        assert (r.k0, r.X0) == pytest.approx((math.pi, 0.5), abs=1e-9)
        assert r.energy == pytest.approx(E, abs=5e-3)
        assert r.A == pytest.approx(A, rel=5e-3) and r.C == pytest.approx(C, rel=5e-3)
        assert r.omega == pytest.approx(omega, rel=5e-3)

    def test_band_two_minimum(self, model_records):
        E, A, C, omega = PUBLISHED["2"]
        r = nearest(model_records[2], E)
        assert r.classification == "min"
        assert r.energy == pytest.approx(E, abs=5e-3)
        assert r.A == pytest.approx(A, rel=5e-3) and r.C == pytest.approx(C, rel=5e-3)
        assert r.omega == pytest.approx(omega, rel=5e-3)

    @pytest.mark.parametrize("band,label,kind", [(2, "3&4", "max"), (3, "5&6", "min")])
    def test_symmetric_pairs(self, model_records, band, label, kind):
        E, A, C, omega = PUBLISHED[label]
        pair = [r for r in model_records[band] if r.classification == kind and abs(r.energy - E) < 0.05]
        assert len(pair) == 2
        a, b = pair
        assert a.X0 == pytest.approx(-b.X0, abs=1e-8) and a.k0 == pytest.approx(0.0, abs=1e-9)
        for x, y in ((a.energy, b.energy), (a.A, b.A), (a.B, b.B), (a.C, b.C)):
            assert abs(x - y) < 1e-6
        assert a.energy == pytest.approx(E, abs=5e-3)
        assert abs(a.omega) == pytest.approx(abs(omega), rel=5e-3)

    def test_record_invariants(self, model_records):
        for recs in model_records.values():
            for r in recs:
                if r.classification == "degenerate":
                    continue
                assert r.gradient_norm < 1e-6
                if r.omega is None:
                    assert r.A * r.C - r.B**2 <= 0 or r.classification == "saddle"
                else:
                    assert abs(r.omega - math.copysign(math.sqrt(r.A * r.C), r.A)) < 1e-10
                    assert abs(r.B) < 1e-2 * math.sqrt(abs(r.A * r.C))

    def test_sorted_output(self, model_records):
        for recs in model_records.values():
            keys = [(r.energy, r.k0) for r in recs]
            assert keys == sorted(keys)

    def test_free_potential_is_degenerate(self, free):
        surf = band_surface(free, 1, k_grid(16), X_grid(8), 200.0)
        recs = eh.find_critical_points(surf)
        assert recs
        assert all(r.omega is None for r in recs)
        assert any(r.classification == "degenerate" for r in recs)

    def test_seed_points_on_synthetic_surface(self):
        k, X = np.linspace(-math.pi, math.pi, 41), np.linspace(-0.5, 0.5, 41)
        S = np.cos(k)[:, None] + 0.3 * np.cos(2 * math.pi * X)[None, :]
        seeds = {(k[i], X[j]) for i, j in eh.seed_points(S[:-1, :-1])}
        # max at (0, 0), min at (pi, 1/2), saddles at (0, 1/2) and (pi, 0)
        for pt in ((0.0, 0.0), (-math.pi, -0.5), (0.0, -0.5), (-math.pi, 0.0)):
            assert any(abs(a - pt[0]) < 1e-12 and abs(b - pt[1]) < 1e-12 for a, b in seeds)
        with pytest.raises(DomainError):
            eh.seed_points(np.zeros((2, 5)))

    def test_classification_and_frequency(self):
        assert eh.classify(1.0, 0.0, 2.0) == "min"
        assert eh.classify(-1.0, 0.0, -2.0) == "max"
        assert eh.classify(1.0, 0.0, -2.0) == "saddle"
        assert eh.classify(1.0, 1.0, 1.0) == "degenerate"
        assert eh.frequency(-4.0, -9.0) == -6.0
        assert eh.frequency(1.0, -1.0) is None and eh.frequency(0.0, 3.0) is None

    def test_large_coupling_warning(self):
        r = eh.CriticalPointRecord(1, 0.0, 0.0, 0.0, 1.0, 0.5, 1.0, 1.0, "min", 0.0, 1,
                                   ("|B| = 5.000e-01 is not small; the harmonic model drops it",))
        with pytest.warns(UserWarning, match="not small"):
            eh.warn_large_coupling([r])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            eh.warn_large_coupling([record()])


class TestOscillatorLevels:
    def test_zero_eps(self):
        assert np.all(eh.oscillator_levels(record(), 0.0, 5) == -7.662)

    def test_published_ground_level(self):
        r = record()
        assert r.omega == pytest.approx(23.461, abs=1e-3)
        assert eh.oscillator_levels(r, 0.01, 0)[0] == pytest.approx(-7.5447, abs=1e-4)

    def test_missing_frequency(self):
        saddle = record(A=1.0, C=-3.0)
        with pytest.raises(ModelInapplicableError):
            eh.oscillator_levels(saddle, 0.01, 3)
        with pytest.raises(ModelInapplicableError):
            eh.oscillator_length_squared(saddle, 0.01)

    def test_validation(self):
        with pytest.raises(DomainError):
            eh.oscillator_levels(record(), -0.1, 3)
        with pytest.raises(DomainError):
            eh.oscillator_levels(record(), 0.1, -1)

    @given(st.floats(1e-4, 0.1), st.integers(0, 30))
    def test_levels_are_arithmetic(self, eps, n_max):
        r = record()
        lev = eh.oscillator_levels(r, eps, n_max)
        assert lev.size == n_max + 1
        assert lev[0] == pytest.approx(r.energy + 0.5 * eps * r.omega)
        assert np.allclose(np.diff(lev), eps * r.omega)


def local_maxima(values):
    i = np.nonzero((values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:]))[0] + 1
    return i


class TestHarmonicDos:
    def test_peak_spacing(self):
        r = record()
        grid = EnergyGrid(-7.65, -6.0, 1651)
        curve = eh.harmonic_dos(eh.HarmonicDosModel((r,), 0.01, 0.04), grid)
        peaks = grid.points[local_maxima(curve.values)]
        assert peaks.size >= 5
        assert np.allclose(np.diff(peaks), 0.01 * r.omega, atol=2e-3)
        assert np.mean(np.diff(peaks)) == pytest.approx(0.2346, abs=1e-3)

    @pytest.mark.parametrize("eps,omega,sigma", [(0.01, 25.0, 0.02), (0.0095, 23.461, 0.02)])
    def test_mass(self, eps, omega, sigma):
        r = record(A=omega**2 / 210.261)
        model = eh.HarmonicDosModel((r,), eps, sigma)
        grid = EnergyGrid(r.energy - 3.0, r.energy + 3.0, 12001)
        curve = eh.harmonic_dos(model, grid)
        lev = eh.oscillator_levels(r, eps, 1000)
        inside = int(np.count_nonzero(np.abs(lev - r.energy) < model.window_half))
        assert np.trapezoid(curve.values, grid.points) == pytest.approx(eps * inside, rel=0.01)

    def test_window_rule(self):
        far = record(E=5.0)
        near = record()
        grid = EnergyGrid(-20, 20, 801)
        model = eh.HarmonicDosModel((near, far), 0.01, 0.04)
        curve = eh.harmonic_dos(model, grid)
        off = np.abs(grid.points - near.energy) >= 2.0
        off &= np.abs(grid.points - far.energy) >= 2.0
        assert np.all(curve.values[off] == 0.0)
        assert curve.meta["n_records"] == 2

    def test_records_without_frequency_are_skipped(self):
        model = eh.HarmonicDosModel((record(), record(A=1.0, C=-1.0)), 0.01, 0.04)
        assert len(model.records) == 1

    def test_maximum_levels_descend(self):
        r = record(E=-14.046, A=-1.435, C=-132.008, band=1)
        model = eh.HarmonicDosModel((r,), 0.01, 0.4)
        lev = model.levels(r)
        assert np.all(np.diff(lev) < 0)
        assert lev[-1] >= r.energy - 2.0 - 6 * 0.4
        assert lev[-1] + 0.01 * r.omega < r.energy - 2.0 - 6 * 0.4 + 1e-12

    def test_small_eps_limit_is_smeared_step(self):
        # eps sum_n delta_sigma(E - E_n) -> (1/omega) Phi((E - E(p)) / sigma) as the
        # level spacing eps omega drops far below sigma
        r = record()
        grid = EnergyGrid(-9.0, -6.0, 301)
        step = norm.cdf((grid.points - r.energy) / 0.4) / r.omega
        inside = np.abs(grid.points - r.energy) < 1.5
        errs = []
        for eps in (1e-2, 1e-3):
            curve = eh.harmonic_dos(eh.HarmonicDosModel((r,), eps, 0.4), grid)
            errs.append(np.max(np.abs(curve.values - step)[inside]))
        # a midpoint sum in the level index, so the error is second order in eps
        assert errs[1] < 1e-4 / r.omega
        assert errs[1] < errs[0] / 50

    def test_levels_match_exact_supercell_peaks(self, model, model_records):
        # eps = 1/100 makes H_eps exactly periodic; its DoS near the band-2
        # minimum must show one peak per oscillator level
        r = nearest(model_records[2], PUBLISHED["2"][0])
        E = np.linspace(-8.0, -6.5, 301)
        nu = supercell_dos(model, 100, E, 0.04, 1000.0, n_q=8)
        i = np.nonzero((nu[1:-1] > nu[:-2]) & (nu[1:-1] >= nu[2:]))[0] + 1
        peaks = E[i][(E[i] >= -7.8) & (E[i] <= -6.8)]
        levels = eh.oscillator_levels(r, 0.01, 10)
        assert peaks.size >= 3
        assert max(np.min(np.abs(levels - p)) for p in peaks) < 0.04
        assert np.mean(np.diff(peaks)) == pytest.approx(0.01 * r.omega, rel=0.1)

    def test_validation(self):
        for bad in (dict(eps=0.0), dict(sigma=-1.0), dict(window_half=0.0)):
            kw = dict(eps=0.01, sigma=0.04) | bad
            with pytest.raises(DomainError):
                eh.HarmonicDosModel((record(),), **kw)


class TestWigner:
    def test_ground_state_positive_with_central_max(self):
        f = eh.wigner_field(record(), 0.01, 0)
        assert np.all(f.values > 0)
        i, j = np.unravel_index(np.argmax(f.values), f.values.shape)
        assert f.k[i] == pytest.approx(math.pi) and f.X[j] == pytest.approx(0.5)

    def test_first_excited_negative_at_centre(self):
        ell = math.sqrt(eh.oscillator_length_squared(record(), 0.01))
        direct = eh.wigner_direct(1, 0.0, 0.0, ell)
        assert direct < 0
        assert direct == pytest.approx(-1 / math.pi, abs=1e-6)
        f = eh.wigner_field(record(), 0.01, 1)
        assert f.values[f.k.size // 2, f.X.size // 2] < 0

    @pytest.mark.parametrize("n", range(5))
    def test_closed_form_against_integral(self, n):
        ell = 1.7
        rng = np.random.default_rng(n)
        kappa = rng.uniform(-2.5 / ell, 2.5 / ell, 12)
        Y = rng.uniform(-2.5 * ell, 2.5 * ell, 12)
        a = eh.wigner_closed_form(n, kappa, Y, ell)
        b = eh.wigner_direct(n, kappa, Y, ell)
        assert np.max(np.abs(a - b)) < 1e-6

    @pytest.mark.parametrize("n", [0, 1, 4, 10])
    def test_normalization(self, n):
        f = eh.wigner_field(record(), 0.01, n, n_k=301, n_X=301)
        assert f.normalization() == pytest.approx(1.0, abs=1e-3)
        assert np.isrealobj(f.values)

    def test_hermite_functions_orthonormal(self):
        x = np.linspace(-15, 15, 6001)
        U = np.array([eh.hermite_function(n, x, 1.3) for n in range(6)])
        gram = np.trapezoid(U[:, None, :] * U[None, :, :], x, axis=2)
        assert np.allclose(gram, np.eye(6), atol=1e-10)

    def test_level_limits(self):
        with pytest.raises(UnsupportedOrderError):
            eh.wigner_field(record(), 0.01, 11)
        with pytest.raises(UnsupportedOrderError):
            eh.wigner_closed_form(-1, 0.0, 0.0, 1.0)
        with pytest.raises(ModelInapplicableError):
            eh.wigner_field(record(A=1.0, C=-1.0), 0.01, 0)

    def test_window_scaling(self):
        r = record()
        f = eh.wigner_field(r, 0.01, 0)
        ell2 = eh.oscillator_length_squared(r, 0.01)
        assert ell2 == pytest.approx(abs(r.A) / (0.01 * abs(r.omega)))
        assert f.k[-1] - r.k0 == pytest.approx(6.0 / math.sqrt(ell2))
        assert f.X[-1] - r.X0 == pytest.approx(0.01 * 6.0 * math.sqrt(ell2))


def fake_surface(values, k, X):
    return BandSurface(2, np.asarray(k), np.asarray(X), np.asarray(values), 0.0)


class TestOverlay:
    def test_constant_surface_has_no_contours(self):
        f = eh.wigner_field(record(), 0.01, 0, n_k=41, n_X=41)
        k = np.linspace(f.k[0] - 0.1, f.k[-1] + 0.1, 30)
        X = np.linspace(f.X[0] - 0.01, f.X[-1] + 0.01, 30)
        ov = eh.level_set_overlay(fake_surface(np.full((30, 30), 3.0), k, X), f)
        assert ov.surface_contours == {}
        assert ov.field_contours
        ov = eh.level_set_overlay(fake_surface(np.full((30, 30), 3.0), k, X), f, surface_levels=[3.0])
        assert ov.surface_contours == {3.0: []}

    def test_circle_radius(self):
        x = np.linspace(-1, 1, 201)
        R2 = x[:, None] ** 2 + x[None, :] ** 2
        out = eh.contour_polylines(R2, x, x, [0.25, 0.49])
        dx = x[1] - x[0]
        for level, lines in out.items():
            assert len(lines) == 1
            line = lines[0]
            assert np.allclose(line[0], line[-1])
            assert np.max(np.abs(np.hypot(line[:, 0], line[:, 1]) - math.sqrt(level))) < dx

    def test_window_outside_surface(self):
        f = eh.wigner_field(record(), 0.01, 0, n_k=21, n_X=21)
        k = np.linspace(f.k[0] + 0.1, f.k[-1], 10)
        X = np.linspace(f.X[0], f.X[-1], 10)
        with pytest.raises(DomainError):
            eh.level_set_overlay(fake_surface(np.zeros((10, 10)), k, X), f)

    def test_rows_flatten_polylines(self):
        line = np.array([[0.0, 1.0], [2.0, 3.0]])
        ov = eh.OverlayData({1.5: [line]}, {0.1: []})
        assert list(ov.rows()) == [("surface", 1.5, 0, 0.0, 1.0), ("surface", 1.5, 0, 2.0, 3.0)]

    def test_model_contours_follow_band_level_sets(self, model):
        # near the band-2 minimum the |W| level sets are close to level sets of E_2
        r = record(E=-7.66249, A=2.61787, C=210.239)
        f = eh.wigner_field(r, 0.01, 0, n_k=121, n_X=121)
        k = np.linspace(f.k[0] - 0.05, f.k[-1] + 0.05, 61)
        X = np.linspace(f.X[0] - 0.005, f.X[-1] + 0.005, 61)
        surf = band_surface(model, 2, k, X, 2000.0)
        peak = float(f.magnitude.max())
        ov = eh.level_set_overlay(surf, f, field_levels=[0.2 * peak, 0.5 * peak])
        interp = RegularGridInterpolator((surf.k, surf.X), surf.samples)
        for lines in ov.field_contours.values():
            E = interp(lines[0])
            rise = E - r.energy
            assert np.std(rise) < 0.1 * np.mean(rise)


def test_table_rows():
    rows = eh.table_rows([record()])
    assert rows[0]["omega"] == pytest.approx(23.461, abs=1e-3) and rows[0]["band"] == 2
