import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from incommensurate_dos.bloch_symbol import diagonalize_batch, planewave_basis
from incommensurate_dos.core_model import EnergyGrid, PotentialSpec, free_dos_smeared
from incommensurate_dos.errors import DomainError
from incommensurate_dos.semiclassical import (FIRST_ORDER_ORIENTATION, SemiclassicalQuadrature,
                                              expansion_dos, expansion_terms, l0_curve,
                                              node_integrands)
from oracles import literal_integrands, supercell_dos, synthetic_eigen_data

COARSE = SemiclassicalQuadrature(n_k=48, n_X=64, E_cut=400.0)
# frozen from the trapezoid oracle of the smeared free density (4e5 nodes)
FREE_DOS_AT_8 = {0.4: 0.07965248768830956, 0.08: 0.07958045635418404}


def integrand_scale(arr):
    return max(1.0, float(np.max(np.abs(arr))))


class TestNodeIntegrands:
    @pytest.mark.parametrize("seed,n_bands", [(1, 3), (2, 4), (3, 4)])
    def test_against_literal_formulas(self, seed, n_bands):
        rng = np.random.default_rng(seed)
        lam, K, X, X2 = synthetic_eigen_data(rng, n_bands)
        grid = EnergyGrid(-4, 4, 9)
        mine = node_integrands(lam, K, X, X2, grid, 0.7)
        ref = literal_integrands(lam, K, X, X2, grid.points, 0.7)
        for row in range(4):
            assert np.max(np.abs(mine[row] - ref[row])) <= 1e-10 * integrand_scale(ref[row])

    def test_near_degenerate_bands_against_literal(self):
        # clustered eigenvalues exercise the Taylor branch of the kernel
        rng = np.random.default_rng(7)
        lam, K, X, X2 = synthetic_eigen_data(rng, 4)
        lam = np.array([-0.5, -0.5 + 1e-7, 0.3, 0.3 + 2e-3])
        grid = EnergyGrid(-2, 2, 9)
        mine = node_integrands(lam, K, X, X2, grid, 0.5)
        ref = literal_integrands(lam, K, X, X2, grid.points, 0.5)
        for row in range(4):
            assert np.max(np.abs(mine[row] - ref[row])) <= 1e-9 * integrand_scale(ref[row])

    @given(st.integers(0, 2**32 - 1), st.integers(2, 8))
    def test_general_equals_reduced(self, seed, n_bands):
        rng = np.random.default_rng(seed)
        lam, K, X, X2 = synthetic_eigen_data(rng, n_bands)
        out = node_integrands(lam, K, X, X2, EnergyGrid(-5, 5, 41), 0.6)
        assert np.max(np.abs(out[2] - out[3])) <= 1e-10 * integrand_scale(out[2])

    @given(st.integers(0, 2**32 - 1), st.integers(2, 6))
    def test_gauge_invariance(self, seed, n_bands):
        rng = np.random.default_rng(seed)
        lam, K, X, X2 = synthetic_eigen_data(rng, n_bands)
        D = np.diag(np.exp(1j * rng.uniform(0, 2 * math.pi, n_bands)))
        rot = lambda M: D.conj().T @ M @ D
        grid = EnergyGrid(-4, 4, 17)
        a = node_integrands(lam, K, X, X2, grid, 0.6)
        b = node_integrands(lam, rot(K), rot(X), rot(X2), grid, 0.6)
        # round-off of sums with up to n^4 terms
        assert np.max(np.abs(a - b)) <= 1e-12 * integrand_scale(a) * n_bands**2

    def test_diagonal_terms_do_not_enter_first_order(self):
        rng = np.random.default_rng(3)
        lam, K, X, X2 = synthetic_eigen_data(rng, 4)
        diag = lambda M: np.diag(np.diag(M).real)
        out = node_integrands(lam, diag(K), diag(X), X2, EnergyGrid(-4, 4, 17), 0.6)
        assert np.max(np.abs(out[1])) == 0.0

    def test_unsorted_eigenvalues_rejected(self):
        rng = np.random.default_rng(0)
        lam, K, X, X2 = synthetic_eigen_data(rng, 3)
        with pytest.raises(DomainError):
            node_integrands(lam[::-1], K, X, X2, EnergyGrid(-1, 1, 3), 0.5)

    def test_physical_nodes_general_equals_reduced(self, model):
        grid = EnergyGrid(-20, 20, 161)
        basis = planewave_basis(0.7, 2000.0)
        data = diagonalize_batch(model, basis, np.linspace(-0.5, 0.5, 7), cutoff=38.0)
        for i in range(len(data)):
            n = int(np.count_nonzero(data.lambdas[i] < 38.0))
            out = node_integrands(data.lambdas[i, :n], data.K[i, :n, :n], data.Xm[i, :n, :n],
                                  data.X2[i, :n, :n], grid, 0.4)
            assert np.max(np.abs(out[2] - out[3])) <= 1e-10 * integrand_scale(out[2])


class TestCurves:
    def test_free_model(self, free):
        grid = EnergyGrid(2, 18, 33)
        res = expansion_terms(free, SemiclassicalQuadrature(200, 4, 400.0), grid, 0.4)
        ref = free_dos_smeared(grid.points, 0.4)
        assert np.max(np.abs(res.L0.values - ref)) <= 0.01 * ref.max()
        assert np.max(np.abs(res.L1.values)) < 1e-10
        assert np.max(np.abs(res.L2.values)) < 1e-10
        at8 = grid.points.tolist().index(8.0)
        assert res.L0.values[at8] == pytest.approx(FREE_DOS_AT_8[0.4], rel=0.01)

    def test_shift_independent_potential(self):
        spec = PotentialSpec.from_parameters(A2=0.0)
        res = expansion_terms(spec, COARSE, EnergyGrid(-20, 20, 81), 0.4)
        assert np.max(np.abs(res.L1.values)) < 1e-12
        assert np.max(np.abs(res.L2.values)) < 1e-12
        assert np.max(np.abs(res.L2_general.values)) < 1e-12

    def test_model_curves_basic_properties(self, model):
        grid = EnergyGrid(-20, 20, 161)
        res = expansion_terms(model, COARSE, grid, 0.4)
        assert res.L0.values.min() >= -1e-8
        assert not res.L0.signed and res.L1.signed and res.L2.signed
        assert np.max(np.abs(res.L2.values - res.L2_general.values)) <= 1e-10 * np.abs(res.L2.values).max()
        assert np.array_equal(res.combined(0.0).values, res.L0.values)
        c = res.combined(0.01)
        assert np.allclose(c.values, res.L0.values + 0.01 * res.L1.values + 1e-4 * res.L2.values,
                           rtol=0, atol=1e-15)
        assert res.meta["l1_orientation"] == FIRST_ORDER_ORIENTATION
        with pytest.raises(DomainError):
            res.combined(-0.1)

    def test_convenience_wrappers(self, model):
        grid = EnergyGrid(-20, 20, 81)
        res = expansion_dos(model, 0.002, COARSE, grid, 0.4)
        assert np.array_equal(res.meta["combined"].values, res.combined(0.002).values)
        assert np.array_equal(l0_curve(model, COARSE, grid, 0.4).values, res.L0.values)

    def test_thread_count_bitwise(self, model):
        grid = EnergyGrid(-20, 20, 81)
        quad = SemiclassicalQuadrature(24, 40, 300.0)
        a = expansion_terms(model, quad, grid, 0.4, threads=1)
        b = expansion_terms(model, quad, grid, 0.4, threads=4)
        for x, y in ((a.L0, b.L0), (a.L1, b.L1), (a.L2, b.L2)):
            assert np.array_equal(x.values, y.values)

    def test_first_order_sign_against_supercell(self, model):
        # at eps = 1/N the operator is N-periodic and its DoS is computed exactly;
        # the expansion must beat both L0 alone and the opposite first-order sign
        N = 100
        eps = 1.0 / N
        grid = EnergyGrid(-20, 20, 161)
        exact = supercell_dos(model, N, grid.points, 0.4, 500.0, n_q=4)
        res = expansion_terms(model, SemiclassicalQuadrature(100, 200, 500.0), grid, 0.4)
        err = lambda v: float(np.max(np.abs(exact - v)))
        e_combined = err(res.combined(eps).values)
        e_l0 = err(res.L0.values)
        e_flipped = err(res.L0.values - eps * res.L1.values + eps**2 * res.L2.values)
        assert e_combined < 0.8 * e_l0
        assert e_combined < 0.5 * e_flipped

    @pytest.mark.slow
    def test_quadrature_convergence_at_defaults(self, model):
        grid = EnergyGrid()
        a = expansion_terms(model, SemiclassicalQuadrature(), grid, 0.4)
        b = expansion_terms(model, SemiclassicalQuadrature(400, 1000), grid, 0.4)
        for x, y in ((a.L0, b.L0), (a.L1, b.L1), (a.L2, b.L2)):
            assert np.max(np.abs(x.values - y.values)) < 1e-3 * np.max(np.abs(y.values))


@pytest.mark.parametrize("bad", [dict(n_k=1), dict(n_X=1), dict(E_cut=0.0), dict(band_margin=-1.0)])
def test_quadrature_validation(bad):
    with pytest.raises(DomainError):
        SemiclassicalQuadrature(**bad)


def test_full_quadrature_profile():
    q = SemiclassicalQuadrature.full()
    assert (q.n_k, q.n_X, q.E_cut) == (1000, 10000, 10000.0)
