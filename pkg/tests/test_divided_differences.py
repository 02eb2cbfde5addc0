import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from incommensurate_dos.core_model import GaussianTestFunction
from incommensurate_dos.divided_differences import (DividedDifferenceKernel, PolynomialProbe,
                                                    divided_difference, kernel_for, robust_f2,
                                                    robust_f3, robust_f4)
from oracles import mp_f2, mp_f3, mp_f4, mp_gaussian


def set_partitions(n):
    """Restricted growth strings: every equality pattern of ``n`` arguments."""
    def grow(prefix):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for lab in range(max(prefix, default=-1) + 2):
            yield from grow(prefix + [lab])
    yield from grow([])


def arguments(pattern, values=(0.3, -1.1, 2.4, 0.9)):
    return [values[p] for p in pattern]


PATTERNS2 = list(set_partitions(2))
PATTERNS3 = list(set_partitions(3))
PATTERNS4 = list(set_partitions(4))


def test_pattern_counts():
    assert (len(PATTERNS2), len(PATTERNS3), len(PATTERNS4)) == (2, 5, 15)


class TestPolynomialExactness:
    @pytest.mark.parametrize("pattern", PATTERNS2)
    def test_f2_quadratic(self, pattern):
        k = DividedDifferenceKernel(PolynomialProbe.monomial(2))
        assert k.f2(*arguments(pattern)) == pytest.approx(2.0, abs=1e-10)

    @pytest.mark.parametrize("pattern", PATTERNS3)
    def test_f3_cubic(self, pattern):
        k = DividedDifferenceKernel(PolynomialProbe.monomial(3))
        assert k.f3(*arguments(pattern)) == pytest.approx(6.0, abs=1e-10)

    @pytest.mark.parametrize("pattern", PATTERNS4)
    def test_f4_quartic(self, pattern):
        k = DividedDifferenceKernel(PolynomialProbe.monomial(4))
        assert k.f4(*arguments(pattern)) == pytest.approx(24.0, abs=1e-10)

    def test_f2_cubic_distinct(self):
        # 2 (8 - 1 - 3) / 1
        k = DividedDifferenceKernel(PolynomialProbe.monomial(3))
        assert k.f2(1.0, 2.0) == pytest.approx(8.0, abs=1e-12)

    @pytest.mark.parametrize("pattern", PATTERNS4)
    def test_robust_matches_polynomial(self, pattern):
        p = PolynomialProbe((0.5, -1.0, 0.25, 2.0, 1.0))
        assert robust_f4(p, *arguments(pattern), scale=1.0) == pytest.approx(24.0, abs=1e-10)

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
    def test_divided_difference_of_monomial(self, nodes):
        n = len(nodes) - 1
        # f[x_0..x_n] of y^n is the leading coefficient
        assert divided_difference(PolynomialProbe.monomial(n), nodes, 1.0) == pytest.approx(
            1.0, abs=1e-9)


class TestGaussianAgainstResidues:
    @pytest.mark.parametrize("pattern", PATTERNS4)
    def test_f4_all_patterns(self, pattern):
        E, s = 0.2, 0.4
        args = arguments(pattern, (0.1, -0.35, 0.6, 0.45))
        ref = mp_f4(mp_gaussian(E, s), *args)
        assert kernel_for(E, s).f4(*args) == pytest.approx(ref, rel=1e-8, abs=1e-10)
        assert robust_f4(GaussianTestFunction(E, s), *args, scale=s) == pytest.approx(
            ref, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("pattern", PATTERNS3)
    def test_f3_all_patterns(self, pattern):
        E, s = -0.4, 0.3
        args = arguments(pattern, (-0.2, -0.7, 0.1, 0.0))
        ref = mp_f3(mp_gaussian(E, s), *args)
        assert kernel_for(E, s).f3(*args) == pytest.approx(ref, rel=1e-8, abs=1e-10)
        assert robust_f3(GaussianTestFunction(E, s), *args, scale=s) == pytest.approx(
            ref, rel=1e-10, abs=1e-10)

    def test_random_tuples(self):
        rng = np.random.default_rng(20240611)
        for _ in range(100):
            s = rng.choice([0.4, 0.08])
            E = rng.uniform(-5, 5)
            x = E + rng.uniform(-4 * s, 4 * s, 4)
            g = mp_gaussian(E, s)
            k = kernel_for(E, s)
            f = GaussianTestFunction(E, s)
            for mine, robust, ref in ((k.f2(*x[:2]), robust_f2(f, *x[:2], s), mp_f2(g, *x[:2])),
                                      (k.f3(*x[:3]), robust_f3(f, *x[:3], s), mp_f3(g, *x[:3])),
                                      (k.f4(*x), robust_f4(f, *x, s), mp_f4(g, *x))):
                scale = max(1.0, abs(ref))
                assert abs(mine - ref) <= 1e-10 * scale
                assert abs(robust - ref) <= 1e-10 * scale


class TestBranchContinuity:
    @pytest.mark.parametrize("j", [2, 3, 4])
    def test_approach_to_diagonal(self, j):
        k = kernel_for(0.0, 0.5)
        a = 0.2
        coincident = {2: k.f2(a, a), 3: k.f3(a, a, a), 4: k.f4(a, a, a, a)}[j]
        errs = []
        for h in (1e-2, 1e-3, 1e-4):
            v = {2: k.f2(a, a + h), 3: k.f3(a, a, a + h), 4: k.f4(a, a, a, a + h)}[j]
            errs.append(abs(v - coincident))
        assert errs[0] > errs[1] > errs[2]
        # at least first order in h, up to a factor 2
        assert errs[2] <= 2.0 * errs[0] * 1e-2

    @pytest.mark.parametrize("j", [2, 3, 4])
    def test_switch_continuity(self, j):
        # the coincidence rule moves the value by about tau_c * |f^(j+1)|, so the
        # jump across the switch is measured against that derivative scale
        k = kernel_for(0.0, 0.5)
        a = 0.2
        out, inside = 1.01 * k.tau_c, 0.99 * k.tau_c
        fn = {2: lambda h: k.f2(a, a + h), 3: lambda h: k.f3(a, a + h, a + h),
              4: lambda h: k.f4(a, a + h, a + h, a + h)}[j]
        scale = max(1.0, abs(float(k.f.derivative(a, j))),
                    abs(float(k.f.derivatives(a, j + 1)[j + 1])))
        assert abs(fn(out) - fn(inside)) < 1e-6 * scale

    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_ladder_matches_robust_when_separated(self, a, b, c, d):
        s = 0.5
        gaps = np.diff(sorted((a, b, c, d)))
        # near-coincident but distinct pairs sit on the tau_c switch
        if np.any((gaps > 0) & (gaps < 1e-2)):
            return
        k = kernel_for(0.1, s)
        f = GaussianTestFunction(0.1, s)
        ref = robust_f4(f, a, b, c, d, s)
        assert abs(k.f4(a, b, c, d) - ref) <= 1e-7 * max(1.0, abs(ref))


def test_symmetry_in_trailing_arguments():
    k = kernel_for(0.0, 0.4)
    args = (0.1, -0.2, 0.35, 0.05)
    ref = k.f4(*args)
    for perm in itertools.permutations(args[1:]):
        assert k.f4(args[0], *perm) == pytest.approx(ref, rel=1e-9)
