"""Fractional norms, Young sums, the integral envelope and the beta formulas."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from fsheat.errors import DomainError
from fsheat.fbm import FbmPath, generate_paths
from fsheat.fractional import (
    Field,
    beta_identities_check,
    bound_rhs,
    h1_integral,
    norm_alpha1,
    norm_alpha2,
    norm_alpha_inf,
    norm_report,
    norm_sup,
    young_integral,
)
from fsheat.grids import SpaceGrid, TimeGrid

SP = SpaceGrid(8)


def _time_ramp(nt, T=1.0, space=SP):
    g = TimeGrid(T, nt)
    return Field(space, g, np.repeat(g.times[:, None], space.size, axis=1))


def _random_field(seed, nt=20):
    r = np.random.default_rng(seed)
    return Field(SP, TimeGrid(1.0, nt), np.cumsum(r.standard_normal((nt + 1, SP.size)), axis=0))


class TestField:
    def test_shape_and_finiteness(self):
        g = TimeGrid(1.0, 4)
        with pytest.raises(DomainError):
            Field(SP, g, np.zeros((4, 9)))
        with pytest.raises(DomainError):
            Field(SP, g, np.full((5, 9), np.nan))

    def test_arithmetic_and_lookup(self):
        u = _random_field(0)
        np.testing.assert_allclose((u + u.scaled(2.0) - u).values, 2 * u.values)
        assert np.array_equal(u.at(0.5), u.values[10])
        assert not u.values.flags.writeable


class TestNorms:
    def test_sup(self):
        u = _random_field(1)
        assert norm_sup(u) == np.abs(u.values).max()
        assert norm_sup(u, 0.5) == np.abs(u.values[:11]).max()

    @pytest.mark.parametrize("alpha", [0.35, 0.4])
    def test_alpha1_time_ramp(self, alpha):
        # u = t: sup_s int_0^s (s-v)^{-alpha} dv = 1/(1-alpha) at s = 1.
        # The discrete sum has bias O(dt^{1-alpha}); check it and its extrapolation.
        exact = 1 / (1 - alpha)
        v = [norm_alpha1(_time_ramp(n), alpha) for n in (256, 512, 1024)]
        assert v[0] == pytest.approx(exact, rel=0.05)
        p = 1 - alpha
        assert np.log2((exact - v[1]) / (exact - v[2])) == pytest.approx(p, abs=0.03)
        assert (2**p * v[2] - v[1]) / (2**p - 1) == pytest.approx(exact, rel=1e-3)

    def test_alpha2_time_ramp(self):
        # ||u||^2 = sup t^2 + int_0^1 (s^{1-alpha}/(1-alpha))^2 ds
        a = 0.35
        exact = np.sqrt(1 + 1 / ((3 - 2 * a) * (1 - a) ** 2))
        assert norm_alpha2(_time_ramp(1024), a) == pytest.approx(exact, rel=0.02)

    def test_h1_integral(self):
        # u = exp(-t) cos(pi x): int_0^1 (1 + pi^2)/2 exp(-2t) dt
        sp, g = SpaceGrid(256), TimeGrid(1.0, 256)
        vals = np.exp(-g.times)[:, None] * np.cos(np.pi * sp.x)[None, :]
        exact = (1 + np.pi**2) * (1 - np.exp(-2)) / 4
        assert h1_integral(Field(sp, g, vals)) == pytest.approx(exact, rel=1e-4)

    def test_constant_field_has_zero_alpha_parts(self):
        f = Field(SP, TimeGrid(1.0, 10), np.full((11, 9), 3.0))
        assert norm_alpha1(f, 0.4) == 0.0
        assert norm_alpha_inf(f, 0.4) == 3.0
        assert norm_alpha2(f, 0.4) == pytest.approx(3.0)

    @given(st.integers(0, 10**6), st.floats(-10, 10))
    def test_homogeneity(self, seed, c):
        u = _random_field(seed)
        for fn in (norm_sup, lambda f: norm_alpha1(f, 0.35), lambda f: norm_alpha2(f, 0.35)):
            assert fn(u.scaled(c)) == pytest.approx(abs(c) * fn(u), rel=1e-12, abs=1e-12)

    @given(st.integers(0, 10**6), st.integers(0, 10**6))
    def test_triangle(self, s1, s2):
        u, w = _random_field(s1), _random_field(s2)
        for fn in (lambda f: norm_alpha1(f, 0.35), lambda f: norm_alpha2(f, 0.35), norm_sup):
            assert fn(u + w) <= fn(u) + fn(w) + 1e-12

    @given(st.integers(0, 10**6))
    def test_running_norms_monotone(self, seed):
        u = _random_field(seed)
        rep = norm_report(u, 0.35)
        for key in ("sup", "alpha1", "alpha_inf", "alpha2"):
            assert np.all(np.diff(getattr(rep, key)) >= -1e-14)

    def test_report_matches_functions(self):
        u = _random_field(3)
        times = [0.0, 0.05, 0.3, 1.0]
        rep = norm_report(u, 0.4, times)
        for k, t in enumerate(times):
            assert rep.sup[k] == pytest.approx(norm_sup(u, t))
            assert rep.alpha1[k] == pytest.approx(norm_alpha1(u, 0.4, t))
            assert rep.alpha2[k] == pytest.approx(norm_alpha2(u, 0.4, t))
        assert set(rep.to_dict()) == {"times", "sup", "alpha1", "alpha_inf", "alpha2"}


class TestYoung:
    @pytest.fixture
    def path(self):
        return generate_paths(TimeGrid(1.0, 512), 0.75, 1, seed=7)[0]

    def test_constant_integrand(self, path):
        assert young_integral(np.ones(513), path, 0.25, 0.75) == pytest.approx(
            path.values[384] - path.values[128], abs=1e-14)

    def test_path_against_itself(self, path):
        # sum B_k dB_k = B_n^2/2 - sum (dB_k)^2 / 2, exactly
        B = path.values
        lhs = young_integral(B, path, 0.0, 1.0)
        assert lhs == pytest.approx(0.5 * B[-1] ** 2 - 0.5 * np.sum(np.diff(B) ** 2), abs=1e-12)
        # the quadratic variation vanishes for H > 1/2
        assert 0.5 * np.sum(np.diff(B) ** 2) < 0.05

    def test_deterministic_integrator(self):
        g = TimeGrid(1.0, 2000)
        p = FbmPath(g, g.times**2, 0.7)
        # int_0^1 cos(t) d(t^2) = int 2t cos t dt
        exact = integrate.quad(lambda t: 2 * t * np.cos(t), 0, 1)[0]
        assert young_integral(np.cos(g.times), p, 0.0, 1.0) == pytest.approx(exact, rel=1e-3)

    def test_trailing_axes(self, path):
        psi = np.random.default_rng(0).standard_normal((513, 3))
        out = young_integral(psi, path, 0.0, 0.5)
        for c in range(3):
            assert out[c] == pytest.approx(young_integral(psi[:, c], path, 0.0, 0.5))

    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
    def test_bilinear(self, a, b, seed):
        g = TimeGrid(1.0, 64)
        p = generate_paths(g, 0.7, 1, seed)[0]
        f1, f2 = np.sin(g.times), np.cos(3 * g.times)
        lhs = young_integral(a * f1 + b * f2, p, 0.0, 1.0)
        rhs = a * young_integral(f1, p, 0.0, 1.0) + b * young_integral(f2, p, 0.0, 1.0)
        assert lhs == pytest.approx(rhs, abs=1e-12)
        assert young_integral(f1, p.scaled(a), 0.0, 1.0) == pytest.approx(a * young_integral(f1, p, 0.0, 1.0), abs=1e-12)

    def test_errors(self, path):
        with pytest.raises(DomainError):
            young_integral(np.ones(10), path, 0.0, 1.0)
        with pytest.raises(DomainError):
            young_integral(np.ones(513), path, 0.5, 0.5)


class TestBound:
    def test_constant_integrand(self):
        # psi = 1: int_a^b (s-a)^-alpha ds = (b-a)^{1-alpha}/(1-alpha)
        a = 0.35
        for n, tol in ((256, 0.05), (1024, 0.03)):
            g = TimeGrid(1.0, n)
            got = bound_rhs(np.ones(n + 1), 1.0, a, g, 0.0, 1.0)
            assert got == pytest.approx(1 / (1 - a), rel=tol)
            assert got < 1 / (1 - a)

    def test_linear_in_seminorm_and_homogeneous(self):
        g = TimeGrid(1.0, 64)
        psi = np.sin(5 * g.times)
        base = bound_rhs(psi, 1.0, 0.35, g, 0.25, 0.75)
        assert bound_rhs(psi, 2.5, 0.35, g, 0.25, 0.75) == pytest.approx(2.5 * base)
        assert bound_rhs(-3 * psi, 1.0, 0.35, g, 0.25, 0.75) == pytest.approx(3 * base)

    def test_errors(self):
        g = TimeGrid(1.0, 16)
        with pytest.raises(DomainError):
            bound_rhs(np.ones((17, 2)), 1.0, 0.35, g, 0.0, 1.0)
        with pytest.raises(DomainError):
            bound_rhs(np.ones(17), 1.0, 0.35, g, 0.5, 0.25)


class TestBeta:
    def test_flat_case(self):
        l1, r1, _, _ = beta_identities_check(1, 1, 0, 1)
        assert l1 == pytest.approx(1.0, abs=1e-14) and r1 == pytest.approx(1.0, abs=1e-14)

    def test_singular_endpoints(self):
        l1, r1, _, _ = beta_identities_check(0.5, 0.5, 0.25, 1.25)
        assert l1 == pytest.approx(np.pi, rel=1e-10)
        assert r1 == pytest.approx(np.pi, rel=1e-14)

    @given(st.floats(0.2, 2.0), st.floats(0.2, 2.0), st.floats(0.0, 5.0), st.floats(1e-3, 5.0))
    def test_identity_and_inequality(self, a, b, v, gap):
        l1, r1, l2, r2 = beta_identities_check(a, b, v, v + gap)
        assert abs(l1 - r1) <= 1e-8 * max(1.0, abs(r1))
        assert l2 <= r2 * (1 + 1e-10)

    def test_inequality_close_to_equality_far_from_origin(self):
        # the gap r2 - l2 is the tail int_Z^inf z^{b-1}(1+z)^{-a-b} dz
        a, b, v, t = 0.5, 0.8, 100.0, 100.01
        _, _, l2, r2 = beta_identities_check(a, b, v, t)
        Z = v / (t - v)
        tail = special.beta(a, b) * special.betainc(a, b, 1 / (1 + Z)) * (t - v) ** (-a)
        assert r2 - l2 == pytest.approx(tail, rel=1e-6)

    def test_log_spaced_sweep_near_diagonal(self):
        for v in np.logspace(-3, 1, 15):
            for gap in np.logspace(-6, 0, 7):
                _, _, l2, r2 = beta_identities_check(0.3, 0.5, v, v + gap)
                assert l2 <= r2

    @pytest.mark.parametrize("args", [(0, 1, 0, 1), (1, -1, 0, 1), (1, 1, 1, 1), (1, 1, -0.1, 1)])
    def test_errors(self, args):
        with pytest.raises(DomainError):
            beta_identities_check(*args)
