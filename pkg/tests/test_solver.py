"""Picard solver: closed-form cases, residual, uniqueness and ensemble harnesses."""

import pickle

import numpy as np
import pytest

from fsheat.errors import DomainError, PicardDivergence
from fsheat.fbm import generate_path_array
from fsheat.fractional import Field
from fsheat.noise import NoiseField
from fsheat.presets import Coefficient, InitialPreset, ScalarPreset
from fsheat.solver import (
    MildMap,
    ProblemSpec,
    apriori_check,
    fit_apriori_envelope,
    fixed_point_residual,
    mild_rhs_direct,
    moment_estimate,
    picard_solve,
    run_ensemble,
    solve,
    uniqueness_check,
)

SMALL = dict(nx=16, nt=64)


def _exact_heat(spec, rate):
    return np.exp(rate * spec.time.times)[:, None] * np.cos(np.pi * spec.space.x)[None, :]


class TestSpec:
    def test_defaults_and_validation(self):
        s = ProblemSpec()
        assert (s.tol, s.max_iter, s.hurst, s.alpha) == (1e-6, 50, 0.7, 0.35)
        with pytest.raises(DomainError, match=r"\(1-H, 1/2\)"):
            ProblemSpec(alpha=0.6)
        with pytest.raises(DomainError):
            ProblemSpec(hurst=0.5)
        with pytest.raises(DomainError):
            ProblemSpec(gamma=2.0)
        with pytest.raises(DomainError):
            ProblemSpec(tol=0)

    def test_picklable(self):
        s = ProblemSpec.nonlinear()
        assert pickle.loads(pickle.dumps(s)) == s

    def test_presets(self):
        s = ProblemSpec.nonlinear()
        assert s.k.name == "variable" and s.h.name == "sin" and s.f.name == "sin"
        a = ProblemSpec.additive(2.0)
        assert a.modes == 1 and a.h(np.array([5.0]))[0] == 2.0 and a.phi.name == "zero"


class TestClosedForms:
    def test_heat_eigenfunction_second_order(self):
        errs = []
        for nx, nt in ((32, 128), (64, 256), (128, 512)):
            s = ProblemSpec.heat_decay(nx=nx, nt=nt)
            u, rep = solve(s)
            assert rep.converged and rep.iterations == 1
            errs.append(np.abs(u.values - _exact_heat(s, -np.pi**2)).max())
        assert errs[1] <= 1e-3
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5

    def test_linear_reaction(self):
        c = 2.0
        s = ProblemSpec.heat_decay(f=ScalarPreset("linear", {"slope": c}))
        u, rep = solve(s)
        assert np.abs(u.values - _exact_heat(s, c - np.pi**2)).max() < 1e-3
        assert rep.converged and rep.deltas[-1] <= s.tol

    @pytest.mark.parametrize("spatial", [False, True])
    def test_additive_noise_flat(self, spatial):
        sigma = 0.8
        kw = {"k": Coefficient("variable")} if spatial else {}
        s = ProblemSpec.additive(sigma, **SMALL, **kw)
        noise = s.noise(seed=3)
        u, _ = picard_solve(s, noise, s.green())
        B = noise.paths[0].values
        assert np.abs(u.values - sigma * B[:, None]).max() < 1e-10

    def test_zero_horizon(self):
        s = ProblemSpec.nonlinear(T=0.0, nt=4, nx=8)
        u, rep = solve(s)
        assert rep.converged and rep.iterations == 0
        assert np.all(u.values == s.phi(s.space.x))


@pytest.fixture(scope="module")
def nonlinear():
    s = ProblemSpec.nonlinear(**SMALL)
    noise, green = s.noise(seed=1), s.green()
    u, rep = picard_solve(s, noise, green)
    return s, noise, green, u, rep


class TestIteration:
    def test_converges_geometrically(self, nonlinear):
        *_, rep = nonlinear
        assert rep.converged and rep.iterations <= 50
        d = np.array(rep.deltas)
        ratios = d[1:] / d[:-1]
        assert np.all(ratios < 1)
        assert 0 < rep.contraction_rate < 1
        assert np.all(d[1:] <= ratios.max() * d[:-1] + 1e-300)

    def test_residual_two_routes(self, nonlinear):
        s, noise, green, u, _ = nonlinear
        res = fixed_point_residual(s, noise, green, u, direct_targets=(1, 17, 64))
        assert res["recursive"] <= 10 * s.tol
        assert res["direct"] <= 10 * s.tol

    def test_direct_route_matches_map(self, nonlinear):
        s, noise, green, u, _ = nonlinear
        # apply both routes to an arbitrary field, not a fixed point
        w = Field(u.space, u.time, u.values + 0.3 * np.sin(7 * u.values))
        mapped = MildMap(s, noise, green)(w.values)
        direct = mild_rhs_direct(s, noise, green, w, (0, 5, 64))
        for m, v in direct.items():
            np.testing.assert_allclose(v, mapped[m], atol=1e-11)

    def test_zero_noise_is_bit_identical(self):
        s = ProblemSpec.heat_decay(f=ScalarPreset("sin"), k=Coefficient("variable"), **SMALL)
        u1, _ = solve(s, seed=1)
        u2, _ = solve(s, seed=999)
        assert np.array_equal(u1.values, u2.values)

    def test_divergence_carries_history(self):
        s = ProblemSpec.nonlinear(max_iter=2, **SMALL)
        with pytest.raises(PicardDivergence) as exc:
            solve(s)
        rep = exc.value.report
        assert rep.iterations == 2 and len(rep.deltas) == 2 and not rep.converged

    def test_start_forms(self, nonlinear):
        s, noise, green, u, _ = nonlinear
        for start in (0.0, u, u.values, np.zeros(s.space.size)):
            v, _ = picard_solve(s, noise, green, start)
            assert np.abs(v.values - u.values).max() <= 10 * s.tol

    def test_grid_mismatch(self, nonlinear):
        s, noise, *_ = nonlinear
        other = ProblemSpec.nonlinear(nx=8, nt=64)
        with pytest.raises(DomainError):
            picard_solve(s, noise, other.green())


class TestUniqueness:
    def test_deterministic(self):
        s = ProblemSpec.heat_decay(f=ScalarPreset("sin"), T=0.1, **SMALL)
        res = uniqueness_check(s, s.noise(), s.green())
        assert res.sup_gap <= 2 * s.tol

    def test_basin_probe(self):
        s = ProblemSpec.nonlinear(**SMALL)
        res = uniqueness_check(s, s.noise(seed=4), s.green(), starts=[None, 100.0, -3.0])
        assert res.sup_gap <= 10 * s.tol and res.alpha_inf_gap <= 100 * s.tol
        assert res.eta == pytest.approx(1 + res.reports[0].norm_alpha1 + res.reports[1].norm_alpha1)
        assert set(res.to_dict()) >= {"sup_gap", "alpha_inf_gap", "eta", "reports"}

    def test_needs_two_starts(self):
        s = ProblemSpec.nonlinear(**SMALL)
        with pytest.raises(DomainError):
            uniqueness_check(s, s.noise(), s.green(), starts=[None])


class TestApriori:
    def test_deterministic_case(self):
        s = ProblemSpec.heat_decay(**SMALL)
        noise = NoiseField.zero(s.basis, s.time, s.hurst, s.alpha)
        u, rep = picard_solve(s, noise, s.green())
        lhs, xi, passed = apriori_check(u, rep, s.alpha)
        assert xi == 1.0 and np.isfinite(lhs) and passed is None
        fit = fit_apriori_envelope([lhs], [xi], s.alpha)
        assert apriori_check(u, rep, s.alpha, fit)[2]

    def test_fit_dominates_by_construction(self, rng):
        xi = rng.uniform(1, 5, 50)
        lhs = np.exp(0.3 + 0.2 * xi ** (1 / 0.65) + rng.normal(0, 0.1, 50))
        fit = fit_apriori_envelope(lhs, xi, 0.35)
        assert fit.violations == 0 and fit.c1 > 0 and fit.spearman > 0.5
        assert all(fit.dominates(a, b) for a, b in zip(lhs, xi))

    def test_slope_clipped(self):
        fit = fit_apriori_envelope([3.0, 2.0, 1.0], [1.0, 2.0, 3.0], 0.35)
        assert fit.c1 == 0.0 and fit.c0 == pytest.approx(np.log(3.0))

    def test_fit_errors(self):
        with pytest.raises(DomainError):
            fit_apriori_envelope([], [], 0.35)


class TestEnsemble:
    SPEC = ProblemSpec.nonlinear(nx=8, nt=32)

    def test_worker_count_does_not_matter(self):
        a = run_ensemble(self.SPEC, 6, workers=1)
        b = run_ensemble(self.SPEC, 6, workers=3)
        assert [m.index for m in b] == list(range(6))
        assert [(m.sup_abs, m.lhs, m.xi) for m in a] == [(m.sup_abs, m.lhs, m.xi) for m in b]

    def test_members_are_independent_draws(self):
        ms = run_ensemble(self.SPEC, 4)
        assert len({m.xi for m in ms}) == 4
        shifted = run_ensemble(self.SPEC, 2, first=2)
        assert [m.xi for m in shifted] == [m.xi for m in ms[2:]]

    def test_failed_members_are_counted(self):
        bad = self.SPEC.replace(max_iter=1)
        est = moment_estimate(self.SPEC, 30, 2.0, members=run_ensemble(self.SPEC, 28) + run_ensemble(bad, 2, first=28))
        assert est.n_excluded == 2 and est.excluded == [28, 29]
        assert est.exclusion_fraction == pytest.approx(2 / 30)

    def test_deterministic_moment(self):
        s = ProblemSpec.heat_decay(nx=8, nt=32)
        est = moment_estimate(s, 30, 3.0)
        u, _ = solve(s)
        assert est.mean == pytest.approx(np.abs(u.values).max() ** 3, rel=1e-14)
        assert est.ci[0] == est.ci[1] and est.se == 0 and est.stable

    def test_additive_second_moment_matches_raw_paths(self):
        sigma = 0.5
        s = ProblemSpec.additive(sigma, nx=4, nt=32)
        est = moment_estimate(s, 60, 2.0)
        # member i uses stream prefix (i,), mode 0
        raw = np.array([np.abs(generate_path_array(s.time, s.hurst, 1, s.seed, (i,))[0]).max() for i in range(60)])
        assert est.mean == pytest.approx(sigma**2 * np.mean(raw**2), rel=1e-8)

    def test_lyapunov(self):
        ms = run_ensemble(self.SPEC, 30)
        m2 = moment_estimate(self.SPEC, 30, 2.0, members=ms)
        m4 = moment_estimate(self.SPEC, 30, 4.0, members=ms)
        assert m2.mean <= m4.mean**0.5
        assert m2.ci[0] <= m2.mean <= m2.ci[1]

    def test_size_check(self):
        with pytest.raises(DomainError):
            moment_estimate(self.SPEC, 10, 2.0)
        with pytest.raises(DomainError):
            moment_estimate(self.SPEC, 30, 0.0)
