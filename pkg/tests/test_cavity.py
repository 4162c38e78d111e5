import math

import numpy as np
import pytest
from sklearn.base import clone

from pspinlab.cavity import (
    PopDynConfig,
    PopulationDynamicsSolver,
    cavity_xi_logweight,
    decorrelation_residual,
    draw_cavity,
    eta_of,
    eta_variance_residual,
    popdyn_solve,
    popdyn_step,
    qstar_positivity_check,
    single_clause_identity_residual,
    update_moment_residual,
    tilt_weights,
    tilted_resample,
    xi_of,
)
from pspinlab.orderparam import ClosedFormOrderParameter, PopulationOrderParameter
from pspinlab.params import ModelParams
from pspinlab.streams import RandomStreams


def const_pop(value, s_out=120, s_in=110, zeta=0.5):
    return PopulationOrderParameter(np.full((s_out, s_in), value), zeta=zeta)


class TestCavityFormula:
    def test_brute_force_oracle(self):
        # average exp(theta) over eps = +-1 directly
        rng = np.random.default_rng(0)
        for _ in range(30):
            k = rng.integers(0, 7)
            t = np.tanh(rng.standard_normal(k))
            s = rng.uniform(-1, 1, size=k)
            c = math.tanh(rng.standard_normal())
            e_plus = (1 + c) * np.prod(1 + t * s)
            e_minus = (1 - c) * np.prod(1 - t * s)
            xi, logA = cavity_xi_logweight(t, s, c)
            assert xi == pytest.approx(
                (e_plus - e_minus) / (e_plus + e_minus), abs=1e-12
            )
            assert logA == pytest.approx(math.log((e_plus + e_minus) / 2), abs=1e-12)

    def test_one_clause_worked_value(self):
        # xi = (c + t m) / (1 + t m c) with t = 0.5, m = 0.8, h = 1
        c = math.tanh(1.0)
        xi, _ = cavity_xi_logweight(np.array([0.5]), np.array([0.8]), c)
        assert xi == pytest.approx((c + 0.4) / (1 + 0.4 * c), abs=1e-14)
        assert xi == pytest.approx(0.890357, abs=1e-6)

    def test_no_clauses(self):
        xi, logA = cavity_xi_logweight(np.empty(0), np.empty(0), 0.0)
        assert xi == pytest.approx(0.0, abs=1e-14)
        assert logA == pytest.approx(0.0, abs=1e-14)
        xi, _ = cavity_xi_logweight(np.empty(0), np.empty(0), math.tanh(0.7))
        assert xi == pytest.approx(math.tanh(0.7), abs=1e-14)

    def test_batched_shapes(self):
        t = np.array([0.3, -0.2, 0.1])
        s = np.random.default_rng(1).uniform(-1, 1, size=(5, 3))
        xi, logA = cavity_xi_logweight(t, s, 0.1)
        assert xi.shape == (5,) and logA.shape == (5,)
        assert np.all(np.abs(xi) <= 1.0)


class TestDrawCavity:
    PARAMS = ModelParams(p=3, lam=1.0, beta=0.8, h=0.2)

    def test_deterministic(self):
        op = const_pop(0.3)
        a = draw_cavity(op, self.PARAMS, np.random.default_rng(7), 4)
        b = draw_cavity(op, self.PARAMS, np.random.default_rng(7), 4)
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.s, b.s)
        assert a.n_states == 4

    def test_clause_count_mean(self):
        op = const_pop(0.0)
        rng = np.random.default_rng(8)
        ks = np.array([
            draw_cavity(op, self.PARAMS, rng, 1).t.shape[0] for _ in range(2000)
        ])
        se = ks.std(ddof=1) / math.sqrt(len(ks))
        assert abs(ks.mean() - 3.0) <= 3 * se

    def test_sparse_limit(self):
        params = ModelParams(p=2, lam=1e-12, beta=1.0, h=0.4)
        draw = draw_cavity(const_pop(0.5), params, np.random.default_rng(9), 3)
        assert draw.t.shape == (0,)
        assert np.allclose(xi_of(draw), math.tanh(0.4), atol=1e-14)

    def test_closed_form_pinning(self):
        op = ClosedFormOrderParameter(0.5, kernel="tanh_field",
                                      kernel_params={"a": 1.0, "b": 0.0})
        draw = draw_cavity(op, self.PARAMS, np.random.default_rng(10), 3,
                           w=0.3, u=0.5)
        assert draw.s.shape[0] == 3
        assert np.all(np.abs(draw.s) <= 1.0)


class TestTilting:
    def test_equal_weights_uniform(self):
        w = tilt_weights(np.full(8, -2.7), 0.5)
        assert np.allclose(w, 1 / 8, atol=1e-14)

    def test_matches_direct_ratio(self):
        rng = np.random.default_rng(0)
        xi = rng.uniform(-1, 1, 50)
        logA = rng.normal(size=50)
        zeta = 0.7
        direct = float(np.exp(zeta * logA) @ xi / np.exp(zeta * logA).sum())
        assert tilt_weights(logA, zeta) @ xi == pytest.approx(direct, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            tilt_weights(np.empty(0), 0.5)

    def test_resample_degenerate(self):
        vals = np.array([0.1, 0.9, -0.3])
        w = np.array([0.0, 1.0, 0.0])
        out = tilted_resample(vals, w, 20, np.random.default_rng(1))
        assert np.all(out == 0.9)

    @pytest.mark.parametrize("scheme", ["multinomial", "systematic"])
    def test_resample_moments(self, scheme):
        rng = np.random.default_rng(2)
        vals = rng.uniform(-1, 1, 40)
        w = rng.uniform(size=40)
        w /= w.sum()
        out = tilted_resample(vals, w, 40000, rng, scheme=scheme)
        se = out.std(ddof=1) / math.sqrt(len(out))
        assert abs(out.mean() - w @ vals) <= 4 * se
        assert set(np.unique(out)) <= set(vals)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            tilted_resample(np.ones(3), np.full(3, 1 / 3), 5,
                            np.random.default_rng(0), scheme="bogus")

    def test_single_clause_identity(self):
        res = single_clause_identity_residual(0.5, np.random.default_rng(3))
        assert res <= 1e-12


class TestResiduals:
    def test_eta_sparse_limit(self):
        params = ModelParams(p=2, lam=1e-12, beta=1.0, h=0.3)
        eta = eta_of(const_pop(0.2), params, 0.5, np.random.default_rng(0))
        assert eta == pytest.approx(math.tanh(0.3), abs=1e-12)

    def test_update_moments_trivial_fixed_points(self):
        streams = RandomStreams(1)
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        rep = update_moment_residual(const_pop(0.0), params, 0.5, streams,
                                     n_reps=60, pool=64)
        assert rep.passed()
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.4)
        rep = update_moment_residual(const_pop(math.tanh(0.4)), params, 0.5,
                                     RandomStreams(2), n_reps=60, pool=64)
        assert rep.passed()
        assert set(rep.per_statistic) == {
            "m1", "m2", "m3", "same_state_pair", "same_site_pair",
            "cross_pair", "pair_plus_site", "square_cross",
        }

    def test_eta_variance_zero_for_populations(self):
        params = ModelParams(p=2, lam=1.0, beta=0.8, h=0.1)
        out = eta_variance_residual(const_pop(0.3), params, 0.5, RandomStreams(3))
        assert out == 0.0

    def test_eta_variance_detects_state_dependence(self):
        # negative control: a kernel whose conditional mean moves with u
        op = ClosedFormOrderParameter(
            0.5, kernel="u_mean_shift",
            kernel_params={"a": 0.0, "b": 0.8, "amp": 0.1},
        )
        params = ModelParams(p=2, lam=2.0, beta=1.0, h=0.1)
        out = eta_variance_residual(op, params, 0.5, RandomStreams(4),
                                    n_env=8, n_u=8, n_inner=64)
        assert out > 1e-4

    def test_decorrelation_beta_zero(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.3)
        mean, se, ratio = decorrelation_residual(
            const_pop(0.1), params, 0.5, RandomStreams(5), n_reps=16, pool=128
        )
        assert abs(mean) <= 1e-12
        assert ratio == 0.0 or ratio < 3


class TestPopDynStep:
    CONFIG = PopDynConfig(s_out=100, s_in=100)

    def test_zero_population_fixed_at_symmetric_point(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        samples = np.zeros((100, 100))
        out = popdyn_step(samples, params, 0.5, RandomStreams(0), 0, self.CONFIG)
        assert np.all(out == 0.0)

    def test_beta_zero_field_one_sweep(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.6)
        samples = np.random.default_rng(1).uniform(-1, 1, (100, 100))
        out = popdyn_step(samples, params, 0.5, RandomStreams(1), 0, self.CONFIG)
        assert np.allclose(out, math.tanh(0.6), atol=1e-12)

    def test_nan_guard(self):
        params = ModelParams(p=2, lam=1.0, beta=1.0, h=0.0)
        samples = np.zeros((100, 100))
        samples[3, 4] = np.nan
        with pytest.raises(ValueError):
            popdyn_step(samples, params, 0.5, RandomStreams(2), 0, self.CONFIG)

    def test_range_preserved(self):
        params = ModelParams(p=3, lam=2.0, beta=1.5, h=0.3)
        samples = np.random.default_rng(3).uniform(-1, 1, (100, 100))
        out = popdyn_step(samples, params, 0.5, RandomStreams(3), 0, self.CONFIG)
        assert np.all(np.abs(out) <= 1.0)

    def test_worker_count_invariance(self):
        params = ModelParams(p=2, lam=1.5, beta=1.0, h=0.2)
        samples = np.random.default_rng(4).uniform(-1, 1, (100, 100))
        a = popdyn_step(samples, params, 0.5, RandomStreams(4), 0, self.CONFIG,
                        workers=1)
        b = popdyn_step(samples, params, 0.5, RandomStreams(4), 0, self.CONFIG,
                        workers=4)
        assert np.array_equal(a, b)

    def test_damping_keeps_some_rows(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.5)
        config = PopDynConfig(s_out=100, s_in=100, damping=0.5)
        samples = np.zeros((100, 100))
        out = popdyn_step(samples, params, 0.5, RandomStreams(5), 0, config)
        kept = np.sum(np.all(out == 0.0, axis=1))
        assert 20 < kept < 80   # ~Binomial(100, 0.5)


class TestPopDynSolve:
    def test_symmetric_point(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        config = PopDynConfig(s_out=100, s_in=100, min_sweeps=4, window=2)
        result = popdyn_solve(params, 0.5, config, RandomStreams(0))
        assert result.converged
        q_low, q_high, _, _ = result.q_values()
        assert q_low == pytest.approx(0.0, abs=1e-10)
        assert q_high == pytest.approx(0.0, abs=1e-10)
        assert len(result.trajectory) == result.n_sweeps

    def test_zeta_domain(self):
        params = ModelParams(p=2, lam=1.0, beta=1.0, h=0.0)
        config = PopDynConfig(s_out=100, s_in=100)
        for bad in (0.0, 1.0):
            with pytest.raises(ValueError):
                popdyn_solve(params, bad, config, RandomStreams(0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PopDynConfig(s_out=10, s_in=1000)
        with pytest.raises(ValueError):
            PopDynConfig(damping=1.0)
        with pytest.raises(ValueError):
            PopDynConfig(resampling="bogus")

    def test_estimator_interface(self):
        solver = PopulationDynamicsSolver(
            p=2, lam=1.0, beta=0.0, h=0.5, zeta=0.5,
            s_out=100, s_in=100, min_sweeps=4, seed=3,
        )
        params = solver.get_params()
        assert params["h"] == 0.5
        again = clone(solver)
        assert again.get_params() == params
        solver.fit()
        assert solver.converged_
        assert solver.q_low_ == pytest.approx(math.tanh(0.5) ** 2, abs=1e-10)
        assert solver.q_high_ == pytest.approx(math.tanh(0.5) ** 2, abs=1e-10)
        assert solver.n_sweeps_ == len(solver.diagnostics_)
        assert solver.order_parameter_.zeta == 0.5


class TestQstarPositivity:
    def test_requires_field(self):
        params = ModelParams(p=2, lam=1.0, beta=1.0, h=0.0)
        config = PopDynConfig(s_out=100, s_in=100)
        with pytest.raises(ValueError):
            qstar_positivity_check(params, 0.5, RandomStreams(0), config)

    def test_beta_zero_exact(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.5)
        config = PopDynConfig(s_out=100, s_in=100, min_sweeps=4, window=2)
        report = qstar_positivity_check(params, 0.5, RandomStreams(1), config)
        assert report["passed"]
        assert report["q_low"] == pytest.approx(math.tanh(0.5) ** 2, abs=1e-10)
        assert report["reference"] == pytest.approx(math.tanh(0.5) ** 2)
        assert report["identity_residual"] <= 1e-12
