import math

import numpy as np
import pytest

from pspinlab import exact
from pspinlab.exact import (
    MomentQuery,
    cavity_residual_finite_N,
    gg_residual,
    gibbs_moment,
    gibbs_probs,
    log_partition,
    overlap_statistics,
    quenched_free_energy,
    spin_table,
)
from pspinlab.model import sample_instance
from pspinlab.params import ModelParams, PerturbationConfig
from pspinlab.streams import RandomStreams


def make_instance(p=2, lam=1.0, beta=1.0, h=0.0, N=6, seed=0, **kw):
    return sample_instance(
        ModelParams(p=p, lam=lam, beta=beta, h=h), N, streams=RandomStreams(seed), **kw
    )


class TestLogPartition:
    def test_free_spins(self):
        inst = make_instance(beta=0.0, h=0.0, N=10)
        assert log_partition(inst) == pytest.approx(10 * math.log(2), abs=1e-12)
        assert 10 * math.log(2) == pytest.approx(6.931472, abs=1e-6)

    def test_field_only(self):
        inst = make_instance(beta=1.0, h=0.5, N=6, n_clauses=0)
        ref = 6 * math.log(2 * math.cosh(0.5))
        assert log_partition(inst) == pytest.approx(ref, abs=1e-12)
        assert ref == pytest.approx(4.879570, abs=1e-6)

    @pytest.mark.parametrize("method", ["gray", "naive"])
    def test_alternate_paths_agree(self, method):
        for seed in range(4):
            inst = make_instance(p=3, beta=0.9, h=0.2, N=8, seed=seed)
            assert log_partition(inst, method) == pytest.approx(
                log_partition(inst, "vector"), abs=1e-10
            )

    def test_size_guard(self):
        with pytest.raises(ValueError):
            exact.spin_table(exact.N_MAX + 1)

    def test_gray_path_rejects_perturbations(self):
        pert = PerturbationConfig(enabled1=True)
        inst = sample_instance(
            ModelParams(p=2, lam=1.0, beta=1.0, h=0.0), 5, pert=pert,
            streams=RandomStreams(1),
        )
        with pytest.raises(ValueError):
            log_partition(inst, "gray")

    def test_gibbs_probs_normalized(self):
        for seed in range(3):
            inst = make_instance(beta=1.3, h=-0.4, N=7, seed=seed)
            assert abs(gibbs_probs(inst).sum() - 1.0) <= 1e-12


class TestQuenchedFreeEnergy:
    def test_beta_zero_exact(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        f, se = quenched_free_energy(params, 8, 5, streams=RandomStreams(0))
        assert f == pytest.approx(math.log(2), abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-13)

    def test_zero_clause_conditioning(self):
        params = ModelParams(p=2, lam=1.0, beta=1.0, h=0.4)
        f, se = quenched_free_energy(
            params, 8, 5, streams=RandomStreams(0), zero_clauses=True
        )
        assert f == pytest.approx(math.log(2 * math.cosh(0.4)), abs=1e-12)

    def test_finite_size_trend(self):
        params = ModelParams(p=2, lam=0.5, beta=0.5, h=0.0)
        vals = [
            quenched_free_energy(params, N, 40, streams=RandomStreams(3))[0]
            for N in (8, 12, 16)
        ]
        # successive differences shrink
        assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


class TestGibbsMoment:
    def test_symmetric_point(self):
        inst = make_instance(beta=0.0, h=0.0, N=6)
        assert gibbs_moment(inst, [(0,)]) == pytest.approx(0.0, abs=1e-14)

    def test_field_magnetization(self):
        inst = make_instance(beta=1.0, h=0.7, N=6, n_clauses=0)
        assert gibbs_moment(inst, [(2,)]) == pytest.approx(math.tanh(0.7), abs=1e-12)

    def test_two_replica_oracle(self):
        inst = make_instance(p=2, beta=0.8, h=0.1, N=8, seed=2)
        probs = gibbs_probs(inst)
        S = spin_table(8).astype(float)
        val = gibbs_moment(inst, [(0, 3), (1,)])
        oracle = 0.0
        v1 = S[:, 0] * S[:, 3]
        v2 = S[:, 1]
        oracle = float((probs @ v1) * (probs @ v2))
        assert val == pytest.approx(oracle, abs=1e-12)
        assert -1.0 <= val <= 1.0

    def test_index_guard(self):
        inst = make_instance(N=5)
        with pytest.raises(ValueError):
            gibbs_moment(inst, [(7,)])


class TestOverlapStatistics:
    def test_free_spins(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        stats = overlap_statistics(params, 8, 3, RandomStreams(0))
        m1, _ = stats["moments"][1]
        m2, _ = stats["moments"][2]
        assert m1 == pytest.approx(0.0, abs=1e-12)
        assert m2 == pytest.approx(1.0 / 8, abs=1e-12)
        assert stats["histogram"].sum() == pytest.approx(1.0, abs=1e-10)

    def test_field_value(self):
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.6)
        stats = overlap_statistics(params, 8, 3, RandomStreams(0))
        m1, _ = stats["moments"][1]
        assert m1 == pytest.approx(math.tanh(0.6) ** 2, abs=1e-12)

    def test_second_moment_dominates_square(self):
        params = ModelParams(p=2, lam=1.0, beta=0.9, h=0.2)
        stats = overlap_statistics(params, 8, 5, RandomStreams(1))
        assert stats["moments"][2][0] >= stats["moments"][1][0] ** 2 - 1e-12


class TestGGResidual:
    PERT = PerturbationConfig(enabled1=True)

    def test_requires_perturbation(self):
        with pytest.raises(ValueError):
            gg_residual(ModelParams(p=2, lam=1.0, beta=0.5, h=0.0), 8, 2, 1,
                        RandomStreams(0), 5)

    def test_constant_f_telescopes(self):
        res, se = gg_residual(ModelParams(p=2, lam=1.0, beta=0.7, h=0.1), 8, 1, 0,
                              RandomStreams(0), 8, pert=self.PERT)
        assert res <= 1e-12

    def test_bracket_oracle(self):
        inst = sample_instance(ModelParams(p=2, lam=0.5, beta=0.5, h=0.0), 6,
                               pert=self.PERT, streams=RandomStreams(13))
        probs = gibbs_probs(inst)
        S = spin_table(6)
        mk, mk1, m1, cross = exact._gg_brackets(probs, S, 1)
        Sf = S.astype(float)
        R = (Sf @ Sf.T) / 6
        w = np.outer(probs, probs)
        oracle_cross = np.einsum("a,b,c,ab,ac->", probs, probs, probs, R, R,
                                 optimize=True)
        assert mk == pytest.approx((w * R).sum(), abs=1e-12)
        assert mk1 == pytest.approx((w * R * R).sum(), abs=1e-12)
        assert cross == pytest.approx(oracle_cross, abs=1e-12)

    def test_residual_shrinks_with_system_size(self):
        # the identities are asymptotic: at fixed disorder-MC budget the
        # finite-size residual decreases from N=8 to N=12
        params = ModelParams(p=2, lam=1.0, beta=0.0, h=0.0)
        r8, _ = gg_residual(params, 8, 1, 1, RandomStreams(4), 30, pert=self.PERT)
        r12, _ = gg_residual(params, 12, 1, 1, RandomStreams(4), 30, pert=self.PERT)
        assert r12 < r8


class TestCavityResidual:
    def test_beta_zero_identity(self):
        params = ModelParams(p=2, lam=0.5, beta=0.0, h=0.2)
        query = MomentQuery(n=1, sets=((1, 2),))
        out = cavity_residual_finite_N(params, 8, query, RandomStreams(0), 30)
        assert out["residual"] <= 1e-10

    def test_zero_clause_field_point(self):
        # lam -> 0: both sides reduce to th(h)
        params = ModelParams(p=2, lam=1e-12, beta=1.0, h=0.4)
        query = MomentQuery(n=1, sets=((1,),))
        out = cavity_residual_finite_N(params, 8, query, RandomStreams(0), 5)
        assert out["lhs"] == pytest.approx(math.tanh(0.4), abs=1e-10)
        assert out["residual"] <= 1e-10

    def test_size_guard(self):
        params = ModelParams(p=2, lam=0.5, beta=0.5, h=0.0)
        with pytest.raises(ValueError):
            cavity_residual_finite_N(params, 20, MomentQuery(n=1, sets=((1,),)),
                                     RandomStreams(0), 2)

    def test_query_validation(self):
        with pytest.raises(ValueError):
            MomentQuery(n=1, sets=((0,),))
        with pytest.raises(ValueError):
            MomentQuery(n=4, sets=((1,), (2,)))
        q = MomentQuery(n=2, sets=((1, 3), (2,)))
        assert q.m == 3
        assert q.split(0) == ((1,), (3,))
