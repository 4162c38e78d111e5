"""Acceptance battery: ten named checks covering exactness, oracle
equivalence, the cascade identities, the cavity construction and
reproducibility.  Each check returns a CheckResult; verify_suite runs a
selected tier and reports one line per check.
"""

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import cascades, cavity, exact, orderparam
from .model import sample_instance, theta_ext
from .params import ModelParams
from .streams import RandomStreams

__all__ = ["CheckResult", "verify_suite", "ALL_CRITERIA"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def criterion_free_energy_exactness(seed=0, sizes=range(6, 17, 2)):
    """Free energy log 2 at beta = 0, h = 0; log(2 cosh h) with no clauses."""
    streams = RandomStreams(seed)
    worst = 0.0
    for N in sizes:
        inst = sample_instance(ModelParams(p=3, lam=1.0, beta=0.0, h=0.0), N,
                               streams=streams, index=N)
        worst = max(worst, abs(exact.log_partition(inst) / N - math.log(2.0)))
        inst0 = sample_instance(ModelParams(p=3, lam=1.0, beta=1.2, h=0.7), N,
                                streams=streams, index=100 + N, n_clauses=0)
        ref = math.log(2.0 * math.cosh(0.7))
        worst = max(worst, abs(exact.log_partition(inst0) / N - ref))
    return CheckResult(
        name="free_energy_exactness",
        passed=worst <= 1e-12,
        detail=f"max deviation {worst:.3e} (tol 1e-12)",
        data={"max_dev": worst},
    )


def criterion_enumeration_oracles(seed=0, n_instances=50):
    """Gray-code vs naive double-loop (and the vectorized path) agree."""
    streams = RandomStreams(seed)
    pick = streams.stream("verify.oracles")
    worst = 0.0
    for r in range(n_instances):
        N = int(pick.integers(6, 13))
        p = int(pick.integers(2, 4))
        inst = sample_instance(ModelParams(p=p, lam=1.0, beta=0.8, h=0.3), N,
                               streams=streams, index=r)
        zg = exact.log_partition(inst, method="gray")
        zn = exact.log_partition(inst, method="naive")
        zv = exact.log_partition(inst, method="vector")
        worst = max(worst, abs(zg - zn), abs(zg - zv))
    return CheckResult(
        name="enumeration_oracles",
        passed=worst <= 1e-10,
        detail=f"{n_instances} instances, max |dlogZ| {worst:.3e} (tol 1e-10)",
        data={"max_dev": worst},
    )


def criterion_pd_moment_identity(seed=0, zetas=(0.3, 0.5, 0.7), K=10_000, M=10_000):
    """zeta = 1 - E sum V^2, and agreement of the two PD constructions."""
    streams = RandomStreams(seed)
    rows = []
    ok = True
    try:
        for z in zetas:
            pt = cascades.pd_power_sums(z, K, M, streams, "points")
            st = cascades.pd_power_sums(z, K, M, streams, "sticks")
            e2, s2 = pt[:, 0].mean(), pt[:, 0].std(ddof=1) / math.sqrt(M)
            dev = abs(e2 - (1.0 - z))
            ok &= dev <= 3 * s2
            for j in range(2):
                a, sa = pt[:, j].mean(), pt[:, j].std(ddof=1) / math.sqrt(M)
                b, sb = st[:, j].mean(), st[:, j].std(ddof=1) / math.sqrt(M)
                ok &= abs(a - b) <= 3 * math.sqrt(sa**2 + sb**2)
            rows.append(f"z={z}: EV2={e2:.4f}+-{s2:.4f} (ref {1-z})")
    except ValueError as err:
        return CheckResult("pd_moment_identity", False, f"sampler error: {err}")
    return CheckResult(
        name="pd_moment_identity",
        passed=bool(ok),
        detail="; ".join(rows),
    )


def criterion_tilt_invariance(seed=0, zeta=0.5, K=4000, M=4000):
    """Gaussian tilts leave the weight law invariant; the reattached tilts
    become i.i.d. with the exponentially tilted law (mean zeta for standard
    normal tilts), independent of the new weights.  Checked on the top atoms,
    where K-truncation bias is negligible; deep ranks are distorted because
    missing tail atoms would be tilted up into them."""
    rng = RandomStreams(seed).stream("verify.tilt")
    top = 50
    v2 = np.empty(M)
    t_top = np.empty(M)
    cov = np.empty(M)
    for m in range(M):
        eta = np.cumsum(rng.standard_exponential(K))
        x = eta ** (-1.0 / zeta)
        t = rng.standard_normal(K)
        logw = np.log(x) + t
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        order = np.argsort(-w, kind="stable")
        v2[m] = (w**2).sum()
        t_top[m] = t[order[0]]
        wt = w[order[:top]]
        tt = t[order[:top]]
        cov[m] = float(((wt - wt.mean()) * (tt - zeta)).sum())
    checks = [
        (v2.mean() - (1.0 - zeta), 3 * v2.std(ddof=1) / math.sqrt(M)),
        (t_top.mean() - zeta, 3 * t_top.std(ddof=1) / math.sqrt(M)),
        (cov.mean(), 3 * cov.std(ddof=1) / math.sqrt(M)),
    ]
    ok = all(abs(d) <= tol for d, tol in checks)
    return CheckResult(
        name="tilt_invariance",
        passed=bool(ok),
        detail=(f"EV'2={v2.mean():.4f} (ref {1-zeta}); "
                f"tilt@top={t_top.mean():.4f} (ref {zeta}); "
                f"weight/tilt cov={cov.mean():.5f}+-{cov.std(ddof=1)/math.sqrt(M):.5f}"),
    )


def criterion_theta_extension(seed=0, n_samples=1000):
    """theta_ext against the 2^p brute-force average over signs."""
    rng = RandomStreams(seed).stream("verify.theta")
    worst = 0.0
    for p in (2, 3, 4):
        eps = exact.spin_table(p).astype(float)
        for _ in range(n_samples):
            g = rng.standard_normal()
            beta = rng.uniform(0.0, 2.0)
            m = rng.uniform(-1.0, 1.0, size=p)
            weights = np.prod((1.0 + eps * m) / 2.0, axis=1)
            brute = math.log(float(weights @ np.exp(beta * g * eps.prod(axis=1))))
            worst = max(worst, abs(theta_ext(g, beta, m) - brute))
    return CheckResult(
        name="theta_extension",
        passed=worst <= 1e-12,
        detail=f"max |log diff| {worst:.3e} over 3x{n_samples} draws (tol 1e-12)",
        data={"max_dev": worst},
    )


def criterion_cavity_residual_decay(seed=0, reps=400):
    """The finite-size cavity reconstruction error does not grow from N=8 to
    N=16 (within combined stderr) and vanishes identically at beta=0."""
    params = ModelParams(p=2, lam=0.5, beta=0.5, h=0.2)
    query = exact.MomentQuery(n=1, sets=((1, 2),))
    r8 = exact.cavity_residual_finite_N(params, 8, query, RandomStreams(seed), reps)
    r16 = exact.cavity_residual_finite_N(params, 16, query, RandomStreams(seed + 1), reps)
    comb = math.sqrt(r8["stderr"] ** 2 + r16["stderr"] ** 2)
    ok_decay = r16["residual"] <= r8["residual"] + comb
    params0 = ModelParams(p=2, lam=0.5, beta=0.0, h=0.2)
    r0 = exact.cavity_residual_finite_N(params0, 8, query, RandomStreams(seed + 2), 50)
    ok_zero = r0["residual"] <= 1e-10
    return CheckResult(
        name="cavity_residual_decay",
        passed=bool(ok_decay and ok_zero),
        detail=(f"res(8)={r8['residual']:.2e}+-{r8['stderr']:.1e}, "
                f"res(16)={r16['residual']:.2e}+-{r16['stderr']:.1e}, "
                f"beta=0 res={r0['residual']:.1e}"),
        data={"r8": r8, "r16": r16, "r0": r0},
    )


def criterion_fixed_point(seed=0, s_out=1000, s_in=1000, workers=1):
    """Population dynamics converges at the reference point and the three
    fixed-point residuals stay within 3 stderr."""
    params = ModelParams(p=2, lam=1.0, beta=1.0, h=0.3)
    zeta = 0.5
    config = cavity.PopDynConfig(s_out=s_out, s_in=s_in, max_sweeps=150)
    result = cavity.popdyn_solve(params, zeta, config, RandomStreams(seed),
                                 workers=workers)
    op = result.op
    umr = cavity.update_moment_residual(op, params, zeta, RandomStreams(seed + 1))
    ev = cavity.eta_variance_residual(op, params, zeta, RandomStreams(seed + 2))
    _, _, dec_ratio = cavity.decorrelation_residual(op, params, zeta,
                                                    RandomStreams(seed + 3))
    ok = result.converged and umr.max_ratio < 3.0 and ev == 0.0 and dec_ratio < 3.0
    return CheckResult(
        name="fixed_point_selfconsistency",
        passed=bool(ok),
        detail=(f"converged={result.converged} ({result.n_sweeps} sweeps), "
                f"update ratio={umr.max_ratio:.2f}, eta-var={ev:.1e}, "
                f"decor ratio={dec_ratio:.2f}"),
        data={"n_sweeps": result.n_sweeps, "umr": umr.per_statistic},
    )


# (kernel, params) battery: symmetric conditional laws have q_low = 0
_SYMMETRY_BATTERY = [
    ("sign_x", {"a": 0.5}),
    ("sign_x_v", {"a": 0.8, "b": 0.0}),
    ("linear_v", {"a": 0.7}),
    ("shifted_sign", {"mean": 0.3, "amp": 0.4}),
    ("tanh_field", {"a": 1.0, "b": 0.3}),
    ("constant", {"a": 0.5}),
]


def criterion_symmetry_battery(seed=0):
    """symmetry_statistic is consistent with q_low = 0 exactly on the
    symmetric members of the kernel battery."""
    rng = RandomStreams(seed).stream("verify.symmetry")
    rows = []
    ok = True
    for kernel, kp in _SYMMETRY_BATTERY:
        op = orderparam.ClosedFormOrderParameter(0.5, kernel=kernel, kernel_params=kp)
        q_low, _ = orderparam.overlap_quadrature(op, n_nodes=32, n_x=256)
        rep = orderparam.symmetry_statistic(op, 5, rng)
        if q_low < 1e-6:
            this = rep.statistic <= 3 * rep.stderr + 1e-9
        else:
            this = rep.statistic > 5 * rep.stderr
        ok &= this
        rows.append(f"{kernel}: q*={q_low:.3f}, stat={rep.statistic:.3f}"
                    f"{'' if this else ' <-FAIL'}")
    return CheckResult(
        name="symmetry_iff_qstar_zero",
        passed=bool(ok),
        detail="; ".join(rows),
    )


def criterion_field_positivity(seed=0, s_out=500, s_in=500, workers=1):
    """Nonzero field forces q_low > 0: exactly tanh(h)^2 at beta=0, and
    strictly positive at the criterion-7 numerical point."""
    config = cavity.PopDynConfig(s_out=s_out, s_in=s_in, min_sweeps=8, window=3)
    rep0 = cavity.qstar_positivity_check(
        ModelParams(p=2, lam=1.0, beta=0.0, h=0.5), 0.5, RandomStreams(seed),
        config, workers=workers)
    ref = math.tanh(0.5) ** 2
    ok0 = rep0["passed"] and abs(rep0["q_low"] - ref) <= 1e-10
    rep1 = cavity.qstar_positivity_check(
        ModelParams(p=2, lam=1.0, beta=1.0, h=0.3), 0.5, RandomStreams(seed + 1),
        config, workers=workers)
    return CheckResult(
        name="field_forces_overlap",
        passed=bool(ok0 and rep1["passed"]),
        detail=(f"beta=0: q*={rep0['q_low']:.6f} (ref {ref:.6f}); "
                f"beta=1: q*={rep1['q_low']:.4f}+-{rep1['se_low']:.4f}"),
        data={"beta0": rep0, "beta1": rep1},
    )


def _determinism_digest(seed, workers):
    """sha256 over a bundle exercising the randomized core of each check."""
    streams = RandomStreams(seed)
    blobs = []
    params = ModelParams(p=2, lam=1.0, beta=0.8, h=0.3)
    f, se = exact.quenched_free_energy(params, 8, 10, streams=streams)
    blobs.append(np.array([f, se]).tobytes())
    inst = sample_instance(params, 10, streams=streams, index=7)
    blobs.append(np.array([exact.log_partition(inst, "gray")]).tobytes())
    blobs.append(cascades.pd_power_sums(0.5, 500, 200, streams).tobytes())
    rng = streams.stream("verify.theta")
    blobs.append(rng.standard_normal(100).tobytes())
    query = exact.MomentQuery(n=1, sets=((1, 2),))
    r = exact.cavity_residual_finite_N(params, 8, query, streams, 20)
    blobs.append(np.array([r["lhs"], r["rhs"]]).tobytes())
    config = cavity.PopDynConfig(s_out=128, s_in=128, max_sweeps=6,
                                 min_sweeps=2, window=2)
    res = cavity.popdyn_solve(params, 0.5, config, streams, workers=workers)
    blobs.append(res.op.samples.tobytes())
    op = orderparam.ClosedFormOrderParameter(0.5, kernel="shifted_sign")
    rep = orderparam.symmetry_statistic(op, 3, streams.stream("verify.symmetry"))
    blobs.append(np.array([rep.statistic, rep.stderr]).tobytes())
    digest = hashlib.sha256()
    for b in blobs:
        digest.update(b)
    return digest.hexdigest()


def criterion_determinism(seed=0):
    """Byte-identical reruns for fixed seed at worker counts 1 and 8."""
    digests = [_determinism_digest(seed, w) for w in (1, 8, 1, 8)]
    ok = len(set(digests)) == 1
    return CheckResult(
        name="determinism",
        passed=bool(ok),
        detail=f"digest {digests[0][:16]}..., workers 1/8 x2 "
               f"{'identical' if ok else 'DIFFER'}",
        data={"digests": digests},
    )


ALL_CRITERIA = [
    criterion_free_energy_exactness,
    criterion_enumeration_oracles,
    criterion_pd_moment_identity,
    criterion_tilt_invariance,
    criterion_theta_extension,
    criterion_cavity_residual_decay,
    criterion_fixed_point,
    criterion_symmetry_battery,
    criterion_field_positivity,
    criterion_determinism,
]

_QUICK_OVERRIDES = {
    "criterion_enumeration_oracles": {"n_instances": 10},
    "criterion_pd_moment_identity": {"K": 2000, "M": 2000},
    "criterion_tilt_invariance": {"K": 1000, "M": 1000},
    "criterion_cavity_residual_decay": {"reps": 60},
    "criterion_fixed_point": {"s_out": 250, "s_in": 250},
    "criterion_field_positivity": {"s_out": 250, "s_in": 250},
}


def verify_suite(level="full", seed=0, workers=1):
    """Run the acceptance battery.  Returns the list of CheckResults."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    results = []
    for fn in ALL_CRITERIA:
        kwargs = {"seed": seed}
        if level == "quick":
            kwargs.update(_QUICK_OVERRIDES.get(fn.__name__, {}))
        if fn in (criterion_fixed_point, criterion_field_positivity):
            kwargs["workers"] = workers
        results.append(fn(**kwargs))
    return results
