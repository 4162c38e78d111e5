"""Exact small-N computations over the full configuration space.

Everything here enumerates {-1,+1}^N (N <= 20 by default): partition function,
Gibbs and replica moments, overlap statistics, Ghirlanda-Guerra-style
residuals, and finite-N residuals of the cavity reconstruction of joint spin
moments.  Three partition-function paths are provided: a vectorized
log-sum-exp ("vector"), a Gray-code incremental walk ("gray") and a plain
double loop ("naive"); they agree to floating-point accuracy and the slower
ones serve as oracles for the fast one.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import HamiltonianInstance, energy_batch, sample_instance

__all__ = [
    "N_MAX",
    "spin_table",
    "log_partition",
    "GibbsSummary",
    "gibbs_summary",
    "MomentQuery",
    "gibbs_moment",
    "quenched_free_energy",
    "overlap_statistics",
    "gg_residual",
    "cavity_residual_finite_N",
]

N_MAX = 20


def spin_table(N):
    """All 2^N spin configurations as a (2^N, N) +-1 int8 matrix."""
    if N > N_MAX:
        raise ValueError(f"N={N} exceeds the enumeration guard N_MAX={N_MAX}")
    codes = np.arange(2**N, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(N)) & 1
    return (2 * bits - 1).astype(np.int8)


def _has_perturbations(inst):
    return (inst.pert.enabled1 and inst.pert1_tensors is not None) or (
        inst.pert.enabled2 and inst.pert2_clusters is not None
    )


def _energies_gray(inst):
    """Energies of all configs visited along the standard Gray-code walk.

    Maintains per-clause spin products and updates only the clauses touching
    the flipped site, so each step is O(local degree).  Supports the
    unperturbed Hamiltonian; perturbed instances go through the vector path.
    """
    if _has_perturbations(inst):
        raise ValueError("gray-code path does not cover perturbation terms")
    N = inst.N
    beta, h = inst.params.beta, inst.params.h
    g = inst.clauses_g
    idx = inst.clauses_idx

    # clause adjacency: for each site, (clause id, multiplicity parity)
    by_site = [[] for _ in range(N)]
    for k in range(len(g)):
        counts = {}
        for i in idx[k]:
            counts[i] = counts.get(i, 0) + 1
        for i, cnt in counts.items():
            if cnt % 2 == 1:
                by_site[i].append(k)

    sigma = [-1] * N
    prod = [1] * len(g)
    for k in range(len(g)):
        v = 1
        for i in idx[k]:
            v *= sigma[i]
        prod[k] = v

    e_clause = sum(beta * g[k] * prod[k] for k in range(len(g)))
    e_field = h * sum(sigma)
    energies = np.empty(2**N)
    energies[0] = e_clause + e_field
    for step in range(1, 2**N):
        # Gray code: flip the lowest set bit position of step
        site = (step & -step).bit_length() - 1
        sigma[site] = -sigma[site]
        e_field += 2 * h * sigma[site]
        for k in by_site[site]:
            e_clause -= 2 * beta * g[k] * prod[k]
            prod[k] = -prod[k]
        energies[step] = e_clause + e_field
    return energies


def _energies_naive(inst):
    """Plain double loop over configurations and clauses (oracle path)."""
    if _has_perturbations(inst):
        raise ValueError("naive path does not cover perturbation terms")
    N = inst.N
    beta, h = inst.params.beta, inst.params.h
    energies = np.empty(2**N)
    for code in range(2**N):
        sigma = [1 if (code >> i) & 1 else -1 for i in range(N)]
        e = h * sum(sigma)
        for k in range(inst.n_clauses):
            v = 1
            for i in inst.clauses_idx[k]:
                v *= sigma[i]
            e += beta * inst.clauses_g[k] * v
        energies[code] = e
    return energies


def _all_energies(inst, method="vector"):
    if inst.N > N_MAX:
        raise ValueError(f"N={inst.N} exceeds the enumeration guard N_MAX={N_MAX}")
    if method == "vector":
        return energy_batch(inst, spin_table(inst.N))
    if method == "gray":
        return _energies_gray(inst)
    if method == "naive":
        return _energies_naive(inst)
    raise ValueError(f"unknown method {method!r}")


def log_partition(inst, method="vector"):
    """log Z = log sum_sigma exp H(sigma), exact via stable log-sum-exp."""
    return float(logsumexp(_all_energies(inst, method)))


@dataclass(frozen=True)
class GibbsSummary:
    logZ: float
    N: int

    @property
    def free_energy_density(self):
        return self.logZ / self.N


def gibbs_summary(inst, method="vector"):
    return GibbsSummary(logZ=log_partition(inst, method), N=inst.N)


def gibbs_probs(inst):
    """Gibbs probabilities over all 2^N configurations (ordered as spin_table)."""
    e = _all_energies(inst)
    e = e - e.max()
    w = np.exp(e)
    return w / w.sum()


@dataclass(frozen=True)
class MomentQuery:
    """A joint spin moment: per replica, a set of designated coordinates.

    Coordinates are 1-based; 1..n are cavity coordinates, n+1..m the rest.
    """

    n: int
    sets: tuple

    def __post_init__(self):
        sets = tuple(tuple(int(i) for i in s) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        if any(i < 1 for s in sets for i in s):
            raise ValueError("coordinates are 1-based")
        if self.n > self.m:
            raise ValueError("n cannot exceed the total coordinate count")

    @property
    def m(self):
        return max((max(s) for s in self.sets if s), default=self.n)

    @property
    def q(self):
        return len(self.sets)

    def split(self, ell):
        """(cavity part, non-cavity part) of replica ell's coordinate set."""
        s = self.sets[ell]
        return tuple(i for i in s if i <= self.n), tuple(i for i in s if i > self.n)


def gibbs_moment(inst, sets):
    """Product over replicas of Gibbs-averaged spin products.

    sets: sequence of site-index collections (0-based).  Exact via
    enumeration; the result lies in [-1, 1].
    """
    probs = gibbs_probs(inst)
    S = spin_table(inst.N)
    out = 1.0
    for s in sets:
        s = list(s)
        if any(i < 0 or i >= inst.N for i in s):
            raise ValueError("site index out of range")
        if s:
            vals = np.prod(S[:, s], axis=1).astype(float)
            out *= float(probs @ vals)
    return out


def quenched_free_energy(params, N, reps, pert=None, streams=None, zero_clauses=False):
    """Monte Carlo estimate of F_N = E log Z_N / N over disorder.

    Returns (estimate, stderr).  zero_clauses conditions every instance on an
    empty clause set (the lam -> 0 limit).
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    vals = np.empty(reps)
    for r in range(reps):
        inst = sample_instance(
            params, N, pert=pert, streams=streams, index=r,
            n_clauses=0 if zero_clauses else None,
        )
        vals[r] = log_partition(inst) / N
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(reps))


def _pair_overlap_sums(probs, S, k_max, bin_edges, chunk=512):
    """Blockwise sums over config pairs of p p' R^k and the R histogram."""
    n_conf, N = S.shape
    Sf = S.astype(np.float64)
    moments = np.zeros(k_max)
    hist = np.zeros(len(bin_edges) - 1)
    for lo in range(0, n_conf, chunk):
        hi = min(lo + chunk, n_conf)
        R = (Sf[lo:hi] @ Sf.T) / N            # (chunk, n_conf)
        w = probs[lo:hi, None] * probs[None, :]
        Rk = np.ones_like(R)
        for k in range(k_max):
            Rk = Rk * R
            moments[k] += (w * Rk).sum()
        h, _ = np.histogram(R.ravel(), bins=bin_edges, weights=w.ravel())
        hist += h
    return moments, hist


def overlap_statistics(params, N, reps, streams, pert=None, k_max=4, bin_width=0.05):
    """Disorder-averaged overlap moments E<R_12^k> for k <= k_max, with a
    histogram of R_12 under E G x G.

    Returns a dict with 'moments' (k -> (estimate, stderr)), 'bin_edges' and
    'histogram' (mass per bin, sums to 1).
    """
    nbins = int(round(2.0 / bin_width))
    bin_edges = np.linspace(-1.0, 1.0, nbins + 1)
    per_rep = np.zeros((reps, k_max))
    hist = np.zeros(nbins)
    for r in range(reps):
        inst = sample_instance(params, N, pert=pert, streams=streams, index=r)
        probs = gibbs_probs(inst)
        S = spin_table(N)
        m, h = _pair_overlap_sums(probs, S, k_max, bin_edges)
        per_rep[r] = m
        hist += h
    hist /= reps
    moments = {
        k + 1: (float(per_rep[:, k].mean()),
                float(per_rep[:, k].std(ddof=1) / math.sqrt(reps)))
        for k in range(k_max)
    }
    return {"moments": moments, "bin_edges": bin_edges, "histogram": hist}


def _gg_brackets(probs, S, k, chunk=512):
    """Per-instance Gibbs brackets needed by the Ghirlanda-Guerra residual.

    Returns (<R12^k>, <R12^{k+1}>, <R12>, <R13 R12^k>), all exact.
    """
    n_conf, N = S.shape
    Sf = S.astype(np.float64)
    m_k = 0.0
    m_k1 = 0.0
    m_1 = 0.0
    alpha = np.zeros(n_conf)   # per config c: sum_c' p' R(c,c')
    betak = np.zeros(n_conf)   # per config c: sum_c' p' R(c,c')^k
    for lo in range(0, n_conf, chunk):
        hi = min(lo + chunk, n_conf)
        R = (Sf[lo:hi] @ Sf.T) / N
        Rk = R**k
        alpha[lo:hi] = R @ probs
        betak[lo:hi] = Rk @ probs
        w = probs[lo:hi, None] * probs[None, :]
        m_1 += (w * R).sum()
        m_k += (w * Rk).sum()
        m_k1 += (w * Rk * R).sum()
    cross = float(probs @ (alpha * betak))   # <R_{1,3} R_{1,2}^k>
    return m_k, m_k1, m_1, cross


def gg_residual(params, N, n_replicas, test_power, streams, reps, pert=None):
    """Residual of the standard Ghirlanda-Guerra form with f = R_12^k,
        | E<R_{1,n+1} f> - (1/n) E<R_12> E<f> - (1/n) sum_{l=2}^n E<R_{1,l} f> |.

    Requires the first perturbation to be enabled (it is what forces the
    identities asymptotically).  Returns (residual, stderr) where the stderr
    is a jackknife over disorder replicates.
    """
    if pert is None or not pert.enabled1:
        raise ValueError("gg_residual requires perturbation 1 to be enabled")
    n = n_replicas
    k = test_power
    terms = np.zeros((reps, 4))
    for r in range(reps):
        inst = sample_instance(params, N, pert=pert, streams=streams, index=r)
        probs = gibbs_probs(inst)
        S = spin_table(N)
        terms[r] = _gg_brackets(probs, S, k)

    if n == 1:
        # E<R_{1,2} f> - E<R_12> E<f>; with f = 1 (k = 0) this telescopes to 0
        def combine(t):
            m_k, m_k1, m_1, cross = t
            return m_k1 - m_1 * m_k
    else:
        # replicas l in 3..n are exchangeable with replica n+1
        def combine(t):
            m_k, m_k1, m_1, cross = t
            return cross - (m_1 * m_k) / n - (m_k1 + (n - 2) * cross) / n

    full = combine(terms.mean(axis=0))
    jack = np.array([
        combine(np.delete(terms, r, axis=0).mean(axis=0)) for r in range(reps)
    ])
    se = math.sqrt(max((reps - 1) / reps * ((jack - jack.mean()) ** 2).sum(), 0.0))
    return abs(float(full)), float(se)


def _split_joint_instance(params, N, n, g, idx):
    """Split clauses of an (N+n)-site instance into bulk clauses, per-cavity
    clause lists and a dropped remainder (clauses touching >= 2 cavity slots).
    """
    cav_count = (idx >= N).sum(axis=1)
    bulk = cav_count == 0
    inst_bulk = HamiltonianInstance(
        N=N, params=params, clauses_g=g[bulk], clauses_idx=idx[bulk]
    )
    per_cav = [[] for _ in range(n)]
    n_dropped = 0
    for row in np.nonzero(cav_count == 1)[0]:
        sites = idx[row]
        cav_site = sites[sites >= N][0] - N
        others = sites[sites < N]
        per_cav[cav_site].append((g[row], others))
    n_dropped = int((cav_count >= 2).sum())
    return inst_bulk, per_cav, n_dropped


def cavity_residual_finite_N(params, N, query, streams, reps, n_eps_check=None):
    """Finite-N residual of the cavity reconstruction of a joint spin moment.

    The left side is the exact moment on an (N+n)-spin system with the first n
    coordinates mapped to the added sites.  The right side evaluates the
    cavity formula on a proper N-site system: Poisson(lam*N) bulk clauses and
    Poisson(lam*p) cavity clauses per added coordinate.  To keep the
    difference low-variance, that system is maximally coupled to the left
    side: all-bulk clauses of the joint instance are kept (a Poisson thinning
    with rate (N/(N+n))^p), clauses touching exactly one added site become
    that coordinate's cavity clauses, clauses touching two or more added
    sites are dropped, and fresh clauses top the counts up to the target
    Poisson rates.  The two sides then differ by O(1) clauses whose effect on
    a fixed moment is O(1/N), which is the finite-size discrepancy being
    measured; at beta = 0 clauses carry no weight and the residual vanishes
    identically.

    Returns a dict with lhs, rhs, residual = |mean difference|, stderr of the
    mean difference, and the dropped-clause rate.
    """
    n = query.n
    m = query.m
    p = params.p
    if n > 3:
        raise ValueError("at most 3 cavity coordinates supported")
    if N + n > N_MAX:
        raise ValueError("N + n exceeds the enumeration guard")
    if m - n > N:
        raise ValueError("not enough bulk sites for the non-cavity coordinates")
    Ntot = N + n
    bulk_deficit = params.lam * N * (1.0 - (N / Ntot) ** (p - 1))
    cav_deficit = params.lam * p * (1.0 - (N / Ntot) ** (p - 1))

    diffs = np.empty(reps)
    lhs_vals = np.empty(reps)
    rhs_vals = np.empty(reps)
    dropped = 0
    for r in range(reps):
        rng = streams.stream("cavity.joint", r)
        M = rng.poisson(params.lam * Ntot)
        g = rng.standard_normal(M)
        idx = rng.integers(0, Ntot, size=(M, p))

        inst_full = HamiltonianInstance(
            N=Ntot, params=params, clauses_g=g, clauses_idx=idx
        )
        # coordinate j <= n -> added site N+j-1; coordinate j > n -> bulk site j-n-1
        mapped = [
            [N + i - 1 if i <= n else i - n - 1 for i in s] for s in query.sets
        ]
        lhs = gibbs_moment(inst_full, mapped)

        inst_bulk, per_cav, n_drop = _split_joint_instance(params, N, n, g, idx)
        dropped += n_drop
        # top up to the target clause counts of the cavity representation
        mb = rng.poisson(bulk_deficit)
        if mb:
            gb = rng.standard_normal(mb)
            ib = rng.integers(0, N, size=(mb, p))
            inst_bulk = HamiltonianInstance(
                N=N,
                params=params,
                clauses_g=np.concatenate([inst_bulk.clauses_g, gb]),
                clauses_idx=np.concatenate([inst_bulk.clauses_idx, ib]),
            )
        for i in range(n):
            mc = rng.poisson(cav_deficit)
            for _ in range(mc):
                per_cav[i].append(
                    (rng.standard_normal(), rng.integers(0, N, size=p - 1))
                )
        probs = gibbs_probs(inst_bulk)
        S = spin_table(N).astype(np.float64)
        # cavity field argument a_i(sigma): A_i(eps) = a_i * eps
        a = np.empty((n, len(probs)))
        for i in range(n):
            ai = np.full(len(probs), params.h)
            for gk, others in per_cav[i]:
                ai = ai + params.beta * gk * np.prod(S[:, others], axis=1)
            a[i] = ai
        ch = np.cosh(a)
        sh = np.sinh(a)
        ch_all = np.prod(ch, axis=0)
        V = float(probs @ ch_all)
        rhs = 1.0
        for ell in range(query.q):
            c1, c2 = query.split(ell)
            vals = ch_all.copy()
            for i in c1:
                vals = vals / ch[i - 1] * sh[i - 1]
            for i in c2:
                vals = vals * S[:, i - n - 1]
            rhs *= float(probs @ vals) / V
        lhs_vals[r] = lhs
        rhs_vals[r] = rhs
        diffs[r] = lhs - rhs

    se = float(diffs.std(ddof=1) / math.sqrt(reps))
    return {
        "lhs": float(lhs_vals.mean()),
        "rhs": float(rhs_vals.mean()),
        "residual": abs(float(diffs.mean())),
        "stderr": se,
        "dropped_clause_rate": dropped / max(reps, 1),
    }
