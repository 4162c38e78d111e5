"""Hamiltonian of the diluted p-spin model.

A clause couples p spins through a Gaussian coupling g and contributes
beta * g * sigma_1 ... sigma_p.  An instance is Poisson(lam*N) such clauses
with uniform site indices, plus a field term h * sum_i sigma_i, plus two
optional perturbation terms (a mixed Gaussian polynomial and Poisson-many
cavity-style clusters).

The clause function extends from {-1,+1}^p to magnetizations in [-1,1]^p via
    theta(m) = log( cosh(beta g) * (1 + tanh(beta g) * m_1 ... m_p) ),
which agrees with the spin version on {-1,+1}^p and equals the log of the
average of exp(theta) over independent signs with the given means.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams, PerturbationConfig

__all__ = [
    "theta_pm",
    "theta_ext",
    "HamiltonianInstance",
    "sample_instance",
    "energy",
    "energy_batch",
    "spins_from_magnetization",
]

SCHEMA_VERSION = 1


def theta_pm(g, beta, spins):
    """Clause energy beta * g * prod(spins) for spins in {-1,+1}."""
    spins = np.asarray(spins)
    if not np.all(np.abs(spins) == 1):
        raise ValueError("spins must be +-1")
    return beta * g * float(np.prod(spins))


def theta_ext(g, beta, m):
    """Extension of the clause energy to magnetizations m in [-1,1]^p.

    Returns log(cosh(beta g) * (1 + tanh(beta g) * m_1...m_p)); the argument of
    the log is bounded below by cosh(beta g) * (1 - |tanh(beta g)|) > 0.
    """
    m = np.asarray(m, dtype=float)
    if np.any(np.abs(m) > 1):
        raise ValueError("magnetizations must lie in [-1, 1]")
    bg = beta * g
    t = math.tanh(bg)
    prod = float(np.prod(m))
    # log cosh(bg) computed overflow-safely
    log_ch = abs(bg) + math.log1p(math.exp(-2.0 * abs(bg))) - math.log(2.0)
    return log_ch + math.log1p(t * prod)


@dataclass
class HamiltonianInstance:
    """One sampled disorder realization.

    clauses_g has shape (M,), clauses_idx shape (M, p) with entries in
    0..N-1.  t = tanh(beta * g) is stored alongside because the cavity
    formulas consume it directly.  pert1 is a list of dense Gaussian
    coefficient tensors, one per order ell = 1..l_max; pert2 is a list of
    clusters, each a (g_vector, idx_matrix of shape (m_l, p-1)) pair.
    """

    N: int
    params: ModelParams
    clauses_g: np.ndarray
    clauses_idx: np.ndarray
    pert: PerturbationConfig = field(default_factory=PerturbationConfig)
    pert1_tensors: list = None
    pert2_clusters: list = None

    def __post_init__(self):
        self.clauses_g = np.asarray(self.clauses_g, dtype=float)
        self.clauses_idx = np.asarray(self.clauses_idx, dtype=np.int64)
        if self.clauses_idx.size and (
            self.clauses_idx.min() < 0 or self.clauses_idx.max() >= self.N
        ):
            raise ValueError("clause indices out of range")
        self.t = np.tanh(self.params.beta * self.clauses_g)

    @property
    def n_clauses(self):
        return len(self.clauses_g)

    def to_json(self):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "N": self.N,
            "params": self.params.to_dict(),
            "pert": self.pert.to_dict(),
            "clauses_g": self.clauses_g.tolist(),
            "clauses_idx": self.clauses_idx.tolist(),
            "pert1_tensors": None,
            "pert2_clusters": None,
        }
        if self.pert1_tensors is not None:
            doc["pert1_tensors"] = [t.tolist() for t in self.pert1_tensors]
        if self.pert2_clusters is not None:
            doc["pert2_clusters"] = [
                {"g": g.tolist(), "idx": idx.tolist()} for g, idx in self.pert2_clusters
            ]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, s):
        doc = json.loads(s)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("unknown instance schema version")
        p = doc["params"]["p"]
        idx = np.asarray(doc["clauses_idx"], dtype=np.int64).reshape(-1, p)
        inst = cls(
            N=doc["N"],
            params=ModelParams.from_dict(doc["params"]),
            clauses_g=np.asarray(doc["clauses_g"], dtype=float),
            clauses_idx=idx,
            pert=PerturbationConfig.from_dict(doc["pert"]),
        )
        if doc["pert1_tensors"] is not None:
            inst.pert1_tensors = [np.asarray(t, dtype=float) for t in doc["pert1_tensors"]]
        if doc["pert2_clusters"] is not None:
            inst.pert2_clusters = [
                (
                    np.asarray(c["g"], dtype=float),
                    np.asarray(c["idx"], dtype=np.int64).reshape(-1, p - 1),
                )
                for c in doc["pert2_clusters"]
            ]
        return inst


def sample_instance(params, N, pert=None, streams=None, index=0, n_clauses=None):
    """Draw a disorder instance: Poisson(lam*N) clauses, Gaussian couplings,
    i.i.d. uniform indices, plus any enabled perturbation terms.

    index distinguishes independent replicates under the same stream family;
    identical (streams.seed, index) always reproduces the same instance.
    n_clauses overrides the Poisson clause count (e.g. 0 to condition on the
    lam -> 0 limit).
    """
    if streams is None:
        raise ValueError("a RandomStreams object is required")
    if N < 1:
        raise ValueError("N must be >= 1")
    pert = pert or PerturbationConfig()
    p = params.p

    rng = streams.stream("disorder.clauses", index)
    if n_clauses is None:
        n_clauses = rng.poisson(params.lam * N)
    g = rng.standard_normal(n_clauses)
    idx = rng.integers(0, N, size=(n_clauses, p))

    inst = HamiltonianInstance(
        N=N, params=params, clauses_g=g, clauses_idx=idx, pert=pert
    )

    if pert.enabled1:
        rng1 = streams.stream("disorder.pert1", index)
        inst.pert1_tensors = [
            rng1.standard_normal((N,) * ell) for ell in range(1, pert.l_max + 1)
        ]
    if pert.enabled2:
        rng2 = streams.stream("disorder.pert2", index)
        n_clusters = rng2.poisson(pert.c_of(N))
        clusters = []
        for _ in range(n_clusters):
            m_l = rng2.poisson(params.lam * p)
            cg = rng2.standard_normal(m_l)
            cidx = rng2.integers(0, N, size=(m_l, p - 1))
            clusters.append((cg, cidx))
        inst.pert2_clusters = clusters
    return inst


def _pert1_values(inst, S):
    """s_N * sum_ell 2^-ell x_ell g_{N,ell}(sigma) for each row of S."""
    pert = inst.pert
    N = inst.N
    s_N = pert.s_of(N)
    Sf = S.astype(float)
    out = np.zeros(len(S))
    for ell, (x, G) in enumerate(zip(pert.x_weights, inst.pert1_tensors), start=1):
        if x == 0.0:
            continue
        if ell == 1:
            vals = Sf @ G
        elif ell == 2:
            vals = ((Sf @ G) * Sf).sum(axis=1)
        else:
            letters = "abcdefgh"[:ell]
            spec = ",".join("z" + c for c in letters)
            vals = np.einsum(f"{letters},{spec}->z", G, *([Sf] * ell), optimize=True)
        out += s_N * 2.0 ** (-ell) * x * vals * N ** (-ell / 2.0)
    return out


def _pert2_values(inst, S):
    """sum over clusters of log Av_eps exp(sum_k theta(..., eps) + h eps)."""
    beta, h = inst.params.beta, inst.params.h
    out = np.zeros(len(S))
    for cg, cidx in inst.pert2_clusters:
        if len(cg):
            prods = np.prod(S[:, cidx], axis=2)
            b = prods @ (beta * cg) + h
        else:
            b = np.full(len(S), h)
        out += np.logaddexp(b, -b) - math.log(2.0)
    return out


def energy_batch(inst, S):
    """Hamiltonian values for every row of S (shape (n_configs, N), +-1)."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[1] != inst.N:
        raise ValueError(f"spin configurations must have shape (*, {inst.N})")
    params = inst.params
    H = params.h * S.sum(axis=1).astype(float)
    if inst.n_clauses:
        prods = np.prod(S[:, inst.clauses_idx], axis=2)
        H += prods @ (params.beta * inst.clauses_g)
    if inst.pert.enabled1 and inst.pert1_tensors is not None:
        H += _pert1_values(inst, S)
    if inst.pert.enabled2 and inst.pert2_clusters is not None:
        H += _pert2_values(inst, S)
    return H


def energy(inst, sigma):
    """Hamiltonian of a single spin configuration (length-N, +-1 entries)."""
    sigma = np.asarray(sigma)
    if sigma.shape != (inst.N,):
        raise ValueError(f"expected a length-{inst.N} configuration")
    if not np.all(np.abs(sigma) == 1):
        raise ValueError("spins must be +-1")
    return float(energy_batch(inst, sigma[None, :])[0])


def spins_from_magnetization(sbar, coin):
    """Coin-flip a +-1 spin with expectation sbar from a uniform coin."""
    sbar = np.asarray(sbar, dtype=float)
    if np.any(np.abs(sbar) > 1):
        raise ValueError("magnetization must lie in [-1, 1]")
    # strict < makes both degenerate endpoints exact; sbar = 1 needs the
    # explicit override since coin = 1 can occur
    out = 2 * (np.asarray(coin) < (1.0 + sbar) / 2.0) - 1
    out = np.where(sbar == 1.0, 1, out)
    if out.ndim == 0:
        return int(out)
    return out.astype(np.int8)
