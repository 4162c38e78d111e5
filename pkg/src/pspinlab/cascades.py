"""Poisson-Dirichlet PD(zeta) weights and the tilt-and-reorder invariance.

Two independent constructions are provided: the defining one (normalized
decreasing points x_a = eta_a^{-1/zeta} of a unit-rate Poisson arrival
process, realizing mean measure zeta x^{-1-zeta} dx) and a stick-breaking
construction of the one-parameter PD(zeta) law used purely as a
cross-validation oracle.

Truncation at K atoms leaves an infinite tail; its mass is estimated
(conditional expectation given the last arrival for the point-process route,
exact remaining stick mass for stick-breaking) and carried on the weights
object.  Power-sum statistics apply the (1 - tail) correction so the parameter
identity E sum V^2 = 1 - zeta is testable at moderate K.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PDWeights",
    "TiltRecord",
    "pd_sample",
    "pd_sample_stickbreaking",
    "tilt_reorder",
    "pd_power_sums",
]


@dataclass
class PDWeights:
    zeta: float
    v: np.ndarray            # decreasing, normalized to sum 1 over K atoms
    tail_mass: float         # estimated mass fraction beyond the K-th atom
    next_point_bound: float  # estimated size of the (K+1)-th atom / total

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)

    @property
    def K(self):
        return len(self.v)

    def power_sum(self, r, tail_corrected=True):
        """sum_a V_a^r for the full (untruncated) sequence.

        With the correction, the K retained atoms carry total mass
        (1 - tail_mass) of the full normalization, so their contribution is
        (1 - tail_mass)^r * sum(v^r); the omitted atoms add at most
        next_point_bound^(r-1) * tail_mass, which is negligible at default K.
        """
        s = float((self.v**r).sum())
        if tail_corrected:
            return (1.0 - self.tail_mass) ** r * s
        return s


@dataclass
class TiltRecord:
    v_tilted: np.ndarray   # reordered tilted weights, decreasing, sum 1
    rho: np.ndarray        # reordering map: v_tilted[a] came from atom rho[a]
    logtilts: np.ndarray   # original (unordered) log-tilts
    zeta: float

    @property
    def tilts_reordered(self):
        return self.logtilts[self.rho]


def _check_zeta(zeta):
    if not (0.0 < zeta < 1.0):
        raise ValueError(f"zeta must lie strictly in (0, 1), got {zeta}")


def _pd_points(zeta, K, rng):
    """Arrival times eta_1 < eta_2 < ... and points x_a = eta_a^{-1/zeta}."""
    eta = np.cumsum(rng.standard_exponential(K))
    return eta, eta ** (-1.0 / zeta)


def pd_sample(zeta, K, rng, max_next_point=1e-3, auto_extend=True):
    """One PD(zeta) draw, truncated at K atoms (decreasing, normalized).

    The estimated (K+1)-th point bound relative to the total mass must come
    out below max_next_point; otherwise K is doubled automatically.
    """
    _check_zeta(zeta)
    if K < 10:
        raise ValueError("K must be >= 10")
    while True:
        eta, x = _pd_points(zeta, K, rng)
        total = x.sum()
        # E[tail mass | eta_K] under the mean measure
        tail = (zeta / (1.0 - zeta)) * eta[-1] ** (1.0 - 1.0 / zeta)
        next_point = eta[-1] ** (-1.0 / zeta)
        grand = total + tail
        if next_point / grand <= max_next_point or not auto_extend:
            break
        K *= 2
    return PDWeights(
        zeta=zeta,
        v=x / total,
        tail_mass=tail / grand,
        next_point_bound=next_point / grand,
    )


def pd_sample_stickbreaking(zeta, K, rng):
    """PD(zeta) via stick breaking: W_j ~ Beta(1-zeta, j*zeta), independent
    sticks W_j prod_{l<j}(1 - W_l), then size ordering.  Oracle construction,
    independent of the point-process route.
    """
    _check_zeta(zeta)
    if K < 10:
        raise ValueError("K must be >= 10")
    W = rng.beta(1.0 - zeta, zeta * np.arange(1, K + 1))
    log_rem = np.concatenate(([0.0], np.cumsum(np.log1p(-W))))
    sticks = W * np.exp(log_rem[:-1])
    tail = float(np.exp(log_rem[-1]))    # exact remaining mass
    order = np.argsort(-sticks, kind="stable")
    v = sticks[order]
    total = v.sum()                      # equals 1 - tail up to rounding
    return PDWeights(
        zeta=zeta,
        v=v / total,
        tail_mass=tail,
        next_point_bound=float(v[-1]) / (total + tail),
    )


def tilt_reorder(w, logtilts):
    """Tilt weights by exp(logtilts), renormalize and reorder decreasingly.

    Ties are broken by original atom index (they have probability zero for
    continuous tilts).  Returns the reordering map rho alongside.
    """
    logtilts = np.asarray(logtilts, dtype=float)
    if logtilts.shape != (w.K,):
        raise ValueError("need one log-tilt per atom")
    if not np.all(np.isfinite(logtilts)):
        raise ValueError("log-tilts must be finite")
    logw = np.log(w.v) + logtilts
    logw -= logw.max()
    tilted = np.exp(logw)
    tilted /= tilted.sum()
    rho = np.argsort(-tilted, kind="stable")
    return TiltRecord(v_tilted=tilted[rho], rho=rho, logtilts=logtilts, zeta=w.zeta)


def pd_power_sums(zeta, K, n_draws, streams, construction="points", powers=(2, 3)):
    """Per-draw tail-corrected power sums sum_a V_a^r for r in powers.

    Batched sampler used by the moment checks; mathematically identical to
    mapping pd_sample / pd_sample_stickbreaking over draws, vectorized across
    a batch for speed.  Returns an (n_draws, len(powers)) array.
    """
    _check_zeta(zeta)
    out = np.empty((n_draws, len(powers)))
    batch = max(1, min(n_draws, 2 * 10**6 // K))
    done = 0
    b = 0
    while done < n_draws:
        size = min(batch, n_draws - done)
        rng = streams.stream(f"pd.{construction}", b)
        if construction == "points":
            eta = np.cumsum(rng.standard_exponential((size, K)), axis=1)
            x = eta ** (-1.0 / zeta)
            total = x.sum(axis=1)
            tail = (zeta / (1.0 - zeta)) * eta[:, -1] ** (1.0 - 1.0 / zeta)
            grand = total + tail
            for j, r in enumerate(powers):
                out[done : done + size, j] = (x**r).sum(axis=1) / grand**r
        elif construction == "sticks":
            W = rng.beta(1.0 - zeta, zeta * np.arange(1, K + 1), size=(size, K))
            log_rem = np.cumsum(np.log1p(-W), axis=1)
            sticks = np.empty_like(W)
            sticks[:, 0] = W[:, 0]
            sticks[:, 1:] = W[:, 1:] * np.exp(log_rem[:, :-1])
            # sticks + remainder sum to exactly 1; power sums need no rescale
            for j, r in enumerate(powers):
                out[done : done + size, j] = (sticks**r).sum(axis=1)
        else:
            raise ValueError(f"unknown construction {construction!r}")
        done += size
        b += 1
    return out
