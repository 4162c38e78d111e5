"""Model parameters for the diluted p-spin glass.

The model is governed by the quadruple (p, lam, beta, h): p spins per clause,
connectivity lam > 0, inverse temperature beta >= 0 and external field h.  The
derived constant c = tanh(h) shows up throughout the cavity formulas, so it is
exposed as an attribute.
"""

import math
from dataclasses import dataclass, field

__all__ = ["ModelParams", "PerturbationConfig"]


@dataclass(frozen=True)
class ModelParams:
    p: int
    lam: float
    beta: float
    h: float = 0.0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"p must be an integer >= 2, got {self.p}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not math.isfinite(self.h):
            raise ValueError("h must be finite")

    @property
    def c(self):
        """tanh(h); zero iff the external field is zero."""
        return math.tanh(self.h)

    def to_dict(self):
        return {"p": self.p, "lam": self.lam, "beta": self.beta, "h": self.h}

    @classmethod
    def from_dict(cls, d):
        return cls(p=d["p"], lam=d["lam"], beta=d["beta"], h=d.get("h", 0.0))


@dataclass(frozen=True)
class PerturbationConfig:
    """Configuration of the two Hamiltonian perturbations.

    The first perturbation adds mixed Gaussian terms of orders ell <= l_max
    with weights 2^{-ell} x_ell and overall scale s_N = N^gamma,
    gamma in (1/4, 1/2).  The second adds Poisson-many cavity-style clusters,
    pi(c_N) of them, each averaging over an auxiliary spin; c_N grows slowly
    (default log(1+N)).

    Truncating the first perturbation at l_max leaves a tail bounded by
    s_N * 2^{-l_max} * max(x_weights).
    """

    enabled1: bool = False
    gamma: float = 1.0 / 3.0
    x_weights: tuple = (1.0, 1.0, 1.0)
    enabled2: bool = False

    def __post_init__(self):
        if not (0.25 < self.gamma < 0.5):
            raise ValueError(f"gamma must lie in (1/4, 1/2), got {self.gamma}")
        if any(x < 0 or x > 3 for x in self.x_weights):
            raise ValueError("x_weights entries must lie in [0, 3]")
        object.__setattr__(self, "x_weights", tuple(float(x) for x in self.x_weights))

    @property
    def l_max(self):
        return len(self.x_weights)

    def s_of(self, N):
        return float(N) ** self.gamma

    def c_of(self, N):
        """Slowly growing cluster-count mean for the second perturbation."""
        return math.log(1.0 + N)

    def truncation_bound(self, N):
        if not self.x_weights:
            return 0.0
        return self.s_of(N) * 2.0 ** (-self.l_max) * max(self.x_weights)

    def to_dict(self):
        return {
            "enabled1": self.enabled1,
            "gamma": self.gamma,
            "x_weights": list(self.x_weights),
            "enabled2": self.enabled2,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            enabled1=d.get("enabled1", False),
            gamma=d.get("gamma", 1.0 / 3.0),
            x_weights=tuple(d.get("x_weights", (1.0, 1.0, 1.0))),
            enabled2=d.get("enabled2", False),
        )


NO_PERTURBATION = PerturbationConfig()
