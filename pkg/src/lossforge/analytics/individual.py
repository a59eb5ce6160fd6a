"""Single-obligor loss law of the jump-free lognormal asset model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb, erfc, ndtr


def _check(sigma, T, V0, F):
    if T <= 0 or V0 <= 0 or F <= 0:
        raise ValueError(f"need T, V0, F > 0, got T={T}, V0={V0}, F={F}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0 (the law only depends on |sigma|), got {sigma}")


def default_probability(mu, sigma, T, V0, F):
    """Probability that the asset value ends below the face value at ``T``.

    ``sigma = 0`` gives the deterministic limit. The formula only involves
    ``sigma**2``, so negative volatilities are accepted and behave like
    their absolute value.
    """
    if T <= 0 or V0 <= 0 or F <= 0:
        raise ValueError(f"need T, V0, F > 0, got T={T}, V0={V0}, F={F}")
    x = math.log(F / V0) - (mu - sigma**2 / 2) * T
    if sigma == 0:
        return 1.0 if x > 0 else 0.0
    # 1/2 + erf(z)/2 written as erfc(-z)/2 keeps accuracy deep in the tail
    return 0.5 * float(erfc(-x / math.sqrt(2 * sigma**2 * T)))


def individual_loss_pdf(L, mu, sigma, T, V0, F):
    """Density of the loss given default, ``L = (F - V(T)) / F`` on (0, 1)."""
    _check(sigma, T, V0, F)
    L = np.asarray(L, dtype=float)
    if np.any((L <= 0) | (L >= 1)):
        raise ValueError("loss given default density is defined on 0 < L < 1")
    pd = default_probability(mu, sigma, T, V0, F)
    var = sigma**2 * T
    z = np.log(F * (1 - L) / V0) - (mu - sigma**2 / 2) * T
    out = np.exp(-z**2 / (2 * var)) / (pd * (1 - L) * math.sqrt(2 * math.pi * var))
    return out[()] if out.ndim == 0 else out


def individual_loss_cdf(L, mu, sigma, T, V0, F):
    """P(loss given default <= L)."""
    _check(sigma, T, V0, F)
    L = np.clip(np.asarray(L, dtype=float), 0.0, 1.0)
    pd = default_probability(mu, sigma, T, V0, F)
    sd = sigma * math.sqrt(T)
    drift = (mu - sigma**2 / 2) * T
    with np.errstate(divide="ignore"):
        z = (np.log(F * (1 - L) / V0) - drift) / sd
    out = 1.0 - ndtr(z) / pd
    out = np.clip(out, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def individual_loss_moment(n: int, mu, sigma, T, V0, F) -> float:
    """n-th moment of the loss given default, in closed form.

    Expands ``(1 - V/F)**n`` binomially; each term is a truncated lognormal
    moment of V(T) below F. When default is impossible (or its probability
    underflows) the conditional moments are set to 0 for n >= 1, so that
    unconditional quantities ``P_D * <L^n>`` stay exact.
    """
    if n < 0 or int(n) != n:
        raise ValueError(f"moment order must be a non-negative integer, got {n}")
    _check(sigma, T, V0, F)
    if sigma == 0:
        v = V0 * math.exp(mu * T)
        if v < F:
            return ((F - v) / F) ** n
        return 1.0 if n == 0 else 0.0
    pd = default_probability(mu, sigma, T, V0, F)
    if pd == 0:
        return 1.0 if n == 0 else 0.0
    lev = math.log(F / V0)
    root = math.sqrt(2 * sigma**2 * T)
    total = 0.0
    for j in range(n + 1):
        growth = math.exp(j * (j - 1) * sigma**2 / 2 * T + j * (mu * T - lev))
        tail = float(erfc(-((1 - 2 * j) * sigma**2 * T / 2 - mu * T + lev) / root))
        total += (-1) ** j * comb(n, j, exact=True) * growth * tail
    return total / (2 * pd)


@dataclass(frozen=True)
class IndividualLossLaw:
    """Default probability and loss-given-default moments of one obligor."""

    pd: float
    moments: tuple[float, ...]
    mu: float = 0.05
    sigma: float = 0.15
    T: float = 1.0
    V0: float = 100.0
    F: float = 75.0

    @classmethod
    def from_params(cls, mu=0.05, sigma=0.15, T=1.0, V0=100.0, F=75.0, n_max: int = 4):
        moments = tuple(individual_loss_moment(n, mu, sigma, T, V0, F) for n in range(n_max + 1))
        return cls(default_probability(mu, sigma, T, V0, F), moments, mu, sigma, T, V0, F)

    def moment(self, n: int) -> float:
        return self.moments[n]

    @property
    def mean(self) -> float:
        return self.moments[1]

    @property
    def expected_loss(self) -> float:
        """Unconditional mean loss P_D <L>."""
        return self.pd * self.moments[1]

    @property
    def loss_variance(self) -> float:
        """Unconditional variance P_D <L^2> - (P_D <L>)^2."""
        return self.pd * self.moments[2] - (self.pd * self.moments[1]) ** 2

    @property
    def loss_third_cumulant(self) -> float:
        """Third cumulant of the unconditional loss (indicator times LGD)."""
        P, m1, m2, m3 = self.pd, self.moments[1], self.moments[2], self.moments[3]
        return P * m3 - 3 * P**2 * m1 * m2 + 2 * P**3 * m1**3

    def pdf(self, L):
        return individual_loss_pdf(L, self.mu, self.sigma, self.T, self.V0, self.F)

    def cdf(self, L):
        return individual_loss_cdf(L, self.mu, self.sigma, self.T, self.V0, self.F)


def el_ul_vs_maturity(T_grid, mu=0.05, sigma=0.15, V0=100.0, F=75.0, K: int = 1000):
    """Expected and unexpected loss of an uncorrelated homogeneous portfolio per maturity.

    Returns a dict of arrays ``T``, ``EL``, ``UL``.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if np.any(T_grid <= 0):
        raise ValueError("maturities must be positive")
    el = np.empty_like(T_grid)
    ul = np.empty_like(T_grid)
    for i, T in enumerate(T_grid):
        law = IndividualLossLaw.from_params(mu, sigma, T, V0, F, n_max=2)
        el[i] = law.expected_loss
        ul[i] = math.sqrt(max(law.loss_variance, 0.0) / K)
    return {"T": T_grid, "EL": el, "UL": ul}
