"""Random streams, jump-diffusion sampling and the one-factor shock model.

Asset values follow a geometric Brownian motion with multiplicative
compound-Poisson jumps::

    log V(T) = log V0 + (mu - sigma**2 / 2) T + sigma sqrt(dt) sum_t M(t)
               + sum_i log(1 + Lambda_i)

Because the log-Euler step is exact for the diffusion and jump factors
multiply, the terminal value only depends on the sum of the standardized
shocks and on the sum of the log jump factors. That is what lets the
Monte Carlo engine sample terminal values in one macro step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr

JUMP_LAWS = ("log", "moments")


@dataclass(frozen=True)
class ProcessParams:
    """Parameters of one asset-value process.

    Attributes
    ----------
    mu : float
        Drift per year.
    sigma : float
        Volatility per sqrt(year).
    lam : float
        Jump intensity per year.
    mu_J, sigma_J : float
        Jump-size location and spread (fractions of the asset value). How
        they map onto the lognormal factor ``1 + Lambda`` is set by the
        jump law, see :func:`jump_law_params`.
    v0 : float
        Initial asset value.
    """

    mu: float = 0.05
    sigma: float = 0.15
    lam: float = 0.0
    mu_J: float = -0.4
    sigma_J: float = 0.3
    v0: float = 100.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.lam < 0:
            raise ValueError(f"jump intensity must be >= 0, got {self.lam}")
        if self.sigma_J < 0:
            raise ValueError(f"sigma_J must be >= 0, got {self.sigma_J}")
        if self.mu_J + 1 <= 0:
            raise ValueError(f"mu_J + 1 must be positive, got mu_J={self.mu_J}")
        if self.v0 <= 0:
            raise ValueError(f"v0 must be positive, got {self.v0}")


@dataclass(frozen=True)
class JumpLognormalParams:
    """Normal parameters of ``log(1 + Lambda)``: location ``m``, scale ``s``."""

    m: float
    s: float

    @property
    def factor_mean(self) -> float:
        return math.exp(self.m + self.s**2 / 2)

    @property
    def factor_sd(self) -> float:
        return math.sqrt(math.expm1(self.s**2) * math.exp(2 * self.m + self.s**2))

    def negative_fraction(self) -> float:
        """Probability that a jump is negative, P(1 + Lambda < 1)."""
        if self.s == 0:
            return float(self.m < 0)
        return float(ndtr(-self.m / self.s))


@dataclass
class ShockMatrix:
    """Standardized shocks of one scenario, obligors by time steps."""

    values: np.ndarray
    branch_series: np.ndarray
    idiosyncratic: np.ndarray


def poisson_pmf(lam, t, n):
    """Probability of ``n`` Poisson events in ``[0, t]`` at intensity ``lam``."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    n = np.asarray(n)
    if np.any(lam < 0) or np.any(t < 0) or np.any(n < 0):
        raise ValueError("poisson_pmf needs lam >= 0, t >= 0, n >= 0")
    x = lam * t
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = n * np.log(x) - x - gammaln(n + 1)
    out = np.where(x == 0, (n == 0).astype(float), np.exp(logp))
    return out[()] if out.ndim == 0 else out


def solve_jump_params(mu_J: float, sigma_J: float) -> JumpLognormalParams:
    """Lognormal parameters giving the factor ``1 + Lambda`` mean ``mu_J + 1`` and sd ``sigma_J``."""
    if mu_J <= -1:
        raise ValueError(f"mu_J must exceed -1, got {mu_J}")
    if sigma_J < 0:
        raise ValueError(f"sigma_J must be >= 0, got {sigma_J}")
    s2 = math.log1p(sigma_J**2 / (mu_J + 1) ** 2)
    return JumpLognormalParams(m=math.log(mu_J + 1) - s2 / 2, s=math.sqrt(s2))


def jump_law_params(mu_J: float, sigma_J: float, law: str = "log") -> JumpLognormalParams:
    """Translate ``(mu_J, sigma_J)`` into lognormal parameters under a jump law.

    ``"moments"`` matches the mean and sd of the factor itself
    (:func:`solve_jump_params`). ``"log"`` takes ``log(1 + Lambda)`` to be
    normal with mean ``mu_J`` and sd ``sigma_J``; this is the convention
    under which the reference jump-diffusion loss levels are reproduced.
    """
    if law == "moments":
        return solve_jump_params(mu_J, sigma_J)
    if law == "log":
        if sigma_J < 0:
            raise ValueError(f"sigma_J must be >= 0, got {sigma_J}")
        return JumpLognormalParams(m=float(mu_J), s=float(sigma_J))
    raise ValueError(f"unknown jump law {law!r}, expected one of {JUMP_LAWS}")


def sample_jump_factor(params: JumpLognormalParams, rng: np.random.Generator, size=None):
    """Draw jump factors ``1 + Lambda`` (always positive)."""
    if params.s == 0:
        return np.full(size, math.exp(params.m)) if size is not None else math.exp(params.m)
    return rng.lognormal(params.m, params.s, size)


def sample_log_jump_sum(counts, m, s, rng: np.random.Generator):
    """Sum of ``counts`` iid normal log jump factors, drawn in one go.

    A sum of ``n`` draws of N(m, s**2) is N(n m, n s**2), so one normal per
    entry is enough whatever the count.
    """
    counts = np.asarray(counts)
    z = rng.standard_normal(counts.shape)
    return counts * m + np.sqrt(counts) * (s * z)


def simulate_terminal(params: ProcessParams, T: float, shocks, log_jumps=0.0):
    """Asset value at ``T`` from standardized shocks and summed log jump factors.

    ``shocks`` has the time steps on its last axis. A single step is the
    exact-terminal draw; several steps are combined by log-Euler stepping,
    which gives the same law for any step count.
    """
    if T <= 0:
        raise ValueError(f"maturity must be positive, got {T}")
    shocks = np.asarray(shocks, dtype=float)
    if shocks.ndim == 0:
        shocks = shocks[None]
    n_steps = shocks.shape[-1]
    diffusion = params.sigma * math.sqrt(T / n_steps) * shocks.sum(axis=-1)
    return params.v0 * np.exp((params.mu - params.sigma**2 / 2) * T + diffusion + log_jumps)


def mixing_weights(p):
    """Branch and idiosyncratic loadings ``sqrt(p/(1+p))`` and ``sqrt(1/(1+p))``."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("branch weights p must be >= 0")
    return np.sqrt(p / (1 + p)), np.sqrt(1 / (1 + p))


def build_shocks(assignments, p, n_steps: int, rng: np.random.Generator) -> ShockMatrix:
    """Correlated standardized shocks of the one-factor model.

    Parameters
    ----------
    assignments : array of int
        Branch index per obligor, 0 for obligors outside any branch.
    p : array of float
        Weight per obligor (``p[k]`` is the weight of the branch of ``k``,
        0 for no-branch obligors).
    n_steps : int
        Length of the time series.
    """
    assignments = np.asarray(assignments, dtype=int)
    a, b = mixing_weights(p)
    if np.any((assignments == 0) & (a > 0)):
        raise ValueError("obligors outside a branch must have p = 0")
    n_branches = int(assignments.max(initial=0))
    branch_series = rng.standard_normal((n_branches, n_steps))
    idio = rng.standard_normal((assignments.size, n_steps))
    common = np.zeros_like(idio)
    inside = assignments > 0
    common[inside] = branch_series[assignments[inside] - 1]
    values = a[:, None] * common + b[:, None] * idio
    return ShockMatrix(values=values, branch_series=branch_series, idiosyncratic=idio)


def empirical_correlation(M, n_steps: int | None = None) -> np.ndarray:
    """Noise-dressed correlation matrix ``M M^T / T`` of a shock time series."""
    values = M.values if isinstance(M, ShockMatrix) else np.asarray(M, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    if n_steps is not None:
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        values = values[:, :n_steps]
    return values @ values.T / values.shape[1]


def true_correlation(assignments, p) -> np.ndarray:
    """Block-diagonal limit of the empirical correlation for infinite series."""
    assignments = np.asarray(assignments, dtype=int)
    p = np.asarray(p, dtype=float)
    same = (assignments[:, None] == assignments[None, :]) & (assignments[:, None] > 0)
    corr = np.where(same, (p / (1 + p))[:, None], 0.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for one scenario block.

    Every block of scenarios owns a Philox stream keyed on ``(seed, block)``,
    so results do not depend on how blocks are scheduled across workers.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))
