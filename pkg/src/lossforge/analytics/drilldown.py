"""Moments of the portfolio loss built up one obligor at a time.

Adding obligor K with face value F_K to a portfolio with total face value
F^(K-1) gives, for independent obligors,

    <(L^(K))^n> = sum_nu C(n, nu) (F^(K-1))^(n-nu) <(L^(K-1))^(n-nu)>
                  <I_K^nu> <Gamma_K^nu> / (F^(K))^n

which is the usual ratio form with the powers of F^(K-1) multiplied out,
so the empty portfolio (F^(0) = 0) can start the recursion.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import comb

from .indicators import RiskIndicators, indicators_from_moments
from .individual import IndividualLossLaw


@dataclass(frozen=True)
class DrillDownState:
    """Running face value plus raw loss moments 0..n_max of the portfolio so far."""

    F_running: float
    moments: tuple[float, ...]

    @classmethod
    def empty(cls, n_max: int = 4) -> "DrillDownState":
        return cls(0.0, (1.0,) + (0.0,) * n_max)

    @property
    def n_max(self) -> int:
        return len(self.moments) - 1


def obligor_inputs(law: IndividualLossLaw, face_value: float | None = None, n_max: int = 4):
    """``(F, <I^nu>, <Gamma^nu>)`` for one obligor, nu = 0..n_max.

    The indicator is Bernoulli, so all its positive moments equal P_D.
    """
    F = law.F if face_value is None else face_value
    if n_max >= len(law.moments):
        raise ValueError(f"law only carries moments up to {len(law.moments) - 1}")
    ind = (1.0,) + (law.pd,) * n_max
    gamma = tuple(F**nu * law.moments[nu] for nu in range(n_max + 1))
    return F, ind, gamma


def drill_down_moment(n: int, prev: DrillDownState, new_obligor) -> float:
    """n-th raw loss moment after adding ``new_obligor = (F_K, <I^nu>, <Gamma^nu>)``."""
    F_K, ind, gamma = new_obligor
    if len(prev.moments) <= n:
        raise ValueError(f"previous state lacks moments up to order {n}")
    if len(ind) <= n or len(gamma) <= n:
        raise ValueError(f"new obligor lacks moments up to order {n}")
    F_prev = prev.F_running
    F_new = F_prev + F_K
    total = 0.0
    for nu in range(n + 1):
        total += (comb(n, nu, exact=True) * F_prev ** (n - nu) * prev.moments[n - nu]
                  * ind[nu] * gamma[nu])
    return total / F_new**n


def add_obligor(prev: DrillDownState, new_obligor) -> DrillDownState:
    moments = tuple(drill_down_moment(n, prev, new_obligor) for n in range(prev.n_max + 1))
    return DrillDownState(prev.F_running + new_obligor[0], moments)


def portfolio_state(laws: Iterable[IndividualLossLaw], faces: Sequence[float] | None = None,
                    n_max: int = 4) -> DrillDownState:
    """Fold the recursion over independent obligors."""
    state = DrillDownState.empty(n_max)
    laws = list(laws)
    faces = [law.F for law in laws] if faces is None else list(faces)
    for law, F in zip(laws, faces):
        state = add_obligor(state, obligor_inputs(law, F, n_max))
    return state


@lru_cache(maxsize=4096)
def _law(mu, sigma, T, V0, F, n_max):
    return IndividualLossLaw.from_params(mu, sigma, T, V0, F, n_max=n_max)


def obligor_laws(portfolio, T: float = 1.0, n_max: int = 4) -> list[IndividualLossLaw]:
    """Jump-free loss law of every obligor in a portfolio."""
    return [_law(ob.process.mu, ob.process.sigma, T, ob.process.v0, ob.face_value, n_max)
            for ob in portfolio.obligors]


def portfolio_indicators(portfolio, T: float = 1.0) -> RiskIndicators:
    """Analytic EL, UL, skewness and kurtosis excess of an independent portfolio."""
    laws = obligor_laws(portfolio, T)
    state = portfolio_state(laws, portfolio.face_values)
    pd = 1.0 - float(np.prod([1 - law.pd for law in laws]))
    return indicators_from_moments(state.moments, pd=pd)


def risk_scores(portfolio, T: float = 1.0):
    """Per-obligor default probability and mean dollar loss given default."""
    laws = obligor_laws(portfolio, T, n_max=1)
    pd = np.array([law.pd for law in laws])
    mean_loss = np.array([law.mean * ob.face_value for law, ob in zip(laws, portfolio.obligors)])
    return pd, mean_loss
