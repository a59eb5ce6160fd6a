"""Risk indicators shared by the analytical and Monte Carlo routes."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class RiskIndicators:
    """Summary of a portfolio loss distribution.

    ``quantile`` is the ``alpha`` quantile of the loss and ``EC`` the
    economic capital ``quantile - EL``. Standard errors are only filled
    in by the Monte Carlo estimator.
    """

    EL: float
    UL: float
    PD: float
    skewness: float
    kurtosis_excess: float
    quantile: float
    alpha: float = 0.999
    EL_se: float | None = None
    UL_se: float | None = None
    PD_se: float | None = None
    n_scenarios: int | None = None
    quantile_unreliable: bool = False

    @property
    def EC(self) -> float:
        return self.quantile - self.EL

    def as_dict(self) -> dict:
        d = asdict(self)
        d["EC"] = self.EC
        return d


def shape_from_raw_moments(m1, m2, m3, m4):
    """Variance, skewness and kurtosis excess from raw moments 1..4."""
    mu2 = m2 - m1**2
    mu3 = m3 - 3 * m1 * m2 + 2 * m1**3
    mu4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
    if mu2 <= 0:
        return max(mu2, 0.0), math.nan, math.nan
    return mu2, mu3 / mu2**1.5, mu4 / mu2**2 - 3


def indicators_from_moments(raw, pd: float = math.nan, quantile: float = math.nan,
                            alpha: float = 0.999) -> RiskIndicators:
    """Indicators from raw moments ``raw[n] = <L^n>`` for n = 0..4."""
    var, skew, kurt = shape_from_raw_moments(raw[1], raw[2], raw[3], raw[4])
    return RiskIndicators(EL=raw[1], UL=math.sqrt(var), PD=pd, skewness=skew,
                          kurtosis_excess=kurt, quantile=quantile, alpha=alpha)
