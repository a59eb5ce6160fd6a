"""Closed-form and semi-analytical results for the jump-free, uncorrelated model."""
from .densities import (
    AliasingError,
    InversionError,
    LossDensity,
    asymptotic_loss_pdf,
    combinatorial_loss_pdf,
    indicators_from_density,
    inhomogeneous_loss_pdf,
)
from .drilldown import (
    DrillDownState,
    add_obligor,
    drill_down_moment,
    obligor_inputs,
    obligor_laws,
    portfolio_indicators,
    portfolio_state,
    risk_scores,
)
from .indicators import RiskIndicators, indicators_from_moments, shape_from_raw_moments
from .individual import (
    IndividualLossLaw,
    default_probability,
    el_ul_vs_maturity,
    individual_loss_cdf,
    individual_loss_moment,
    individual_loss_pdf,
)

__all__ = [
    "AliasingError", "InversionError", "LossDensity", "asymptotic_loss_pdf",
    "combinatorial_loss_pdf", "indicators_from_density", "inhomogeneous_loss_pdf",
    "DrillDownState", "add_obligor", "drill_down_moment", "obligor_inputs", "obligor_laws",
    "portfolio_indicators", "portfolio_state", "risk_scores", "RiskIndicators",
    "indicators_from_moments", "shape_from_raw_moments", "IndividualLossLaw",
    "default_probability", "el_ul_vs_maturity", "individual_loss_cdf",
    "individual_loss_moment", "individual_loss_pdf",
]
