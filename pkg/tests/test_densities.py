import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import binom

from lossforge.analytics import (
    AliasingError,
    IndividualLossLaw,
    InversionError,
    LossDensity,
    asymptotic_loss_pdf,
    combinatorial_loss_pdf,
    indicators_from_density,
    inhomogeneous_loss_pdf,
)

from oracles import lgd_cdf_oracle

BASE = (0.05, 0.15, 1.0, 100.0, 75.0)
LAW = IndividualLossLaw.from_params(*BASE)


def unconditional_cumulants(law):
    """Mean, variance and third cumulant of I * L from its raw moments."""
    r1, r2, r3 = (law.pd * law.moments[n] for n in (1, 2, 3))
    return r1, r2 - r1**2, r3 - 3 * r1 * r2 + 2 * r1**3


class TestExactConvolution:
    def test_single_obligor_matches_mixture(self):
        d = combinatorial_loss_pdf(1, LAW)
        assert d.atom == pytest.approx(1 - LAW.pd, rel=1e-14)
        sel = (d.grid > 0.01) & (d.grid < 0.45)
        np.testing.assert_allclose(d.density[sel], LAW.pd * LAW.pdf(d.grid[sel]), rtol=2e-4)

    def test_atom_k10(self):
        d = combinatorial_loss_pdf(10, LAW)
        assert d.atom == pytest.approx((1 - LAW.pd) ** 10, rel=1e-14)
        assert abs(d.atom - (1 - 0.0148) ** 10) < 5e-4

    def test_binomial_weights(self):
        for K in (1, 10, 1000):
            assert abs(binom.pmf(np.arange(K + 1), K, LAW.pd).sum() - 1) < 1e-12

    def test_two_obligor_cdf_oracle(self):
        d = combinatorial_loss_pdf(2, LAW)
        P = LAW.pd
        cdf = d.cdf()
        for x in (0.01, 0.03, 0.08, 0.15):
            conv, _ = integrate.quad(
                lambda l: lgd_cdf_oracle(min(2 * x - l, 1.0), *BASE) * LAW.pdf(l), 1e-12, min(2 * x, 1 - 1e-12),
                epsabs=0, epsrel=1e-10, limit=400)
            expected = (1 - P) ** 2 + 2 * P * (1 - P) * lgd_cdf_oracle(2 * x, *BASE) + P**2 * conv
            i = np.searchsorted(d.grid, x)
            got = np.interp(x, d.grid[i - 2:i + 2], cdf[i - 2:i + 2])
            assert got == pytest.approx(expected, abs=2e-6)

    @pytest.mark.parametrize("K", [1, 10, 100, 1000])
    def test_mass_and_clipping(self, K):
        d = combinatorial_loss_pdf(K, LAW)
        assert abs(d.mass() - 1) < 1e-6
        assert d.negative_mass < 1e-4
        assert np.all(d.density >= 0)

    def test_kurtosis_scaling(self):
        g = [indicators_from_density(combinatorial_loss_pdf(K, LAW)).kurtosis_excess * K for K in (1, 10, 100)]
        assert abs(g[0] - 264.6) < 0.02 * 264.6
        assert max(g) / min(g) - 1 < 0.02

    def test_expected_loss_independent_of_K(self):
        # lattice discretization limits the agreement to a few 1e-6
        for K in (1, 10, 100, 1000):
            assert indicators_from_density(combinatorial_loss_pdf(K, LAW)).EL == pytest.approx(LAW.expected_loss, rel=2e-5)

    def test_aliasing_detected(self):
        with pytest.raises(AliasingError):
            combinatorial_loss_pdf(10, LAW, loss_max=0.01)

    def test_errors(self):
        with pytest.raises(ValueError):
            combinatorial_loss_pdf(0, LAW)
        with pytest.raises(ValueError):
            combinatorial_loss_pdf(3, LAW, mode="other")
        tiny = IndividualLossLaw.from_params(0.5, 0.05, 1.0, 100.0, 20.0)
        with pytest.raises(InversionError):
            combinatorial_loss_pdf(3, tiny)


class TestAsymptotic:
    @pytest.mark.parametrize("K", [1, 10, 1000])
    def test_gaussian_moments(self, K):
        d = asymptotic_loss_pdf(K, LAW, "gaussian")
        assert d.raw_moment(1) == pytest.approx(LAW.expected_loss, rel=1e-6)
        assert d.central_moment(2) == pytest.approx(LAW.loss_variance / K, rel=1e-6)
        assert abs(indicators_from_density(d).kurtosis_excess) < 1e-4

    @pytest.mark.parametrize("K", [100, 1000])
    def test_third_order_moments(self, K):
        mean, var, k3 = unconditional_cumulants(LAW)
        d = asymptotic_loss_pdf(K, LAW, "third")
        assert abs(d.mass() - 1) < 1e-6
        assert d.raw_moment(1) == pytest.approx(mean, rel=1e-6)
        assert d.central_moment(2) == pytest.approx(var / K, rel=1e-6)
        assert d.central_moment(3) == pytest.approx(k3 / K**2, rel=1e-6)

    def test_small_portfolio_is_poor(self):
        # a three-cumulant density cannot carry the atom and long tail of ten obligors
        d = asymptotic_loss_pdf(10, LAW, "third")
        exact = combinatorial_loss_pdf(10, LAW)
        assert d.negative_mass > 0.1
        q_exact = indicators_from_density(exact).quantile
        q_asym = indicators_from_density(d).quantile
        assert abs(q_asym - q_exact) / q_exact > 0.2

    def test_clip_option(self):
        d = asymptotic_loss_pdf(1000, LAW, "third", clip=True)
        assert d.clipped and np.all(d.density >= 0)
        assert abs(d.mass() - 1) < 1e-6

    def test_errors(self):
        with pytest.raises(ValueError):
            asymptotic_loss_pdf(10, LAW, "fifth")
        with pytest.raises(ValueError):
            asymptotic_loss_pdf(0, LAW)


class TestInhomogeneous:
    def test_reduces_to_homogeneous(self):
        K = 50
        grid = np.linspace(-0.002, 0.006, 801)
        a = inhomogeneous_loss_pdf([LAW] * K, np.full(K, 1 / K), grid=grid)
        b = asymptotic_loss_pdf(K, LAW, "third", grid=grid)
        np.testing.assert_allclose(a.density, b.density, rtol=0, atol=1e-10 * b.density.max())

    def test_moment_identities(self):
        other = IndividualLossLaw.from_params(0.07, 0.25, 1.0, 125.0, 100.0)
        g = np.array([0.9, 0.1])
        d = inhomogeneous_loss_pdf([LAW, other], g)
        mean = g[0] * LAW.expected_loss + g[1] * other.expected_loss
        var = g[0] ** 2 * LAW.loss_variance + g[1] ** 2 * other.loss_variance
        assert d.raw_moment(1) == pytest.approx(mean, rel=1e-8)
        assert d.central_moment(2) == pytest.approx(var, rel=1e-8)

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            inhomogeneous_loss_pdf([LAW, LAW], [0.5, 0.6])
        with pytest.raises(ValueError):
            inhomogeneous_loss_pdf([LAW], [0.5, 0.5])


class TestCombinatorialThirdOrder:
    @pytest.mark.parametrize("K", [10, 100, 1000])
    def test_mean(self, K):
        d = combinatorial_loss_pdf(K, LAW, "third_order")
        assert abs(d.mass() - 1) < 1e-6
        assert d.raw_moment(1) == pytest.approx(LAW.expected_loss, rel=1e-6)
        assert d.atom == pytest.approx((1 - LAW.pd) ** K, rel=1e-14)


class TestIndicators:
    def test_pure_atom(self):
        d = LossDensity(np.array([]), np.array([]), atom=1.0)
        ind = indicators_from_density(d)
        assert (ind.EL, ind.UL, ind.quantile, ind.EC, ind.PD) == (0, 0, 0, 0, 0)

    def test_single_obligor_kurtosis(self):
        ind = indicators_from_density(combinatorial_loss_pdf(1, LAW))
        assert abs(ind.kurtosis_excess - 264.6) < 0.02 * 264.6
        assert ind.EC == pytest.approx(ind.quantile - ind.EL)
        assert ind.PD == pytest.approx(LAW.pd, rel=1e-12)

    def test_unnormalized_rejected(self):
        d = LossDensity(np.linspace(0, 1, 11), np.full(11, 2.0), 0.0)
        with pytest.raises(ValueError):
            indicators_from_density(d)

    def test_quantile_against_cdf(self):
        d = combinatorial_loss_pdf(100, LAW)
        q = indicators_from_density(d, alpha=0.99).quantile
        assert np.interp(q, d.grid, d.cdf()) == pytest.approx(0.99, abs=1e-6)
