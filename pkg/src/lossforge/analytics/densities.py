"""Portfolio loss densities: Fourier-inverted approximations and exact convolution.

All densities live on uniform grids. The continuous part is stored as
ordinates and integrated with the trapezoidal rule; the probability of
no loss at all is kept apart as an atom at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import binom

from .indicators import RiskIndicators, shape_from_raw_moments
from .individual import IndividualLossLaw

# Fourier integrals are cut where the Gaussian damping exp(-w^2 v / 2) drops below this
OMEGA_CUTOFF = 1e-12
DEFAULT_POINTS = 2**14
LEAK_TOL = 1e-10


class InversionError(RuntimeError):
    """Fourier inversion cannot meet its truncation or mass bound."""


class AliasingError(RuntimeError):
    """Convolution grid too short: probability mass wraps around."""


@dataclass
class LossDensity:
    """Gridded loss density plus a point mass at zero loss.

    ``grid`` is increasing and uniform for everything produced here.
    Approximations whose support spills below zero keep those ordinates.
    ``negative_mass`` is the mass of negative lobes found after inversion
    and ``clipped`` tells whether they were zeroed (with the remaining
    continuous part rescaled to keep its mass).
    """

    grid: np.ndarray
    density: np.ndarray
    atom: float = 0.0
    negative_mass: float = 0.0
    clipped: bool = False

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.grid.shape != self.density.shape:
            raise ValueError("grid and density must have the same shape")

    def mass(self) -> float:
        if self.grid.size < 2:
            return self.atom
        return self.atom + float(trapezoid(self.density, self.grid))

    def raw_moment(self, n: int) -> float:
        """<L^n>; the atom sits at L = 0 and only enters the zeroth moment."""
        if self.grid.size < 2:
            return self.atom if n == 0 else 0.0
        cont = float(trapezoid(self.grid**n * self.density, self.grid))
        return cont + (self.atom if n == 0 else 0.0)

    def central_moment(self, n: int) -> float:
        mean = self.raw_moment(1)
        if self.grid.size < 2:
            return self.atom * (-mean) ** n
        cont = float(trapezoid((self.grid - mean) ** n * self.density, self.grid))
        return cont + self.atom * (-mean) ** n

    def cdf(self) -> np.ndarray:
        """P(loss <= grid[i]), the atom included once the grid reaches zero."""
        if self.grid.size < 2:
            return np.full(self.grid.shape, self.atom)
        cont = cumulative_trapezoid(self.density, self.grid, initial=0.0)
        return cont + np.where(self.grid >= 0, self.atom, 0.0)

    def interpolate(self, grid) -> "LossDensity":
        grid = np.asarray(grid, dtype=float)
        dens = np.interp(grid, self.grid, self.density, left=0.0, right=0.0)
        return LossDensity(grid, dens, self.atom, self.negative_mass, self.clipped)


def _negative_mass(density: np.ndarray, grid: np.ndarray) -> float:
    return -float(trapezoid(np.minimum(density, 0.0), grid))


def _clip(density: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Zero negative lobes and rescale so the continuous mass is unchanged."""
    if not np.any(density < 0):
        return density
    before = float(trapezoid(density, grid))
    out = np.maximum(density, 0.0)
    after = float(trapezoid(out, grid))
    if after > 0:
        out *= before / after
    return out


def _invert_cumulants(mean: float, var: float, k3: float, grid=None,
                      n_points: int = DEFAULT_POINTS, width_sd: float = 40.0,
                      clip: bool = False) -> LossDensity:
    """Density whose log characteristic function is the cubic cumulant polynomial."""
    if not var > 0:
        raise InversionError(f"variance term must be positive, got {var}")
    sd = math.sqrt(var)
    w_max = math.sqrt(-2 * math.log(OMEGA_CUTOFF) / var)
    # the cubic phase delays frequency w by k3 w^2 / 2, which drags ringing
    # far to the side opposite the skew; the window must hold it to avoid wrap-around
    delay = abs(k3) * w_max**2 / 2
    lo, hi = mean - width_sd * sd, mean + width_sd * sd
    if k3 > 0:
        lo -= delay
    else:
        hi += delay
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        lo, hi = min(lo, grid[0]), max(hi, grid[-1])
    h = (hi - lo) / n_points
    if math.pi / h < w_max:
        raise InversionError(f"grid of {n_points} points cannot resolve frequencies up to {w_max:.4g}")
    x = lo + h * np.arange(n_points)
    w = 2 * math.pi * np.fft.fftfreq(n_points, d=h)
    exponent = 1j * w * (mean - lo) - w**2 * var / 2 - 1j * w**3 * k3 / 6
    phi = np.where(np.abs(w) <= w_max, np.exp(exponent), 0.0)
    dens = np.fft.fft(phi).real / (n_points * h)
    mass = float(trapezoid(dens, x))
    if abs(mass - 1) > 1e-6:
        raise InversionError(f"inverted density carries mass {mass:.10f}")
    neg = _negative_mass(dens, x)
    if clip:
        dens = _clip(dens, x)
    out = LossDensity(x, dens, 0.0, neg, clip)
    return out.interpolate(grid) if grid is not None else out


def _gaussian(mean, var, grid=None, n_points: int = DEFAULT_POINTS, width_sd: float = 40.0):
    sd = math.sqrt(var)
    if grid is None:
        grid = mean - width_sd * sd + (2 * width_sd * sd / n_points) * np.arange(n_points)
    grid = np.asarray(grid, dtype=float)
    dens = np.exp(-((grid - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
    return LossDensity(grid, dens)


def _require_pd(law: IndividualLossLaw):
    if not law.pd > 1e-10:
        raise InversionError(f"default probability {law.pd:.3g} too small for Fourier inversion")


def asymptotic_loss_pdf(K: int, law: IndividualLossLaw, order: str = "third", grid=None,
                        n_points: int = DEFAULT_POINTS, clip: bool = False) -> LossDensity:
    """Large-K approximation of an uncorrelated homogeneous portfolio's loss density.

    ``order="gaussian"`` is the shifted normal with mean P_D<L> and variance
    (P_D<L^2> - P_D^2<L>^2)/K. ``order="third"`` adds the cubic term of the
    cumulant expansion and inverts the characteristic function numerically,
    so the first three moments are exact. The cubic term makes the
    approximation dip below zero in the far tails; that mass is reported
    in ``negative_mass`` and only removed with ``clip=True``, which in turn
    gives up the exact moments.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    _require_pd(law)
    mean, var = law.expected_loss, law.loss_variance / K
    if order == "gaussian":
        return _gaussian(mean, var, grid, n_points)
    if order != "third":
        raise ValueError(f"unknown order {order!r}")
    return _invert_cumulants(mean, var, law.loss_third_cumulant / K**2, grid, n_points, clip=clip)


def inhomogeneous_loss_pdf(laws: Sequence[IndividualLossLaw], weights, grid=None,
                           n_points: int = DEFAULT_POINTS, clip: bool = False) -> LossDensity:
    """Third-order approximation for obligors with their own laws and money weights."""
    weights = np.asarray(weights, dtype=float)
    if len(laws) != weights.size:
        raise ValueError("need one weight per obligor law")
    if np.any(weights < 0) or abs(weights.sum() - 1) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    for law in laws:
        _require_pd(law)
    mean = float(np.sum([g * law.expected_loss for g, law in zip(weights, laws)]))
    var = float(np.sum([g**2 * law.loss_variance for g, law in zip(weights, laws)]))
    k3 = float(np.sum([g**3 * law.loss_third_cumulant for g, law in zip(weights, laws)]))
    return _invert_cumulants(mean, var, k3, grid, n_points, clip=clip)


def _initial_loss_max(K: int, law: IndividualLossLaw) -> float:
    ul = math.sqrt(max(law.loss_variance, 0.0) / K)
    return min(1.0, law.expected_loss + 40 * ul + 20 * law.mean / K)


def _lattice_masses(law: IndividualLossLaw, K: int, h: float, N: int) -> np.ndarray:
    """Masses of the scaled loss L_k / K on cells centred at i*h (cell 0 is [0, h/2))."""
    edges = (np.arange(N + 1) - 0.5) * h
    edges[0] = 0.0
    cdf = law.cdf(np.minimum(edges * K, 1.0))
    return np.diff(cdf)


def combinatorial_loss_pdf(K: int, law: IndividualLossLaw, mode: str = "exact_conv",
                           grid=None, n_points: int = DEFAULT_POINTS,
                           loss_max: float | None = None, tol: float = LEAK_TOL,
                           clip: bool | None = None) -> LossDensity:
    """Loss density as a binomial mixture over the number of defaults.

    The j-defaults term is the binomial weight times the density of the
    sum of j scaled individual losses. ``exact_conv`` forms that density
    by powering the discrete characteristic function of the individual
    loss on a uniform, zero-padded lattice; ``third_order`` uses the cubic
    cumulant approximation for each term. The no-default term is the
    exact atom ``(1 - P_D)**K``.

    Round-off ringing of the exact route is clipped by default; the
    third-order route keeps its negative lobes unless ``clip=True``.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if mode not in ("exact_conv", "third_order"):
        raise ValueError(f"unknown mode {mode!r}")
    _require_pd(law)
    if clip is None:
        clip = mode == "exact_conv"
    P = law.pd
    jmax = int(min(K, binom.isf(1e-18, K, P) + 2))
    weights = binom.pmf(np.arange(jmax + 1), K, P)
    atom = (1 - P) ** K
    fixed = loss_max is not None
    L_max = float(loss_max) if fixed else _initial_loss_max(K, law)
    N = int(n_points)
    while True:
        h = L_max / N
        if mode == "exact_conv":
            dens, leak = _exact_terms(law, K, h, N, weights)
            x = h * np.arange(N)
        else:
            x, dens, leak = _third_order_terms(law, K, h, N, weights)
        if leak <= tol or L_max >= 1.0:
            break
        if fixed:
            raise AliasingError(f"mass {leak:.3g} beyond loss_max={L_max}; widen the grid")
        L_max = min(1.0, 2 * L_max)
    if leak > max(tol, 1e-8):
        raise AliasingError(f"mass leakage {leak:.3g} exceeds tolerance")
    neg = _negative_mass(dens, x)
    if clip:
        dens = _clip(dens, x)
    out = LossDensity(x, dens, atom, neg, clip)
    return out.interpolate(grid) if grid is not None else out


def _exact_terms(law, K, h, N, weights):
    q = _lattice_masses(law, K, h, N)
    Q = np.fft.rfft(q, 2 * N)
    total = np.zeros_like(Q)
    power = np.ones_like(Q)
    for j in range(1, weights.size):
        power = power * Q
        total += weights[j] * power
    masses = np.fft.irfft(total, 2 * N)
    inside = masses[:N]
    leak = float(weights[1:].sum() - inside.sum())
    dens = inside / h
    dens[0] *= 2.0
    return dens, abs(leak)


def _third_order_terms(law, K, h, N, weights):
    m1, m2, m3 = law.moments[1], law.moments[2], law.moments[3]
    var1 = m2 - m1**2
    k3 = m3 - 3 * m1 * m2 + 2 * m1**3
    M = 2 * N
    lo = -N * h
    x = lo + h * np.arange(M)
    w = 2 * math.pi * np.fft.fftfreq(M, d=h)
    w_max = K * math.sqrt(-2 * math.log(OMEGA_CUTOFF) / var1)
    if math.pi / h < w_max:
        raise InversionError("lattice too coarse for the single-default term")
    psi = 1j * w * m1 / K - w**2 * var1 / (2 * K**2) - 1j * w**3 * k3 / (6 * K**3)
    aw = np.abs(w)
    total = np.zeros(M, dtype=complex)
    for j in range(1, weights.size):
        # the j-default term decays like exp(-j w^2 var1 / 2K^2), so it is cut at w_max / sqrt(j)
        keep = aw <= w_max / math.sqrt(j)
        total[keep] += weights[j] * np.exp(j * psi[keep])
    dens = np.fft.fft(total * np.exp(-1j * w * lo)).real / (M * h)
    cont = float(trapezoid(dens, x))
    leak = abs(float(weights[1:].sum()) - cont)
    return x, dens, leak


def indicators_from_density(d: LossDensity, alpha: float = 0.999, tol: float = 1e-4) -> RiskIndicators:
    """Moments by trapezoidal quadrature, quantile by inverting the CDF."""
    mass = d.mass()
    if abs(mass - 1) > tol:
        raise ValueError(f"density is not normalized: mass {mass:.8f}")
    raw = [d.raw_moment(n) for n in range(5)]
    var, skew, kurt = shape_from_raw_moments(raw[1], raw[2], raw[3], raw[4])
    cdf = d.cdf()
    if d.atom >= alpha or d.grid.size < 2:
        q = 0.0
    else:
        i = int(np.searchsorted(cdf, alpha, side="left"))
        if i >= cdf.size:
            q = float(d.grid[-1])
        elif i == 0:
            q = float(d.grid[0])
        else:
            c0, c1 = cdf[i - 1], cdf[i]
            t = (alpha - c0) / (c1 - c0) if c1 > c0 else 0.0
            q = float(d.grid[i - 1] + t * (d.grid[i] - d.grid[i - 1]))
    return RiskIndicators(EL=raw[1], UL=math.sqrt(var), PD=1.0 - d.atom, skewness=skew,
                          kurtosis_excess=kurt, quantile=q, alpha=alpha)
