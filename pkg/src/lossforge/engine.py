"""Scenario-parallel Monte Carlo estimation of the portfolio loss distribution.

Scenarios are simulated in fixed-size blocks. Each block draws from its
own counter-based stream keyed on ``(seed, block index)``, so the output
is bit-identical for any number of worker threads.
"""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .analytics.drilldown import portfolio_indicators, risk_scores
from .analytics.indicators import RiskIndicators
from .portfolio import (
    TABLE_II,
    CategoryRule,
    Portfolio,
    equal_branch_sizes,
    generate_category_portfolio,
    rank_obligors,
    with_branches,
)
from .stochastic import JUMP_LAWS, ProcessParams, block_rng, jump_law_params, sample_log_jump_sum

JUMP_MODES = ("none", "independent", "correlated")
SCHEMES = ("terminal", "path")


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    ``scheme="terminal"`` samples V(T) in one macro step from the summed
    shocks and jump counts, which has exactly the law of the stepped
    simulation. ``scheme="path"`` steps through ``steps_per_year * T``
    log-Euler steps and is mostly useful for checking that equivalence.
    With ``rescale_correlated_jumps`` the correlated jump process keeps
    each obligor's marginal jump law equal to the independent one: branch
    and idiosyncratic series fire at rates ``c * lam`` and ``(1 - c) * lam``
    with unscaled amplitudes.
    """

    n_scenarios: int = 100_000
    seed: int = 0
    maturity: float = 1.0
    steps_per_year: int = 250
    jump_mode: str = "none"
    correlation_enabled: bool = True
    alpha: float = 0.999
    rescale_correlated_jumps: bool = False
    scheme: str = "terminal"
    jump_law: str = "log"
    block_size: int | None = None

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError(f"n_scenarios must be >= 1, got {self.n_scenarios}")
        if self.steps_per_year < 1:
            raise ValueError(f"steps_per_year must be >= 1, got {self.steps_per_year}")
        if self.maturity <= 0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.jump_mode not in JUMP_MODES:
            raise ValueError(f"jump_mode must be one of {JUMP_MODES}, got {self.jump_mode!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.jump_law not in JUMP_LAWS:
            raise ValueError(f"jump_law must be one of {JUMP_LAWS}, got {self.jump_law!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block_size must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.steps_per_year * self.maturity)))


@dataclass
class LossSample:
    """Per-scenario normalized portfolio losses and default counts."""

    losses: np.ndarray
    default_counts: np.ndarray

    @property
    def n_scenarios(self) -> int:
        return int(self.losses.size)


@dataclass
class HistogramData:
    """Histogram of the positive losses; zero-loss scenarios are counted apart."""

    edges: np.ndarray
    counts: np.ndarray
    zero_count: int
    n_scenarios: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        """Counts per unit loss as a fraction of all scenarios."""
        widths = np.diff(self.edges)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(widths > 0, self.counts / (self.n_scenarios * widths), 0.0)


@dataclass
class _Arrays:
    log_v0: np.ndarray
    drift: np.ndarray
    sigma: np.ndarray
    F: np.ndarray
    lam: np.ndarray
    jump_m: np.ndarray
    jump_s: np.ndarray
    branch: np.ndarray
    load_common: np.ndarray
    load_idio: np.ndarray
    corr: np.ndarray
    n_branches: int
    branch_jump: dict = field(default_factory=dict)


def _arrays(portfolio: Portfolio, config: SimConfig) -> _Arrays:
    procs = [ob.process for ob in portfolio.obligors]
    mu = np.array([p.mu for p in procs])
    sigma = np.array([p.sigma for p in procs])
    jumps = [jump_law_params(p.mu_J, p.sigma_J, config.jump_law) for p in procs]
    use_branches = config.correlation_enabled and len(portfolio.branches) > 0
    branch = portfolio.assignments if use_branches else np.zeros(portfolio.K, dtype=int)
    p = portfolio.weights() if use_branches else np.zeros(portfolio.K)
    lam = np.array([pr.lam for pr in procs]) if config.jump_mode != "none" else np.zeros(portfolio.K)
    arr = _Arrays(
        log_v0=np.log([pr.v0 for pr in procs]),
        drift=(mu - sigma**2 / 2) * config.maturity,
        sigma=sigma,
        F=portfolio.face_values,
        lam=lam,
        jump_m=np.array([j.m for j in jumps]),
        jump_s=np.array([j.s for j in jumps]),
        branch=branch,
        load_common=np.sqrt(p / (1 + p)),
        load_idio=np.sqrt(1 / (1 + p)),
        corr=p / (1 + p),
        n_branches=len(portfolio.branches) if use_branches else 0,
    )
    if config.jump_mode == "correlated":
        for b in range(1, arr.n_branches + 1):
            members = np.flatnonzero(branch == b)
            keys = {(lam[k], arr.jump_m[k], arr.jump_s[k]) for k in members}
            if len(keys) > 1:
                raise ValueError(f"branch {b} members need identical jump parameters for correlated jumps")
            arr.branch_jump[b] = keys.pop()
    return arr


def _jump_rates(arr: _Arrays, config: SimConfig):
    """Branch-series rate per branch, idiosyncratic rate per obligor, and amplitude scales."""
    B = arr.n_branches
    c_branch = np.array([arr.corr[np.flatnonzero(arr.branch == b)[0]] for b in range(1, B + 1)])
    lam_b = np.array([arr.branch_jump[b][0] for b in range(1, B + 1)])
    if config.rescale_correlated_jumps:
        rate_b = c_branch * lam_b
        rate_i = (1 - arr.corr) * arr.lam
        amp_b = np.where(arr.branch > 0, 1.0, 0.0)
        amp_i = np.ones_like(arr.lam)
    else:
        rate_b = lam_b
        rate_i = arr.lam
        amp_b = arr.load_common
        amp_i = arr.load_idio
    m_b = np.array([arr.branch_jump[b][1] for b in range(1, B + 1)])
    s_b = np.array([arr.branch_jump[b][2] for b in range(1, B + 1)])
    return rate_b, m_b, s_b, rate_i, amp_b, amp_i


def _mix(arr: _Arrays, eps: np.ndarray, eta: np.ndarray | None) -> np.ndarray:
    if eta is None:
        return eps
    inside = arr.branch > 0
    common = np.zeros_like(eps)
    common[:, inside] = eta[:, arr.branch[inside] - 1]
    return arr.load_common * common + arr.load_idio * eps


def _correlated_log_jumps(arr, config, rng, n, dt, rates):
    rate_b, m_b, s_b, rate_i, amp_b, amp_i = rates
    out = np.zeros((n, arr.F.size))
    if arr.n_branches:
        Nb = rng.poisson(rate_b * dt, (n, arr.n_branches))
        Sb = sample_log_jump_sum(Nb, m_b, s_b, rng)
        inside = arr.branch > 0
        out[:, inside] += amp_b[inside] * Sb[:, arr.branch[inside] - 1]
    Ni = rng.poisson(rate_i * dt, (n, arr.F.size))
    out += amp_i * sample_log_jump_sum(Ni, arr.jump_m, arr.jump_s, rng)
    return out


def _terminal_block(arr: _Arrays, config: SimConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    K = arr.F.size
    T = config.maturity
    if config.scheme == "terminal":
        eps = rng.standard_normal((n, K))
        eta = rng.standard_normal((n, arr.n_branches)) if arr.n_branches else None
        log_v = arr.log_v0 + arr.drift + arr.sigma * math.sqrt(T) * _mix(arr, eps, eta)
        if config.jump_mode == "independent":
            N = rng.poisson(arr.lam * T, (n, K))
            log_v += sample_log_jump_sum(N, arr.jump_m, arr.jump_s, rng)
        elif config.jump_mode == "correlated":
            log_v += _correlated_log_jumps(arr, config, rng, n, T, _jump_rates(arr, config))
        return np.exp(log_v)

    n_steps = config.n_steps
    dt = T / n_steps
    shock_sum = np.zeros((n, K))
    log_j = np.zeros((n, K))
    rates = _jump_rates(arr, config) if config.jump_mode == "correlated" else None
    for _ in range(n_steps):
        eps = rng.standard_normal((n, K))
        eta = rng.standard_normal((n, arr.n_branches)) if arr.n_branches else None
        shock_sum += _mix(arr, eps, eta)
        if config.jump_mode == "independent":
            N = rng.poisson(arr.lam * dt, (n, K))
            log_j += sample_log_jump_sum(N, arr.jump_m, arr.jump_s, rng)
        elif config.jump_mode == "correlated":
            log_j += _correlated_log_jumps(arr, config, rng, n, dt, rates)
    return np.exp(arr.log_v0 + arr.drift + arr.sigma * math.sqrt(dt) * shock_sum + log_j)


def _block_size(config: SimConfig, K: int) -> int:
    if config.block_size is not None:
        return config.block_size
    return int(max(64, min(16384, 2**21 // max(K, 1))))


def simulate_views(portfolio: Portfolio, config: SimConfig, views: Sequence[np.ndarray],
                   workers: int = 1) -> list[LossSample]:
    """Simulate once and evaluate the loss of several obligor subsets on the same draws.

    ``views`` are boolean masks over the obligors; evaluating a portfolio
    and the portfolio minus one obligor on shared scenarios is the common
    random numbers setup used for drill-down ratios.
    """
    arr = _arrays(portfolio, config)
    views = [np.asarray(v, dtype=bool) for v in views]
    for v in views:
        if v.shape != (portfolio.K,) or not v.any():
            raise ValueError("each view must be a non-empty mask over the obligors")
    F = arr.F
    totals = [F[v].sum() for v in views]
    size = _block_size(config, portfolio.K)
    n_blocks = -(-config.n_scenarios // size)

    def run(block):
        n = min(size, config.n_scenarios - block * size)
        V = _terminal_block(arr, config, n, block_rng(config.seed, block))
        defaulted = V < F
        gamma = np.where(defaulted, F - V, 0.0)
        return [(gamma[:, v].sum(axis=1) / tot, defaulted[:, v].sum(axis=1))
                for v, tot in zip(views, totals)]

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    out = []
    for i in range(len(views)):
        losses = np.concatenate([p[i][0] for p in parts])
        counts = np.concatenate([p[i][1] for p in parts]).astype(np.int32)
        out.append(LossSample(losses, counts))
    return out


def run_simulation(portfolio: Portfolio, config: SimConfig, workers: int = 1) -> LossSample:
    """Monte Carlo sample of the normalized portfolio loss."""
    return simulate_views(portfolio, config, [np.ones(portfolio.K, dtype=bool)], workers)[0]


def loss_statistics(sample: LossSample, alpha: float = 0.999) -> RiskIndicators:
    """Sample indicators with standard errors for EL, UL and PD.

    The quantile is the order statistic at position ceil(alpha N); it is
    flagged unreliable when fewer than 10 scenarios lie beyond it.
    """
    x = np.asarray(sample.losses, dtype=float)
    N = x.size
    if N < 2:
        raise ValueError("loss statistics need at least two scenarios")
    mean = math.fsum(x) / N
    d = x - mean
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    ul = math.sqrt(m2 * N / (N - 1))
    pd = float(np.count_nonzero(sample.default_counts > 0)) / N
    unreliable = N * (1 - alpha) < 10 - 1e-9
    if unreliable:
        warnings.warn(f"only {N * (1 - alpha):.1f} scenarios beyond the {alpha} quantile", stacklevel=2)
    idx = min(N, max(1, math.ceil(alpha * N - 1e-9))) - 1
    q = float(np.partition(x, idx)[idx])
    skew = m3 / m2**1.5 if m2 > 0 else math.nan
    kurt = m4 / m2**2 - 3 if m2 > 0 else math.nan
    ul_se = math.sqrt(max(m4 - m2**2, 0.0) / N) / (2 * ul) if ul > 0 else 0.0
    return RiskIndicators(
        EL=mean, UL=ul, PD=pd, skewness=skew, kurtosis_excess=kurt, quantile=q, alpha=alpha,
        EL_se=ul / math.sqrt(N), UL_se=ul_se, PD_se=math.sqrt(pd * (1 - pd) / N),
        n_scenarios=N, quantile_unreliable=unreliable,
    )


def histogram(sample: LossSample, bins: int = 100, loss_max: float | None = None) -> HistogramData:
    """Uniform histogram of positive losses over ``[0, loss_max]`` (default: largest loss)."""
    x = np.asarray(sample.losses)
    positive = x[x > 0]
    top = loss_max if loss_max is not None else (float(positive.max()) if positive.size else 1.0)
    edges = np.linspace(0.0, top, bins + 1)
    counts, _ = np.histogram(np.minimum(positive, top), bins=edges)
    return HistogramData(edges, counts, int(x.size - positive.size), int(x.size))


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)).generate_state(1, np.uint64)[0])


def sweep(axes: Mapping[str, Sequence] | Iterable[Mapping], build: Callable,
          config: SimConfig, crn: bool = True, workers: int = 1,
          extra: Callable | None = None) -> list[dict]:
    """Evaluate indicators over a grid of parameter points.

    ``axes`` is either a mapping of axis name to values (expanded as a
    Cartesian product in the given order) or an explicit list of points.
    ``build(point, config)`` returns the ``(portfolio, config)`` to run.
    With ``crn`` every point reuses the base seed; otherwise each point
    gets its own derived seed so that error bars are independent.
    """
    if isinstance(axes, Mapping):
        if not axes or any(len(v) == 0 for v in axes.values()):
            raise ValueError("sweep axes must be non-empty")
        names = list(axes)
        points = [dict(zip(names, combo)) for combo in itertools.product(*axes.values())]
    else:
        points = [dict(p) for p in axes]
        if not points:
            raise ValueError("sweep needs at least one point")
    rows = []
    for i, point in enumerate(points):
        cfg = config if crn else replace(config, seed=_point_seed(config.seed, i))
        portfolio, cfg = build(point, cfg)
        sample = run_simulation(portfolio, cfg, workers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            stats = loss_statistics(sample, cfg.alpha)
        row = dict(point)
        row.update({k: v for k, v in stats.as_dict().items() if k != "alpha"})
        if extra is not None:
            row.update(extra(point, portfolio, sample))
        rows.append(row)
    return rows


DRILL_VARIANTS = ("plain", "correlated", "jumps")
DRILL_METRICS = ("EL", "UL", "skewness", "kurtosis_excess", "quantile", "EC")
DRILL_JUMPS = dict(lam=0.01, mu_J=-0.4, sigma_J=0.3)


def drill_down_portfolio(rule: CategoryRule, K: int, config: SimConfig, variant: str = "plain"):
    """Portfolio and run settings of one drill-down repetition."""
    if K < 2:
        raise ValueError(f"drill-down needs K >= 2, got {K}")
    if variant not in DRILL_VARIANTS:
        raise ValueError(f"variant must be one of {DRILL_VARIANTS}, got {variant!r}")
    portfolio = generate_category_portfolio(rule, K)
    cfg = replace(config, jump_mode="none", correlation_enabled=False)
    if variant == "correlated":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, K, 7])))
        B = min(10, K)
        portfolio = with_branches(portfolio, equal_branch_sizes(K, B), 0.5, rng)
        cfg = replace(cfg, correlation_enabled=True)
    elif variant == "jumps":
        portfolio = portfolio.with_process(**DRILL_JUMPS)
        cfg = replace(cfg, jump_mode="independent")
    return portfolio, cfg


def drill_down_experiment(rule: CategoryRule = TABLE_II, K_range: Iterable[int] = (50,),
                          config: SimConfig | None = None, variant: str = "plain",
                          workers: int = 1) -> list[dict]:
    """Indicator ratios after removing the worst-ranked obligor.

    For every K the portfolio and the portfolio without its highest
    ``P_D * <Gamma>`` obligor are evaluated on the same scenarios. Ratios
    are ``after / before``, so 0.84 means a 16 % reduction.
    """
    config = config or SimConfig()
    rows = []
    for K in K_range:
        portfolio, cfg = drill_down_portfolio(rule, int(K), config, variant)
        pd, mean_loss = risk_scores(portfolio, cfg.maturity)
        worst = int(rank_obligors(portfolio, pd, mean_loss)[0])
        keep = np.ones(portfolio.K, dtype=bool)
        keep[worst] = False
        before, after = simulate_views(portfolio, cfg, [np.ones(portfolio.K, dtype=bool), keep], workers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s0 = loss_statistics(before, cfg.alpha).as_dict()
            s1 = loss_statistics(after, cfg.alpha).as_dict()
        row = {"K": int(K), "removed": worst,
               "removed_category": portfolio.obligors[worst].category}
        for name in DRILL_METRICS:
            row[f"{name}_before"] = s0[name]
            row[f"{name}_after"] = s1[name]
            row[f"{name}_ratio"] = s1[name] / s0[name] if s0[name] else math.nan
        if variant == "plain":
            a0 = portfolio_indicators(portfolio, cfg.maturity)
            a1 = portfolio_indicators(portfolio.without(worst), cfg.maturity)
            row["EL_ratio_analytic"] = a1.EL / a0.EL
            row["UL_ratio_analytic"] = a1.UL / a0.UL
        rows.append(row)
    return rows
