"""Portfolio composition, loss definitions and the category generator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .stochastic import ProcessParams


@dataclass(frozen=True)
class ObligorSpec:
    """One bond: its issuer's asset process, face value and branch (0 = none)."""

    process: ProcessParams
    face_value: float
    branch: int = 0
    category: int | None = None

    def __post_init__(self):
        if self.face_value <= 0:
            raise ValueError(f"face value must be positive, got {self.face_value}")
        if self.branch < 0:
            raise ValueError(f"branch index must be >= 0, got {self.branch}")


@dataclass(frozen=True)
class BranchSpec:
    size: int
    correlation: float

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"branch size must be >= 1, got {self.size}")
        if not 0 <= self.correlation < 1:
            raise ValueError(f"branch correlation must lie in [0, 1), got {self.correlation}")

    @property
    def weight(self) -> float:
        """Factor weight p with correlation = p / (1 + p)."""
        return self.correlation / (1 - self.correlation)


@dataclass(frozen=True)
class Portfolio:
    """Ordered obligors plus the branch correlation structure.

    Branch ``b`` (1-based) of an obligor refers to ``branches[b - 1]``. The
    declared branch sizes must match the membership counts, so that the
    no-branch count plus all branch sizes equals K.
    """

    obligors: tuple[ObligorSpec, ...]
    branches: tuple[BranchSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obligors", tuple(self.obligors))
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.obligors:
            raise ValueError("portfolio needs at least one obligor")
        B = len(self.branches)
        counts = np.zeros(B + 1, dtype=int)
        for k, ob in enumerate(self.obligors):
            if ob.branch > B:
                raise ValueError(f"obligor {k} refers to branch {ob.branch} but only {B} are declared")
            counts[ob.branch] += 1
        declared = sum(br.size for br in self.branches)
        if declared + counts[0] != self.K:
            raise ValueError(
                f"branch sizes do not add up: no-branch {counts[0]} + branches {declared} != K = {self.K}"
            )
        for b, br in enumerate(self.branches, start=1):
            if counts[b] != br.size:
                raise ValueError(f"branch {b} declares size {br.size} but has {counts[b]} members")

    @property
    def K(self) -> int:
        return len(self.obligors)

    @property
    def face_values(self) -> np.ndarray:
        return np.array([ob.face_value for ob in self.obligors], dtype=float)

    @property
    def total_face_value(self) -> float:
        return float(self.face_values.sum())

    @property
    def assignments(self) -> np.ndarray:
        return np.array([ob.branch for ob in self.obligors], dtype=int)

    def weights(self) -> np.ndarray:
        """Factor weight p per obligor (0 outside branches)."""
        p = np.array([0.0] + [br.weight for br in self.branches])
        return p[self.assignments]

    def correlations(self) -> np.ndarray:
        c = np.array([0.0] + [br.correlation for br in self.branches])
        return c[self.assignments]

    def money_fractions(self) -> np.ndarray:
        """Share of the total face value held in each obligor."""
        F = self.face_values
        return F / F.sum()

    def without(self, index: int) -> "Portfolio":
        """Copy with obligor ``index`` removed; emptied branches are dropped."""
        if not 0 <= index < self.K:
            raise IndexError(index)
        removed = self.obligors[index]
        rest = [ob for k, ob in enumerate(self.obligors) if k != index]
        branches = list(self.branches)
        if removed.branch:
            b = removed.branch
            br = branches[b - 1]
            if br.size > 1:
                branches[b - 1] = replace(br, size=br.size - 1)
            else:
                del branches[b - 1]
                rest = [replace(ob, branch=ob.branch - 1) if ob.branch > b else ob for ob in rest]
        return Portfolio(tuple(rest), tuple(branches))

    def with_process(self, **changes) -> "Portfolio":
        """Copy with the given process parameters replaced for every obligor."""
        obligors = tuple(replace(ob, process=replace(ob.process, **changes)) for ob in self.obligors)
        return Portfolio(obligors, self.branches)


def homogeneous_portfolio(K: int, process: ProcessParams | None = None,
                          face_value: float = 75.0) -> Portfolio:
    process = process or ProcessParams()
    return Portfolio(tuple(ObligorSpec(process, face_value) for _ in range(K)))


def with_branches(portfolio: Portfolio, sizes: Sequence[int], correlations,
                  rng: np.random.Generator | None = None) -> Portfolio:
    """Put the first ``sum(sizes)`` obligors (or a random subset) into branches.

    With ``rng`` the membership is a random permutation of the obligors,
    otherwise branches are filled in obligor order.
    """
    sizes = [int(s) for s in sizes]
    if np.ndim(correlations) == 0:
        correlations = [float(correlations)] * len(sizes)
    if len(correlations) != len(sizes):
        raise ValueError("need one correlation per branch")
    K = portfolio.K
    if sum(sizes) > K:
        raise ValueError(f"branch sizes {sum(sizes)} exceed portfolio size {K}")
    order = rng.permutation(K) if rng is not None else np.arange(K)
    branch_of = np.zeros(K, dtype=int)
    start = 0
    for b, size in enumerate(sizes, start=1):
        branch_of[order[start:start + size]] = b
        start += size
    kept = [(s, c) for s, c in zip(sizes, correlations) if s > 0]
    renumber = np.cumsum([0] + [1 if s > 0 else 0 for s in sizes])
    obligors = tuple(replace(ob, branch=int(renumber[branch_of[k]]) if branch_of[k] else 0)
                     for k, ob in enumerate(portfolio.obligors))
    return Portfolio(obligors, tuple(BranchSpec(s, c) for s, c in kept))


def equal_branch_sizes(K: int, B: int) -> list[int]:
    """Split K obligors into B branches whose sizes differ by at most one."""
    base, extra = divmod(K, B)
    return [base + (1 if b < extra else 0) for b in range(B)]


def spread_face_values(K: int, center: float, width: float,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Face values uniformly spread over ``[center - width/2, center + width/2]``.

    Values sit at the K quantile midpoints of the uniform law, so the
    portfolio EL matches the window average even for small K; ``rng``
    only shuffles which obligor gets which value.
    """
    u = (np.arange(K) + 0.5) / K
    F = center + width * (u - 0.5)
    return rng.permutation(F) if rng is not None else F


def loss_given_default(F, V_T):
    """Normalized loss (F - V_T) / F, clamped to [0, 1]."""
    F = np.asarray(F, dtype=float)
    if np.any(F <= 0):
        raise ValueError("face value must be positive")
    out = np.clip((F - np.asarray(V_T, dtype=float)) / F, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def default_indicator(V_T, F):
    """1 where V_T < F; the boundary V_T == F counts as no default."""
    out = (np.asarray(V_T) < np.asarray(F)).astype(np.int8)
    return out[()] if out.ndim == 0 else out


@dataclass
class LossOutcome:
    """Per-obligor terminal values and the derived default losses."""

    terminal_values: np.ndarray
    face_values: np.ndarray
    indicators: np.ndarray = field(init=False)
    losses: np.ndarray = field(init=False)
    dollar_losses: np.ndarray = field(init=False)

    def __post_init__(self):
        self.terminal_values = np.asarray(self.terminal_values, dtype=float)
        self.face_values = np.asarray(self.face_values, dtype=float)
        self.indicators = default_indicator(self.terminal_values, self.face_values)
        self.losses = np.where(self.indicators == 1,
                               loss_given_default(self.face_values, self.terminal_values), 0.0)
        self.dollar_losses = self.losses * self.face_values


def portfolio_loss(outcome: LossOutcome, portfolio: Portfolio | None = None):
    """Total loss as a fraction of the total face value, ``sum(Gamma I) / sum(F)``.

    Works on a single outcome or on arrays with obligors on the last axis.
    """
    F = outcome.face_values
    if portfolio is not None and F.shape[-1] != portfolio.K:
        raise ValueError(f"outcome has {F.shape[-1]} obligors, portfolio has {portfolio.K}")
    return (outcome.dollar_losses * outcome.indicators).sum(axis=-1) / F.sum(axis=-1)


@dataclass(frozen=True)
class Category:
    v0: float
    face_value: float
    alpha: float


@dataclass(frozen=True)
class CategoryRule:
    """Population fractions over (V0, F) categories used to generate portfolios."""

    rows: tuple[Category, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ValueError("category rule has no rows")
        total = sum(r.alpha for r in self.rows)
        if abs(total - 1) > 1e-9:
            raise ValueError(f"category fractions sum to {total}, not 1")
        if any(r.alpha < 0 for r in self.rows):
            raise ValueError("category fractions must be non-negative")

    @property
    def risky_rows(self) -> list[int]:
        """Categories violating F < V0 (allowed, but worth flagging)."""
        return [i for i, r in enumerate(self.rows) if r.face_value >= r.v0]

    def counts(self, K: int) -> np.ndarray:
        """Obligors per category: round(alpha K) fixed up by largest remainder."""
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        exact = np.array([r.alpha for r in self.rows]) * K
        counts = np.floor(exact + 1e-9).astype(int)
        short = K - counts.sum()
        remainder = exact - counts
        for i in np.argsort(-remainder, kind="stable")[:short]:
            counts[i] += 1
        return counts

    def money_fractions(self, K: int) -> np.ndarray:
        """Share of total face value per category for a K-obligor portfolio."""
        money = self.counts(K) * np.array([r.face_value for r in self.rows])
        return money / money.sum()


TABLE_II = CategoryRule((
    Category(75.0, 50.0, 0.5),
    Category(100.0, 75.0, 0.3),
    Category(125.0, 100.0, 0.1),
    Category(150.0, 125.0, 0.08),
    Category(175.0, 150.0, 0.02),
))


def generate_category_portfolio(rule: CategoryRule, K: int, rng: np.random.Generator | None = None,
                                process: ProcessParams | None = None) -> Portfolio:
    """Portfolio of K obligors drawn according to a category rule.

    Obligors are laid out category by category unless ``rng`` is given, in
    which case their order is shuffled. All categories share ``process``
    apart from the initial asset value.
    """
    process = process or ProcessParams()
    obligors = []
    for c, (row, n) in enumerate(zip(rule.rows, rule.counts(K)), start=1):
        p = replace(process, v0=row.v0)
        obligors += [ObligorSpec(p, row.face_value, category=c) for _ in range(n)]
    if rng is not None:
        obligors = [obligors[i] for i in rng.permutation(len(obligors))]
    return Portfolio(tuple(obligors))


def rank_obligors(portfolio: Portfolio, pd, mean_loss) -> np.ndarray:
    """Obligor indices ordered from worst to best by ``R_k = P_D,k * <Gamma_k>``.

    ``mean_loss`` is the mean dollar loss given default. Ties keep the
    obligor order.
    """
    R = np.asarray(pd, dtype=float) * np.asarray(mean_loss, dtype=float)
    if R.shape != (portfolio.K,):
        raise ValueError(f"need one score per obligor, got shape {R.shape}")
    return np.argsort(-R, kind="stable")
