"""Experiment presets, one per reference figure, writing CSV tables plus a manifest."""
from __future__ import annotations

import math
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from ..analytics import (
    IndividualLossLaw,
    asymptotic_loss_pdf,
    combinatorial_loss_pdf,
    el_ul_vs_maturity,
    indicators_from_density,
    indicators_from_moments,
)
from ..engine import (
    SimConfig,
    _point_seed,
    drill_down_experiment,
    histogram,
    loss_statistics,
    run_simulation,
    sweep,
)
from ..portfolio import (
    TABLE_II,
    ObligorSpec,
    Portfolio,
    equal_branch_sizes,
    homogeneous_portfolio,
    spread_face_values,
    with_branches,
)
from ..stochastic import ProcessParams, solve_jump_params
from .io import RunManifest, emit_density_csv, sha256_file, write_csv


@dataclass(frozen=True)
class Baseline:
    """Default model and run parameters shared by all presets; every field is overridable."""

    mu: float = 0.05
    sigma: float = 0.15
    T: float = 1.0
    v0: float = 100.0
    F: float = 75.0
    lam: float = 0.01
    mu_J: float = -0.4
    sigma_J: float = 0.3
    n_scenarios: int = 100_000
    surface_scenarios: int = 10_000
    seed: int = 0
    sizes: tuple = (10, 100, 1000)
    drill_sizes: tuple = (10, 20, 50, 100, 200, 500, 1000)
    bins: int = 100
    jump_law: str = "log"
    scheme: str = "terminal"

    def process(self, **changes) -> ProcessParams:
        base = dict(mu=self.mu, sigma=self.sigma, lam=self.lam, mu_J=self.mu_J,
                    sigma_J=self.sigma_J, v0=self.v0)
        base.update(changes)
        return ProcessParams(**base)

    def config(self, **changes) -> SimConfig:
        cfg = SimConfig(n_scenarios=self.n_scenarios, seed=self.seed, maturity=self.T,
                        jump_law=self.jump_law, scheme=self.scheme, correlation_enabled=False)
        return replace(cfg, **changes)

    def law(self) -> IndividualLossLaw:
        return IndividualLossLaw.from_params(self.mu, self.sigma, self.T, self.v0, self.F)


def apply_overrides(base: Baseline, overrides: dict | None) -> Baseline:
    if not overrides:
        return base
    known = {f.name: f for f in fields(Baseline)}
    clean = {}
    for key, value in overrides.items():
        if key not in known:
            raise ValueError(f"unknown override {key!r}; known: {sorted(known)}")
        if key in ("sizes", "drill_sizes"):
            value = tuple(int(v) for v in value)
            if not value or min(value) < 1:
                raise ValueError(f"{key} must be a non-empty list of positive integers")
        clean[key] = value
    out = replace(base, **clean)
    out.config()  # validates scenario counts, law and scheme
    out.process()
    return out


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    target: str
    headline: dict
    run: Callable


SUMMARY_COLUMNS = ["EL", "EL_se", "UL", "UL_se", "PD", "PD_se", "skewness",
                   "kurtosis_excess", "quantile", "EC", "zero_count"]


def _quiet_stats(sample, alpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return loss_statistics(sample, alpha).as_dict()


def _distributions(name, base, out, workers, axis, curves, sizes=None, extra_columns=()):
    """Loss histograms for a few parameter curves per portfolio size.

    ``curves`` is a list of ``(value, build)`` with ``build(K) -> (portfolio, config)``.
    Every (K, curve) pair gets its own derived seed.
    """
    sizes = sizes or base.sizes
    summary, written = [], []
    idx = 0
    for K in sizes:
        results = []
        for value, build in curves:
            portfolio, cfg = build(K)
            cfg = replace(cfg, seed=_point_seed(base.seed, idx))
            idx += 1
            sample = run_simulation(portfolio, cfg, workers)
            results.append((value, sample, _quiet_stats(sample, cfg.alpha)))
        top = max((float(s.losses.max()) for _, s, _ in results), default=0.0) or 1.0
        hist_rows = []
        for value, sample, stats in results:
            h = histogram(sample, base.bins, loss_max=top)
            row = {"K": K, axis: value, **stats, "zero_count": h.zero_count}
            summary.append(row)
            for lo, hi, c, d in zip(h.edges[:-1], h.edges[1:], h.counts, h.density):
                hist_rows.append({axis: value, "bin_left": lo, "bin_right": hi, "count": c, "density": d})
        written.append(write_csv(out / f"{name}_K{K}_hist.csv",
                                 [axis, "bin_left", "bin_right", "count", "density"], hist_rows))
    cols = ["K", axis, *extra_columns, *SUMMARY_COLUMNS]
    extra = dict(curves_extra(curves))
    for row in summary:
        row.update(extra.get(row[axis], {}))
    written.append(write_csv(out / f"{name}_summary.csv", cols, summary))
    return written


def curves_extra(curves):
    for value, build in curves:
        yield value, getattr(build, "extra", {})


def _curve(fn, **extra):
    fn.extra = extra
    return fn


def _plain(base, **process):
    def build(K):
        return homogeneous_portfolio(K, base.process(**process), base.F), base.config()
    return build


# analytic presets

def _fig9(base, out, workers):
    T = np.round(np.arange(0.01, 40.0 + 1e-9, 0.01), 10)
    res = el_ul_vs_maturity(T, base.mu, base.sigma, base.v0, base.F, K=1000)
    rows = zip(res["T"], res["EL"], res["UL"])
    return [write_csv(out / "fig9.csv", ["T", "EL", "UL"], rows)]


def _fig12(base, out, workers):
    rows = []
    for mu in np.round(np.linspace(0.05, 0.15, 11), 10):
        for sigma in np.round(np.linspace(0.15, 0.35, 11), 10):
            law = IndividualLossLaw.from_params(mu, sigma, base.T, base.v0, base.F, n_max=2)
            rows.append((mu, sigma, law.expected_loss, math.sqrt(law.loss_variance / 1000)))
    return [write_csv(out / "fig12.csv", ["mu", "sigma", "EL", "UL"], rows)]


def _fig6(base, out, workers):
    law = base.law()
    written, summary = [], []
    for K in base.sizes:
        exact = combinatorial_loss_pdf(K, law, "exact_conv")
        asym = asymptotic_loss_pdf(K, law, "third")
        comb = combinatorial_loss_pdf(K, law, "third_order")
        grid = exact.grid
        cols = {"exact": exact, "asymptotic": asym.interpolate(grid), "combinatorial": comb.interpolate(grid)}
        rows = [(x, *(c.density[i] for c in cols.values())) for i, x in enumerate(grid)]
        written.append(write_csv(out / f"fig6_compare_K{K}.csv", ["loss", *cols], rows))
        for method, d in (("exact", exact), ("asymptotic", asym), ("combinatorial", comb)):
            written.append(emit_density_csv(d, out / f"fig6_K{K}_{method}.csv"))
            ind = indicators_from_density(d)
            summary.append({"K": K, "method": method, "mass": d.mass(), "atom": d.atom,
                            "negative_mass": d.negative_mass, "EL": ind.EL, "UL": ind.UL,
                            "skewness": ind.skewness, "kurtosis_excess": ind.kurtosis_excess,
                            "quantile": ind.quantile})
    written.append(write_csv(out / "fig6_summary.csv",
                             ["K", "method", "mass", "atom", "negative_mass", "EL", "UL",
                              "skewness", "kurtosis_excess", "quantile"], summary))
    return written


# Monte Carlo distribution presets

def _fig16a(base, out, workers):
    def build_for(dF):
        def build(K):
            F = spread_face_values(K, base.F, dF)
            p = base.process()
            return Portfolio(tuple(ObligorSpec(p, float(f)) for f in F)), base.config()
        return build
    return _distributions("fig16a", base, out, workers, "dF", [(d, build_for(d)) for d in (0.0, 10.0, 20.0)])


def _jump_curves(base, key, values):
    curves = []
    for v in values:
        b = _plain(base, **{key: v})

        def build(K, b=b):
            portfolio, cfg = b(K)
            return portfolio, replace(cfg, jump_mode="independent")
        p = base.process(**{key: v})
        curves.append((v, _curve(build, negative_jump_fraction=solve_jump_params(p.mu_J, p.sigma_J).negative_fraction())))
    return curves


def _fig17(base, out, workers):
    return _distributions("fig17", base, out, workers, "lambda", _jump_curves(base, "lam", (0.005, 0.01, 0.015)))


def _fig20e(base, out, workers):
    return _distributions("fig20e", base, out, workers, "mu_J", _jump_curves(base, "mu_J", (-0.3, -0.4, -0.5)),
                          extra_columns=("negative_jump_fraction",))


def _fig20f(base, out, workers):
    return _distributions("fig20f", base, out, workers, "sigma_J", _jump_curves(base, "sigma_J", (0.2, 0.3, 0.4)),
                          extra_columns=("negative_jump_fraction",))


def _branch_build(base, layout, **cfg_changes):
    """``layout(K) -> (sizes, correlations)``; obligors fill branches in order."""
    def build(K):
        sizes, corr = layout(K)
        portfolio = homogeneous_portfolio(K, base.process(), base.F)
        sizes = [s for s in sizes if s > 0]
        if sizes:
            portfolio = with_branches(portfolio, sizes, corr if np.ndim(corr) == 0 else corr[:len(sizes)])
        return portfolio, base.config(correlation_enabled=True, **cfg_changes)
    return build


def _fig21(base, out, workers):
    curves = [(c, _branch_build(base, lambda K, c=c: ([K], c))) for c in (0.2, 0.5, 0.8)]
    return _distributions("fig21", base, out, workers, "c", curves)


def _fig22(base, out, workers):
    curves = [(k, _branch_build(base, lambda K, k=k: ([int(round(k * K / 100))], 0.5))) for k in (30, 60, 100)]
    return _distributions("fig22", base, out, workers, "kappa_pct", curves)


def _fig23(base, out, workers):
    curves = [(B, _branch_build(base, lambda K, B=B: (equal_branch_sizes(K, B), 0.5))) for B in (1, 2, 5)]
    return _distributions("fig23", base, out, workers, "B", curves)


def _fig24(base, out, workers):
    pairs = ((10, 0.9), (50, 0.18), (90, 0.1))
    curves = [(k, _curve(_branch_build(base, lambda K, k=k, c=c: ([int(round(k * K / 100))], c)), c=c))
              for k, c in pairs]
    return _distributions("fig24", base, out, workers, "kappa_pct", curves, extra_columns=("c",))


def _jump_correlation_cases(base, n_branches):
    def case(correlated_diffusion, jump_mode):
        def build(K):
            B = min(n_branches, K)
            portfolio = homogeneous_portfolio(K, base.process(), base.F)
            portfolio = with_branches(portfolio, equal_branch_sizes(K, B), 0.5)
            cfg = base.config(jump_mode=jump_mode, correlation_enabled=correlated_diffusion,
                              rescale_correlated_jumps=True)
            return portfolio, cfg
        return build
    return [("uncorrelated", case(False, "independent")),
            ("correlated_diffusion", case(True, "independent")),
            ("correlated_jumps", case(True, "correlated"))]


def _fig28(base, out, workers):
    return _distributions("fig28", base, out, workers, "case", _jump_correlation_cases(base, 5))


def _fig29(base, out, workers):
    return _distributions("fig29", base, out, workers, "case", _jump_correlation_cases(base, 50), sizes=(1000,))


# sweeps of one indicator

def _fig20(base, out, workers):
    lams = (0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
    K = 10

    def build(point, cfg):
        portfolio = homogeneous_portfolio(K, base.process(lam=point["lambda"]), base.F)
        return portfolio, replace(cfg, jump_mode="independent")
    rows = sweep({"lambda": lams}, build, base.config(), crn=True, workers=workers)
    for r in rows:
        r["K"] = K
        r["kurtosis_excess_times_K"] = r["kurtosis_excess"] * K
    return [write_csv(out / "fig20.csv", ["lambda", "K", "kurtosis_excess", "kurtosis_excess_times_K",
                                          "EL", "UL", "PD"], rows)]


def _fig21a(base, out, workers):
    cs = tuple(np.round(np.arange(0.0, 0.951, 0.05), 10)) + (0.99,)
    law = base.law()
    # unconditional single-obligor moments are P_D times the loss-given-default moments
    gamma1 = indicators_from_moments([1.0] + [law.pd * m for m in law.moments[1:5]]).kurtosis_excess
    rows = []
    for K in (10, 100):
        def build(point, cfg, K=K):
            portfolio = homogeneous_portfolio(K, base.process(), base.F)
            if point["c"] > 0:
                portfolio = with_branches(portfolio, [K], point["c"])
            return portfolio, replace(cfg, correlation_enabled=True)
        for r in sweep({"c": cs}, build, base.config(), crn=True, workers=workers):
            r.update(K=K, kurtosis_uncorrelated=gamma1 / K, kurtosis_single=gamma1)
            rows.append(r)
    return [write_csv(out / "fig21a.csv", ["K", "c", "kurtosis_excess", "kurtosis_uncorrelated",
                                           "kurtosis_single", "EL", "UL", "PD"], rows)]


def _surface(name, base, out, workers, n_branches, jump_mode):
    lams = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)
    cs = tuple(np.round(np.arange(0.0, 0.91, 0.1), 10)) + (0.95,)
    rows = []
    for K in base.sizes:
        def build(point, cfg, K=K):
            portfolio = homogeneous_portfolio(K, base.process(lam=point["lambda"]), base.F)
            if point["c"] > 0:
                portfolio = with_branches(portfolio, equal_branch_sizes(K, min(n_branches, K)), point["c"])
            return portfolio, replace(cfg, jump_mode=jump_mode, correlation_enabled=True)
        cfg = base.config(n_scenarios=base.surface_scenarios)
        for r in sweep({"lambda": lams, "c": cs}, build, cfg, crn=True, workers=workers):
            r["K"] = K
            rows.append(r)
    return [write_csv(out / f"{name}.csv", ["K", "lambda", "c", "PD", "PD_se", "UL", "UL_se", "EL", "EL_se"], rows)]


def _fig26(base, out, workers):
    return _surface("fig26", base, out, workers, 1, "independent")


def _fig27(base, out, workers):
    return _surface("fig27", base, out, workers, 5, "correlated")


# drill-down

DRILL_COLUMNS = ["K", "removed", "removed_category"] + [
    f"{m}_{s}" for m in ("EL", "UL", "skewness", "kurtosis_excess", "quantile", "EC")
    for s in ("before", "after", "ratio")]


def _drill(variant):
    def run(base, out, workers):
        cfg = base.config()
        rows = drill_down_experiment(TABLE_II, base.drill_sizes, cfg, variant, workers)
        cols = DRILL_COLUMNS + (["EL_ratio_analytic", "UL_ratio_analytic"] if variant == "plain" else [])
        return [write_csv(out / f"drill_{variant}.csv", cols, rows)]
    return run


PRESETS = {p.name: p for p in (
    ExperimentPreset("fig6_compare", "exact, third-order asymptotic and combinatorial loss densities for K=10,100,1000",
                     {}, _fig6),
    ExperimentPreset("fig9", "EL and UL against maturity, K=1000",
                     {"T_argmax_EL": 12.56, "T_argmax_UL": 17.55}, _fig9),
    ExperimentPreset("fig12", "EL and UL over drift and volatility, K=1000", {}, _fig12),
    ExperimentPreset("fig16a", "loss distributions for face values spread over a window dF",
                     {"EL": {"0": 0.00076, "10": 0.00095, "20": 0.00157}}, _fig16a),
    ExperimentPreset("fig17", "loss distributions for jump intensities 0.005, 0.01, 0.015",
                     {"EL": {"0.005": 0.0015, "0.01": 0.0022, "0.015": 0.0029}}, _fig17),
    ExperimentPreset("fig20", "kurtosis excess against jump intensity, K=10", {}, _fig20),
    ExperimentPreset("fig20e", "loss distributions for mean jump sizes -0.3, -0.4, -0.5",
                     {"EL": {"-0.3": 0.0018, "-0.4": 0.0022, "-0.5": 0.0026},
                      "negative_jump_fraction": {"-0.3": 0.86, "-0.4": 0.91, "-0.5": 0.94}}, _fig20e),
    ExperimentPreset("fig20f", "loss distributions for jump size spreads 0.2, 0.3, 0.4",
                     {"EL": {"0.2": 0.0020, "0.3": 0.0022, "0.4": 0.0024},
                      "negative_jump_fraction": {"0.2": 0.96, "0.3": 0.91, "0.4": 0.87}}, _fig20f),
    ExperimentPreset("fig21", "loss distributions for a single branch with c = 0.2, 0.5, 0.8",
                     {"EL": 0.00076}, _fig21),
    ExperimentPreset("fig21a", "kurtosis excess against single-branch correlation, K=10,100",
                     {"kurtosis_single": 264.6}, _fig21a),
    ExperimentPreset("fig22", "loss distributions for branch sizes 30, 60, 100 % at c=0.5",
                     {"EL": 0.00076}, _fig22),
    ExperimentPreset("fig23", "loss distributions for 1, 2, 5 branches at c=0.5",
                     {"PD_single": 0.0149}, _fig23),
    ExperimentPreset("fig24", "loss distributions with branch size times correlation fixed at 9",
                     {"EL": 0.00076}, _fig24),
    ExperimentPreset("fig26", "PD and UL over jump intensity and correlation, one branch, independent jumps",
                     {}, _fig26),
    ExperimentPreset("fig27", "PD and UL over jump intensity and correlation, five branches, correlated jumps",
                     {}, _fig27),
    ExperimentPreset("fig28", "uncorrelated vs correlated diffusion vs correlated jumps, five branches",
                     {}, _fig28),
    ExperimentPreset("fig29", "uncorrelated vs correlated diffusion vs correlated jumps, K=1000, 50 branches",
                     {}, _fig29),
    ExperimentPreset("drill_plain", "drill-down ratios, category portfolio",
                     {"EL_ratio": {"50": 0.84, "1000": 0.9925}, "UL_ratio": {"50": 0.82, "1000": 0.9912}},
                     _drill("plain")),
    ExperimentPreset("drill_corr", "drill-down ratios with 10 branches at c=0.5",
                     {"EL_ratio": {"50": 0.82}, "UL_ratio": {"50": 0.78}}, _drill("correlated")),
    ExperimentPreset("drill_jump", "drill-down ratios with jumps",
                     {"EL_ratio": {"50": 0.90}, "UL_ratio": {"50": 0.91}}, _drill("jumps")),
)}


def run_preset(name: str, overrides: dict | None = None, out_dir=".", workers: int = 1) -> RunManifest:
    """Run a preset, write its CSV files and ``<name>_manifest.json`` into ``out_dir``."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    preset = PRESETS[name]
    base = apply_overrides(Baseline(), overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    paths = preset.run(base, out, workers)
    wall = time.perf_counter() - start
    config = asdict(base)
    config["sizes"] = list(base.sizes)
    config["drill_sizes"] = list(base.drill_sizes)
    manifest = RunManifest(preset=name, config=config, seed=base.seed, version=__version__,
                           wall_time=wall, outputs={p.name: sha256_file(p) for p in paths},
                           targets={"description": preset.target, "headline": preset.headline})
    manifest.write(out / f"{name}_manifest.json")
    return manifest


def replay(manifest_path, out_dir=None, workers: int = 1) -> dict:
    """Re-run a manifest; returns ``{file: (expected, actual)}`` for every mismatch."""
    manifest = RunManifest.load(manifest_path)
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(out_dir) if out_dir is not None else Path(tmp)
        fresh = run_preset(manifest.preset, manifest.config, target, workers)
    diffs = {}
    for fname, digest in manifest.outputs.items():
        got = fresh.outputs.get(fname)
        if got != digest:
            diffs[fname] = (digest, got)
    return diffs
