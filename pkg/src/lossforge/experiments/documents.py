"""Portfolio documents in JSON syntax.

A document either lists obligors explicitly::

    {"defaults": {"mu": 0.05, "sigma": 0.15},
     "obligors": [{"v0": 100, "face_value": 75, "branch": 1}, ...],
     "branches": [{"size": 1, "correlation": 0.5}]}

or names a category rule and a size::

    {"category_rule": "table_ii", "K": 50}

``category_rule`` may also be a list of ``{"v0", "face_value", "alpha"}``
rows. With a category rule the branches are filled in obligor order
unless ``"random_assignment": true`` and a ``"seed"`` are given.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..portfolio import (
    TABLE_II,
    BranchSpec,
    Category,
    CategoryRule,
    ObligorSpec,
    Portfolio,
    generate_category_portfolio,
    with_branches,
)
from ..stochastic import ProcessParams

PROCESS_KEYS = ("mu", "sigma", "lam", "mu_J", "sigma_J", "v0")
OBLIGOR_KEYS = set(PROCESS_KEYS) | {"face_value", "branch"}
TOP_KEYS = {"defaults", "obligors", "category_rule", "K", "branches", "random_assignment", "seed"}


class DocumentError(ValueError):
    """Invalid portfolio document; the message names the offending field."""


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _process(fields: dict, base: ProcessParams, where: str) -> ProcessParams:
    values = {k: _number(fields[k], f"{where}.{k}") for k in PROCESS_KEYS if k in fields}
    try:
        return ProcessParams(**{**{k: getattr(base, k) for k in PROCESS_KEYS}, **values})
    except ValueError as exc:
        raise DocumentError(f"{where}: {exc}") from None


def _branches(doc) -> list[BranchSpec]:
    out = []
    for i, b in enumerate(doc.get("branches", [])):
        where = f"branches[{i}]"
        if not isinstance(b, dict) or set(b) - {"size", "correlation"} or len(b) != 2:
            raise DocumentError(f"{where}: expected an object with size and correlation")
        size = b["size"]
        if isinstance(size, bool) or not isinstance(size, int):
            raise DocumentError(f"{where}.size: expected an integer, got {size!r}")
        try:
            out.append(BranchSpec(size, _number(b["correlation"], f"{where}.correlation")))
        except ValueError as exc:
            raise DocumentError(f"{where}: {exc}") from None
    return out


def _rule(spec) -> CategoryRule:
    if isinstance(spec, str):
        if spec.lower().replace("-", "_") in ("table_ii", "table2"):
            return TABLE_II
        raise DocumentError(f"category_rule: unknown named rule {spec!r}")
    if not isinstance(spec, list):
        raise DocumentError("category_rule: expected a name or a list of rows")
    rows = []
    for i, r in enumerate(spec):
        where = f"category_rule[{i}]"
        if not isinstance(r, dict) or set(r) != {"v0", "face_value", "alpha"}:
            raise DocumentError(f"{where}: expected keys v0, face_value, alpha")
        rows.append(Category(*(_number(r[k], f"{where}.{k}") for k in ("v0", "face_value", "alpha"))))
    try:
        return CategoryRule(tuple(rows))
    except ValueError as exc:
        raise DocumentError(f"category_rule: {exc}") from None


def portfolio_from_document(doc: dict) -> Portfolio:
    if not isinstance(doc, dict):
        raise DocumentError("document root must be an object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise DocumentError(f"unknown top-level keys {sorted(unknown)}")
    has_list, has_rule = "obligors" in doc, "category_rule" in doc
    if has_list == has_rule:
        raise DocumentError("give exactly one of 'obligors' or 'category_rule' + 'K'")
    defaults = doc.get("defaults", {})
    if not isinstance(defaults, dict) or set(defaults) - set(PROCESS_KEYS) - {"face_value"}:
        raise DocumentError(f"defaults: allowed keys are {PROCESS_KEYS + ('face_value',)}")
    base = _process(defaults, ProcessParams(), "defaults")
    branches = _branches(doc)
    declared = sum(b.size for b in branches)

    if has_list:
        items = doc["obligors"]
        if not isinstance(items, list) or not items:
            raise DocumentError("obligors: expected a non-empty list")
        if declared > len(items):
            raise DocumentError(f"branches: sizes sum to {declared} but the portfolio has only "
                                f"K={len(items)} obligors (each obligor is in at most one branch)")
        obligors = []
        for i, ob in enumerate(items):
            where = f"obligors[{i}]"
            if not isinstance(ob, dict):
                raise DocumentError(f"{where}: expected an object")
            extra = set(ob) - OBLIGOR_KEYS
            if extra:
                raise DocumentError(f"{where}: unknown keys {sorted(extra)}")
            face = ob.get("face_value", defaults.get("face_value"))
            if face is None:
                raise DocumentError(f"{where}.face_value: missing")
            branch = ob.get("branch", 0)
            if isinstance(branch, bool) or not isinstance(branch, int) or not 0 <= branch <= len(branches):
                raise DocumentError(f"{where}.branch: must be 0..{len(branches)}, got {branch!r}")
            try:
                obligors.append(ObligorSpec(_process(ob, base, where), _number(face, f"{where}.face_value"), branch))
            except ValueError as exc:
                raise DocumentError(f"{where}: {exc}") from None
        try:
            return Portfolio(tuple(obligors), tuple(branches))
        except ValueError as exc:
            raise DocumentError(f"branches: {exc}") from None

    K = doc.get("K")
    if isinstance(K, bool) or not isinstance(K, int) or K < 1:
        raise DocumentError(f"K: expected a positive integer, got {K!r}")
    if declared > K:
        raise DocumentError(f"branches: sizes sum to {declared} but K={K} "
                            "(each obligor is in at most one branch)")
    portfolio = generate_category_portfolio(_rule(doc["category_rule"]), K, process=base)
    if branches:
        rng = None
        if doc.get("random_assignment"):
            rng = np.random.default_rng(doc.get("seed", 0))
        portfolio = with_branches(portfolio, [b.size for b in branches],
                                  [b.correlation for b in branches], rng)
    return portfolio


def parse_portfolio_document(path) -> Portfolio:
    """Read a JSON portfolio document; errors name the line or field at fault."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return portfolio_from_document(doc)
    except DocumentError as exc:
        raise DocumentError(f"{path}: {exc}") from None
