"""Sequential coarsened-exact-matching discrimination scores.

A single pass refines an exact-match stratification one variable at a time
(in a given order); units whose current cell has no reference (S=0) member
keep the score from the previous step, so every unit ends with a defined
score. The final measure averages many passes over random variable orders.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import Dataset, DataError, NUMERIC


@dataclass(frozen=True)
class CoarseningSpec:
    """Per-variable binning rules.

    Numeric variables are binned by explicit interior cutpoints when given,
    otherwise into equal-width bins over the observed range; the default bin
    count is Sturges' ceil(log2 n) + 1. Categorical variables pass through,
    optionally collapsed via ``level_groups``.
    """
    cutpoints: dict = field(default_factory=dict)     # var -> strictly increasing floats
    bins: dict = field(default_factory=dict)          # var -> bin count
    default_bins: int | None = None                   # None -> Sturges
    level_groups: dict = field(default_factory=dict)  # var -> {level: group label}

    def __post_init__(self):
        for var, cuts in self.cutpoints.items():
            arr = np.asarray(cuts, dtype=float)
            if len(arr) == 0 or not np.all(np.diff(arr) > 0):
                raise ValueError(f"cutpoints for {var!r} must be strictly increasing")

    def bin_count(self, var: str, n: int) -> int:
        if var in self.bins:
            return int(self.bins[var])
        if self.default_bins is not None:
            return int(self.default_bins)
        return int(np.ceil(np.log2(max(n, 2)))) + 1

    def to_dict(self) -> dict:
        return {
            "cutpoints": {k: list(map(float, v)) for k, v in self.cutpoints.items()},
            "bins": dict(self.bins),
            "default_bins": self.default_bins,
            "level_groups": {k: dict(v) for k, v in self.level_groups.items()},
        }


def resolved_cutpoints(ds: Dataset, spec: CoarseningSpec, variables=None) -> dict:
    """Interior cutpoints actually used per numeric variable (for provenance)."""
    variables = list(variables) if variables is not None else list(ds.schema.feature_names)
    out = {}
    for a in ds.schema.features:
        if a.name not in variables or a.kind != NUMERIC:
            continue
        if a.name in spec.cutpoints:
            out[a.name] = [float(c) for c in spec.cutpoints[a.name]]
        else:
            vals = ds.df[a.name].to_numpy(float)
            lo, hi = float(vals.min()), float(vals.max())
            b = spec.bin_count(a.name, ds.n)
            if hi == lo or b <= 1:
                out[a.name] = []
            else:
                out[a.name] = list(np.linspace(lo, hi, b + 1)[1:-1])
    return out


def coarsen(ds: Dataset, spec: CoarseningSpec, variables=None) -> pd.DataFrame:
    """Coarsened value table: numeric columns become bin indices, categorical
    columns pass through (grouped per spec)."""
    variables = list(variables) if variables is not None else list(ds.schema.feature_names)
    cuts = resolved_cutpoints(ds, spec, variables)
    out = pd.DataFrame(index=ds.df.index)
    for name in variables:
        attr = ds.schema[name]
        col = ds.df[name]
        if attr.kind == NUMERIC:
            c = cuts[name]
            if not c:
                out[name] = np.zeros(ds.n, dtype=np.int64)
            else:
                out[name] = np.searchsorted(np.asarray(c, float),
                                            col.to_numpy(float), side="right")
        else:
            if name in spec.level_groups:
                groups = spec.level_groups[name]
                out[name] = col.map(lambda v: groups.get(v, v))
            else:
                out[name] = col
    return out


@dataclass(frozen=True)
class Stratification:
    variables: tuple[str, ...]
    cells: dict  # signature tuple -> np.ndarray of unit indices
    cell_of: np.ndarray = field(repr=False, default=None)  # per-unit cell id

    def __len__(self):
        return len(self.cells)


def stratify(table: pd.DataFrame, variables) -> Stratification:
    """Exact grouping by coarsened signature on ``variables``; the empty
    subset yields a single cell with every unit."""
    variables = tuple(variables)
    n = len(table)
    if not variables:
        return Stratification((), {(): np.arange(n)}, np.zeros(n, dtype=np.int64))
    codes = _codes_matrix(table[list(variables)])
    key = _combine(codes)
    uniq, inv = np.unique(key, return_inverse=True)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(uniq)))
    cells = {}
    for cid in range(len(uniq)):
        lo = bounds[cid]
        hi = bounds[cid + 1] if cid + 1 < len(uniq) else n
        idx = np.sort(order[lo:hi])
        sig = tuple(table[v].iloc[idx[0]] for v in variables)
        cells[sig] = idx
    return Stratification(variables, cells, inv)


def matched_units(strat: Stratification, ds: Dataset,
                  include_self: bool = False) -> np.ndarray:
    """Boolean mask: unit i is matched iff its cell contains at least one S=0
    unit other than i (or any S=0 unit when ``include_self``)."""
    s0 = (ds.s == 0).astype(float)
    counts = np.bincount(strat.cell_of, weights=s0, minlength=len(strat.cells))
    per_unit = counts[strat.cell_of]
    if not include_self:
        per_unit = per_unit - s0
    return per_unit >= 1


def sequential_pass(ds: Dataset, spec: CoarseningSpec, permutation,
                    include_self: bool = False, variables=None) -> np.ndarray:
    """One pass of the sequential matching score for a fixed variable order.

    Step 0 scores every unit against the overall S=0 positive rate; step k
    refines cells by the k-th variable in ``permutation`` and rescoring only
    units whose refined cell still has a reference member.
    """
    names = list(ds.schema.feature_names)
    perm = [p if isinstance(p, str) else names[p] for p in permutation]
    variables = list(variables) if variables is not None else perm
    if sorted(perm) != sorted(variables) or len(set(perm)) != len(perm):
        raise ValueError("permutation must order exactly the matching variables")
    unknown = [v for v in variables if v not in names]
    if unknown:
        raise ValueError(f"unknown matching variables: {unknown}")
    table = coarsen(ds, spec, variables)
    codes = {v: _codes_matrix(table[[v]])[:, 0] for v in variables}
    return _pass_from_codes(codes, perm, ds.s, ds.y, include_self)


def _pass_from_codes(codes: dict, perm, s, y, include_self: bool) -> np.ndarray:
    s0 = (s == 0)
    if not s0.any():
        raise DataError("no S=0 units: reference outcome rate undefined")
    y = y.astype(float)
    d = y - y[s0].mean()
    s0f = s0.astype(float)
    y1s0 = (s0 & (y == 1)).astype(float)
    cell = np.zeros(len(y), dtype=np.int64)
    for var in perm:
        c = codes[var]
        key = cell * (int(c.max()) + 1) + c
        _, cell = np.unique(key, return_inverse=True)
        n_ref = np.bincount(cell, weights=s0f)[cell]
        n_pos = np.bincount(cell, weights=y1s0)[cell]
        if not include_self:
            n_ref = n_ref - s0f
            n_pos = n_pos - y1s0
        matched = n_ref >= 1
        with np.errstate(invalid="ignore", divide="ignore"):
            ybar = np.where(matched, n_pos / np.where(matched, n_ref, 1.0), 0.0)
        d = np.where(matched, y - ybar, d)
    return d


@dataclass
class CemScoreVector:
    values: np.ndarray
    repetitions: int
    seed: int
    convergence_trace: list
    spec_used: dict = field(default_factory=dict)
    include_self: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"unit": np.arange(len(self.values)),
                             "score": self.values})

    def to_csv(self, path) -> None:
        df = self.to_frame()
        df["repetitions"] = self.repetitions
        df["seed"] = self.seed
        df.to_csv(path, index=False)

    def metadata(self) -> dict:
        return {
            "method": "sequential_cem",
            "repetitions": self.repetitions,
            "seed": self.seed,
            "include_self": self.include_self,
            "coarsening": self.spec_used,
            "convergence_trace": [float(t) for t in self.convergence_trace],
        }

    def save_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


def repeated_cem(ds: Dataset, spec: CoarseningSpec, repetitions: int = 100,
                 seed: int = 0, variables=None, include_self: bool = False,
                 tol: float = 1e-3, patience: int = 10,
                 early_stop: bool = False) -> CemScoreVector:
    """Average of ``repetitions`` sequential passes with uniformly random
    variable orders; per-repetition sub-seeds derive from (seed, repetition)
    so results do not depend on execution order."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    variables = list(variables) if variables is not None else list(ds.schema.feature_names)
    table = coarsen(ds, spec, variables)
    codes = {v: _codes_matrix(table[[v]])[:, 0] for v in variables}
    s, y = ds.s, ds.y
    k = len(variables)

    total = np.zeros(ds.n)
    trace = []
    prev_mean = None
    streak = 0
    used = 0
    for m in range(repetitions):
        rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
        perm = [variables[j] for j in rng.permutation(k)]
        total += _pass_from_codes(codes, perm, s, y, include_self)
        used = m + 1
        mean = total / used
        if prev_mean is not None:
            change = float(np.max(np.abs(mean - prev_mean)))
            trace.append(change)
            streak = streak + 1 if change < tol else 0
        prev_mean = mean
        if early_stop and streak >= patience:
            break
    return CemScoreVector(
        values=total / used,
        repetitions=used,
        seed=seed,
        convergence_trace=trace,
        spec_used={"cutpoints": resolved_cutpoints(ds, spec, variables),
                   "variables": variables,
                   **spec.to_dict()},
        include_self=include_self,
    )


def _codes_matrix(frame: pd.DataFrame) -> np.ndarray:
    cols = []
    for c in frame.columns:
        codes, _ = pd.factorize(frame[c], sort=True)
        cols.append(codes.astype(np.int64))
    return np.column_stack(cols)


def _combine(codes: np.ndarray) -> np.ndarray:
    key = codes[:, 0].copy()
    for j in range(1, codes.shape[1]):
        key = key * (int(codes[:, j].max()) + 1) + codes[:, j]
    return key
