"""Group-level fairness gaps: demographic parity, conditional parity per
coarsened stratum, and equalized-odds gaps given predictions."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd

from .data import Dataset, DataError
from .cem import CoarseningSpec, coarsen


@dataclass(frozen=True)
class StratumGap:
    stratum: dict
    gap: float | None  # None when either S group is empty in the stratum
    n_s1: int
    n_s0: int


@dataclass
class ParityReport:
    unconditional_gap: float
    conditional_gaps: list[StratumGap]
    equalized_odds_gaps: tuple[float | None, float | None] | None = None

    def to_dict(self) -> dict:
        d = {
            "unconditional_gap": self.unconditional_gap,
            "conditional_gaps": [asdict(g) for g in self.conditional_gaps],
        }
        if self.equalized_odds_gaps is not None:
            d["equalized_odds_gaps"] = {
                "y0": self.equalized_odds_gaps[0],
                "y1": self.equalized_odds_gaps[1],
            }
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_frame(self) -> pd.DataFrame:
        rows = [{"stratum": json.dumps(g.stratum), "gap": g.gap,
                 "n_s1": g.n_s1, "n_s0": g.n_s0} for g in self.conditional_gaps]
        return pd.DataFrame(rows)


def demographic_parity_gap(ds: Dataset) -> float:
    """P(Y=1|S=1) - P(Y=1|S=0)."""
    s, y = ds.s, ds.y
    if not (s == 1).any() or not (s == 0).any():
        raise DataError("both S groups must be nonempty")
    return float(y[s == 1].mean() - y[s == 0].mean())


def conditional_parity_gaps(ds: Dataset, conditioning_vars,
                            coarsening: CoarseningSpec | None = None) -> list[StratumGap]:
    """Per coarsened stratum of the conditioning variables:
    P(Y=1|S=1, stratum) - P(Y=1|S=0, stratum); empty conditioning set gives
    the single unconditional stratum. Strata lacking either S group get gap=None."""
    conditioning_vars = list(conditioning_vars)
    for v in conditioning_vars:
        ds.schema[v]  # raises KeyError on unknown attribute
    if coarsening is None:
        coarsening = CoarseningSpec()
    table = coarsen(ds, coarsening)
    s, y = ds.s, ds.y
    if not conditioning_vars:
        groups = [({}, np.arange(ds.n))]
    else:
        grouped = table.groupby(conditioning_vars, sort=True, observed=True).indices
        groups = []
        for key, idx in grouped.items():
            key = key if isinstance(key, tuple) else (key,)
            desc = {v: _plain(k) for v, k in zip(conditioning_vars, key)}
            groups.append((desc, np.asarray(idx)))
    out = []
    for desc, idx in groups:
        s1 = idx[s[idx] == 1]
        s0 = idx[s[idx] == 0]
        gap = None
        if len(s1) and len(s0):
            gap = float(y[s1].mean() - y[s0].mean())
        out.append(StratumGap(desc, gap, len(s1), len(s0)))
    return out


def equalized_odds_gaps(ds: Dataset, predictions) -> tuple[float | None, float | None]:
    """For each true y: P(Yhat=1|S=0, Y=y) - P(Yhat=1|S=1, Y=y); None when a
    required (S, Y) cell is empty."""
    yhat = np.asarray(predictions)
    if len(yhat) != ds.n:
        raise DataError("predictions must align with dataset rows")
    s, y = ds.s, ds.y
    gaps = []
    for y_val in (0, 1):
        cells = {}
        for s_val in (0, 1):
            sel = (s == s_val) & (y == y_val)
            cells[s_val] = float(yhat[sel].mean()) if sel.any() else None
        if cells[0] is None or cells[1] is None:
            gaps.append(None)
        else:
            gaps.append(cells[0] - cells[1])
    return gaps[0], gaps[1]


def parity_report(ds: Dataset, conditioning_vars=(), coarsening=None,
                  predictions=None) -> ParityReport:
    eo = equalized_odds_gaps(ds, predictions) if predictions is not None else None
    return ParityReport(
        unconditional_gap=demographic_parity_gap(ds),
        conditional_gaps=conditional_parity_gaps(ds, conditioning_vars, coarsening),
        equalized_odds_gaps=eo,
    )


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v
