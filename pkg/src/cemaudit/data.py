"""Typed tabular data model: schema, CSV ingestion, splitting, base rates.

The sensitive attribute S and the outcome Y are stored internally as 0/1
integers; the original categorical levels are kept so serialization round-trips.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

NUMERIC = "numeric"
CATEGORICAL = "categorical"

ROLE_FEATURE = "feature"
ROLE_SENSITIVE = "sensitive"
ROLE_OUTCOME = "outcome"


class SchemaError(ValueError):
    """Invalid attribute schema."""


class DataError(ValueError):
    """Data does not conform to its schema."""


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # numeric | categorical
    role: str = ROLE_FEATURE
    # level mapped to 1; required for sensitive (protected) and outcome (positive)
    level_one: str | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown kind {self.kind!r} for attribute {self.name!r}")
        if self.role not in (ROLE_FEATURE, ROLE_SENSITIVE, ROLE_OUTCOME):
            raise SchemaError(f"unknown role {self.role!r} for attribute {self.name!r}")
        if self.role in (ROLE_SENSITIVE, ROLE_OUTCOME):
            if self.kind != CATEGORICAL:
                raise SchemaError(f"{self.role} attribute {self.name!r} must be categorical")
            if self.level_one is None:
                raise SchemaError(f"{self.role} attribute {self.name!r} needs level_one")


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        if sum(a.role == ROLE_SENSITIVE for a in self.attributes) != 1:
            raise SchemaError("exactly one sensitive attribute required")
        if sum(a.role == ROLE_OUTCOME for a in self.attributes) != 1:
            raise SchemaError("exactly one outcome attribute required")

    @property
    def sensitive(self) -> Attribute:
        return next(a for a in self.attributes if a.role == ROLE_SENSITIVE)

    @property
    def outcome(self) -> Attribute:
        return next(a for a in self.attributes if a.role == ROLE_OUTCOME)

    @property
    def features(self) -> tuple[Attribute, ...]:
        return tuple(a for a in self.attributes if a.role == ROLE_FEATURE)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.features)

    def __getitem__(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def with_numeric_feature(self, name: str) -> "Schema":
        if any(a.name == name for a in self.attributes):
            raise SchemaError(f"attribute {name!r} already exists")
        return Schema(self.attributes + (Attribute(name, NUMERIC, ROLE_FEATURE),))

    def to_dict(self) -> dict:
        out = []
        for a in self.attributes:
            d = {"name": a.name, "kind": a.kind, "role": a.role}
            if a.role == ROLE_SENSITIVE:
                d["protected_level"] = a.level_one
            elif a.role == ROLE_OUTCOME:
                d["positive_level"] = a.level_one
            out.append(d)
        return {"attributes": out}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        attrs = []
        for item in d["attributes"]:
            level_one = item.get("protected_level", item.get("positive_level"))
            attrs.append(
                Attribute(
                    name=item["name"],
                    kind=item["kind"],
                    role=item.get("role", ROLE_FEATURE),
                    level_one=level_one,
                )
            )
        return cls(tuple(attrs))

    @classmethod
    def from_json(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Dataset:
    """Immutable typed table with designated binary S and Y columns.

    ``df`` holds features in their native types and S/Y as 0/1 ints.
    ``s_levels`` / ``y_levels`` map (level_zero, level_one) back to the
    original categorical labels for serialization.
    """

    def __init__(self, df: pd.DataFrame, schema: Schema,
                 s_levels: tuple[str, str] | None = None,
                 y_levels: tuple[str, str] | None = None):
        self.schema = schema
        self.s_levels = s_levels or ("0", "1")
        self.y_levels = y_levels or ("0", "1")
        df = df.reset_index(drop=True)
        missing = [a.name for a in schema.attributes if a.name not in df.columns]
        if missing:
            raise DataError(f"missing columns: {missing}")
        df = df[[a.name for a in schema.attributes]].copy()
        for a in schema.features:
            if a.kind == NUMERIC:
                vals = pd.to_numeric(df[a.name], errors="coerce")
                if vals.isna().any() or not np.isfinite(vals.to_numpy(float)).all():
                    raise DataError(f"non-finite values in numeric column {a.name!r}")
                df[a.name] = vals
            else:
                df[a.name] = df[a.name].astype(str)
        for name in (schema.sensitive.name, schema.outcome.name):
            col = pd.to_numeric(df[name], errors="coerce")
            if col.isna().any() or not col.isin([0, 1]).all():
                raise DataError(f"column {name!r} must be binary 0/1")
            df[name] = col.astype(np.int8)
        if df.isna().any().any():
            raise DataError("missing values are not allowed after ingestion")
        self._df = df

    @property
    def df(self) -> pd.DataFrame:
        return self._df

    @property
    def n(self) -> int:
        return len(self._df)

    @property
    def s(self) -> np.ndarray:
        return self._df[self.schema.sensitive.name].to_numpy(np.int8)

    @property
    def y(self) -> np.ndarray:
        return self._df[self.schema.outcome.name].to_numpy(np.int8)

    def feature_frame(self, names=None) -> pd.DataFrame:
        names = list(names) if names is not None else list(self.schema.feature_names)
        return self._df[names]

    def replace_column(self, name: str, values) -> "Dataset":
        df = self._df.copy()
        df[name] = values
        return Dataset(df, self.schema, self.s_levels, self.y_levels)

    def add_numeric_feature(self, name: str, values) -> "Dataset":
        schema = self.schema.with_numeric_feature(name)
        df = self._df.copy()
        df[name] = np.asarray(values, dtype=float)
        return Dataset(df, schema, self.s_levels, self.y_levels)

    def take(self, indices) -> "Dataset":
        return Dataset(self._df.iloc[np.asarray(indices)], self.schema,
                       self.s_levels, self.y_levels)

    def to_csv(self, path, sep=",") -> None:
        df = self._df.copy()
        s_name, y_name = self.schema.sensitive.name, self.schema.outcome.name
        df[s_name] = np.asarray(self.s_levels, object)[df[s_name]]
        df[y_name] = np.asarray(self.y_levels, object)[df[y_name]]
        df.to_csv(path, sep=sep, index=False)

    def __eq__(self, other):
        return (isinstance(other, Dataset)
                and self.schema == other.schema
                and self._df.equals(other._df))


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    train_indices: np.ndarray = field(repr=False, default=None)
    test_indices: np.ndarray = field(repr=False, default=None)


def _map_binary(col: pd.Series, attr: Attribute) -> tuple[np.ndarray, tuple[str, str]]:
    vals = col.astype(str).str.strip()
    levels = sorted(vals.unique())
    if len(levels) != 2:
        raise DataError(
            f"{attr.role} column {attr.name!r} has {len(levels)} observed levels, expected 2"
        )
    if str(attr.level_one) not in levels:
        raise DataError(
            f"level {attr.level_one!r} for {attr.name!r} not among observed levels {levels}"
        )
    level_one = str(attr.level_one)
    level_zero = levels[0] if levels[1] == level_one else levels[1]
    return (vals == level_one).astype(np.int8).to_numpy(), (level_zero, level_one)


def load_csv(path, schema: Schema, na_policy: str = "drop_row",
             sep: str = ",", na_values=("?",)) -> Dataset:
    """Ingest a CSV with a header row; rows with missing markers are dropped
    or rejected per ``na_policy`` ({'drop_row', 'error'})."""
    if na_policy not in ("drop_row", "error"):
        raise ValueError(f"unknown na_policy {na_policy!r}")
    raw = pd.read_csv(path, sep=sep, na_values=list(na_values),
                      skipinitialspace=True, dtype=str)
    raw.columns = [c.strip() for c in raw.columns]
    missing = [a.name for a in schema.attributes if a.name not in raw.columns]
    if missing:
        raise DataError(f"columns not found in {path}: {missing}")
    raw = raw[[a.name for a in schema.attributes]]
    has_na = raw.isna().any(axis=1)
    if has_na.any():
        if na_policy == "error":
            raise DataError(f"{int(has_na.sum())} rows contain missing values")
        raw = raw[~has_na]
    if raw.empty:
        raise DataError("no rows remain after ingestion")
    raw = raw.reset_index(drop=True)

    df = pd.DataFrame(index=raw.index)
    s_levels = y_levels = None
    for a in schema.attributes:
        if a.role == ROLE_SENSITIVE:
            df[a.name], s_levels = _map_binary(raw[a.name], a)
        elif a.role == ROLE_OUTCOME:
            df[a.name], y_levels = _map_binary(raw[a.name], a)
        elif a.kind == NUMERIC:
            vals = pd.to_numeric(raw[a.name], errors="coerce")
            if vals.isna().any():
                bad = raw[a.name][vals.isna()].iloc[0]
                raise DataError(f"unparseable numeric value {bad!r} in column {a.name!r}")
            df[a.name] = vals
        else:
            df[a.name] = raw[a.name].str.strip()
    return Dataset(df, schema, s_levels, y_levels)


def split(ds: Dataset, train_fraction: float, seed: int,
          stratify_by: str | None = None) -> SplitPair:
    """Seeded random partition into train/test; optionally stratified by a
    binary column name ('S' strata use the sensitive column etc.)."""
    if ds.n < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(round(train_fraction * ds.n))
    if n_train <= 0 or n_train >= ds.n:
        raise DataError(f"degenerate split: train size {n_train} of {ds.n}")
    rng = np.random.default_rng(seed)
    if stratify_by is None:
        perm = rng.permutation(ds.n)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
    else:
        col = ds.df[stratify_by].to_numpy()
        train_parts = []
        # proportional allocation per stratum, remainder assigned by largest strata
        strata = [np.flatnonzero(col == v) for v in pd.unique(col)]
        quota = [train_fraction * len(ix) for ix in strata]
        base = [int(np.floor(q)) for q in quota]
        rem = n_train - sum(base)
        order = np.argsort([b - q for b, q in zip(base, quota)])
        for j in order[:rem]:
            base[j] += 1
        for ix, b in zip(strata, base):
            take = rng.permutation(len(ix))[:b]
            train_parts.append(ix[take])
        train_idx = np.sort(np.concatenate(train_parts))
        mask = np.ones(ds.n, dtype=bool)
        mask[train_idx] = False
        test_idx = np.flatnonzero(mask)
    return SplitPair(ds.take(train_idx), ds.take(test_idx), seed,
                     train_idx, test_idx)


def positive_rate(ds: Dataset, group: str = "all") -> float:
    """Relative frequency of Y=1 in 'all', 'S=0' or 'S=1'."""
    y = ds.y
    if group == "all":
        sel = np.ones(ds.n, dtype=bool)
    elif group in ("S=0", "S=1"):
        sel = ds.s == int(group[-1])
    else:
        raise ValueError(f"unknown group {group!r}")
    if not sel.any():
        raise DataError(f"group {group!r} is empty")
    return float(y[sel].mean())
