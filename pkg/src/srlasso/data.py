"""Datasets, column standardization and the grouped design container."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

FAMILIES = ("gaussian", "binomial")

# sd below this (relative to the column's magnitude) counts as constant
_CONSTANT_RTOL = 1e-12


class DataError(ValueError):
    """Raised for malformed input data."""


def _check_family(family: str) -> str:
    if family not in FAMILIES:
        raise DataError(f"family must be one of {FAMILIES}, got {family!r}")
    return family


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    feature_names: Optional[tuple[str, ...]] = None
    family: str = "gaussian"

    def __post_init__(self):
        # private copies, so freezing them never touches the caller's arrays
        y = np.array(self.y, dtype=float)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if y.ndim != 1 or X.ndim != 2:
            raise DataError("y must be a vector and X a matrix")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if y.shape[0] < 2:
            raise DataError("need at least 2 observations")
        if X.shape[1] < 1:
            raise DataError("need at least 1 feature")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("missing or non-finite values are not supported")
        _check_family(self.family)
        if self.family == "binomial" and not np.all((y == 0) | (y == 1)):
            raise DataError("binomial response must be coded 0/1")
        names = tuple(self.feature_names) if self.feature_names is not None else ()
        if not names:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match X")
        y.flags.writeable = False
        X.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.X[rows], self.feature_names, self.family)


def load_dataset(path, response_column: str, family: str = "gaussian") -> Dataset:
    """Read a comma-delimited table with a header row into a Dataset.

    Every column other than the response must be numeric; categorical
    columns and missing values are rejected.
    """
    _check_family(family)
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    df = pd.read_csv(path, sep=",", encoding="utf-8")
    if response_column not in df.columns:
        raise DataError(f"column not found: {response_column!r}")
    if df.isna().any().any():
        bad = [c for c in df.columns if df[c].isna().any()]
        raise DataError(f"missing values in columns {bad}")
    non_numeric = [c for c in df.columns if not pd.api.types.is_numeric_dtype(df[c])]
    if non_numeric:
        raise DataError(f"non-numeric columns are not supported: {non_numeric}")
    features = [c for c in df.columns if c != response_column]
    if not features:
        raise DataError("no feature columns besides the response")
    y = df[response_column].to_numpy(dtype=float)
    if family == "binomial" and not np.all((y == 0) | (y == 1)):
        raise DataError(
            f"binomial response must be 0/1, found values {sorted(set(np.unique(y)))}"
        )
    return Dataset(y, df[features].to_numpy(dtype=float), tuple(map(str, features)), family)


@dataclass(frozen=True)
class StandardizationParams:
    """Centers and population sds of the retained columns of a matrix.

    ``dropped`` indexes the zero-variance columns of the original matrix;
    ``centers`` and ``scales`` are aligned with ``kept``.
    """

    centers: np.ndarray
    scales: np.ndarray
    dropped: tuple[int, ...]
    n_columns: int

    @property
    def kept(self) -> np.ndarray:
        mask = np.ones(self.n_columns, dtype=bool)
        mask[list(self.dropped)] = False
        return np.flatnonzero(mask)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_columns:
            raise DataError(f"expected {self.n_columns} columns, got {X.shape}")
        return (X[:, self.kept] - self.centers) / self.scales

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "scales": self.scales.tolist(),
            "dropped": list(self.dropped),
            "n_columns": self.n_columns,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(
            np.asarray(d["centers"], dtype=float),
            np.asarray(d["scales"], dtype=float),
            tuple(int(i) for i in d["dropped"]),
            int(d["n_columns"]),
        )


def standardize(X) -> tuple[np.ndarray, StandardizationParams]:
    """Center each column and divide by its population (ddof=0) sd.

    Zero-variance columns are dropped and recorded in ``params.dropped``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, q = X.shape
    if n < 2:
        raise DataError("standardize needs at least 2 rows")
    centers = X.mean(axis=0)
    scales = X.std(axis=0)
    constant = scales <= _CONSTANT_RTOL * np.maximum(1.0, np.abs(centers))
    if q > 0 and constant.all():
        raise DataError("all columns are constant")
    dropped = tuple(int(j) for j in np.flatnonzero(constant))
    keep = ~constant
    params = StandardizationParams(centers[keep], scales[keep], dropped, q)
    Z = (X[:, keep] - params.centers) / params.scales
    return Z, params


def destandardize(beta_std, intercept_std: float, params: StandardizationParams):
    """Map coefficients fitted on standardized columns back to the raw columns.

    Returns ``(beta_raw, intercept_raw)`` aligned with the retained columns.
    """
    beta_std = np.asarray(beta_std, dtype=float)
    if beta_std.shape != params.scales.shape:
        raise DataError(
            f"coefficient length {beta_std.shape} does not match {params.scales.shape[0]} retained columns"
        )
    beta_raw = beta_std / params.scales
    intercept_raw = float(intercept_std) - float(beta_raw @ params.centers)
    return beta_raw, intercept_raw


@dataclass(frozen=True)
class ColumnMeta:
    """Provenance of one design column.

    kind is ``"main"`` (features=(j,), degree 1), ``"interaction"``
    (features=(j, l), j < l) or ``"poly"`` (features=(j,), degree d >= 2).
    """

    kind: str
    features: tuple[int, ...]
    degree: int = 1

    def label(self, names: Sequence[str]) -> str:
        if self.kind == "interaction":
            return ":".join(names[j] for j in self.features)
        if self.kind == "poly":
            return f"{names[self.features[0]]}^{self.degree}"
        return names[self.features[0]]

    def to_list(self) -> list:
        return [self.kind, list(self.features), self.degree]


@dataclass(frozen=True)
class Group:
    group_id: str
    columns: tuple[int, ...]
    index: int  # 1-based rank of the group

    @property
    def size(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class GroupedDesign:
    """Expanded, standardized matrix together with its group structure.

    ``params`` standardizes the raw expanded matrix; ``expansion`` and
    ``origin`` are what :meth:`transform` needs to replay the expansion on
    new raw rows.
    """

    Z: np.ndarray
    groups: tuple[Group, ...]
    column_meta: tuple[ColumnMeta, ...]
    params: StandardizationParams
    feature_names: tuple[str, ...] = ()
    expansion: Any = None
    origin: Optional[StandardizationParams] = None

    def __post_init__(self):
        Z = np.ascontiguousarray(self.Z, dtype=float)
        Z.flags.writeable = False
        object.__setattr__(self, "Z", Z)
        owner = np.full(Z.shape[1], -1)
        for g_pos, g in enumerate(self.groups):
            for c in g.columns:
                if owner[c] != -1:
                    raise DataError(f"column {c} belongs to more than one group")
                owner[c] = g_pos
        if (owner < 0).any():
            raise DataError("every column must belong to a group")
        if len(self.column_meta) != Z.shape[1]:
            raise DataError("column_meta length does not match Z")
        object.__setattr__(self, "_owner", owner)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def group_sizes(self) -> list[int]:
        return [g.size for g in self.groups]

    @property
    def column_group(self) -> np.ndarray:
        """Position in ``groups`` of each column's group."""
        return self._owner

    @property
    def column_names(self) -> list[str]:
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(self._n_features()))
        return [m.label(names) for m in self.column_meta]

    def _n_features(self) -> int:
        return 1 + max((max(m.features) for m in self.column_meta), default=-1)

    @classmethod
    def from_matrix(cls, Z, groups: Optional[Sequence[Sequence[int]]] = None) -> "GroupedDesign":
        """Wrap an already-prepared matrix; columns are taken as-is."""
        Z = np.asarray(Z, dtype=float)
        q = Z.shape[1]
        if groups is None:
            groups = [range(q)]
        gs = tuple(Group(f"g{k + 1}", tuple(int(c) for c in cols), k + 1) for k, cols in enumerate(groups))
        meta = tuple(ColumnMeta("main", (j,)) for j in range(q))
        params = StandardizationParams(np.zeros(q), np.ones(q), (), q)
        return cls(Z, gs, meta, params)

    def transform(self, X_new) -> np.ndarray:
        """Expand and standardize new raw rows with the stored parameters."""
        from srlasso.expand import raw_features

        if self.expansion is None:
            return self.params.apply(X_new)
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim == 1:
            X_new = X_new[:, None]
        raw, _ = raw_features(X_new, self.expansion, self.origin)
        return self.params.apply(raw)

    def groups_summary(self) -> list[dict]:
        return [{"id": g.group_id, "index": g.index, "size": g.size} for g in self.groups]
