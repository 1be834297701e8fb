"""Derived features (pairwise interactions, polynomial powers) and hierarchy bookkeeping."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb
from typing import Iterable, Optional

import numpy as np

from srlasso.data import (
    ColumnMeta,
    Dataset,
    Group,
    GroupedDesign,
    StandardizationParams,
    standardize,
)

MAX_DEGREE = 12
ORIGIN_POLICIES = ("raw_then_standardize", "standardize_then_multiply")


@dataclass(frozen=True)
class ExpansionSpec:
    kind: str = "none"  # none | interactions | polynomials
    max_degree: int = 1
    origin_policy: str = "raw_then_standardize"

    def __post_init__(self):
        if self.kind not in ("none", "interactions", "polynomials"):
            raise ValueError(f"unknown expansion kind {self.kind!r}")
        if self.kind == "polynomials" and not 1 <= self.max_degree <= MAX_DEGREE:
            raise ValueError(f"max_degree must be in [1, {MAX_DEGREE}], got {self.max_degree}")
        if self.origin_policy not in ORIGIN_POLICIES:
            raise ValueError(f"origin_policy must be one of {ORIGIN_POLICIES}")

    @classmethod
    def parse(cls, text: str) -> "ExpansionSpec":
        """Parse ``none``, ``interactions`` or ``poly:m``."""
        if text in ("none", "interactions"):
            return cls(text)
        if text.startswith("poly:"):
            try:
                m = int(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad polynomial degree in {text!r}") from None
            if m < 1:
                raise ValueError("polynomial degree must be >= 1")
            return cls("polynomials", m)
        raise ValueError(f"unknown expansion {text!r}; use none, interactions or poly:m")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "max_degree": self.max_degree, "origin_policy": self.origin_policy}

    @classmethod
    def from_dict(cls, d: dict) -> "ExpansionSpec":
        return cls(d["kind"], int(d["max_degree"]), d.get("origin_policy", "raw_then_standardize"))


class HierarchyClass(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    NON = "non"


def _origin_params(X: np.ndarray) -> StandardizationParams:
    centers = X.mean(axis=0)
    scales = X.std(axis=0)
    scales = np.where(scales > 0, scales, 1.0)
    return StandardizationParams(centers, scales, (), X.shape[1])


def raw_features(X, spec: ExpansionSpec, origin: Optional[StandardizationParams] = None):
    """Build the unstandardized expanded matrix.

    Returns ``(raw, layout)`` where layout is a list of ``(group_id, index,
    [ColumnMeta, ...])`` in column order. Under ``standardize_then_multiply``
    the base columns are first standardized with ``origin``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if spec.origin_policy == "standardize_then_multiply":
        if origin is None:
            raise ValueError("origin parameters required for standardize_then_multiply")
        X = origin.apply(X)
    if spec.kind == "none":
        meta = [ColumnMeta("main", (j,)) for j in range(p)]
        return X.copy(), [("main", 1, meta)]
    if spec.kind == "interactions":
        pairs = [(j, l) for j in range(p) for l in range(j + 1, p)]
        prods = np.empty((n, len(pairs)))
        for c, (j, l) in enumerate(pairs):
            prods[:, c] = X[:, j] * X[:, l]
        layout = [
            ("main", 1, [ColumnMeta("main", (j,)) for j in range(p)]),
            ("interaction", 2, [ColumnMeta("interaction", pr) for pr in pairs]),
        ]
        return np.hstack([X, prods]), layout
    blocks, layout = [], []
    for d in range(1, spec.max_degree + 1):
        blocks.append(X**d)
        kind = "main" if d == 1 else "poly"
        layout.append((f"degree{d}", d, [ColumnMeta(kind, (j,), d) for j in range(p)]))
    return np.hstack(blocks), layout


def expand(dataset: Dataset, spec: ExpansionSpec) -> GroupedDesign:
    """Expand, standardize and group the columns of ``dataset``.

    Zero-variance expanded columns are dropped; group sizes count the
    retained columns only.
    """
    X = dataset.X
    origin = _origin_params(X) if spec.origin_policy == "standardize_then_multiply" else None
    raw, layout = raw_features(X, spec, origin)
    Z, params = standardize(raw)
    kept = params.kept
    new_pos = np.full(raw.shape[1], -1)
    new_pos[kept] = np.arange(kept.size)
    groups = []
    start = 0
    for group_id, index, cols in layout:
        raw_idx = range(start, start + len(cols))
        retained = tuple(int(new_pos[c]) for c in raw_idx if new_pos[c] >= 0)
        groups.append(Group(group_id, retained, index))
        start += len(cols)
    all_meta = [m for _, _, cols in layout for m in cols]
    meta = tuple(all_meta[c] for c in kept)
    return GroupedDesign(Z, tuple(groups), meta, params, dataset.feature_names, spec, origin)


def expand_interactions(dataset: Dataset, origin_policy: str = "raw_then_standardize") -> GroupedDesign:
    """Main effects (group 1) followed by all C(p, 2) pairwise products (group 2)."""
    return expand(dataset, ExpansionSpec("interactions", origin_policy=origin_policy))


def expand_polynomials(dataset: Dataset, m: int, origin_policy: str = "raw_then_standardize") -> GroupedDesign:
    """Powers 1..m of every feature; group k holds the degree-k terms."""
    if m < 1:
        raise ValueError("polynomial degree m must be >= 1")
    return expand(dataset, ExpansionSpec("polynomials", m, origin_policy))


def classify_interaction(pair: tuple[int, int], active_mains: Iterable[int]) -> HierarchyClass:
    j, l = pair
    if j == l:
        raise ValueError("an interaction needs two distinct features")
    active = set(active_mains)
    hits = (j in active) + (l in active)
    return (HierarchyClass.NON, HierarchyClass.WEAK, HierarchyClass.STRONG)[hits]


def count_admissible_interactions(p: int, s: int, hierarchy) -> int:
    """Number of pairwise interactions allowed under a hierarchy rule.

    ``weak`` counts every pair with at least one active parent, so it
    includes the strong pairs.
    """
    if not 0 <= s <= p:
        raise ValueError(f"need 0 <= s <= p, got s={s}, p={p}")
    h = HierarchyClass(hierarchy)
    if h is HierarchyClass.STRONG:
        return comb(s, 2)
    if h is HierarchyClass.WEAK:
        return comb(s, 2) + s * (p - s)
    return comb(p - s, 2)


def interaction_bins(p: int, active_mains: Iterable[int]) -> dict[HierarchyClass, list[tuple[int, int]]]:
    """Partition all pairs (j < l) into exclusive strong / weak-only / non bins."""
    active = set(active_mains)
    bins = {h: [] for h in HierarchyClass}
    for j in range(p):
        for l in range(j + 1, p):
            bins[classify_interaction((j, l), active)].append((j, l))
    return bins

