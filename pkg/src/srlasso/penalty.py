"""Group penalty weights for the lasso, SRL and cumulative SRL schemes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SCHEMES = ("lasso", "srl", "cumulative", "custom")


def _sizes(group_sizes: Sequence[int]) -> np.ndarray:
    sizes = np.asarray(group_sizes, dtype=float)
    if sizes.ndim != 1 or sizes.size == 0:
        raise ValueError("group_sizes must be a non-empty list")
    return sizes


def _check_gamma(gamma: float) -> None:
    if not gamma >= 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")


def srl_weights(group_sizes: Sequence[int], gamma: float) -> np.ndarray:
    """w_k = p_k ** gamma; gamma=0 is the plain lasso, 0.5 equalizes prior information."""
    sizes = _sizes(group_sizes)
    _check_gamma(gamma)
    if (sizes < 1).any():
        raise ValueError("every group needs at least one column")
    return sizes**gamma


def cumulative_weights(group_sizes: Sequence[int], gamma: float) -> np.ndarray:
    """w_k = (p_1 + ... + p_k) ** gamma for groups listed in rank order."""
    sizes = _sizes(group_sizes)
    _check_gamma(gamma)
    if (sizes < 0).any():
        raise ValueError("group sizes must be non-negative")
    total = np.cumsum(sizes)
    if (total <= 0).any():
        raise ValueError("the first group must be non-empty")
    return total**gamma


def scheme_weights(scheme: str, group_sizes: Sequence[int], gamma: float = 0.0, custom=None) -> np.ndarray:
    if scheme == "lasso":
        return np.ones(len(group_sizes))
    if scheme == "srl":
        return srl_weights(group_sizes, gamma)
    if scheme == "cumulative":
        return cumulative_weights(group_sizes, gamma)
    if scheme == "custom":
        w = np.asarray(custom, dtype=float)
        if w.shape != (len(group_sizes),):
            raise ValueError("custom weights need one value per group")
        return w.copy()
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def prior_information(group_sizes: Sequence[int], gamma: float, lam: float, scheme: str = "srl",
                      custom=None) -> np.ndarray:
    """Fisher information about lambda carried by each group's Laplace prior.

    A group of p_k coefficients with rate lam * w_k carries
    p_k / (lam * w_k)**2; for the srl scheme that is p_k**(1 - 2 gamma) / lam**2,
    which is evaluated in that form so gamma=0.5 gives exactly 1 / lam**2.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    sizes = _sizes(group_sizes)
    if scheme == "srl":
        _check_gamma(gamma)
        return sizes ** (1.0 - 2.0 * gamma) / lam**2
    w = scheme_weights(scheme, group_sizes, gamma, custom)
    return sizes / (lam * w) ** 2


@dataclass(frozen=True)
class PenaltySpec:
    scheme: str
    gamma: float
    weights: np.ndarray
    group_sizes: tuple[int, ...] = ()
    group_ids: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not (w > 0).all():
            raise ValueError("penalty weights must be > 0")
        if self.scheme == "lasso" and not (w[np.isfinite(w)] == 1).all():
            raise ValueError("finite lasso weights must all be 1")
        if self.group_sizes and len(self.group_sizes) != w.size:
            raise ValueError("one weight per group required")
        object.__setattr__(self, "weights", w)

    def column_weights(self, column_group: np.ndarray) -> np.ndarray:
        return self.weights[np.asarray(column_group)]

    def information(self, lam: float) -> np.ndarray:
        sizes = np.asarray(self.group_sizes, dtype=float)
        with np.errstate(divide="ignore"):
            if self.scheme == "srl":
                return np.where(sizes > 0, np.maximum(sizes, 1.0) ** (1.0 - 2.0 * self.gamma), 0.0) / lam**2
            return sizes / (lam * self.weights) ** 2

    def to_dict(self, lam: Optional[float] = None) -> dict:
        """JSON-ready echo; adds per-group information when ``lam`` is given."""
        info = self.information(lam) if lam is not None and lam > 0 else None
        groups = []
        for k, w in enumerate(self.weights):
            entry = {
                "id": self.group_ids[k] if self.group_ids else f"g{k + 1}",
                "size": int(self.group_sizes[k]) if self.group_sizes else None,
                "w": float(w) if np.isfinite(w) else "inf",
            }
            if info is not None:
                entry["I"] = float(info[k])
            groups.append(entry)
        return {"scheme": self.scheme, "gamma": self.gamma, "groups": groups}

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltySpec":
        gs = d["groups"]
        return cls(
            d["scheme"],
            float(d["gamma"]),
            np.array([float(g["w"]) for g in gs]),
            tuple(int(g["size"]) for g in gs if g["size"] is not None),
            tuple(g["id"] for g in gs),
        )


def make_penalty(design, scheme: str = "srl", gamma: Optional[float] = None, custom=None,
                 excluded: Sequence[str] = ()) -> PenaltySpec:
    """Penalty spec for a GroupedDesign.

    Groups named in ``excluded`` get an infinite weight, which pins their
    coefficients at zero. Empty groups get weight 1 (they own no columns).
    """
    if gamma is None:
        gamma = 0.5 if scheme in ("srl", "cumulative") else 0.0
    if scheme == "lasso" and gamma != 0:
        raise ValueError("gamma is not used by the lasso scheme")
    sizes = design.group_sizes
    ids = tuple(g.group_id for g in design.groups)
    order = np.argsort([g.index for g in design.groups], kind="stable")
    ranked = [sizes[i] for i in order]
    if scheme == "srl":
        w_ranked = np.ones(len(ranked))
        nonempty = np.asarray(ranked) > 0
        if nonempty.any():
            w_ranked[nonempty] = srl_weights(np.asarray(ranked)[nonempty], gamma)
    elif scheme == "cumulative":
        w_ranked = cumulative_weights(ranked, gamma)
    else:
        w_ranked = scheme_weights(scheme, ranked, gamma, None if custom is None else np.asarray(custom)[order])
    w = np.empty(len(sizes))
    w[order] = w_ranked
    for gid in excluded:
        if gid not in ids:
            raise ValueError(f"unknown group {gid!r}")
        w[ids.index(gid)] = np.inf
    return PenaltySpec(scheme, float(gamma), w, tuple(int(s) for s in sizes), ids)
