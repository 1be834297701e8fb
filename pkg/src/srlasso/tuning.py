"""Cross-validation and information-criterion selection of (gamma, lambda)."""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from srlasso.data import Dataset
from srlasso.expand import ExpansionSpec, expand
from srlasso.penalty import make_penalty
from srlasso.solver import FitPath, SolverConfig, fit_path, linear_predictor

log = logging.getLogger(__name__)


def make_folds(n: int, k: int, repeats: int = 1, seed=0) -> np.ndarray:
    """Fold labels, shape ``(repeats, n)``; each row is a random near-equal split into k folds."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    folds = np.empty((repeats, n), dtype=int)
    base = np.arange(n) % k
    for r in range(repeats):
        folds[r, rng.permutation(n)] = base
    return folds


def heldout_loss(y, eta, family: str) -> np.ndarray:
    """Per-observation loss: squared error (gaussian) or deviance contribution (binomial)."""
    if family == "gaussian":
        return (y - eta) ** 2
    return 2.0 * (np.logaddexp(0.0, eta) - y * eta)


@dataclass
class CvResult:
    gammas: list[float]
    lambdas: list[np.ndarray]  # grid per gamma, from the full-data fit
    cv_loss: list[np.ndarray]  # mean held-out loss per lambda, per gamma
    cv_se: list[np.ndarray]
    fold_loss: list[np.ndarray]  # (repeats * k, n_lambda) per gamma, NaN where skipped
    folds: np.ndarray
    chosen: tuple[int, int]  # (gamma index, lambda index) under the min rule
    seed: object = None
    rule: str = "min"
    fits: list[FitPath] = field(default_factory=list, repr=False)
    designs: list = field(default_factory=list, repr=False)

    @property
    def grid(self) -> list[tuple[float, float]]:
        return [(g, float(lam)) for g, lams in zip(self.gammas, self.lambdas) for lam in lams]

    @property
    def chosen_pair(self) -> tuple[float, float]:
        gi, li = self.chosen
        return self.gammas[gi], float(self.lambdas[gi][li])

    def to_dict(self) -> dict:
        gi, li = self.chosen
        return {
            "gammas": self.gammas,
            "lambdas": [l.tolist() for l in self.lambdas],
            "cv_loss": [_nan_to_none(l) for l in self.cv_loss],
            "cv_se": [_nan_to_none(s) for s in self.cv_se],
            "chosen": {"gamma": self.gammas[gi], "lambda": float(self.lambdas[gi][li]),
                       "gamma_index": gi, "lambda_index": li, "rule": self.rule},
            "seed": self.seed if isinstance(self.seed, (int, type(None))) else str(self.seed),
            "folds": self.folds.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def surface_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "lambda_index", "lambda", "cv_loss", "cv_se"])
        for g, lams, loss, se in zip(self.gammas, self.lambdas, self.cv_loss, self.cv_se):
            for i, lam in enumerate(lams):
                w.writerow([repr(g), i, repr(float(lam)), repr(float(loss[i])), repr(float(se[i]))])
        return buf.getvalue()


def _nan_to_none(a) -> list:
    return [None if not np.isfinite(v) else float(v) for v in a]


def _fold_losses(dataset: Dataset, expansion: ExpansionSpec, scheme: str, gamma: float, lambdas,
                 folds: np.ndarray, family: str, config, excluded) -> tuple[np.ndarray, np.ndarray]:
    """Held-out loss per (fold, lambda) and the held-out size of each fold.

    Expansion and standardization are refit on the training rows of every
    fold; unconverged grid points contribute NaN.
    """
    repeats, n = folds.shape
    k = folds.max() + 1
    losses = np.full((repeats * k, lambdas.size), np.nan)
    sizes = np.zeros(repeats * k, dtype=int)
    for r in range(repeats):
        for f in range(k):
            row = r * k + f
            test = folds[r] == f
            train = dataset.subset(np.flatnonzero(~test))
            sizes[row] = test.sum()
            if family == "gaussian" and np.ptp(train.y) == 0:
                warnings.warn(f"fold {f} of repeat {r}: constant training response, fold dropped")
                continue
            if family == "binomial" and train.y.min() == train.y.max():
                warnings.warn(f"fold {f} of repeat {r}: single-class training response, fold dropped")
                continue
            design = expand(train, expansion)
            penalty = make_penalty(design, scheme, gamma, excluded=excluded)
            fit = fit_path(design, train.y, penalty, family, config, lambdas=lambdas)
            Zt = design.transform(dataset.X[test])
            yt = dataset.y[test]
            for li in range(lambdas.size):
                if fit.converged[li]:
                    losses[row, li] = heldout_loss(yt, linear_predictor(fit, li, Zt), family).mean()
    return losses, sizes


def cross_validate(dataset: Dataset, expansion: Optional[ExpansionSpec] = None, scheme: str = "srl",
                   gamma_grid: Sequence[float] = (0.5,), k: int = 10, repeats: int = 1, seed=0,
                   family: Optional[str] = None, config: Optional[SolverConfig] = None,
                   excluded: Sequence[str] = (), folds: Optional[np.ndarray] = None) -> CvResult:
    """Repeated k-fold CV over a (gamma, lambda) grid.

    The lambda grid for each gamma comes from the full-data fit and is
    shared by all folds. The chosen pair minimizes the mean held-out loss
    (squared error for gaussian, deviance for binomial).
    """
    gamma_grid = [float(g) for g in gamma_grid]
    if not gamma_grid:
        raise ValueError("gamma_grid must not be empty")
    expansion = expansion or ExpansionSpec()
    family = family or dataset.family
    if folds is None:
        folds = make_folds(dataset.n, k, repeats, seed)
    fits, designs, lambdas, loss, se, fold_loss = [], [], [], [], [], []
    design = expand(dataset, expansion)
    for gamma in gamma_grid:
        penalty = make_penalty(design, scheme, gamma if scheme != "lasso" else 0.0, excluded=excluded)
        fit = fit_path(design, dataset.y, penalty, family, config)
        fl, sizes = _fold_losses(dataset, expansion, scheme, gamma if scheme != "lasso" else 0.0,
                                 fit.lambdas, folds, family, config, excluded)
        valid = np.isfinite(fl)
        wts = np.where(valid, sizes[:, None], 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(valid, fl, 0.0).T @ sizes / wts.sum(axis=0)
            cnt = valid.sum(axis=0)
            sd = np.array([np.std(fl[valid[:, j], j], ddof=1) if cnt[j] > 1 else np.nan
                           for j in range(fl.shape[1])])
            se_g = sd / np.sqrt(cnt)
        fits.append(fit)
        designs.append(design)
        lambdas.append(fit.lambdas)
        loss.append(mean)
        se.append(se_g)
        fold_loss.append(fl)
    chosen = _argmin_grid(loss)
    return CvResult(gamma_grid, lambdas, loss, se, fold_loss, folds, chosen,
                    seed if isinstance(seed, (int, type(None))) else None, "min", fits, designs)


def _argmin_grid(values: list[np.ndarray]) -> tuple[int, int]:
    best, where = np.inf, None
    for gi, v in enumerate(values):
        if np.all(~np.isfinite(v)):
            continue
        li = int(np.nanargmin(v))
        if v[li] < best:
            best, where = v[li], (gi, li)
    if where is None:
        raise ValueError("no finite loss on the grid")
    return where


def select_rule(cv: CvResult, rule: str = "min") -> tuple[float, float]:
    """Pick (gamma, lambda) from a CV result.

    ``min`` takes the global minimizer. ``one_se`` keeps the min-rule gamma
    and takes the largest lambda whose loss is within one SE of the minimum.
    """
    gi, li = select_indices(cv, rule)
    return cv.gammas[gi], float(cv.lambdas[gi][li])


def select_indices(cv: CvResult, rule: str) -> tuple[int, int]:
    gi, li = _argmin_grid(cv.cv_loss)
    if rule == "min":
        return gi, li
    if rule != "one_se":
        raise ValueError(f"unknown rule {rule!r}")
    loss, se = cv.cv_loss[gi], cv.cv_se[gi]
    bound = loss[li] + (se[li] if np.isfinite(se[li]) else 0.0)
    ok = np.flatnonzero(np.isfinite(loss) & (loss <= bound))
    return gi, int(ok.min())


@dataclass
class IcResult:
    criterion: str
    values: list[np.ndarray]  # per gamma, per lambda; NaN where unconverged
    chosen: tuple[int, int]  # (gamma index, lambda index)
    gammas: list[float] = field(default_factory=lambda: [0.0])
    fits: list[FitPath] = field(default_factory=list, repr=False)
    designs: list = field(default_factory=list, repr=False)

    @property
    def chosen_index(self) -> int:
        return self.chosen[1]

    def to_dict(self) -> dict:
        gi, li = self.chosen
        return {
            "criterion": self.criterion,
            "gammas": self.gammas,
            "values": [_nan_to_none(v) for v in self.values],
            "chosen": {"gamma": self.gammas[gi], "gamma_index": gi, "lambda_index": li},
        }


def _ic_values(fit: FitPath, n: int, criterion: str) -> np.ndarray:
    if criterion not in ("BIC", "AIC"):
        raise ValueError("criterion must be BIC or AIC")
    mult = np.log(n) if criterion == "BIC" else 2.0
    if fit.family == "gaussian":
        with np.errstate(divide="ignore"):
            dev = n * np.log(fit.deviance / n)
    else:
        dev = fit.deviance
    vals = dev + mult * fit.df
    return np.where(fit.converged, vals, np.nan)


def information_criterion(fit: FitPath, n: Optional[int] = None, criterion: str = "BIC") -> IcResult:
    """BIC = deviance + log(n) df, AIC = deviance + 2 df along a path.

    The gaussian deviance here is ``n log(RSS / n)``; df counts nonzero
    coefficients, not the intercept.
    """
    criterion = criterion.upper()
    n = n or fit.n_obs
    vals = _ic_values(fit, n, criterion)
    if not np.isfinite(vals).any():
        raise ValueError("no converged grid point to score")
    return IcResult(criterion, [vals], (0, int(np.nanargmin(vals))), [0.0], [fit])


def tune_information_criterion(dataset: Dataset, expansion: Optional[ExpansionSpec] = None,
                               scheme: str = "srl", gamma_grid: Sequence[float] = (0.5,),
                               criterion: str = "BIC", family: Optional[str] = None,
                               config: Optional[SolverConfig] = None,
                               excluded: Sequence[str] = ()) -> IcResult:
    """Fit one path per gamma and pick the (gamma, lambda) minimizing the criterion."""
    criterion = criterion.upper()
    expansion = expansion or ExpansionSpec()
    family = family or dataset.family
    fits, designs, values = [], [], []
    design = expand(dataset, expansion)
    for gamma in gamma_grid:
        penalty = make_penalty(design, scheme, gamma if scheme != "lasso" else 0.0, excluded=excluded)
        fit = fit_path(design, dataset.y, penalty, family, config)
        fits.append(fit)
        designs.append(design)
        values.append(_ic_values(fit, dataset.n, criterion))
    return IcResult(criterion, values, _argmin_grid(values), [float(g) for g in gamma_grid], fits, designs)
