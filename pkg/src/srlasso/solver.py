"""Pathwise coordinate descent for the group-weighted lasso.

Gaussian fits minimize

    (1/2n) ||y - b - Z beta||^2 + lam * sum_j w_j |beta_j|

and binomial fits replace the squared loss with the mean negative
log-likelihood, solved by IRLS around the same weighted coordinate-descent
kernel. The intercept ``b`` is never penalized.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg.lapack import dposv
from scipy.special import expit

from srlasso._cd import cd_solve, cd_solve_cov
from srlasso.data import GroupedDesign
from srlasso.penalty import PenaltySpec

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-5
MAX_IRLS = 100
COVARIANCE_MAX_Q = 500


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    n_lambda: int = 100
    lambda_min_ratio: Optional[float] = None  # None: 1e-3 if q >= n else 1e-4
    tol: float = 1e-7
    max_iter: int = 10000
    active_set: bool = True
    mode: str = "auto"  # gaussian updates: naive | covariance | auto

    def __post_init__(self):
        if self.mode not in ("auto", "naive", "covariance"):
            raise ValueError("mode must be auto, naive or covariance")
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if self.lambda_min_ratio is not None and not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must be in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")

    def use_covariance(self, q: int) -> bool:
        return self.mode == "covariance" or (self.mode == "auto" and q <= COVARIANCE_MAX_Q)

    def min_ratio(self, n: int, q: int) -> float:
        if self.lambda_min_ratio is not None:
            return self.lambda_min_ratio
        return 1e-3 if q >= n else 1e-4

    def to_dict(self) -> dict:
        return {
            "n_lambda": self.n_lambda,
            "lambda_min_ratio": self.lambda_min_ratio,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "active_set": self.active_set,
            "mode": self.mode,
        }


@dataclass
class FitPath:
    """Solutions along a decreasing lambda grid, on the standardized scale.

    ``deviance`` is the residual sum of squares for gaussian fits and
    ``-2 * loglik`` for binomial fits.
    """

    lambdas: np.ndarray
    betas: np.ndarray  # (n_lambda, q)
    intercepts: np.ndarray
    deviance: np.ndarray
    df: np.ndarray
    n_iter: np.ndarray
    converged: np.ndarray
    family: str = "gaussian"
    n_obs: int = 0
    null_deviance: float = float("nan")
    saturated: Optional[np.ndarray] = None
    penalty: Optional[PenaltySpec] = None
    column_weights: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.lambdas.size

    def to_dict(self, design: Optional[GroupedDesign] = None) -> dict:
        nonzero = []
        for beta in self.betas:
            idx = np.flatnonzero(beta)
            nonzero.append([[int(j), float(beta[j])] for j in idx])
        out = {
            "family": self.family,
            "n_obs": self.n_obs,
            "q": int(self.betas.shape[1]),
            "lambdas": self.lambdas.tolist(),
            "intercepts": self.intercepts.tolist(),
            "deviance": self.deviance.tolist(),
            "null_deviance": self.null_deviance,
            "df": self.df.tolist(),
            "n_iter": self.n_iter.tolist(),
            "converged": self.converged.tolist(),
            "nonzero": nonzero,
        }
        if self.saturated is not None:
            out["saturated"] = self.saturated.tolist()
        if self.penalty is not None:
            out["penalty"] = self.penalty.to_dict(float(self.lambdas[-1]))
        if design is not None:
            out["standardization"] = design.params.to_dict()
            out["columns"] = design.column_names
            out["column_meta"] = [m.to_list() for m in design.column_meta]
            out["groups"] = [{"id": g.group_id, "index": g.index, "columns": list(g.columns)}
                             for g in design.groups]
            if design.expansion is not None:
                out["expansion"] = design.expansion.to_dict()
        return out

    def to_json(self, design: Optional[GroupedDesign] = None, **kwargs) -> str:
        return json.dumps(self.to_dict(design), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "FitPath":
        nl, q = len(d["lambdas"]), int(d["q"])
        betas = np.zeros((nl, q))
        for k, pairs in enumerate(d["nonzero"]):
            for j, val in pairs:
                betas[k, j] = val
        return cls(
            lambdas=np.asarray(d["lambdas"], dtype=float),
            betas=betas,
            intercepts=np.asarray(d["intercepts"], dtype=float),
            deviance=np.asarray(d["deviance"], dtype=float),
            df=np.asarray(d["df"], dtype=int),
            n_iter=np.asarray(d["n_iter"], dtype=int),
            converged=np.asarray(d["converged"], dtype=bool),
            family=d["family"],
            n_obs=int(d["n_obs"]),
            null_deviance=float(d["null_deviance"]),
            saturated=np.asarray(d["saturated"], dtype=bool) if "saturated" in d else None,
            penalty=PenaltySpec.from_dict(d["penalty"]) if "penalty" in d else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "FitPath":
        return cls.from_dict(json.loads(text))


def soft_threshold(z: float, t: float) -> float:
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return float(np.sign(z) * max(abs(z) - t, 0.0))


def _matrix(design) -> np.ndarray:
    return design.Z if isinstance(design, GroupedDesign) else np.asarray(design, dtype=float)


def _column_weights(design, penalty) -> np.ndarray:
    if isinstance(penalty, PenaltySpec):
        if not isinstance(design, GroupedDesign):
            raise SolverError("a PenaltySpec needs a GroupedDesign to map groups to columns")
        if penalty.weights.size != len(design.groups):
            raise SolverError("penalty has a different number of groups than the design")
        return penalty.column_weights(design.column_group)
    q = _matrix(design).shape[1]
    if penalty is None:
        return np.ones(q)
    w = np.asarray(penalty, dtype=float)
    if w.shape != (q,):
        raise SolverError(f"need {q} column weights, got shape {w.shape}")
    if not (w > 0).all():
        raise SolverError("column weights must be > 0")
    return w


def _check_y(y, n: int, family: str) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise SolverError(f"y has shape {y.shape}, design has {n} rows")
    if family not in ("gaussian", "binomial"):
        raise SolverError(f"unsupported family {family!r}")
    if family == "binomial" and not np.all((y == 0) | (y == 1)):
        raise SolverError("binomial response must be 0/1")
    return y


def _null_intercept(y: np.ndarray, family: str) -> float:
    ybar = y.mean()
    if family == "gaussian":
        return float(ybar)
    if ybar <= 0 or ybar >= 1:
        raise SolverError("binomial response has a single class")
    return float(np.log(ybar / (1 - ybar)))


def lambda_max(design, y, penalty=None, family: str = "gaussian") -> float:
    """Smallest lambda at which every penalized coefficient is zero.

    ``max_j |<z_j, y - ybar>| / (n w_j)`` over columns with finite weight;
    the null-model gradient has this form for both families.
    """
    Z = _matrix(design)
    n = Z.shape[0]
    y = _check_y(y, n, family)
    w = _column_weights(design, penalty)
    finite = np.isfinite(w)
    if not finite.any():
        raise SolverError("at least one group needs a finite weight")
    if family == "gaussian" and np.ptp(y) == 0:
        raise SolverError("response is constant")
    _null_intercept(y, family)
    grad = Z[:, finite].T @ (y - y.mean()) / n
    return float(np.max(np.abs(grad) / w[finite]))


def _binomial_deviance(y, eta) -> float:
    # -2 * sum(y*eta - log(1 + exp(eta)))
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def _deviance(y, eta, family) -> float:
    if family == "gaussian":
        r = y - eta
        return float(r @ r)
    return _binomial_deviance(y, eta)


def _irls(Zf, y, pen, beta, b, tol, max_iter, active_set):
    """Penalized IRLS for the binomial family, updating ``beta`` in place.

    Working weights use probabilities clamped to [1e-5, 1 - 1e-5]; the
    working response uses the exact probabilities, so a fixed point is an
    exact stationary point of the penalized likelihood. Steps that raise
    the objective are halved.
    """
    n = y.size
    empty = np.empty(0)

    def objective(beta_, b_):
        eta_ = b_ + Zf @ beta_
        return _binomial_deviance(y, eta_) / (2 * n) + float(np.sum(pen[beta_ != 0] * np.abs(beta_[beta_ != 0])))

    f_old = objective(beta, b)
    sweeps = 0
    for _ in range(MAX_IRLS):
        eta = b + Zf @ beta
        prob = expit(eta)
        pc = np.clip(prob, PROB_CLAMP, 1 - PROB_CLAMP)
        v = pc * (1 - pc)
        z = eta + (y - prob) / v
        h = (v @ (Zf * Zf)) / n
        beta_old, b_old = beta.copy(), b
        r = z - b - Zf @ beta
        b, used, ok = cd_solve(Zf, v, h, pen, beta, r, b, tol, max_iter, active_set, True, empty)
        sweeps += used
        f_new = objective(beta, b)
        halvings = 0
        while f_new > f_old + 1e-13 * max(1.0, abs(f_old)) and halvings < 30:
            beta[:] = 0.5 * (beta + beta_old)
            b = 0.5 * (b + b_old)
            f_new = objective(beta, b)
            halvings += 1
        step = max(float(np.max(np.abs(beta - beta_old) * np.sqrt(h), initial=0.0)),
                   abs(b - b_old) * np.sqrt(v.mean()))
        f_old = f_new
        if step < tol and ok:
            return b, sweeps, True
    return b, sweeps, False


class _Gram:
    """Centered cross-products of Z shared by the solves along one gaussian path."""

    def __init__(self, Zf, y, dense: bool):
        n = Zf.shape[0]
        self.n = n
        self.Zf = Zf
        self.means = Zf.mean(axis=0)
        self.ybar = float(y.mean())
        # <z_j - zbar_j, y - ybar> / n
        self.zy = Zf.T @ y / n - self.means * self.ybar
        self.C = np.ascontiguousarray(Zf.T @ Zf / n - np.outer(self.means, self.means)) if dense else None

    def block(self, idx):
        if self.C is not None:
            return self.C[idx][:, idx]
        Za = self.Zf[:, idx] - self.means[idx]
        return Za.T @ Za / self.n

    def intercept(self, beta) -> float:
        return self.ybar - float(self.means @ beta)


def _polish(gram, pen, beta, idx):
    """Feature-sign refinement of a support, in the manner of an orthant-wise Newton step.

    On the face where the support ``idx`` keeps its signs the objective is
    quadratic; step toward that face's minimizer, stopping where the first
    coefficient reaches zero, drop it, and repeat. Every step lowers the
    objective. The intercept is profiled out. Returns
    ``(beta_support, intercept, idx)`` for the final support, which may be
    smaller than the one passed in.
    """
    cur = beta[idx].copy()
    while idx.size:
        s = np.sign(cur)
        _, sol, info = dposv(gram.block(idx), gram.zy[idx] - pen[idx] * s, overwrite_a=True, overwrite_b=True)
        if info != 0 or not np.all(np.isfinite(sol)):
            return None
        crossing = np.sign(sol) != s
        if not crossing.any():
            return sol, gram.ybar - float(gram.means[idx] @ sol), idx
        d = sol - cur
        ratios = np.where(crossing, -cur / np.where(d == 0, 1.0, d), np.inf)
        cur = cur + float(np.min(ratios)) * d
        keep = np.sign(cur) == s
        keep[int(np.argmin(ratios))] = False
        cur = cur[keep]
        idx = idx[keep]
    return np.empty(0), gram.ybar, idx


def _solve_gaussian(Zf, y, h, pen, beta, state, config, gram, chunk=10):
    """Coordinate descent in bursts of ``chunk`` sweeps with support polishing in between.

    ``state`` is the residual vector (naive updates) or the gradient
    ``zy - C beta`` (covariance updates); both are updated in place. A
    polished candidate always replaces the iterate, since it has lower
    objective, and one full sweep decides whether it is converged.
    """
    empty = np.empty(0)
    cov = gram.C is not None

    def run(max_sweeps, active_set):
        if cov:
            return cd_solve_cov(gram.C, gram.zy, pen, beta, state, config.tol, max_sweeps, active_set, empty)
        b0 = gram.intercept(beta)
        _, k, ok = cd_solve(Zf, np.ones(Zf.shape[0]), h, pen, beta, state, b0, config.tol, max_sweeps,
                            active_set, True, empty)
        return k, ok

    used = 0
    while used < config.max_iter:
        k, ok = run(min(chunk, config.max_iter - used), config.active_set)
        used += k
        if ok:
            return used, True
        idx = np.flatnonzero(beta)
        if used >= config.max_iter or idx.size == 0 or idx.size >= Zf.shape[0]:
            continue
        polished = _polish(gram, pen, beta, idx)
        if polished is None:
            continue
        vals, _, idx = polished
        beta[:] = 0.0
        beta[idx] = vals
        if cov:
            state[:] = gram.zy - gram.C[:, idx] @ vals
        else:
            state[:] = y - gram.intercept(beta) - Zf[:, idx] @ vals
        k, ok = run(1, False)
        used += k
        if ok:
            return used, True
    return used, False


def fit_path(design, y, penalty=None, family: str = "gaussian", config: Optional[SolverConfig] = None,
             lambdas=None) -> FitPath:
    """Solve along a log-spaced lambda grid from ``lambda_max`` down, with warm starts.

    ``penalty`` is a PenaltySpec (requires a GroupedDesign) or a vector of
    per-column weights; ``lambdas`` overrides the default grid.
    Non-convergence at a grid point is recorded in ``converged``; the path
    continues from the last iterate.
    """
    config = config or SolverConfig()
    Z = _matrix(design)
    n, q = Z.shape
    y = _check_y(y, n, family)
    w = _column_weights(design, penalty)
    b_null = _null_intercept(y, family)
    lmax = lambda_max(design, y, w, family)
    default_grid = lambdas is None
    if default_grid:
        ratio = config.min_ratio(n, q)
        lambdas = lmax * np.logspace(0.0, np.log10(ratio), config.n_lambda) if config.n_lambda > 1 else np.array([lmax])
    else:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.ndim != 1 or lambdas.size == 0 or not (lambdas > 0).all():
            raise SolverError("lambdas must be a non-empty vector of positive values")
        if (np.diff(lambdas) >= 0).any():
            raise SolverError("lambdas must be strictly decreasing")
    nl = lambdas.size

    Zf = np.asfortranarray(Z)
    betas = np.zeros((nl, q))
    intercepts = np.empty(nl)
    dev = np.empty(nl)
    n_iter = np.zeros(nl, dtype=int)
    converged = np.ones(nl, dtype=bool)
    saturated = np.zeros(nl, dtype=bool) if family == "binomial" else None

    beta = np.zeros(q)
    b = b_null
    h = (Zf * Zf).sum(axis=0) / n
    if family == "gaussian":
        gram = _Gram(Zf, y, dense=config.use_covariance(q))
        state = gram.zy.copy() if gram.C is not None else y - b
    for k, lam in enumerate(lambdas):
        pen = lam * w
        if k == 0 and default_grid:
            pass  # null model is exact at lambda_max
        elif family == "gaussian":
            used, ok = _solve_gaussian(Zf, y, h, pen, beta, state, config, gram)
            b = gram.intercept(beta)
            n_iter[k], converged[k] = used, ok
        else:
            b, used, ok = _irls(Zf, y, pen, beta, b, config.tol, config.max_iter, config.active_set)
            n_iter[k], converged[k] = used, ok
        if not converged[k]:
            log.warning("no convergence at lambda[%d]=%.4g after %d sweeps", k, lam, n_iter[k])
        betas[k] = beta
        intercepts[k] = b
        eta = b + Zf @ beta
        dev[k] = _deviance(y, eta, family)
        if family == "binomial":
            prob = expit(eta)
            saturated[k] = bool(np.any((prob < PROB_CLAMP) | (prob > 1 - PROB_CLAMP)))

    null_dev = _deviance(y, np.full(n, b_null), family)
    pen_spec = penalty if isinstance(penalty, PenaltySpec) else None
    return FitPath(
        lambdas=lambdas,
        betas=betas,
        intercepts=intercepts,
        deviance=dev,
        df=(betas != 0).sum(axis=1),
        n_iter=n_iter,
        converged=converged,
        family=family,
        n_obs=n,
        null_deviance=null_dev,
        saturated=saturated,
        penalty=pen_spec,
        column_weights=w,
    )


def solve_trace(design, y, penalty, lam: float, config: Optional[SolverConfig] = None) -> np.ndarray:
    """Gaussian objective after every sweep of a cold-started solve at ``lam``.

    Values are exact objectives for naive updates and objectives up to an
    additive constant for covariance updates.
    """
    config = config or SolverConfig()
    Zf = np.asfortranarray(_matrix(design))
    n, q = Zf.shape
    y = _check_y(y, n, "gaussian")
    pen = lam * _column_weights(design, penalty)
    beta = np.zeros(q)
    trace = np.full(config.max_iter, np.nan)
    if config.use_covariance(q):
        gram = _Gram(Zf, y, dense=True)
        used, _ = cd_solve_cov(gram.C, gram.zy, pen, beta, gram.zy.copy(), config.tol, config.max_iter,
                               config.active_set, trace)
    else:
        h = (Zf * Zf).sum(axis=0) / n
        b = float(y.mean())
        _, used, _ = cd_solve(Zf, np.ones(n), h, pen, beta, y - b, b, config.tol, config.max_iter,
                              config.active_set, True, trace)
    return trace[:used]


class Violation(NamedTuple):
    index: int  # -1 is the intercept
    magnitude: float


def kkt_violations(fit: FitPath, design, y, penalty=None, lambda_index: int = 0,
                   eps: float = 1e-6) -> list[Violation]:
    """Check the subgradient optimality conditions at one grid point.

    With gradient ``g_j = <z_j, r>/n`` (``r`` the residual, or ``y - p`` for
    binomial), an active coefficient needs ``|g_j - lam w_j sign(beta_j)| <= eps``
    and an inactive one ``|g_j| <= lam w_j + eps``. The intercept needs
    ``|mean(r)| <= eps``. Returns the offending conditions.
    """
    Z = _matrix(design)
    y = np.asarray(y, dtype=float)
    if penalty is None and fit.column_weights is not None:
        w = fit.column_weights
    else:
        w = _column_weights(design, penalty)
    lam = fit.lambdas[lambda_index]
    beta = fit.betas[lambda_index]
    eta = fit.intercepts[lambda_index] + Z @ beta
    resid = y - eta if fit.family == "gaussian" else y - expit(eta)
    g = Z.T @ resid / Z.shape[0]
    out = []
    m0 = abs(resid.mean())
    if m0 > eps:
        out.append(Violation(-1, float(m0)))
    for j in range(Z.shape[1]):
        if not np.isfinite(w[j]):
            if beta[j] != 0:
                out.append(Violation(j, float("inf")))
            continue
        if beta[j] != 0:
            gap = abs(g[j] - lam * w[j] * np.sign(beta[j]))
        else:
            gap = abs(g[j]) - lam * w[j]
        if gap > eps:
            out.append(Violation(j, float(gap)))
    return out


def linear_predictor(fit: FitPath, lambda_index: int, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] != fit.betas.shape[1]:
        raise SolverError(f"expected {fit.betas.shape[1]} columns, got {Z.shape[1]}")
    return fit.intercepts[lambda_index] + Z @ fit.betas[lambda_index]


def predict(fit: FitPath, lambda_index: int, X_new, design: GroupedDesign) -> np.ndarray:
    """Predictions for new raw rows; the design replays expansion and scaling.

    Gaussian fits return the linear predictor, binomial fits probabilities.
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None]
    n_features = len(design.feature_names) if design.feature_names else None
    if n_features is not None and X_new.shape[1] != n_features:
        raise SolverError(f"expected {n_features} raw columns, got {X_new.shape[1]}")
    eta = linear_predictor(fit, lambda_index, design.transform(X_new))
    return eta if fit.family == "gaussian" else expit(eta)
