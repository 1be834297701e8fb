"""Synthetic polynomial and interaction experiments, and their scoring."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from math import comb, sqrt
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from srlasso.data import ColumnMeta, Dataset
from srlasso.expand import ExpansionSpec, HierarchyClass, classify_interaction, expand, interaction_bins
from srlasso.solver import SolverConfig, linear_predictor
from srlasso.tuning import cross_validate, make_folds, tune_information_criterion

SCHEMA_VERSION = 1
INTER_SCALE = 10.0 * sqrt(12.0 / 7.0)
FRAMEWORKS = ("LS0", "APL", "SRL")
POLY_FRAMEWORKS = ("oracle", "ols", "lasso", "srl")
POLY_TRUTHS = ("quadratic_fixed", "random_order_10", "random_quadratic", "linear", "null")


# ---------------------------------------------------------------- generators

def gen_beta_main(s: int, rng: np.random.Generator) -> np.ndarray:
    """s normal draws rescaled so their absolute values sum to 10."""
    if s < 1:
        raise ValueError("s must be >= 1")
    theta = rng.standard_normal(s)
    return 10.0 * theta / np.abs(theta).sum()


def gen_beta_inter(b: int, rng: np.random.Generator) -> np.ndarray:
    """b normal draws rescaled so their absolute values sum to 10 * sqrt(12/7).

    The factor matches the sd of a U(0,1) variable to that of a product of
    two independent ones.
    """
    if b == 0:
        return np.empty(0)
    phi = rng.standard_normal(b)
    return INTER_SCALE * phi / np.abs(phi).sum()


def sample_active_interactions(p: int, active_mains: Iterable[int], b: int,
                               probs: Sequence[float] = (0.7, 0.2, 0.1),
                               rng: Optional[np.random.Generator] = None) -> list[tuple[int, int]]:
    """Draw b distinct pairs, each from a strong / weak / non-hierarchical bin.

    A bin is chosen with ``probs`` (renormalized over bins that still have
    pairs left), then a pair is taken uniformly from it without replacement.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if b > comb(p, 2):
        raise ValueError(f"b={b} exceeds the {comb(p, 2)} available pairs")
    if len(probs) != 3 or abs(sum(probs) - 1) > 1e-12:
        raise ValueError("probs must be three probabilities summing to 1")
    bins = interaction_bins(p, active_mains)
    pools = [list(bins[h]) for h in (HierarchyClass.STRONG, HierarchyClass.WEAK, HierarchyClass.NON)]
    base = np.asarray(probs, dtype=float)
    chosen = []
    for _ in range(b):
        avail = np.array([len(pool) > 0 for pool in pools])
        pr = np.where(avail, base, 0.0)
        pr = pr / pr.sum()
        k = int(rng.choice(3, p=pr))
        chosen.append(pools[k].pop(int(rng.integers(len(pools[k])))))
    return chosen


@dataclass(frozen=True)
class InterSimConfig:
    n: int = 300
    p: int = 20
    s: int = 5
    b: int = 0
    hierarchy_probs: tuple[float, float, float] = (0.7, 0.2, 0.1)
    replicates: int = 200
    n_test: int = 10000
    seed: int = 0
    noise_sd: float = 1.0
    k_folds: int = 10
    gamma: float = 0.5

    def __post_init__(self):
        if not 0 <= self.b <= comb(self.p, 2):
            raise ValueError(f"b must be in [0, C(p,2)], got {self.b}")
        if not 1 <= self.s <= self.p:
            raise ValueError("need 1 <= s <= p")
        if abs(sum(self.hierarchy_probs) - 1) > 1e-12:
            raise ValueError("hierarchy_probs must sum to 1")
        object.__setattr__(self, "hierarchy_probs", tuple(float(x) for x in self.hierarchy_probs))


@dataclass
class InteractionTruth:
    active_mains: list[int]
    beta_main: np.ndarray  # length p
    pairs: list[tuple[int, int]]
    beta_inter: np.ndarray  # aligned with pairs
    classes: list[str]

    def mean(self, X: np.ndarray) -> np.ndarray:
        mu = X @ self.beta_main
        for (j, l), c in zip(self.pairs, self.beta_inter):
            mu = mu + c * X[:, j] * X[:, l]
        return mu

    def column_set(self, column_meta: Sequence[ColumnMeta]) -> set[int]:
        """Indices of the true nonzero terms in an expanded design."""
        wanted = {("main", (j,)) for j in self.active_mains}
        wanted |= {("interaction", pr) for pr in self.pairs}
        return {c for c, m in enumerate(column_meta) if (m.kind, m.features) in wanted}


def gen_interaction_data(config: InterSimConfig, rng: np.random.Generator):
    """Uniform features, sparse main and pairwise effects, gaussian noise.

    Returns ``(train, test, truth)``; the test set has ``config.n_test`` rows.
    """
    p, s = config.p, config.s
    active = sorted(int(j) for j in rng.choice(p, size=s, replace=False))
    beta_main = np.zeros(p)
    beta_main[active] = gen_beta_main(s, rng)
    beta_inter = gen_beta_inter(config.b, rng)
    pairs = sample_active_interactions(p, active, config.b, config.hierarchy_probs, rng)
    classes = [classify_interaction(pr, active).value for pr in pairs]
    truth = InteractionTruth(active, beta_main, pairs, beta_inter, classes)
    X = rng.uniform(size=(config.n, p))
    y = truth.mean(X) + config.noise_sd * rng.standard_normal(config.n)
    Xt = rng.uniform(size=(config.n_test, p))
    yt = truth.mean(Xt) + config.noise_sd * rng.standard_normal(config.n_test)
    return Dataset(y, X, None), Dataset(yt, Xt, None), truth


@dataclass(frozen=True)
class PolySimConfig:
    n: int = 100
    noise_sd: Optional[float] = None  # None: 0.9 for quadratic_fixed, else 1
    truth: str = "quadratic_fixed"
    orders: tuple[int, ...] = (2, 4, 6)
    replicates: int = 200
    eval_points: int = 50
    seed: int = 0
    tuning: str = "bic"  # bic | cv
    gamma_grid: Optional[tuple[float, ...]] = None  # None: (0.5, 1, 2) for bic, (0, 0.5, 1) for cv
    k_folds: int = 10
    cv_repeats: int = 5

    def __post_init__(self):
        if self.truth not in POLY_TRUTHS:
            raise ValueError(f"truth must be one of {POLY_TRUTHS}")
        if self.tuning not in ("bic", "cv"):
            raise ValueError("tuning must be bic or cv")
        orders = tuple(int(m) for m in self.orders)
        if not orders or min(orders) < 1:
            raise ValueError("orders must be positive")
        fixed_order = {"quadratic_fixed": 2, "linear": 1, "null": 0}.get(self.truth)
        if fixed_order is not None and min(orders) < fixed_order:
            raise ValueError(f"fitted order must be >= {fixed_order} for truth {self.truth}")
        object.__setattr__(self, "orders", orders)
        if self.gamma_grid is not None:
            object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))

    @property
    def sd(self) -> float:
        if self.noise_sd is not None:
            return self.noise_sd
        return 0.9 if self.truth == "quadratic_fixed" else 1.0

    @property
    def gammas(self) -> tuple[float, ...]:
        if self.gamma_grid is not None:
            return self.gamma_grid
        return (0.5, 1.0, 2.0) if self.tuning == "bic" else (0.0, 0.5, 1.0)


@dataclass
class PolyTruth:
    coefs: np.ndarray  # intercept then degrees 1..len-1

    def __call__(self, x) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coefs)

    @property
    def degrees(self) -> list[int]:
        return [d for d in range(1, self.coefs.size) if self.coefs[d] != 0]


def gen_poly_data(config: PolySimConfig, rng: np.random.Generator):
    """One covariate x ~ U(0,1) and y = f(x) + noise; returns ``(train, truth)``."""
    coefs = np.zeros(11)
    if config.truth == "quadratic_fixed":
        coefs[:3] = (2.5, -10.0, 10.0)  # 10 (x - 0.5)^2
    elif config.truth == "random_order_10":
        coefs[1:] = gen_beta_main(10, rng)
    elif config.truth == "random_quadratic":
        coefs[1:3] = gen_beta_main(2, rng)
    elif config.truth == "linear":
        coefs[1] = 10.0
    truth = PolyTruth(np.trim_zeros(coefs, "b") if coefs.any() else coefs[:1])
    x = rng.uniform(size=config.n)
    y = truth(x) + config.sd * rng.standard_normal(config.n)
    return Dataset(y, x[:, None], ("x",)), truth


# ---------------------------------------------------------------- scoring

def evaluate_selection(selected: Iterable[int], truth: Iterable[int],
                       column_meta: Sequence[ColumnMeta]) -> dict:
    """FDR, Type I (false positive) and Type II (false negative) counts.

    Computed over all columns, main-effect columns and interaction columns;
    FDR is 0 when nothing is selected.
    """
    selected, truth = set(selected), set(truth)
    is_inter = np.array([m.kind != "main" for m in column_meta], dtype=bool)
    out = {}
    for label, keep in (("overall", lambda c: True), ("main", lambda c: not is_inter[c]),
                        ("inter", lambda c: bool(is_inter[c]))):
        sel = {c for c in selected if keep(c)}
        tru = {c for c in truth if keep(c)}
        fp = len(sel - tru)
        fn = len(tru - sel)
        out[f"fdr_{label}"] = fp / max(len(sel), 1)
        out[f"type1_{label}"] = fp
        out[f"type2_{label}"] = fn
        out[f"n_selected_{label}"] = len(sel)
    return out


def rmse_estimation(fitted: Callable, truth: Callable, n_points: int = 50) -> float:
    """Root mean squared gap between the true and fitted mean on an even grid of [0, 1]."""
    grid = np.linspace(0.0, 1.0, n_points)
    return float(np.sqrt(np.mean((truth(grid) - fitted(grid)) ** 2)))


# ---------------------------------------------------------------- experiments

@dataclass
class SimResult:
    """Long table of one row per replicate and framework.

    ``seconds`` holds per-row wall time; it is kept out of the CSV so that
    reruns produce identical files.
    """

    kind: str
    rows: list[dict]
    config: dict = field(default_factory=dict)
    seconds: list[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")

    def summary(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "experiment": self.kind, "config": self.config,
                "summary": [{k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                             for k, v in rec.items()}
                            for rec in summarize(self.to_frame()).to_dict(orient="records")]}


def _replicate_seed(seed: int, setting: int, rep: int) -> np.random.SeedSequence:
    # one independent stream per (setting, replicate); child 0 drives data, child 1 folds
    return np.random.SeedSequence(entropy=seed, spawn_key=(setting, rep))


def _framework_penalty(name: str, gamma: float):
    if name == "LS0":
        return "lasso", 0.0, ("interaction",)
    if name == "APL":
        return "lasso", 0.0, ()
    if name == "SRL":
        return "srl", gamma, ()
    raise ValueError(f"unknown framework {name!r}; expected one of {FRAMEWORKS}")


def interaction_replicate(config: InterSimConfig, rep: int, frameworks: Sequence[str] = FRAMEWORKS,
                          solver: Optional[SolverConfig] = None) -> list[dict]:
    data_ss, fold_ss = _replicate_seed(config.seed, config.b, rep).spawn(2)
    train, test, truth = gen_interaction_data(config, np.random.default_rng(data_ss))
    folds = make_folds(config.n, config.k_folds, 1, np.random.default_rng(fold_ss))
    spec = ExpansionSpec("interactions")
    rows = []
    for name in frameworks:
        t0 = time.perf_counter()
        scheme, gamma, excluded = _framework_penalty(name, config.gamma)
        cv = cross_validate(train, spec, scheme, [gamma], folds=folds, config=solver, excluded=excluded)
        fit, design = cv.fits[0], cv.designs[0]
        li = cv.chosen[1]
        pred = linear_predictor(fit, li, design.transform(test.X))
        selected = np.flatnonzero(fit.betas[li])
        metrics = evaluate_selection(selected, truth.column_set(design.column_meta), design.column_meta)
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "experiment": "interactions",
            "b": config.b,
            "replicate": rep,
            "framework": name,
            "seed": config.seed,
            "n": config.n,
            "p": config.p,
            "s": config.s,
            "noise_sd": config.noise_sd,
            "gamma": gamma,
            "lambda_index": li,
            "lambda": float(fit.lambdas[li]),
            "df": int(fit.df[li]),
            "converged": bool(fit.converged[li]),
            **metrics,
            "rmse_pred": float(np.sqrt(np.mean((test.y - pred) ** 2))),
            "seconds": time.perf_counter() - t0,
        })
    return rows


def _poly_ols(design, y):
    A = np.column_stack([np.ones(design.n), design.Z])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return lambda x: coef[0] + design.transform(np.asarray(x)[:, None]) @ coef[1:], design.q


def poly_replicate(config: PolySimConfig, rep: int, solver: Optional[SolverConfig] = None) -> list[dict]:
    data_ss, fold_ss = _replicate_seed(config.seed, POLY_TRUTHS.index(config.truth), rep).spawn(2)
    train, truth = gen_poly_data(config, np.random.default_rng(data_ss))
    fold_seed = np.random.default_rng(fold_ss).integers(2**63)
    x = train.X[:, 0]
    degrees = truth.degrees
    oracle = _oracle_fit(x, train.y, degrees)
    oracle_rmse = rmse_estimation(oracle, truth, config.eval_points)
    rows = []
    for m in config.orders:
        spec = ExpansionSpec("polynomials", m)
        base = {"schema_version": SCHEMA_VERSION, "experiment": "poly", "truth": config.truth, "order": m,
                "replicate": rep, "seed": config.seed, "n": config.n, "noise_sd": config.sd,
                "tuning": config.tuning}
        for name in POLY_FRAMEWORKS:
            t0 = time.perf_counter()
            gamma, lam, df, sel = np.nan, np.nan, None, None
            if name == "oracle":
                fn, df = oracle, len(degrees)
                sel = degrees
            elif name == "ols":
                fn, df = _poly_ols(expand(train, spec), train.y)
                sel = list(range(1, m + 1))
            else:
                scheme = "lasso" if name == "lasso" else "cumulative"
                gammas = (0.0,) if name == "lasso" else config.gammas
                if config.tuning == "bic":
                    res = tune_information_criterion(train, spec, scheme, gammas, "BIC", config=solver)
                else:
                    res = cross_validate(train, spec, scheme, gammas, k=config.k_folds,
                                         repeats=config.cv_repeats, seed=int(fold_seed), config=solver)
                gi, li = res.chosen
                fit, design = res.fits[gi], res.designs[gi]
                fn = _path_predictor(fit, li, design)
                gamma, lam, df = res.gammas[gi], float(fit.lambdas[li]), int(fit.df[li])
                sel = [design.column_meta[c].degree for c in np.flatnonzero(fit.betas[li])]
            rmse = oracle_rmse if name == "oracle" else rmse_estimation(fn, truth, config.eval_points)
            rows.append({**base, "framework": name, "gamma": gamma, "lambda": lam, "df": df,
                         "selected_degrees": " ".join(str(d) for d in sorted(sel)),
                         "rmse_est": rmse, "rmse_excess": rmse - oracle_rmse,
                         "seconds": time.perf_counter() - t0})
    return rows


def _oracle_fit(x, y, degrees):
    """OLS on the true set of powers; intercept only when there are none."""
    A = np.column_stack([np.ones_like(x)] + [x**d for d in degrees])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return lambda g: np.column_stack([np.ones_like(g)] + [np.asarray(g, float)**d for d in degrees]) @ coef


def _path_predictor(fit, li, design):
    return lambda g: linear_predictor(fit, li, design.transform(np.asarray(g, dtype=float)[:, None]))


def _run(tasks, threads: int):
    if threads <= 1:
        return [fn(*args) for fn, args in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for fn, args in tasks]
        return [f.result() for f in futures]


def _strip_seconds(batches) -> tuple[list[dict], list[float]]:
    rows, secs = [], []
    for batch in batches:
        for row in batch:
            secs.append(row.pop("seconds"))
            rows.append(row)
    return rows, secs


def run_interaction_experiment(config: InterSimConfig, frameworks: Sequence[str] = FRAMEWORKS,
                               b_values: Optional[Sequence[int]] = None, threads: int = 1,
                               solver: Optional[SolverConfig] = None) -> SimResult:
    """Replicates x frameworks (x b settings), each with 10-fold CV tuning of lambda.

    Every replicate redraws the coefficients, active sets and data from its
    own seed stream, so results do not depend on ``threads``.
    """
    for name in frameworks:
        _framework_penalty(name, config.gamma)
    b_values = [config.b] if b_values is None else list(b_values)
    tasks = []
    for b in b_values:
        cfg = InterSimConfig(**{**asdict(config), "b": b})
        tasks += [(interaction_replicate, (cfg, rep, tuple(frameworks), solver)) for rep in range(config.replicates)]
    rows, secs = _strip_seconds(_run(tasks, threads))
    cfg = asdict(config)
    cfg["b"] = b_values
    cfg["frameworks"] = list(frameworks)
    return SimResult("interactions", rows, cfg, secs)


def run_poly_experiment(config: PolySimConfig, threads: int = 1,
                        solver: Optional[SolverConfig] = None) -> SimResult:
    tasks = [(poly_replicate, (config, rep, solver)) for rep in range(config.replicates)]
    rows, secs = _strip_seconds(_run(tasks, threads))
    cfg = asdict(config)
    cfg["noise_sd"] = config.sd
    cfg["gamma_grid"] = list(config.gammas)
    return SimResult("poly", rows, cfg, secs)


# ---------------------------------------------------------------- aggregation

INTER_METRICS = ("fdr_overall", "fdr_main", "fdr_inter", "type1_overall", "type1_main", "type1_inter",
                 "type2_overall", "type2_main", "type2_inter", "rmse_pred", "df")
POLY_METRICS = ("rmse_est", "rmse_excess", "df")


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error per experiment x setting x framework x metric (long format)."""
    if frame.empty:
        return pd.DataFrame(columns=["experiment", "setting", "framework", "metric", "mean", "se", "n",
                                     "n_excluded"])
    versions = set(frame["schema_version"].unique())
    if versions != {SCHEMA_VERSION}:
        raise ValueError(f"schema_version mismatch: found {sorted(versions)}, expected {SCHEMA_VERSION}")
    out = []
    for experiment, part in frame.groupby("experiment", sort=True):
        if experiment == "interactions":
            part = part.assign(setting="b=" + part["b"].astype(int).astype(str))
            metrics = INTER_METRICS
            ok = part["converged"].astype(bool)
            excluded = (~ok).groupby([part["setting"], part["framework"]]).sum()
            part = part[ok]
        else:
            part = part.assign(setting=part["truth"] + ":order=" + part["order"].astype(int).astype(str))
            metrics = POLY_METRICS
            excluded = None
        for (setting, framework), grp in part.groupby(["setting", "framework"], sort=True):
            n_excl = 0 if excluded is None else int(excluded.get((setting, framework), 0))
            for metric in metrics:
                vals = grp[metric].to_numpy(dtype=float)
                n = vals.size
                se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
                out.append({"experiment": experiment, "setting": setting, "framework": framework,
                            "metric": metric, "mean": float(np.mean(vals)), "se": se, "n": n,
                            "n_excluded": n_excl})
    return pd.DataFrame(out)
