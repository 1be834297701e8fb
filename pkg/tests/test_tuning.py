import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import expit

from srlasso.data import Dataset, standardize
from srlasso.expand import ExpansionSpec, expand, raw_features
from srlasso.penalty import make_penalty
from srlasso.simulate import InterSimConfig, gen_interaction_data
from srlasso.solver import FitPath, SolverConfig, fit_path, linear_predictor
from srlasso.tuning import (
    CvResult,
    cross_validate,
    information_criterion,
    make_folds,
    select_indices,
    select_rule,
    tune_information_criterion,
)


def test_fold_sizes():
    f = make_folds(10, 5)
    assert sorted(np.bincount(f[0])) == [2] * 5
    f = make_folds(11, 5)
    assert sorted(np.bincount(f[0])) == [2, 2, 2, 2, 3]
    np.testing.assert_array_equal(make_folds(10, 5, 2, seed=4), make_folds(10, 5, 2, seed=4))
    with pytest.raises(ValueError):
        make_folds(4, 5)
    with pytest.raises(ValueError):
        make_folds(4, 1)


@given(st.integers(2, 60), st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**32))
def test_folds_partition(n, k, r, seed):
    if k > n:
        return
    folds = make_folds(n, k, r, seed)
    assert folds.shape == (r, n)
    for row in folds:
        counts = np.bincount(row, minlength=k)
        assert counts.sum() == n and counts.max() - counts.min() <= 1


def _small(seed, n=20, p=3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    return Dataset(X @ np.arange(1.0, p + 1) + rng.normal(size=n), X)


def test_loo_matches_direct_loop():
    ds = _small(0)
    spec = ExpansionSpec("interactions")
    cv = cross_validate(ds, spec, "srl", [0.5], k=ds.n, seed=1)
    lambdas = cv.lambdas[0]
    errs = np.empty((ds.n, lambdas.size))
    for i in range(ds.n):
        keep = np.arange(ds.n) != i
        train = Dataset(ds.y[keep], ds.X[keep])
        design = expand(train, spec)
        fit = fit_path(design, train.y, make_penalty(design, "srl", 0.5), lambdas=lambdas)
        zi = design.transform(ds.X[i:i + 1])
        pred = np.array([linear_predictor(fit, j, zi)[0] for j in range(lambdas.size)])
        errs[i] = (ds.y[i] - pred) ** 2
    np.testing.assert_allclose(cv.cv_loss[0], errs.mean(axis=0), atol=1e-10)


def test_fold_scaling_uses_training_rows_only():
    ds = _small(2, n=30)
    spec = ExpansionSpec("interactions")
    folds = make_folds(ds.n, 5, 1, seed=3)
    cv = cross_validate(ds, spec, "srl", [0.5], folds=folds)
    lambdas = cv.lambdas[0]
    test = folds[0] == 0
    train = ds.subset(np.flatnonzero(~test))

    def heldout(scaling_rows):
        # fit on training rows; scale the held-out rows with params from ``scaling_rows``
        design = expand(train, spec)
        fit = fit_path(design, train.y, make_penalty(design, "srl", 0.5), lambdas=lambdas)
        raw, _ = raw_features(ds.X[test], spec)
        _, params = standardize(raw_features(scaling_rows.X, spec)[0])
        Zt = params.apply(raw)
        return np.mean((ds.y[test][:, None] - (fit.intercepts + Zt @ fit.betas.T)) ** 2, axis=0)

    honest = heldout(train)
    leaky = heldout(ds)
    np.testing.assert_allclose(cv.fold_loss[0][0], honest, atol=1e-10)
    assert np.max(np.abs(leaky - honest)) > 1e-6


def _null_sparse_rate(rule):
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.normal(size=300), rng.normal(size=(300, 20)))
        cv = cross_validate(ds, None, "srl", [0.0], k=10, seed=seed)
        gi, li = select_indices(cv, rule)
        hits += cv.fits[gi].df[li] <= 1
    return hits


@pytest.mark.xfail(strict=True, reason="min-rule CV admits 2+ noise terms in about a quarter of null runs "
                                       "(73/100 measured); see decisions ledger")
def test_null_data_min_rule_chooses_sparse_model():
    assert _null_sparse_rate("min") >= 80


def test_null_data_one_se_rule_chooses_sparse_model():
    assert _null_sparse_rate("one_se") >= 80


def test_noise_interactions_prefer_ranked_penalty():
    # y carries main effects only, so the 190 product columns are pure noise
    chose_half = 0
    cfg = InterSimConfig(b=0)
    for seed in range(100):
        train, _, _ = gen_interaction_data(cfg, np.random.default_rng(seed))
        cv = cross_validate(train, ExpansionSpec("interactions"), "srl", [0.0, 0.5], seed=seed,
                            config=SolverConfig(n_lambda=50))
        chose_half += cv.chosen[0] == 1
    assert chose_half > 50


def test_repeats_bookkeeping():
    ds = _small(4, n=40)
    one = cross_validate(ds, None, "srl", [0.5], k=5, repeats=1, seed=9)
    two = cross_validate(ds, None, "srl", [0.5], k=5, repeats=2, seed=9)
    assert two.folds.shape == (2, 40)
    assert two.fold_loss[0].shape[0] == 10
    assert not np.allclose(one.cv_loss[0], two.cv_loss[0])
    for res in (one, two):
        gi, li = res.chosen
        assert res.cv_loss[gi][li] == np.nanmin(res.cv_loss[gi])


def test_constant_training_fold_dropped_with_warning():
    X = np.arange(8.0)[:, None]
    y = np.array([0, 0, 0, 0, 0, 0, 0, 1.0])
    folds = np.arange(8)[None, :]  # leave-one-out
    with pytest.warns(UserWarning, match="constant"):
        cv = cross_validate(Dataset(y, X), None, "lasso", [0.0], folds=folds, config=SolverConfig(n_lambda=5))
    assert np.isnan(cv.fold_loss[0][7]).all()
    assert np.isfinite(cv.cv_loss[0]).all()


def test_binomial_cv_uses_deviance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(120, 4))
    y = (rng.uniform(size=120) < expit(1.5 * X[:, 0])).astype(float)
    cv = cross_validate(Dataset(y, X, family="binomial"), None, "srl", [0.5], k=5, seed=1,
                        config=SolverConfig(n_lambda=20))
    assert cv.cv_loss[0][0] == pytest.approx(2 * np.log(2), abs=0.15)
    gi, li = cv.chosen
    assert cv.fits[gi].betas[li][0] > 0


def _cv_stub(loss, se):
    loss, se = np.asarray(loss, float), np.asarray(se, float)
    lam = np.geomspace(1, 0.01, loss.size)
    return CvResult([0.5], [lam], [loss], [se], [np.zeros((1, loss.size))], np.zeros((1, 3), int),
                    (0, int(np.argmin(loss))))


def test_select_rule_cases():
    single = _cv_stub([2.0], [0.3])
    assert select_rule(single, "min") == select_rule(single, "one_se") == (0.5, 1.0)
    rising = _cv_stub([1.0, 1.1, 1.3, 1.6], [0.01] * 4)
    assert select_rule(rising, "min")[1] == 1.0
    built = _cv_stub([1.0, 1.05, 1.2], [0.1, 0.1, 0.1])
    assert select_rule(built, "one_se")[1] == 1.0
    dip = _cv_stub([1.3, 1.05, 1.0, 1.2], [0.1] * 4)
    assert select_rule(dip, "min")[1] == dip.lambdas[0][2]
    assert select_rule(dip, "one_se")[1] == dip.lambdas[0][1]
    with pytest.raises(ValueError):
        select_rule(dip, "median")


def test_cv_serialization():
    cv = cross_validate(_small(6, n=30), None, "srl", [0.0, 0.5], k=3, seed=2, config=SolverConfig(n_lambda=8))
    blob = json.loads(cv.to_json())
    assert blob["chosen"]["gamma"] in (0.0, 0.5)
    assert len(blob["folds"][0]) == 30
    lines = cv.surface_csv().splitlines()
    assert lines[0] == "gamma,lambda_index,lambda,cv_loss,cv_se"
    assert len(lines) == 1 + 2 * 8


def test_bic_null_fit():
    ds = _small(7, n=50)
    fit = fit_path(expand(ds, ExpansionSpec()).Z, ds.y)
    ic = information_criterion(fit, criterion="BIC")
    tss = np.sum((ds.y - ds.y.mean()) ** 2)
    assert ic.values[0][0] == pytest.approx(50 * np.log(tss / 50), abs=1e-10)
    aic = information_criterion(fit, criterion="aic")
    np.testing.assert_allclose(aic.values[0] - ic.values[0], (2 - np.log(50)) * fit.df)


def test_bic_prefers_fewer_terms_at_equal_deviance():
    ds = _small(8, n=50)
    fit = fit_path(expand(ds, ExpansionSpec()).Z, ds.y, config=SolverConfig(n_lambda=2))
    fit.deviance[:] = 10.0
    fit.df[:] = (5, 3)
    assert information_criterion(fit).chosen_index == 1


def test_bic_recomputed_from_serialized_path():
    rng = np.random.default_rng(9)
    X = rng.uniform(size=(100, 6))
    ds = Dataset(X[:, 0] * 3 - X[:, 1] + rng.normal(size=100), X)
    res = tune_information_criterion(ds, ExpansionSpec("polynomials", 3), "cumulative", [1.0])
    blob = json.loads(res.fits[0].to_json())
    dev = np.asarray(blob["deviance"])
    df = np.asarray(blob["df"])
    brute = 100 * np.log(dev / 100) + np.log(100) * df
    brute[~np.asarray(blob["converged"])] = np.inf
    assert res.chosen_index == int(np.argmin(brute))
    reloaded = FitPath.from_dict(blob)
    assert information_criterion(reloaded).chosen_index == res.chosen_index


def test_information_criterion_needs_converged_point():
    ds = _small(10, n=30)
    fit = fit_path(expand(ds, ExpansionSpec()).Z, ds.y, config=SolverConfig(n_lambda=3))
    fit.converged[:] = False
    with pytest.raises(ValueError):
        information_criterion(fit)
