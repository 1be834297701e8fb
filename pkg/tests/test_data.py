import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from srlasso.data import (
    DataError,
    Dataset,
    GroupedDesign,
    StandardizationParams,
    destandardize,
    load_dataset,
    standardize,
)


@pytest.fixture
def csv_path(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("y,x1,x2\n1,2,3\n2,5,1\n3,0,4\n")
    return path


def test_load_small_csv(csv_path):
    ds = load_dataset(csv_path, "y", "gaussian")
    assert (ds.n, ds.p) == (3, 2)
    assert ds.feature_names == ("x1", "x2")
    np.testing.assert_array_equal(ds.y, [1, 2, 3])


def test_load_missing_response(csv_path):
    with pytest.raises(DataError, match="not found"):
        load_dataset(csv_path, "z", "gaussian")


def test_load_nonbinary_binomial(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("y,x\n0,1\n1,2\n2,3\n")
    with pytest.raises(DataError):
        load_dataset(path, "y", "binomial")


def test_load_rejects_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.csv", "y")


def test_load_rejects_missing_values(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("y,x\n1,2\n2,\n3,4\n")
    with pytest.raises(DataError):
        load_dataset(path, "y")


def test_load_rejects_text_column(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("y,x,c\n1,2,a\n2,3,b\n")
    with pytest.raises(DataError, match="c"):
        load_dataset(path, "y")


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.array([1.0]), np.ones((1, 1)))
    with pytest.raises(DataError):
        Dataset(np.array([0.0, 1.0]), np.ones((2, 0)))
    ds = Dataset(np.array([0.0, 1.0]), np.array([[1.0], [2.0]]))
    assert ds.feature_names == ("x1",)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0


def test_standardize_analytic():
    Z, params = standardize(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(Z[:, 0], [-1.22474487, 0.0, 1.22474487], atol=1e-8)
    assert params.centers[0] == 2.0
    assert params.scales[0] == pytest.approx(np.sqrt(2 / 3), abs=1e-12)


def test_standardize_drops_constant():
    X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    Z, params = standardize(X)
    assert Z.shape == (3, 1)
    assert tuple(params.dropped) == (1,)


def test_standardize_all_constant_errors():
    with pytest.raises(DataError):
        standardize(np.full((4, 2), 3.0))


def test_identical_columns_identical_output():
    x = np.array([0.3, 1.2, -4.0, 2.2])
    Z, _ = standardize(np.column_stack([x, x]))
    np.testing.assert_array_equal(Z[:, 0], Z[:, 1])


def test_destandardize_cases():
    params = StandardizationParams(np.array([1.0]), np.array([2.0]), (), 1)
    beta, b = destandardize(np.array([1.0]), 0.0, params)
    assert beta[0] == 0.5
    beta, b = destandardize(np.zeros(1), 3.0, params)
    assert beta[0] == 0.0 and b == 3.0
    with pytest.raises(DataError):
        destandardize(np.zeros(2), 0.0, params)


@given(
    X=arrays(np.float64, (12, 5), elements=st.floats(-50, 50)),
    beta=arrays(np.float64, 5, elements=st.floats(-5, 5)),
    b=st.floats(-5, 5),
)
def test_destandardize_preserves_fitted_values(X, beta, b):
    if (np.ptp(X, axis=0) < 1e-3).any():
        return
    Z, params = standardize(X)
    beta_raw, b_raw = destandardize(beta, b, params)
    scale = 1 + np.abs(Z @ beta).max() + abs(b)
    assert np.max(np.abs(X @ beta_raw + b_raw - Z @ beta - b)) < 1e-10 * scale * 100


def test_random_five_column_destandardize():
    rng = np.random.default_rng(11)
    X = rng.normal(3, 2, size=(40, 5))
    Z, params = standardize(X)
    beta = rng.normal(size=5)
    beta_raw, b_raw = destandardize(beta, 0.7, params)
    assert np.max(np.abs(X @ beta_raw + b_raw - Z @ beta - 0.7)) < 1e-10


@given(arrays(np.float64, (15, 4), elements=st.floats(-1e3, 1e3)))
def test_standardized_moments_and_idempotence(X):
    if (X.std(axis=0) < 1e-3 * (1 + np.abs(X).max())).any():
        return
    Z, _ = standardize(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-10
    assert np.abs(Z.std(axis=0) - 1).max() < 1e-8
    Z2, p2 = standardize(Z)
    assert np.abs(p2.centers).max() < 1e-10
    assert np.abs(p2.scales - 1).max() < 1e-8


def test_grouped_design_partition():
    Z = np.random.default_rng(0).normal(size=(10, 6))
    design = GroupedDesign.from_matrix(Z, [[0, 1], [2, 3, 4], [5]])
    assert design.group_sizes == [2, 3, 1]
    assert sum(design.group_sizes) == design.q
    with pytest.raises(ValueError):
        GroupedDesign.from_matrix(Z, [[0, 1], [1, 2, 3, 4, 5]])
    with pytest.raises(ValueError):
        GroupedDesign.from_matrix(Z, [[0, 1], [2, 3]])


def test_params_roundtrip():
    _, params = standardize(np.random.default_rng(1).normal(size=(8, 3)))
    again = StandardizationParams.from_dict(params.to_dict())
    np.testing.assert_array_equal(again.centers, params.centers)
    np.testing.assert_array_equal(again.scales, params.scales)
