import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adjointpde.core import Dataset, Grid
from adjointpde.preprocess import add_noise, subsample_time, svd_denoise


def _data(T=6, n=8, N=1, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(Grid((n,), (0.1,)), np.arange(T, dtype=float), rng.normal(size=(T, N, n)))


datasets = st.builds(_data, st.integers(2, 8), st.integers(3, 10), st.integers(1, 2), st.integers(0, 2**31))


@settings(max_examples=30)
@given(datasets, st.integers(0, 2**31))
def test_zero_noise_is_identity(data, seed):
    assert np.array_equal(add_noise(data, 0.0, seed).values, data.values)


@settings(max_examples=30)
@given(datasets)
def test_stride_one_is_identity(data):
    out = subsample_time(data, 1)
    assert np.array_equal(out.values, data.values) and np.array_equal(out.times, data.times)


@settings(max_examples=30)
@given(datasets)
def test_permissive_svd_is_identity(data):
    out = svd_denoise(data, 0.0)
    assert np.array_equal(out.values, data.values)
    assert out.grid == data.grid and np.array_equal(out.times, data.times)


@settings(max_examples=30)
@given(datasets, st.floats(1e-6, 0.5))
def test_svd_keeps_grid_and_times(data, thr):
    out = svd_denoise(data, thr)
    assert out.grid == data.grid and np.array_equal(out.times, data.times)


def test_noise_keeps_zeros_and_is_reproducible():
    data = _data()
    vals = data.values.copy()
    vals[0, 0, 3] = 0.0
    data = data.with_values(vals)
    a = add_noise(data, 0.1, 42)
    b = add_noise(data, 0.1, 42)
    assert a.values[0, 0, 3] == 0.0
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, add_noise(data, 0.1, 43).values)


def test_rank_one_plus_small_perturbation():
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=20), rng.normal(size=30)
    clean = np.outer(u, v)
    noisy = clean + 1e-8 * rng.normal(size=clean.shape)
    data = Dataset(Grid((30,), (1.0,)), np.arange(20.0), noisy[:, None, :])
    out = svd_denoise(data, 1e-4)
    assert np.max(np.abs(out.values[:, 0] - clean)) <= 1e-7
    assert out.metadata["svd_rank"] == [1]


def test_threshold_above_one_zeroes_with_warning():
    with pytest.warns(RuntimeWarning):
        out = svd_denoise(_data(), 2.0)
    assert not out.values.any()


def test_single_snapshot_passes_through():
    data = _data(T=1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.array_equal(svd_denoise(data, 0.5).values, data.values)


def test_subsample_examples():
    g = Grid((3,), (1.0,))
    data = Dataset(g, np.arange(1001, dtype=float), np.zeros((1001, 1, 3)))
    out = subsample_time(data, 16)
    assert len(out.times) == 63 and out.times[-1] == 992
    small = Dataset(g, [0.0, 1.0, 2.0, 3.0], np.zeros((4, 1, 3)))
    assert list(subsample_time(small, 2).times) == [0.0, 2.0]
    with pytest.raises(ValueError):
        subsample_time(small, 4)
    with pytest.raises(ValueError):
        subsample_time(small, 0)


def test_negative_parameters_rejected():
    with pytest.raises(ValueError):
        add_noise(_data(), -0.1, 0)
    with pytest.raises(ValueError):
        svd_denoise(_data(), -1.0)
