import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorcode.errors import ConfigError, SingularModelError
from sensorcode.gauss_model import (
    CovarianceModel, build_ceo_model, build_field_model, cholesky_with_jitter, log_det_submatrix, make_rng,
    sample, sample_batches,
)

from conftest import random_field


def test_field_zero_distance_gives_unit_correlation():
    m = build_field_model([[0.2, 0.3], [0.2, 0.3]], 3.0)
    assert m.matrix[0, 1] == 1.0


def test_field_beta_zero_is_all_ones():
    m = build_field_model(np.random.default_rng(0).random((4, 2)), 0.0)
    assert np.all(m.matrix == 1.0)


def test_field_exponential_decay():
    m = build_field_model([[0.0, 0.0], [1.0, 0.0]], 2.0)
    assert m.matrix[0, 1] == pytest.approx(math.exp(-2.0), rel=1e-15)
    assert np.all(np.diag(m.matrix) == 1.0)


def test_field_rejects_bad_input():
    with pytest.raises(ConfigError):
        build_field_model([[0.0, np.nan]], 1.0)
    with pytest.raises(ConfigError):
        build_field_model([[0.0, 0.0]], -1.0)


def test_ceo_covariance_structure():
    m = build_ceo_model(3, 1.0, 0.1)
    assert m.matrix[0, 0] == 1.0
    assert np.allclose(np.diag(m.matrix)[1:], 1.1)
    assert m.matrix[1, 2] == 1.0 and m.matrix[0, 3] == 1.0
    assert m.correlation()[0, 1] == pytest.approx(1.0 / math.sqrt(1.1))


def test_ceo_two_by_two_determinant():
    m = build_ceo_model(1, 2.0, 0.3)
    assert np.linalg.det(m.matrix) == pytest.approx(2.0 * 0.3)


def test_ceo_large_noise_decorrelates():
    m = build_ceo_model(2, 1.0, 1e6)
    assert abs(m.correlation()[0, 1]) < 1e-3


def test_ceo_rejects_nonpositive_variance():
    with pytest.raises(ConfigError):
        build_ceo_model(2, 0.0, 0.1)
    with pytest.raises(ConfigError):
        build_ceo_model(2, 1.0, -0.1)


def test_model_is_read_only():
    m = build_ceo_model(2, 1.0, 0.5)
    with pytest.raises(ValueError):
        m.matrix[0, 0] = 3.0


def test_sample_identity_uncorrelated():
    m = CovarianceModel(np.eye(3))
    u = np.concatenate(list(sample_batches(m, 1, 1_000_000)))
    c = np.corrcoef(u.T)
    assert np.max(np.abs(c - np.eye(3))) < 0.01


def test_sample_covariance_converges():
    m = CovarianceModel(np.array([[1.0, 0.9], [0.9, 1.0]]))
    u = np.concatenate(list(sample_batches(m, 2, 1_000_000)))
    assert np.max(np.abs(np.cov(u.T) - m.matrix)) < 0.01


def test_sample_empty_batch():
    m = CovarianceModel(np.eye(2))
    assert sample(m, make_rng(0), 0).shape == (0, 2)


def test_sampling_is_reproducible_per_batch():
    m = random_field(5, 1.0, 0)
    a = list(sample_batches(m, 7, 250, batch_size=100))
    b = list(sample_batches(m, 7, 250, batch_size=100))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    # Batch 1 does not depend on how many batches follow it.
    c = list(sample_batches(m, 7, 200, batch_size=100))
    assert np.array_equal(a[1], c[1])


def test_jitter_rescues_duplicate_positions(caplog):
    m = build_field_model([[0.5, 0.5], [0.5, 0.5], [0.1, 0.2]], 1.0)
    chol = m.cholesky
    assert np.allclose(chol @ chol.T, m.matrix, atol=1e-5)
    assert "jitter" in caplog.text


def test_jitter_exhausted_raises():
    with pytest.raises(SingularModelError):
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_log_det_trivial_cases():
    m = random_field(4, 1.0, 3)
    assert log_det_submatrix(np.eye(3), [0, 1, 2]) == pytest.approx(0.0, abs=1e-15)
    assert log_det_submatrix(m, []) == 0.0
    rho = m.matrix[0, 1]
    assert log_det_submatrix(m, [0, 1]) == pytest.approx(math.log(1 - rho**2), rel=1e-12)


def test_log_det_rejects_bad_indices():
    m = random_field(3, 1.0, 0)
    with pytest.raises(IndexError):
        log_det_submatrix(m, [0, 5])
    with pytest.raises(ValueError):
        log_det_submatrix(m, [1, 1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 8), data=st.data())
def test_log_det_permutation_invariant(seed, n, data):
    m = random_field(n, 1.5, seed)
    idx = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    perm = data.draw(st.permutations(idx))
    assert log_det_submatrix(m, perm) == pytest.approx(log_det_submatrix(m, idx), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 8), data=st.data())
def test_fischer_inequality(seed, n, data):
    m = random_field(n, 1.0, seed)
    s = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=n, unique=True))
    k = data.draw(st.integers(1, len(s) - 1))
    b, rest = s[:k], s[k:]
    assert log_det_submatrix(m, s) <= log_det_submatrix(m, b) + log_det_submatrix(m, rest) + 1e-10
