import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorcode.quantizer import (
    ScalarQuantizer, cell_probabilities, design_lloyd_max, lloyd_sweeps, quantizer_mse,
)

# Lloyd-Max optimum for N(0,1) by numerical quadrature (independent of the
# closed-form moments used by the package): L -> (MSE, positive levels).
QUAD_ORACLE = {
    2: (0.36338022763241873, [0.7978845608028653]),
    4: (0.1174818478293293, [0.4527800346305968, 1.5104176084869239]),
    8: (0.03454776078850373, [0.24509417892599894, 0.7560052811561162, 1.3439092784371083, 2.1519457044699717]),
}


def test_single_level():
    q = design_lloyd_max(0.3, 2.0, 1)
    assert q.levels.tolist() == [0.3]
    assert q.boundaries.tolist() == [-np.inf, np.inf]
    assert q.quantize(-100.0) == 0 and q.quantize(7.0) == 0
    assert quantizer_mse(design_lloyd_max(0.0, 1.0, 1)) == pytest.approx(1.0)


def test_two_levels_half_normal_centroid():
    q = design_lloyd_max(0.0, 1.0, 2)
    c = math.sqrt(2 / math.pi)
    assert q.levels == pytest.approx([-c, c], abs=1e-12)
    assert q.boundaries[1] == 0.0
    assert quantizer_mse(q) == pytest.approx(1 - 2 / math.pi, abs=1e-12)


@pytest.mark.parametrize("L", sorted(QUAD_ORACLE))
def test_matches_quadrature_oracle(L):
    mse, pos = QUAD_ORACLE[L]
    q = design_lloyd_max(0.0, 1.0, L)
    assert quantizer_mse(q) == pytest.approx(mse, abs=1e-9)
    assert q.levels[L // 2:] == pytest.approx(pos, abs=1e-7)


def test_mse_decreases_with_resolution():
    mses = [quantizer_mse(design_lloyd_max(0.0, 1.0, L)) for L in (1, 2, 4, 8, 16, 32)]
    assert all(a > b for a, b in zip(mses, mses[1:]))


def test_scaling_with_variance():
    q = design_lloyd_max(1.0, 4.0, 8)
    assert quantizer_mse(q) == pytest.approx(4.0 * QUAD_ORACLE[8][0], rel=1e-8)
    assert np.mean(q.levels) == pytest.approx(1.0)


@pytest.mark.parametrize("L", [2, 3, 4, 8, 16])
def test_lloyd_mse_non_increasing(L):
    mses = [m for _, _, m in lloyd_sweeps(L)]
    assert all(b <= a + 1e-15 for a, b in zip(mses, mses[1:]))


@pytest.mark.parametrize("L", [2, 4, 7, 16, 64])
def test_optimality_conditions(L):
    q = design_lloyd_max(0.0, 1.0, L)
    mid = 0.5 * (q.levels[1:] + q.levels[:-1])
    assert np.allclose(q.boundaries[1:-1], mid, atol=1e-12)
    # centroid condition, checked by quadrature-free Monte Carlo-independent formula
    a, b = q.boundaries[:-1], q.boundaries[1:]
    from scipy.stats import norm
    cent = (norm.pdf(a) - norm.pdf(b)) / (norm.cdf(b) - norm.cdf(a))
    assert np.allclose(q.levels, cent, atol=1e-8)
    assert np.allclose(q.levels, -q.levels[::-1], atol=1e-8)


def test_mse_matches_monte_carlo():
    q = design_lloyd_max(0.0, 1.0, 16)
    u = np.random.default_rng(4).standard_normal(1_000_000)
    err = (u - q.reconstruct(q.quantize(u))) ** 2
    sigma = err.std() / math.sqrt(u.size)
    assert abs(err.mean() - quantizer_mse(q)) < 3 * sigma


def test_quantize_examples():
    q = design_lloyd_max(0.0, 1.0, 2)
    assert q.quantize(0.3) == 1
    assert q.quantize(0.0) == 0  # value on a boundary belongs to the left cell
    q4 = design_lloyd_max(0.0, 1.0, 4)
    assert q4.quantize(q4.boundaries[2]) == 1
    assert q4.quantize(np.nextafter(q4.boundaries[2], np.inf)) == 2
    assert q4.quantize(np.array([-5.0, 5.0])).tolist() == [0, 3]


def test_quantize_rejects_nan():
    with pytest.raises(ValueError):
        design_lloyd_max(0.0, 1.0, 4).quantize(np.array([0.0, np.nan]))


@pytest.mark.parametrize("L", [1, 2, 5, 16, 64])
def test_levels_quantize_to_themselves(L):
    q = design_lloyd_max(0.2, 3.0, L)
    assert q.quantize(q.levels).tolist() == list(range(L))


def test_cell_probabilities_sum_to_one():
    for L in (2, 8, 64):
        p = cell_probabilities(design_lloyd_max(0.0, 2.0, L))
        assert p.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(p > 0)


def test_invalid_designs():
    with pytest.raises(ValueError):
        design_lloyd_max(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        design_lloyd_max(0.0, 0.0, 4)
    with pytest.raises(ValueError):
        ScalarQuantizer([1.0, 0.0], [-np.inf, 0.5, np.inf])
    with pytest.raises(ValueError):
        ScalarQuantizer([0.0, 1.0], [-1.0, 0.5, np.inf])


@settings(max_examples=60, deadline=None)
@given(u=st.floats(-50, 50, allow_nan=False), L=st.sampled_from([2, 3, 4, 8, 16]))
def test_quantize_cell_membership(u, L):
    q = design_lloyd_max(0.0, 1.0, L)
    i = q.quantize(u)
    assert q.boundaries[i] < u <= q.boundaries[i + 1]
