"""Lloyd-Max scalar quantizers for Gaussian marginals."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.special import ndtr, ndtri

SQRT_2PI = np.sqrt(2.0 * np.pi)


def _pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    finite = np.isfinite(x)
    out[finite] = np.exp(-0.5 * x[finite] ** 2) / SQRT_2PI
    return out


def _cell_mass(a, b):
    """P(a < Z <= b) for standard normal Z, accurate in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _cell_moments(bounds):
    """Zeroth, first and second partial moments of N(0,1) on each cell."""
    a, b = bounds[:-1], bounds[1:]
    m0 = _cell_mass(a, b)
    pa, pb = _pdf(a), _pdf(b)
    m1 = pa - pb
    with np.errstate(invalid="ignore"):
        apa = np.where(np.isfinite(a), a * pa, 0.0)
        bpb = np.where(np.isfinite(b), b * pb, 0.0)
    m2 = m0 + apa - bpb
    return m0, m1, m2


def _std_mse(levels, bounds):
    m0, m1, m2 = _cell_moments(bounds)
    return float(np.sum(m2 - 2.0 * levels * m1 + levels**2 * m0))


def _midpoints(levels):
    return np.concatenate(([-np.inf], 0.5 * (levels[:-1] + levels[1:]), [np.inf]))


def lloyd_sweeps(L: int, tol: float = 1e-9, max_iter: int = 10_000) -> Iterator[tuple]:
    """Run Lloyd iteration for N(0,1), yielding ``(levels, bounds, mse)`` per sweep.

    Starts from the quantiles ``(i + 0.5) / L`` and stops once no level moves
    by more than ``tol`` or after ``max_iter`` sweeps.
    """
    if L < 1:
        raise ValueError("quantizer needs at least one level")
    levels = ndtri((np.arange(L) + 0.5) / L)
    bounds = _midpoints(levels)
    yield levels, bounds, _std_mse(levels, bounds)
    for _ in range(max_iter):
        m0, m1, _ = _cell_moments(bounds)
        new = np.where(m0 > 0, m1 / np.where(m0 > 0, m0, 1.0), levels)
        bounds = _midpoints(new)
        moved = float(np.max(np.abs(new - levels)))
        levels = new
        yield levels, bounds, _std_mse(levels, bounds)
        if moved < tol:
            break


@lru_cache(maxsize=None)
def _standard_design(L: int) -> tuple[np.ndarray, np.ndarray]:
    *_, (levels, bounds, _) = lloyd_sweeps(L)
    levels = 0.5 * (levels - levels[::-1])  # exact antisymmetry
    bounds = _midpoints(levels)
    levels.setflags(write=False)
    bounds.setflags(write=False)
    return levels, bounds


@dataclass(frozen=True, eq=False)
class ScalarQuantizer:
    """Decision levels ``boundaries[0..L]`` (outer ones infinite) and reconstruction levels."""

    levels: np.ndarray
    boundaries: np.ndarray
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float)
        bd = np.array(self.boundaries, dtype=float)
        if lv.ndim != 1 or lv.size < 1 or bd.shape != (lv.size + 1,):
            raise ValueError("need L levels and L+1 boundaries")
        if not (bd[0] == -np.inf and bd[-1] == np.inf):
            raise ValueError("outer boundaries must be -inf and +inf")
        if np.any(np.diff(lv) <= 0) or np.any(np.diff(bd) <= 0):
            raise ValueError("levels and boundaries must be strictly increasing")
        if np.any(lv <= bd[:-1]) or np.any(lv > bd[1:]):
            raise ValueError("each level must lie inside its cell")
        lv.setflags(write=False)
        bd.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "boundaries", bd)

    @property
    def L(self) -> int:
        return self.levels.size

    def quantize(self, u):
        """Index ``i`` with ``b(i) < u <= b(i+1)``; works on scalars and arrays."""
        arr = np.asarray(u, dtype=float)
        if np.any(np.isnan(arr)):
            raise ValueError("cannot quantize NaN")
        idx = np.searchsorted(self.boundaries[1:-1], arr, side="left")
        return int(idx) if idx.ndim == 0 else idx

    def reconstruct(self, index):
        return self.levels[index]

    def __eq__(self, other):
        if not isinstance(other, ScalarQuantizer):
            return NotImplemented
        return (
            np.array_equal(self.levels, other.levels)
            and np.array_equal(self.boundaries, other.boundaries)
            and self.mean == other.mean
            and self.variance == other.variance
        )

    __hash__ = None


def design_lloyd_max(mean: float, variance: float, L: int) -> ScalarQuantizer:
    """MSE-optimal ``L``-level quantizer for N(mean, variance).

    The design is done once per ``L`` for the standard normal and then
    shifted and scaled, which is exact for the Lloyd fixed point.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if not variance > 0:
        raise ValueError("variance must be positive")
    std_levels, std_bounds = _standard_design(int(L))
    sd = float(np.sqrt(variance))
    return ScalarQuantizer(mean + sd * std_levels, mean + sd * std_bounds, float(mean), float(variance))


def quantizer_mse(q: ScalarQuantizer) -> float:
    """Closed-form E{(U - U~)^2} under the Gaussian the quantizer was built for."""
    sd = np.sqrt(q.variance)
    levels = (q.levels - q.mean) / sd
    bounds = (q.boundaries - q.mean) / sd
    return q.variance * _std_mse(levels, bounds)


def cell_probabilities(q: ScalarQuantizer) -> np.ndarray:
    bounds = (q.boundaries - q.mean) / np.sqrt(q.variance)
    return _cell_mass(bounds[:-1], bounds[1:])
