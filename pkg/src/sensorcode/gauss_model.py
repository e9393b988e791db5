"""Zero-mean Gaussian source models.

Two scenario families are supported: a sensor field whose correlation decays
exponentially with distance, and the CEO setting in which every encoder sees
a common source through independent additive noise.  Both end up as a
:class:`CovarianceModel`; in the CEO case the common source is variable 0 and
the encoders are variables ``1..N``.

Random numbers come from numpy's PCG64 bit generator seeded through
:class:`numpy.random.SeedSequence`; normal variates use numpy's ziggurat
sampler.  Independent streams are derived from ``(seed, key...)`` via the
seed sequence ``spawn_key`` so that batch ``b`` of any run draws the same
numbers no matter how many batches are processed or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import logging

import numpy as np

from .errors import ConfigError, SingularModelError

JITTER_START = 1e-10
JITTER_MAX = 1e-6

log = logging.getLogger(__name__)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for stream ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def cholesky_with_jitter(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding ``eps*I`` (1e-10 up to 1e-6) if needed."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(matrix.shape[0])
    eps = JITTER_START
    while eps <= JITTER_MAX * (1 + 1e-9):
        try:
            chol = np.linalg.cholesky(matrix + eps * eye)
            log.warning("near-singular covariance regularized with jitter %g", eps)
            return chol
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise SingularModelError(
        f"matrix of size {matrix.shape[0]} is not positive definite "
        f"(jitter up to {JITTER_MAX:g} exhausted)"
    )


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Covariance of an N-dimensional zero-mean Gaussian vector.

    For field models ``matrix`` is the correlation matrix (unit diagonal).
    CEO models hold the raw covariance of ``(U0, U1..UN)``.
    """

    matrix: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ConfigError("covariance matrix must be square and non-empty")
        if not np.all(np.isfinite(m)):
            raise ConfigError("covariance matrix has non-finite entries")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12):
            raise ConfigError("covariance matrix is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise ConfigError("covariance matrix has non-positive variances")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_sources(self) -> int:
        return self.matrix.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return np.zeros(self.n_sources)

    def variance(self, n: int) -> float:
        return float(self.matrix[n, n])

    @cached_property
    def cholesky(self) -> np.ndarray:
        return cholesky_with_jitter(self.matrix)

    def submatrix(self, index_set: Sequence[int]) -> np.ndarray:
        idx = list(index_set)
        return self.matrix[np.ix_(idx, idx)]

    def submodel(self, index_set: Sequence[int]) -> "CovarianceModel":
        return CovarianceModel(self.submatrix(index_set), kind="custom")

    def correlation(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.matrix))
        return self.matrix / np.outer(d, d)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")


@dataclass(frozen=True)
class SensorField:
    positions: np.ndarray  # (N, 2), unit square
    beta: float

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2:
            raise ConfigError("positions must have shape (N, 2)")
        if not np.all(np.isfinite(p)):
            raise ConfigError("sensor positions must be finite")
        if np.any(p < 0) or np.any(p > 1):
            raise ConfigError("sensor positions must lie in the unit square")
        object.__setattr__(self, "positions", p)


def place_sensors(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random placement of ``n`` sensors in the unit square."""
    return rng.random((n, 2))


def build_field_model(positions, beta: float) -> CovarianceModel:
    """Correlation ``exp(-beta * distance)`` between every pair of sensors."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 1:
        raise ConfigError("need at least one sensor position")
    if not np.all(np.isfinite(pos)):
        raise ConfigError("sensor positions must be finite")
    if not np.isfinite(beta) or beta < 0:
        raise ConfigError("beta must be a finite non-negative number")
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    rho = np.exp(-beta * dist)
    np.fill_diagonal(rho, 1.0)
    return CovarianceModel(rho, kind="field", params={"beta": float(beta), "positions": pos.copy()})


def build_ceo_model(n: int, sigma0_sq: float, lambda_sq: float) -> CovarianceModel:
    """Covariance of ``(U0, U0+N1, ..., U0+Nn)`` with i.i.d. noise of variance ``lambda_sq``."""
    if n < 1:
        raise ConfigError("CEO model needs at least one encoder")
    if not (sigma0_sq > 0 and lambda_sq > 0):
        raise ConfigError("CEO variances must be positive")
    m = np.full((n + 1, n + 1), float(sigma0_sq))
    m[np.arange(1, n + 1), np.arange(1, n + 1)] = sigma0_sq + lambda_sq
    return CovarianceModel(
        m, kind="ceo", params={"sigma0_sq": float(sigma0_sq), "lambda_sq": float(lambda_sq)}
    )


def sample(model: CovarianceModel, rng: np.random.Generator, batch: int) -> np.ndarray:
    """Draw ``batch`` vectors from N(0, matrix) as ``z @ L.T``."""
    if batch == 0:
        return np.empty((0, model.n_sources))
    z = rng.standard_normal((batch, model.n_sources))
    return z @ model.cholesky.T


def sample_batches(
    model: CovarianceModel, seed: int, n: int, batch_size: int = 100_000, stream: int = 0
) -> Iterator[np.ndarray]:
    """Yield ``n`` samples in batches; batch ``b`` uses stream ``(stream, b)``."""
    done, b = 0, 0
    while done < n:
        size = min(batch_size, n - done)
        yield sample(model, make_rng(seed, stream, b), size)
        done += size
        b += 1


def log_det_submatrix(model: CovarianceModel | np.ndarray, index_set: Sequence[int]) -> float:
    """Natural log-determinant of the principal submatrix on ``index_set``.

    The empty set has log-determinant 0.
    """
    idx = [int(i) for i in index_set]
    if not idx:
        return 0.0
    mat = model.matrix if isinstance(model, CovarianceModel) else np.asarray(model)
    if min(idx) < 0 or max(idx) >= mat.shape[0]:
        raise IndexError(f"index set {idx} out of range for {mat.shape[0]} sources")
    if len(idx) != len(set(idx)):
        raise ValueError("index set has duplicates")
    chol = cholesky_with_jitter(mat[np.ix_(idx, idx)])
    return 2.0 * float(np.sum(np.log(np.diag(chol))))
