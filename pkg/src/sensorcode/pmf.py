"""Discrete PMFs over tuples of quantizer indices.

Tables are estimated by Monte Carlo: quantize correlated Gaussian samples,
count index tuples, then add ``eps = 1 / (n_samples * cells)`` to every cell
and renormalize so that no cell is exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CapacityError
from .gauss_model import CovarianceModel, sample_batches
from .quantizer import ScalarQuantizer

MAX_CELLS = 10_000_000


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense PMF; axis ``k`` of ``table`` indexes source ``scope[k]``."""

    scope: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(s) for s in self.scope))
        t = np.asarray(self.table, dtype=float)
        if t.ndim != len(self.scope):
            raise ValueError(f"table has {t.ndim} axes for scope of size {len(self.scope)}")
        if len(set(self.scope)) != len(self.scope):
            raise ValueError("scope has duplicate sources")
        object.__setattr__(self, "table", t)

    @property
    def shape(self) -> tuple:
        return self.table.shape

    def axis(self, source: int) -> int:
        return self.scope.index(source)

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.table < 0):
            raise ValueError("PMF has negative entries")
        total = float(self.table.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(f"PMF sums to {total!r}, not 1")


@dataclass(frozen=True, eq=False)
class ConditionalPmf:
    """``p(i_target | i_given)``; axes follow ``scope``, which lists target and given sources."""

    scope: tuple
    given: tuple
    table: np.ndarray

    @property
    def target(self) -> tuple:
        return tuple(s for s in self.scope if s not in self.given)


def _check_cells(shape, max_cells):
    cells = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
    if cells > max_cells:
        raise CapacityError(f"PMF over {shape} has {cells} cells (cap {max_cells})")
    return cells


def _smooth(counts: np.ndarray, n_samples: int) -> np.ndarray:
    cells = counts.size
    eps = 1.0 / (max(n_samples, 1) * cells)
    p = counts / max(n_samples, 1) + eps
    return p / p.sum()


def estimate_joint_pmfs(
    model: CovarianceModel,
    quantizers: Mapping[int, ScalarQuantizer],
    scopes: Sequence[Sequence[int]],
    n_samples: int,
    seed: int,
    *,
    stream: int = 0,
    batch_size: int = 100_000,
    max_cells: int = MAX_CELLS,
) -> list[JointPmf]:
    """Estimate several joint PMFs from one shared set of samples.

    Samples are drawn from the model restricted to the union of the scopes.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    scopes = [tuple(int(s) for s in sc) for sc in scopes]
    union = sorted({s for sc in scopes for s in sc})
    pos = {s: k for k, s in enumerate(union)}
    shapes = [tuple(quantizers[s].L for s in sc) for sc in scopes]
    sizes = [_check_cells(sh, max_cells) for sh in shapes]
    counts = [np.zeros(sz, dtype=np.int64) for sz in sizes]
    sub = model if len(union) == model.n_sources else model.submodel(union)
    for u in sample_batches(sub, seed, n_samples, batch_size, stream):
        ut = np.ascontiguousarray(u.T)
        idx = {s: quantizers[s].quantize(ut[pos[s]]) for s in union}
        for c, sc, sh in zip(counts, scopes, shapes):
            if not sc:
                c[0] += u.shape[0]
                continue
            flat = np.ravel_multi_index(tuple(idx[s] for s in sc), sh)
            c += np.bincount(flat, minlength=c.size)
    return [
        JointPmf(sc, _smooth(c.astype(float), n_samples).reshape(sh))
        for c, sc, sh in zip(counts, scopes, shapes)
    ]


def estimate_joint_pmf(
    model: CovarianceModel,
    quantizers: Mapping[int, ScalarQuantizer],
    scope: Sequence[int],
    n_samples: int,
    seed: int,
    **kwargs,
) -> JointPmf:
    return estimate_joint_pmfs(model, quantizers, [scope], n_samples, seed, **kwargs)[0]


def estimate_pooled_pair_pmf(
    model: CovarianceModel,
    hub_quantizer: ScalarQuantizer,
    leaf_quantizer: ScalarQuantizer,
    hub: int,
    leaves: Sequence[int],
    n_samples: int,
    seed: int,
    *,
    stream: int = 0,
    batch_size: int = 100_000,
) -> JointPmf:
    """Joint PMF of ``(hub, leaf)`` pooled over exchangeable leaves.

    Each sample contributes one pair per leaf; the returned scope is
    ``(hub, leaves[0])``.
    """
    union = [hub, *leaves]
    sub = model.submodel(union)
    shape = (hub_quantizer.L, leaf_quantizer.L)
    counts = np.zeros(shape[0] * shape[1], dtype=np.int64)
    for u in sample_batches(sub, seed, n_samples, batch_size, stream):
        i0 = hub_quantizer.quantize(u[:, 0])
        il = leaf_quantizer.quantize(u[:, 1:])
        flat = np.ravel_multi_index((np.repeat(i0[:, None], il.shape[1], axis=1), il), shape)
        counts += np.bincount(flat.ravel(), minlength=counts.size)
    total = n_samples * len(leaves)
    return JointPmf((hub, leaves[0]), _smooth(counts.astype(float), total).reshape(shape))


def marginalize(pmf: JointPmf, subset: Sequence[int]) -> JointPmf:
    """Sum out every axis not in ``subset``; kept axes stay in scope order."""
    subset = set(int(s) for s in subset)
    if not subset <= set(pmf.scope):
        raise ValueError(f"{sorted(subset - set(pmf.scope))} not in scope {pmf.scope}")
    drop = tuple(k for k, s in enumerate(pmf.scope) if s not in subset)
    keep = tuple(s for s in pmf.scope if s in subset)
    return JointPmf(keep, pmf.table.sum(axis=drop) if drop else pmf.table.copy())


def conditional_table(pmf: JointPmf, target: Sequence[int], given: Sequence[int]) -> ConditionalPmf:
    """``p(i_target | i_given)`` as joint over marginal of ``given``."""
    target, given = set(target), set(given)
    if target & given:
        raise ValueError("target and given overlap")
    joint = marginalize(pmf, target | given)
    denom = marginalize(joint, given)
    # Broadcast the given-marginal back over the joint's axes.
    shape = [joint.table.shape[k] if s in given else 1 for k, s in enumerate(joint.scope)]
    d = denom.table.reshape(shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(d > 0, joint.table / np.where(d > 0, d, 1.0), 0.0)
    giv = tuple(s for s in joint.scope if s in given)
    return ConditionalPmf(joint.scope, giv, table)


def star_joint(hub_marginal: np.ndarray, leaf_conditionals: Sequence[np.ndarray], scope: Sequence[int],
               max_cells: int = MAX_CELLS) -> JointPmf:
    """Materialize ``p(i0) * prod_n p(i_n | i0)`` as a dense joint.

    ``leaf_conditionals[k]`` has shape ``(|I0|, |I_k|)``.
    """
    shape = (hub_marginal.size, *(c.shape[1] for c in leaf_conditionals))
    _check_cells(shape, max_cells)
    table = np.asarray(hub_marginal, dtype=float).copy()
    for k, c in enumerate(leaf_conditionals):
        table = table[..., None] * c.reshape((c.shape[0],) + (1,) * k + (c.shape[1],))
    return JointPmf(tuple(scope), table / table.sum())
