"""Index assignments and the greedy index-reuse optimizer.

An index assignment maps ``L`` quantizer indices onto ``K <= L`` codewords.
Designs start from the identity map and repeatedly merge two codewords of
one encoder, always picking the merge with the smallest resulting
index-assignment distortion ``d_d``.

Distortion bookkeeping uses, for every codeword tuple ``w``,

    p(w)   = sum_{i in Q(w)} p(i)
    s_m(w) = sum_{i in Q(w)} p(i) * level_m(i_m)

so that the CME estimate is ``s_m(w) / p(w)`` and

    d_d = sum_m [ E{level_m^2} - sum_w s_m(w)^2 / p(w) ].

Merging two codewords of one encoder only changes the terms of the two
affected codeword columns, which is what the optimizer exploits.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pmf import JointPmf
from .quantizer import ScalarQuantizer, quantizer_mse


def merge_codewords(f: Sequence[int], a: int, b: int) -> np.ndarray:
    """Merge codewords ``a < b`` of mapping vector ``f``; codewords above ``b`` shift down."""
    f = np.asarray(f, dtype=np.int64)
    k = int(f.max()) + 1 if f.size else 0
    if not 0 <= a < b <= k - 1:
        raise ValueError(f"need 0 <= a < b <= {k - 1}, got a={a}, b={b}")
    e = f.copy()
    e[(f == a) | (f == b)] = a
    e[f > b] -= 1
    return e


@dataclass(frozen=True, eq=False)
class IndexAssignment:
    """Mapping vector ``map[i] = w`` from quantizer index to codeword."""

    map: np.ndarray

    def __post_init__(self):
        m = np.array(self.map, dtype=np.int64)
        if m.ndim != 1 or m.size < 1:
            raise ValueError("mapping vector must be 1-D and non-empty")
        m.setflags(write=False)
        object.__setattr__(self, "map", m)

    @classmethod
    def identity(cls, L: int) -> "IndexAssignment":
        return cls(np.arange(L))

    @classmethod
    def constant(cls, L: int) -> "IndexAssignment":
        return cls(np.zeros(L, dtype=np.int64))

    @property
    def L(self) -> int:
        return self.map.size

    @property
    def K(self) -> int:
        return int(self.map.max()) + 1

    @property
    def preimages(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.map == w) for w in range(self.K)]

    def preimage(self, w: int) -> np.ndarray:
        if not 0 <= w < self.K:
            raise ValueError(f"codeword {w} out of range 0..{self.K - 1}")
        return np.flatnonzero(self.map == w)

    def is_surjective(self) -> bool:
        return int(self.map.min()) == 0 and np.unique(self.map).size == self.K

    def max_preimage(self) -> int:
        return int(np.bincount(self.map).max())

    def validate(self) -> None:
        if not self.is_surjective():
            raise ValueError(f"mapping {self.map.tolist()} is not surjective onto 0..{self.K - 1}")
        if self.max_preimage() > self.L - self.K + 1:
            raise ValueError("preimage larger than L - K + 1")

    def merge(self, a: int, b: int) -> "IndexAssignment":
        return IndexAssignment(merge_codewords(self.map, a, b))

    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.L, self.K))
        out[np.arange(self.L), self.map] = 1.0
        return out

    def __call__(self, i):
        return self.map[i]

    def __eq__(self, other):
        if not isinstance(other, IndexAssignment):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    __hash__ = None


def _mapping_matrix(L: int, assignment: IndexAssignment | None) -> np.ndarray:
    if assignment is None:
        return np.ones((L, 1))
    if assignment.L != L:
        raise ValueError(f"assignment over {assignment.L} indices, alphabet has {L}")
    return assignment.one_hot()


def _contract(tensor: np.ndarray, axis: int, matrix: np.ndarray) -> np.ndarray:
    """Replace ``axis`` of ``tensor`` (size L) by ``tensor x_axis matrix`` (size k)."""
    out = np.tensordot(tensor, matrix, axes=([axis], [0]))
    return np.moveaxis(out, -1, axis)


def _weighted_channels(pmf: JointPmf, quantizers: Mapping[int, ScalarQuantizer], targets):
    """Stack ``p`` and ``level_m * p`` for each target ``m``; also return ``sum_m E{level_m^2}``."""
    P = pmf.table
    chans = [P]
    e2 = 0.0
    for m in targets:
        ax = pmf.axis(m)
        lv = quantizers[m].levels
        if lv.size != P.shape[ax]:
            raise ValueError(f"quantizer of source {m} has {lv.size} levels, PMF axis has {P.shape[ax]}")
        shape = [1] * P.ndim
        shape[ax] = lv.size
        w = lv.reshape(shape)
        chans.append(P * w)
        e2 += float(np.sum(P * w * w))
    return np.stack(chans), e2


def _sum_ratio(agg: np.ndarray) -> np.ndarray:
    """``sum_{c>=1} agg_c^2 / agg_0`` over the trailing axes, per leading group."""
    p = agg[0]
    s = agg[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(p > 0, np.sum(s * s, axis=0) / np.where(p > 0, p, 1.0), 0.0)
    return r


def distortion_dd(
    pmf: JointPmf,
    quantizers: Mapping[int, ScalarQuantizer],
    assignments: Mapping[int, IndexAssignment],
    targets: Sequence[int],
) -> float:
    """Index-assignment distortion ``d_d`` summed over ``targets``.

    Sources in the PMF scope without an assignment contribute no codeword
    (their axis is summed out), which covers targets that are not encoders.
    """
    V, e2 = _weighted_channels(pmf, quantizers, targets)
    for ax, s in enumerate(pmf.scope):
        V = _contract(V, ax + 1, _mapping_matrix(pmf.shape[ax], assignments.get(s)))
    return float(e2 - _sum_ratio(V).sum())


def distortion_dq(quantizers: Mapping[int, ScalarQuantizer], targets: Sequence[int]) -> float:
    return float(sum(quantizer_mse(quantizers[m]) for m in targets))


@dataclass
class ClusterCodeDesign:
    encoders: tuple
    targets: tuple
    assignments: dict
    pmf: JointPmf
    quantizers: dict
    history: list = field(default_factory=list)  # (encoder, a, b, d_d after merge)
    n_candidates: int = 0

    @property
    def L(self) -> int:
        return self.assignments[self.encoders[0]].L

    @property
    def K(self) -> int:
        return self.assignments[self.encoders[0]].K

    def distortion_dd(self) -> float:
        return distortion_dd(self.pmf, self.quantizers, self.assignments, self.targets)


def total_distortion(design: ClusterCodeDesign) -> tuple[float, float, float]:
    """``(d_q, d_d, d_q + d_d)`` for the design's target set."""
    dq = distortion_dq(design.quantizers, design.targets)
    dd = design.distortion_dd()
    return dq, dd, dq + dd


def optimize_index_reuse(
    pmf: JointPmf,
    quantizers: Mapping[int, ScalarQuantizer],
    encoders: Sequence[int],
    targets: Sequence[int],
    L: int,
    K_target: int,
) -> ClusterCodeDesign:
    """Greedy codeword merging down to ``K_target`` codewords per encoder.

    Each outer pass visits the encoders in the given order; every encoder
    commits the merge ``(a, b)`` with the smallest ``d_d`` over all pairs,
    evaluated with the other encoders' current maps.  The first pair in
    lexicographic order wins ties.
    """
    encoders = tuple(int(n) for n in encoders)
    targets = tuple(int(m) for m in targets)
    if not encoders:
        raise ValueError("need at least one encoder")
    if not 1 <= K_target <= L:
        raise ValueError(f"K_target must be in 1..{L}, got {K_target}")
    missing = set(encoders) | set(targets)
    missing -= set(pmf.scope)
    if missing:
        raise ValueError(f"PMF scope {pmf.scope} lacks sources {sorted(missing)}")
    for n in encoders:
        if pmf.shape[pmf.axis(n)] != L:
            raise ValueError(f"encoder {n} has alphabet {pmf.shape[pmf.axis(n)]}, expected {L}")

    V, e2 = _weighted_channels(pmf, quantizers, targets)
    # Sum out every non-encoder axis once; the remaining axes follow `encoders`.
    others = [ax for ax, s in enumerate(pmf.scope) if s not in encoders]
    for ax in sorted(others, reverse=True):
        V = V.sum(axis=ax + 1)
    kept = [s for s in pmf.scope if s in encoders]
    V = np.moveaxis(V, [kept.index(n) + 1 for n in encoders], list(range(1, len(encoders) + 1)))

    maps = {n: IndexAssignment.identity(L) for n in encoders}
    design = ClusterCodeDesign(encoders, targets, maps, pmf, dict(quantizers))
    k = L
    while k > K_target:
        for pos, n in enumerate(encoders):
            Vn = V
            for p2, g in enumerate(encoders):
                if g != n:
                    Vn = _contract(Vn, p2 + 1, maps[g].one_hot())
            Vn = np.moveaxis(Vn, pos + 1, 1).reshape(V.shape[0], L, -1)

            onehot = maps[n].one_hot()  # (L, k)
            pairs = list(itertools.combinations(range(k), 2))
            unions = onehot[:, [a for a, _ in pairs]] + onehot[:, [b for _, b in pairs]]
            groups = np.concatenate([onehot, unions], axis=1)
            agg = np.einsum("cir,ig->cgr", Vn, groups, optimize=True)
            T = _sum_ratio(agg).sum(axis=-1)
            T_col, T_pair = T[:k], T[k:]
            base = e2 - T_col.sum()
            a_idx = np.array([a for a, _ in pairs])
            b_idx = np.array([b for _, b in pairs])
            d = base + T_col[a_idx] + T_col[b_idx] - T_pair
            best = int(np.argmin(d))
            a, b = pairs[best]
            maps[n] = maps[n].merge(a, b)
            design.n_candidates += len(pairs)
            design.history.append((n, a, b, float(d[best])))
        k -= 1
    return design
