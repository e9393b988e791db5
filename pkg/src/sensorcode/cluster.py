"""KLD-driven agglomerative clustering of Gaussian sources.

Every cluster ``X`` carries its KLD benefit ``dD(X) = 0.5 * log2 |R_X|``
(never positive, zero for singletons).  Merging ``X`` and ``Y`` changes the
KLD of the product-of-clusters approximation by
``dD(X | Y) - dD(X) - dD(Y)``, and the pair with the largest magnitude of
that change is merged first.

Leaves are the source indices ``0..N-1``; the cluster created by merge ``t``
(0-based) gets id ``N + t``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .gauss_model import CovarianceModel, log_det_submatrix

LOG2E = 1.0 / math.log(2.0)


def _corr(model) -> np.ndarray:
    if isinstance(model, CovarianceModel):
        return model.correlation() if model.kind != "field" else model.matrix
    return np.asarray(model, dtype=float)


def delta_kld_cluster(model, members) -> float:
    """``0.5 * log2 |R_members|`` in bits; 0 for singletons."""
    members = list(members)
    if not members:
        raise ValueError("cluster must be non-empty")
    if len(members) == 1:
        return 0.0
    return 0.5 * LOG2E * log_det_submatrix(_corr(model), members)


def delta_kld_merge(model, set_k, set_l) -> float:
    """KLD change (bits, <= 0) from merging two disjoint clusters."""
    set_k, set_l = list(set_k), list(set_l)
    if not set_k or not set_l:
        raise ValueError("clusters must be non-empty")
    if set(set_k) & set(set_l):
        raise ValueError("clusters overlap")
    return (
        delta_kld_cluster(model, set_k + set_l)
        - delta_kld_cluster(model, set_k)
        - delta_kld_cluster(model, set_l)
    )


@dataclass
class Dendrogram:
    n_leaves: int
    merges: list  # (left id, right id, new id, merge delta in bits)
    node_delta: dict  # id -> dD(cluster) in bits
    members: dict  # id -> sorted tuple of source indices
    n_logdets: int = 0

    @property
    def root(self) -> int:
        return self.merges[-1][2] if self.merges else 0

    def children(self, node: int):
        for left, right, new, _ in self.merges:
            if new == node:
                return left, right
        return None


def build_dendrogram(model) -> Dendrogram:
    R = _corr(model)
    N = R.shape[0]
    if N < 1:
        raise ValueError("need at least one source")
    members = {s: (s,) for s in range(N)}
    node_delta = {s: 0.0 for s in range(N)}
    active = list(range(N))
    calls = 0

    def half_logdet(idx):
        nonlocal calls
        calls += 1
        return 0.5 * LOG2E * log_det_submatrix(R, idx)

    scores = {}
    for k in range(N):
        for l in range(k + 1, N):
            scores[(k, l)] = half_logdet([k, l])

    merges = []
    t = 0
    while len(active) > 1:
        best, best_val = None, -1.0
        for key in sorted(scores):
            v = abs(scores[key])
            if v > best_val:
                best, best_val = key, v
        k, l = best
        r = N + t
        members[r] = tuple(sorted(members[k] + members[l]))
        delta = scores[(k, l)]
        node_delta[r] = node_delta[k] + node_delta[l] + delta
        merges.append((k, l, r, delta))
        active = [a for a in active if a not in (k, l)]
        scores = {key: v for key, v in scores.items() if k not in key and l not in key}
        for j in active:
            joint = half_logdet(members[j] + members[r])
            scores[(j, r)] = joint - node_delta[j] - node_delta[r]
        active.append(r)
        t += 1
    return Dendrogram(N, merges, node_delta, members, calls)


@dataclass
class ClusterPlan:
    clusters: list  # list of sorted tuples of source indices
    max_size: int
    kld_bits: float
    cut_nodes: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_of(self, source: int) -> int:
        for c, members in enumerate(self.clusters):
            if source in members:
                return c
        raise KeyError(source)

    def validate(self, n_sources: int) -> None:
        seen = [s for c in self.clusters for s in c]
        if sorted(seen) != list(range(n_sources)):
            raise ValueError("clusters do not partition the sources")
        if any(len(c) > self.max_size for c in self.clusters):
            raise ValueError(f"cluster larger than {self.max_size}")


def prune(dendrogram: Dendrogram, S: int) -> ClusterPlan:
    """Cut the dendrogram top-down into clusters of at most ``S`` sources.

    Subtrees are visited breadth-first from the root, left child first;
    clusters are numbered in the order they are cut.
    """
    if S < 1:
        raise ValueError("S must be at least 1")
    kids = {new: (left, right) for left, right, new, _ in dendrogram.merges}
    root = dendrogram.root
    cut = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if len(dendrogram.members[node]) <= S:
            cut.append(node)
            continue
        for child in kids[node]:
            if len(dendrogram.members[child]) <= S:
                cut.append(child)
            else:
                queue.append(child)
    clusters = [dendrogram.members[c] for c in cut]
    kld = -dendrogram.node_delta[root] + sum(dendrogram.node_delta[c] for c in cut)
    return ClusterPlan(clusters, S, kld, cut)


def product_kld(model, clusters) -> float:
    """KLD (bits) of the product-of-clusters approximation computed from scratch."""
    R = _corr(model)
    full = 0.5 * LOG2E * log_det_submatrix(R, range(R.shape[0]))
    return -full + sum(delta_kld_cluster(R, c) for c in clusters)


def dendrogram_to_dot(dendrogram: Dendrogram, plan: ClusterPlan | None = None) -> str:
    """Graphviz source of the merge tree; internal nodes carry |dD| in bits."""
    lines = ["digraph dendrogram {", "  node [fontname=Helvetica];"]
    for s in range(dendrogram.n_leaves):
        lines.append(f'  n{s} [label="u{s + 1}", shape=plaintext];')
    cut = set(plan.cut_nodes) if plan else set()
    for left, right, new, _ in dendrogram.merges:
        lines.append(f'  n{new} [label="{abs(dendrogram.node_delta[new]):.3f}", shape=ellipse];')
        for child in (left, right):
            style = ' [style=dashed, label="x"]' if child in cut else ""
            lines.append(f"  n{new} -> n{child}{style};")
    lines.append("}")
    return "\n".join(lines) + "\n"
