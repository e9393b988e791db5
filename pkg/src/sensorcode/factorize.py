"""Linking source clusters into a symmetric constrained chain rule expansion.

Clusters are joined by a minimum-cost directed spanning tree over a complete
link graph.  The cost of edge ``k -> l`` is the most negative KLD benefit
achievable by conditioning ``Q`` (at most ``B`` sources of cluster ``l``) on
``P`` (at most ``A`` sources of cluster ``k``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterPlan, _corr
from .errors import NumericalError
from .gauss_model import log_det_submatrix

LOG2E = 1.0 / math.log(2.0)


def _half_log2det(R, idx) -> float:
    return 0.5 * LOG2E * log_det_submatrix(R, list(idx)) if len(idx) > 1 else 0.0


def delta_kld_factor(model, scope, given) -> float:
    """KLD benefit ``0.5 * log2(|R_scope| / |R_given|)`` of factor ``p(u_A | u_B)``."""
    R = _corr(model)
    return _half_log2det(R, scope) - _half_log2det(R, given)


@dataclass
class Ccre:
    """Ordered factors ``p(u_A | u_B)``; each entry is ``(A, B)`` as sorted tuples."""

    factors: list

    def __post_init__(self):
        self.factors = [(tuple(sorted(int(s) for s in a)), tuple(sorted(int(s) for s in b)))
                        for a, b in self.factors]

    @property
    def scopes(self) -> list:
        return [tuple(sorted(a + b)) for a, b in self.factors]

    def __len__(self) -> int:
        return len(self.factors)

    def violations(self, n_sources: int, max_scope: int | None = None) -> list[str]:
        """Names of the expansion conditions this CCRE breaks (empty if valid)."""
        bad = []
        covered: set = set()
        scopes = []
        for m, (a, b) in enumerate(self.factors):
            if not a:
                bad.append(f"factor {m}: empty A")
            if set(a) & set(b):
                bad.append(f"factor {m}: A and B overlap")
            if set(a) & covered:
                bad.append(f"factor {m}: A repeats earlier sources")
            if not set(b) <= covered:
                bad.append(f"factor {m}: B not inside earlier A sets")
            if m > 0 and b and not any(set(b) <= s for s in scopes):
                bad.append(f"factor {m}: B not inside an earlier scope (symmetry)")
            if max_scope is not None and len(a) + len(b) > max_scope:
                bad.append(f"factor {m}: scope larger than {max_scope}")
            covered |= set(a)
            scopes.append(set(a) | set(b))
        if covered != set(range(n_sources)):
            bad.append("A sets do not cover all sources")
        if len(self.factors) > 2 * n_sources + 1:
            bad.append("more than 2N+1 factors")
        return bad

    def validate(self, n_sources: int, max_scope: int | None = None) -> None:
        bad = self.violations(n_sources, max_scope)
        if bad:
            raise ValueError("invalid CCRE: " + "; ".join(bad))

    def is_tree(self) -> bool:
        """Every conditioning set beyond the first factor holds at most one source."""
        return all(len(b) <= 1 for _, b in self.factors[1:])


def link_cost(model, cluster_k, cluster_l, A: int, B: int):
    """``(cost_bits, P_k, Q_l)`` minimizing the link benefit by exhaustive subset search."""
    cluster_k = sorted(int(s) for s in cluster_k)
    cluster_l = sorted(int(s) for s in cluster_l)
    if not cluster_k or not cluster_l:
        raise ValueError("clusters must be non-empty")
    if set(cluster_k) & set(cluster_l):
        raise ValueError("clusters overlap")
    if A < 1 or B < 1:
        raise ValueError("A and B must be at least 1")
    R = _corr(model)
    a, b = min(A, len(cluster_k)), min(B, len(cluster_l))
    hq = {Q: _half_log2det(R, Q) for Q in itertools.combinations(cluster_l, b)}
    best = None
    for P in itertools.combinations(cluster_k, a):
        hp = _half_log2det(R, P)
        for Q, hqv in hq.items():
            c = _half_log2det(R, P + Q) - hp - hqv
            if best is None or c < best[0]:
                best = (c, P, Q)
    return best


@dataclass
class LinkGraph:
    n_vertices: int
    cost: np.ndarray  # (C, C), NaN on the diagonal
    P: dict = field(default_factory=dict)  # (k, l) -> P_k
    Q: dict = field(default_factory=dict)  # (k, l) -> Q_l

    @property
    def edges(self) -> list:
        return [(k, l) for k in range(self.n_vertices) for l in range(self.n_vertices) if k != l]


def build_link_graph(model, plan: ClusterPlan, A: int = 1, B: int = 1) -> LinkGraph:
    C = plan.n_clusters
    if C < 1:
        raise ValueError("need at least one cluster")
    cost = np.full((C, C), np.nan)
    g = LinkGraph(C, cost)
    for k, l in g.edges:
        c, P, Q = link_cost(model, plan.clusters[k], plan.clusters[l], A, B)
        cost[k, l] = c
        g.P[(k, l)] = P
        g.Q[(k, l)] = Q
    return g


def _find_cycle(nodes, inc, edges, root):
    done = set()
    for start in nodes:
        path, pos = [], {}
        v = start
        while v != root and v not in done and v not in pos:
            pos[v] = len(path)
            path.append(v)
            v = edges[inc[v]][0]
        if v in pos:
            return path[pos[v]:]
        done.update(path)
    return None


def _edmonds(nodes, edges, root):
    """Chu-Liu/Edmonds; ``edges`` is a list of ``(u, v, cost)``, returns chosen edge indices."""
    inc = {}
    for idx, (u, v, c) in enumerate(edges):
        if v == root or u == v:
            continue
        if v not in inc or c < edges[inc[v]][2]:
            inc[v] = idx
    missing = [v for v in nodes if v != root and v not in inc]
    if missing:
        raise ValueError(f"vertices {missing} have no incoming edge")
    cycle = _find_cycle(nodes, inc, edges, root)
    if cycle is None:
        return sorted(inc.values())
    cyc = set(cycle)
    x = max(nodes) + 1
    new_nodes = [n for n in nodes if n not in cyc] + [x]
    new_edges, origin = [], []
    for idx, (u, v, c) in enumerate(edges):
        if u in cyc and v in cyc:
            continue
        if v in cyc:
            new_edges.append((u, x, c - edges[inc[v]][2]))
        elif u in cyc:
            new_edges.append((x, v, c))
        else:
            new_edges.append((u, v, c))
        origin.append(idx)
    chosen = [origin[i] for i in _edmonds(new_nodes, new_edges, root)]
    enter = next(e for e in chosen if edges[e][1] in cyc)
    kept = [inc[v] for v in cycle if v != edges[enter][1]]
    return sorted(chosen + kept)


def arborescence(cost: np.ndarray, root: int):
    """Minimum spanning arborescence rooted at ``root``: ``(total, [(k, l), ...])``."""
    C = cost.shape[0]
    edges = [(k, l, float(cost[k, l])) for k in range(C) for l in range(C) if k != l]
    chosen = _edmonds(list(range(C)), edges, root)
    tree = sorted((edges[i][0], edges[i][1]) for i in chosen)
    return float(sum(cost[k, l] for k, l in tree)), tree


def mdst(graph: LinkGraph):
    """Minimum directed spanning tree over every root; returns ``(root, edges, total)``."""
    best = None
    for r in range(graph.n_vertices):
        total, tree = arborescence(graph.cost, r)
        if best is None or total < best[2]:
            best = (r, tree, total)
    return best


def build_factorization(plan: ClusterPlan, graph: LinkGraph, tree, root: int) -> Ccre:
    """Depth-first walk of the tree (children in ascending order) emitting the factors."""
    children = {k: [] for k in range(plan.n_clusters)}
    for k, l in tree:
        children[k].append(l)
    factors = [(plan.clusters[root], ())]
    seen = {root}

    def visit(k):
        for l in sorted(children[k]):
            if l in seen:
                raise ValueError("tree has a cycle")
            seen.add(l)
            P, Q = graph.P[(k, l)], graph.Q[(k, l)]
            factors.append((Q, P))
            rest = tuple(s for s in plan.clusters[l] if s not in Q)
            if rest:
                factors.append((rest, Q))
            visit(l)

    visit(root)
    if len(seen) != plan.n_clusters:
        raise ValueError("tree does not span all clusters")
    return Ccre(factors)


def factorization_kld(model, ccre: Ccre) -> float:
    """``D(p || p_hat)`` in bits for a Gaussian model and a CCRE."""
    R = _corr(model)
    total = -_half_log2det(R, range(R.shape[0])) if R.shape[0] > 1 else 0.0
    for a, b in ccre.factors:
        total += _half_log2det(R, a + b) - _half_log2det(R, b)
    return total


def decoupled_kld(plan: ClusterPlan, graph: LinkGraph, tree) -> float:
    """Cluster KLD plus the link benefits of the tree edges."""
    return plan.kld_bits + float(sum(graph.cost[k, l] for k, l in tree))


@dataclass
class FactorizationResult:
    ccre: Ccre
    graph: LinkGraph
    root: int
    tree: list
    kld_bits: float


def factorize(model, plan: ClusterPlan, A: int = 1, B: int = 1, tol: float = 1e-6) -> FactorizationResult:
    """Link graph, MDST and CCRE in one call; checks the KLD decoupling identity."""
    graph = build_link_graph(model, plan, A, B)
    root, tree, _ = mdst(graph)
    ccre = build_factorization(plan, graph, tree, root)
    kld = factorization_kld(model, ccre)
    dec = decoupled_kld(plan, graph, tree)
    if abs(kld - dec) > tol:
        raise NumericalError(f"KLD decoupling mismatch: {kld!r} vs {dec!r}")
    return FactorizationResult(ccre, graph, root, tree, kld)


def factorgraph_to_dot(ccre: Ccre, n_sources: int) -> str:
    lines = ["graph factors {", "  node [fontname=Helvetica];"]
    for s in range(n_sources):
        lines.append(f'  u{s} [label="u{s + 1}", shape=circle];')
    for m, (a, b) in enumerate(ccre.factors):
        lab = ",".join(str(s + 1) for s in a)
        if b:
            lab += "|" + ",".join(str(s + 1) for s in b)
        lines.append(f'  f{m} [label="p({lab})", shape=box];')
        for s in sorted(a + b):
            lines.append(f"  f{m} -- u{s};")
    lines.append("}")
    return "\n".join(lines) + "\n"
