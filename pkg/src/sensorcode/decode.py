"""Conditional-mean decoding from received codewords.

Two decoders are provided.  :func:`exact_posterior` marginalizes a joint PMF
over the index tuples compatible with the received codewords, touching only
the preimage sets.  :func:`sum_product_decode` runs belief propagation on the
factor graph of a factorization; codeword constraints enter as 0/1 masks on
the variable nodes, which is equivalent to restricting every factor sum to
the preimage sets.  Both work on batches: masks have shape ``(B, L_n)``.
"""
from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .index_assign import IndexAssignment
from .pmf import JointPmf
from .quantizer import ScalarQuantizer

log = logging.getLogger(__name__)


def preimage_tuples(assignments: Mapping[int, IndexAssignment], scope: Sequence[int], w: Mapping[int, int],
                    alphabet: Mapping[int, int]) -> list[np.ndarray]:
    """Per source of ``scope``: the indices compatible with its codeword.

    Sources without an assignment (not encoded) keep their whole alphabet.
    """
    sets = []
    for s in scope:
        a = assignments.get(s)
        if a is None:
            sets.append(np.arange(alphabet[s]))
        else:
            sets.append(a.preimage(int(w[s])))
    return sets


@dataclass
class TermCounter:
    terms: int = 0
    estimates: int = 0
    fallbacks: int = 0


def exact_posterior(pmf: JointPmf, assignments: Mapping[int, IndexAssignment], w: Mapping[int, int],
                    target: int, counter: TermCounter | None = None) -> np.ndarray:
    """``p(i_target = l | w)`` by summing the joint over compatible index tuples only."""
    alphabet = dict(zip(pmf.scope, pmf.shape))
    sets = preimage_tuples(assignments, pmf.scope, w, alphabet)
    sub = pmf.table[np.ix_(*sets)]
    ax = pmf.axis(target)
    part = sub.sum(axis=tuple(k for k in range(sub.ndim) if k != ax))
    out = np.zeros(alphabet[target])
    out[sets[ax]] = part
    if counter is not None:
        counter.terms += sub.size
        counter.estimates += 1
    total = out.sum()
    if not total > 0:
        if counter is not None:
            counter.fallbacks += 1
        out[sets[ax]] = 1.0
        total = out.sum()
    return out / total


def cme_estimate(posterior: np.ndarray, quantizer: ScalarQuantizer):
    """``sum_l level_l * p(l | w)``; works on a single posterior or a ``(B, L)`` batch."""
    return np.asarray(posterior) @ quantizer.levels


def codeword_masks(assignment: IndexAssignment | None, w, L: int) -> np.ndarray:
    """``(B, L)`` 0/1 masks of indices compatible with codewords ``w`` (all ones if not encoded)."""
    w = np.atleast_1d(np.asarray(w))
    if assignment is None:
        return np.ones((w.shape[0], L))
    if np.any(w < 0) or np.any(w >= assignment.K):
        raise ValueError(f"codeword out of range 0..{assignment.K - 1}")
    return (assignment.map[None, :] == w[:, None]).astype(float)


@dataclass
class FactorGraph:
    """Variables (source ids with alphabet sizes) and factors ``(scope, table)``."""

    alphabet: dict
    factors: list  # (scope tuple, table with one axis per scope entry)
    var_factors: dict = field(init=False)

    def __post_init__(self):
        self.factors = [(tuple(int(s) for s in sc), np.asarray(t, dtype=float)) for sc, t in self.factors]
        self.var_factors = {v: [] for v in self.alphabet}
        for m, (sc, t) in enumerate(self.factors):
            if t.shape != tuple(self.alphabet[s] for s in sc):
                raise ValueError(f"factor {m} table shape {t.shape} does not match scope {sc}")
            for s in sc:
                self.var_factors[s].append(m)

    @property
    def variables(self) -> list:
        return sorted(self.alphabet)

    def n_edges(self) -> int:
        return sum(len(sc) for sc, _ in self.factors)

    def components(self) -> list[list]:
        """Connected components as lists of variables (each sorted)."""
        seen, comps = set(), []
        for v in self.variables:
            if v in seen:
                continue
            comp, queue = [], deque([v])
            seen.add(v)
            while queue:
                x = queue.popleft()
                comp.append(x)
                for m in self.var_factors[x]:
                    for y in self.factors[m][0]:
                        if y not in seen:
                            seen.add(y)
                            queue.append(y)
            comps.append(sorted(comp))
        return comps

    def is_tree(self) -> bool:
        nodes = len(self.alphabet) + len(self.factors)
        return self.n_edges() == nodes - len(self.components())


@dataclass
class DecodeStats:
    fallbacks: int = 0
    iterations: int = 0
    messages: int = 0


def _normalize(msg: np.ndarray, feasible: np.ndarray | None, stats: DecodeStats) -> np.ndarray:
    s = msg.sum(axis=1, keepdims=True)
    bad = ~(s[:, 0] > 0) | ~np.isfinite(s[:, 0])
    if np.any(bad):
        stats.fallbacks += int(bad.sum())
        fb = np.ones((int(bad.sum()), msg.shape[1])) if feasible is None else feasible[bad].astype(float)
        msg = msg.copy()
        msg[bad] = fb
        s = msg.sum(axis=1, keepdims=True)
    return msg / s


def _factor_message(table, scope, incoming, out_var, batch):
    """``sum_{i_S \\ out} table(i_S) prod_g incoming_g(i_g)`` as a ``(batch, L_out)`` array."""
    o = scope.index(out_var)
    others = [s for s in scope if s != out_var]
    t = np.moveaxis(table, o, -1)
    if not others:
        return np.broadcast_to(t, (batch, t.size)).copy()
    # First contraction is a plain matrix product; the rest are batched products.
    x = incoming[others[0]] @ t.reshape(t.shape[0], -1)
    for s in others[1:]:
        m = incoming[s]
        x = np.matmul(m[:, None, :], x.reshape(batch, m.shape[1], -1))[:, 0, :]
    return x


def _leave_one_out(msgs: list[np.ndarray]) -> list[np.ndarray]:
    """For each position, the normalized product of all other messages."""
    n = len(msgs)
    if n == 0:
        return []
    B, L = msgs[0].shape
    prefix = [np.ones((B, L))]
    for m in msgs[:-1]:
        p = prefix[-1] * m
        prefix.append(p / np.maximum(p.sum(axis=1, keepdims=True), 1e-300))
    out = [None] * n
    suffix = np.ones((B, L))
    for k in range(n - 1, -1, -1):
        out[k] = prefix[k] * suffix
        s = suffix * msgs[k]
        suffix = s / np.maximum(s.sum(axis=1, keepdims=True), 1e-300)
    return out


def _product(msgs, B, L):
    out = np.ones((B, L))
    for m in msgs:
        out = out * m
        out = out / np.maximum(out.sum(axis=1, keepdims=True), 1e-300)
    return out


def _posteriors(graph, masks, f2v, targets, stats):
    post = {}
    for v in targets:
        B, L = masks[v].shape
        p = _product([f2v[(m, v)] for m in graph.var_factors[v]], B, L) * masks[v]
        post[v] = _normalize(p, masks[v] > 0, stats)
    return post


def _two_pass(graph: FactorGraph, masks, targets, stats):
    B = next(iter(masks.values())).shape[0]
    f2v, v2f = {}, {}
    want = set(targets)
    for comp in graph.components():
        in_comp = [t for t in comp if t in want]
        root = in_comp[0] if in_comp else comp[0]
        # BFS over the bipartite graph; nodes are ("v", id) and ("f", m).
        order, parent = [("v", root)], {("v", root): None}
        queue = deque(order)
        while queue:
            node = queue.popleft()
            kind, x = node
            nbrs = [("f", m) for m in graph.var_factors[x]] if kind == "v" else [("v", s) for s in graph.factors[x][0]]
            for nb in nbrs:
                if nb not in parent:
                    parent[nb] = node
                    order.append(nb)
                    queue.append(nb)

        def send(node, to):
            kind, x = node
            stats.messages += 1
            if kind == "v":
                L = masks[x].shape[1]
                msg = _product([f2v[(m, x)] for m in graph.var_factors[x] if m != to[1]], B, L) * masks[x]
                v2f[(x, to[1])] = _normalize(msg, masks[x] > 0, stats)
            else:
                sc, table = graph.factors[x]
                inc = {s: v2f[(s, x)] for s in sc if s != to[1]}
                f2v[(x, to[1])] = _normalize(_factor_message(table, sc, inc, to[1], B), masks[to[1]] > 0, stats)

        for node in reversed(order[1:]):
            send(node, parent[node])
        if all(t == root for t in in_comp):
            continue
        for node in order:
            kind, x = node
            if kind == "f":
                for s in graph.factors[x][0]:
                    if parent.get(("v", s)) == node:
                        send(node, ("v", s))
                continue
            facs = graph.var_factors[x]
            kids = [k for k, m in enumerate(facs) if parent.get(("f", m)) == node]
            if not kids:
                continue
            # Every incoming message is known here; products over the others
            # come from prefix/suffix sweeps instead of one product per child.
            loo = _leave_one_out([f2v[(m, x)] for m in facs])
            for k in kids:
                stats.messages += 1
                v2f[(x, facs[k])] = _normalize(loo[k] * masks[x], masks[x] > 0, stats)
    return _posteriors(graph, masks, f2v, targets, stats)


def _flooding(graph: FactorGraph, masks, targets, stats, max_iter, tol):
    B = next(iter(masks.values())).shape[0]
    v2f = {}
    for m, (sc, _) in enumerate(graph.factors):
        for s in sc:
            v2f[(s, m)] = _normalize(masks[s].copy(), masks[s] > 0, stats)
    f2v = {}
    for it in range(max_iter):
        new_f2v = {}
        for m, (sc, table) in enumerate(graph.factors):
            for s in sc:
                inc = {g: v2f[(g, m)] for g in sc if g != s}
                new_f2v[(m, s)] = _normalize(_factor_message(table, sc, inc, s, B), masks[s] > 0, stats)
                stats.messages += 1
        change = max((float(np.max(np.abs(new_f2v[k] - f2v[k]))) for k in f2v), default=np.inf)
        f2v = new_f2v
        for v in graph.variables:
            facs = graph.var_factors[v]
            loo = _leave_one_out([f2v[(m, v)] for m in facs])
            for k, m in enumerate(facs):
                v2f[(v, m)] = _normalize(loo[k] * masks[v], masks[v] > 0, stats)
        stats.iterations = it + 1
        if change < tol:
            break
    return _posteriors(graph, masks, f2v, targets, stats)


def sum_product_decode(graph: FactorGraph, masks: Mapping[int, np.ndarray], targets: Sequence[int] | None = None,
                       schedule: str = "auto", max_iter: int = 50, tol: float = 1e-8,
                       stats: DecodeStats | None = None) -> dict:
    """Posteriors ``{source: (B, L) array}`` for ``targets`` (default: all variables).

    ``schedule`` is ``"tree"`` (exact two-pass, tree graphs only), ``"flooding"``
    (synchronous updates until messages change by less than ``tol`` or
    ``max_iter`` sweeps) or ``"auto"``.
    """
    stats = stats if stats is not None else DecodeStats()
    targets = graph.variables if targets is None else [int(t) for t in targets]
    masks = {v: np.atleast_2d(np.asarray(masks[v], dtype=float)) for v in graph.variables}
    if schedule == "auto":
        schedule = "tree" if graph.is_tree() else "flooding"
    if schedule == "tree":
        if not graph.is_tree():
            raise ValueError("two-pass schedule needs a cycle-free factor graph")
        return _two_pass(graph, masks, targets, stats)
    if schedule == "flooding":
        return _flooding(graph, masks, targets, stats, max_iter, tol)
    raise ValueError(f"unknown schedule {schedule!r}")


@dataclass
class Decoder:
    """Batch decoder: codewords in, conditional-mean estimates out."""

    graph: FactorGraph
    quantizers: dict
    assignments: dict  # source -> IndexAssignment; absent sources are not encoded
    targets: tuple
    chunk: int = 1024
    stats: DecodeStats = field(default_factory=DecodeStats)

    def masks(self, codewords: Mapping[int, np.ndarray], B: int) -> dict:
        out = {}
        for v in self.graph.variables:
            L = self.graph.alphabet[v]
            a = self.assignments.get(v)
            if a is None:
                out[v] = np.ones((B, L))
            else:
                out[v] = codeword_masks(a, codewords[v], L)
        return out

    def decode(self, codewords: Mapping[int, np.ndarray]) -> np.ndarray:
        """``(B, len(targets))`` estimates for codeword arrays ``{source: (B,)}``."""
        enc = [v for v in self.graph.variables if v in self.assignments]
        B = int(np.asarray(codewords[enc[0]]).shape[0]) if enc else 0
        out = np.zeros((B, len(self.targets)))
        for lo in range(0, B, self.chunk):
            hi = min(B, lo + self.chunk)
            cw = {v: np.asarray(codewords[v])[lo:hi] for v in enc}
            post = sum_product_decode(self.graph, self.masks(cw, hi - lo), self.targets, stats=self.stats)
            for k, t in enumerate(self.targets):
                out[lo:hi, k] = cme_estimate(post[t], self.quantizers[t])
        return out


def brute_force_posteriors(graph: FactorGraph, masks: Mapping[int, np.ndarray]) -> dict:
    """Reference marginals of the masked factor product by full enumeration (small graphs only)."""
    vars_ = graph.variables
    shape = tuple(graph.alphabet[v] for v in vars_)
    B = next(iter(masks.values())).shape[0]
    out = {v: np.zeros((B, graph.alphabet[v])) for v in vars_}
    for i in itertools.product(*(range(n) for n in shape)):
        idx = dict(zip(vars_, i))
        val = np.ones(B)
        for sc, table in graph.factors:
            val = val * table[tuple(idx[s] for s in sc)]
        for v in vars_:
            val = val * masks[v][:, idx[v]]
        for v in vars_:
            out[v][:, idx[v]] += val
    return {v: p / p.sum(axis=1, keepdims=True) for v, p in out.items()}
