import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorcode.cluster import ClusterPlan, build_dendrogram, prune
from sensorcode.factorize import (
    Ccre, arborescence, build_link_graph, decoupled_kld, delta_kld_factor, factorgraph_to_dot, factorization_kld,
    factorize, link_cost, mdst,
)
from sensorcode.gauss_model import log_det_submatrix

from conftest import random_field


def brute_arborescence(cost, root):
    C = cost.shape[0]
    others = [v for v in range(C) if v != root]
    best = math.inf
    for parents in itertools.product(range(C), repeat=len(others)):
        par = dict(zip(others, parents))
        if any(p == v for v, p in par.items()):
            continue
        ok = True
        for v in others:
            seen, x = set(), v
            while x != root:
                if x in seen:
                    ok = False
                    break
                seen.add(x)
                x = par[x]
            if not ok:
                break
        if ok:
            best = min(best, sum(cost[p, v] for v, p in par.items()))
    return best


@pytest.mark.parametrize("C", [2, 3, 4, 5])
@pytest.mark.parametrize("seed", range(6))
def test_arborescence_matches_brute_force(C, seed):
    cost = np.random.default_rng(seed * 10 + C).normal(size=(C, C))
    np.fill_diagonal(cost, np.nan)
    for root in range(C):
        total, tree = arborescence(cost, root)
        assert len(tree) == C - 1
        assert {l for _, l in tree} == set(range(C)) - {root}
        assert total == pytest.approx(brute_arborescence(cost, root), abs=1e-12)


def test_link_cost_pair():
    m = random_field(4, 1.0, 0)
    c, P, Q = link_cost(m, [0, 1], [2, 3], 1, 1)
    R = m.matrix
    cands = [0.5 * math.log2(1 - R[p, q] ** 2) for p in (0, 1) for q in (2, 3)]
    assert c == pytest.approx(min(cands), abs=1e-12)
    assert len(P) == 1 and len(Q) == 1


def test_delta_kld_factor_chain_rule():
    m = random_field(4, 1.0, 1)
    whole = delta_kld_factor(m, (0, 1, 2), ())
    parts = delta_kld_factor(m, (0, 1), ()) + delta_kld_factor(m, (0, 1, 2), (0, 1))
    assert whole == pytest.approx(parts, abs=1e-12)


def test_full_chain_has_zero_kld():
    m = random_field(5, 1.0, 2)
    chain = Ccre([((0,), ()), ((1,), (0,)), ((2,), (0, 1)), ((3,), (0, 1, 2)), ((4,), (0, 1, 2, 3))])
    chain.validate(5)
    assert factorization_kld(m, chain) == pytest.approx(0.0, abs=1e-10)


def test_product_of_marginals_kld():
    m = random_field(4, 1.0, 3)
    c = Ccre([((s,), ()) for s in range(4)])
    expect = -0.5 * log_det_submatrix(m, range(4)) / math.log(2)
    assert factorization_kld(m, c) == pytest.approx(expect, abs=1e-10)


def test_ccre_violations():
    assert Ccre([((0, 1), ()), ((2,), (1,))]).violations(3) == []
    assert Ccre([((0,), ()), ((2,), (1,))]).violations(3)  # B not covered
    assert Ccre([((0, 1), ()), ((1,), (0,))]).violations(2)  # A repeats
    assert Ccre([((0, 1), ()), ((2,), (1,))]).violations(3, max_scope=1)
    assert Ccre([((0,), ())]).violations(2)  # coverage


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("S,A,B", [(2, 1, 1), (3, 1, 1), (3, 2, 1)])
def test_decoupling_identity(seed, S, A, B):
    m = random_field(14, 1.0, seed)
    plan = prune(build_dendrogram(m), S)
    res = factorize(m, plan, A, B)
    res.ccre.validate(14, max_scope=max(S, A + B))
    assert res.kld_bits == pytest.approx(decoupled_kld(plan, res.graph, res.tree), abs=1e-9)
    assert res.kld_bits <= plan.kld_bits + 1e-9
    if A == 1 and B == 1:
        assert res.ccre.is_tree()


def test_mdst_picks_best_root():
    m = random_field(10, 1.0, 5)
    plan = prune(build_dendrogram(m), 2)
    g = build_link_graph(m, plan)
    root, tree, total = mdst(g)
    assert total == pytest.approx(min(arborescence(g.cost, r)[0] for r in range(plan.n_clusters)))


def test_single_cluster():
    m = random_field(3, 1.0, 0)
    plan = ClusterPlan([(0, 1, 2)], 3, 0.0, [])
    res = factorize(m, plan)
    assert res.ccre.factors == [((0, 1, 2), ())]
    assert res.kld_bits == pytest.approx(0.0, abs=1e-10)


def test_factorgraph_dot():
    dot = factorgraph_to_dot(Ccre([((0, 1), ()), ((2,), (1,))]), 3)
    assert dot.count("--") == 4


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 10), S=st.integers(1, 4))
def test_factorization_properties(seed, n, S):
    m = random_field(n, 1.0, seed)
    plan = prune(build_dendrogram(m), S)
    res = factorize(m, plan)
    res.ccre.validate(n)
    assert len(res.ccre) <= 2 * n + 1
    assert 0.0 - 1e-9 <= res.kld_bits <= plan.kld_bits + 1e-9
