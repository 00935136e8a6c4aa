import itertools

import pytest
from hypothesis import given, settings, strategies as st

from conftest import lift_of
from stk.builtins import SPACE_CATALOG, node, node_x, nodeplus, triple, twin, whisker
from stk.errors import CoverNotSuitable, NotLocalEmbedding, StageInvariantBroken
from stk.finspace import (
    SpaceMap,
    disjoint_union,
    fiber_product,
    find_isomorphism,
    identity,
    inclusion,
    point_space,
)
from stk.network import (
    base_change_network,
    canonical_network,
    descend,
    double_cover,
    fibered_power,
    glue_subnetwork,
    gluing_hom_check,
    multiplicity,
    network_from_cover,
    product_network,
    subnetwork_check,
    suitable_cover,
    universal_lift,
    verify_cover,
)


def test_fibered_powers():
    fp = fibered_power(node(), 2)
    assert len(fp.space) == 6 and len(fp.Yn) == 2
    g = whisker()
    fp1 = fibered_power(g, 1)
    assert len(fp1.Yn) == len(g.source) and not fp1.diagonal
    assert len(fibered_power(triple(), 3).Yn) == 6


@pytest.mark.parametrize("n", [2, 3])
def test_power_permutation_equivariance(n):
    fp = fibered_power(triple(), n)
    for perm in itertools.permutations(range(n)):
        act = fp.permutation_action(perm)
        assert {act[p] for p in fp.Yn.points} == set(fp.Yn.points)
        for a, b in fp.Yn.relation():
            assert fp.Yn.leq(act[a], act[b])


def test_multiplicity():
    assert multiplicity(node()) == 2
    assert multiplicity(whisker()) == 1
    assert multiplicity(triple()) == 3


def test_canonical_network_node():
    N = canonical_network(node())
    assert N.summary() == {(): (3, 1), (1,): (4, 2), (2,): (4, 2), (1, 2): (2, 2)}
    assert N.verify_functoriality()


def test_canonical_network_closed_embedding():
    N = canonical_network(whisker())
    assert len(N.nodes) == 2


def test_canonical_network_requires_local_embedding():
    X = node_x()
    with pytest.raises(NotLocalEmbedding):
        canonical_network(SpaceMap(X, point_space(), {x: "pt" for x in X.points}))


def test_gluing_examples():
    N = canonical_network(node())
    assert len(glue_subnetwork(N, [{1}, {2}]).S) == 6
    assert glue_subnetwork(N, [{1}]).S == N.nodes[frozenset({1})]
    T = canonical_network(triple())
    assert len(glue_subnetwork(T, [{1, 2}, {1, 3}]).S) == 6


def test_gluing_hom_property_node():
    out = gluing_hom_check(canonical_network(node()), [{1}, {2}], 3)
    assert all(ok for _, _, ok in out.values())
    assert out[3] == (443, 443, True)


def test_descend_node():
    N2 = canonical_network(node())
    N1 = descend(N2)
    assert N1.nodes[frozenset({1})] is not N2.nodes[frozenset({1})]
    assert len(N1.nodes[frozenset({1})]) == 4
    assert set(N1.history[-1].values()) == {"closed embedding"}
    N0 = descend(N1)
    assert len(N0.target) == 6
    with pytest.raises(StageInvariantBroken):
        descend(N0)


def test_descend_triple_doubles_branch_nodes():
    N = canonical_network(triple())
    N = descend(descend(N))
    assert N.stage == 1
    assert len(N.nodes[frozenset({1})]) == 9


def test_descend_closed_embedding_is_fixed():
    N = canonical_network(whisker())
    N0 = descend(N)
    assert find_isomorphism(N0.target, N.target) is not None


@pytest.mark.parametrize("name,points,fibers", [
    ("NODE", 6, {"η1": 2, "η2": 2, "c": 2}),
    ("TRIPLE", 15, {"η1": 3, "η2": 3, "η3": 3, "c": 6}),
    ("TWIN", 5, {"η1": 2, "η2": 1, "c": 2}),
    ("NODEPLUS", 7, {"η1": 2, "η2": 2, "c": 2, "ξ": 1}),
])
def test_universal_lift_sizes(name, points, fibers):
    res = lift_of(name)
    assert len(res.F) == points
    assert res.fiber_sizes() == fibers
    assert len(res.stages) == len(res.network.labels) + 1


@pytest.mark.parametrize("name", sorted(SPACE_CATALOG))
def test_universal_lift_certificates(name):
    res = lift_of(name)
    assert all(res.certificates.values())
    assert "F×g(Y)≅S" in res.certificates and "F∖S≅X∖g(Y)" in res.certificates


def test_node_pullback_of_lift_has_eight_points():
    res = lift_of("NODE")
    P, _, _ = fiber_product(node(), res.e)
    assert len(P) == 8
    assert find_isomorphism(P, disjoint_union(node().source, node().source)) is not None


def test_lift_jobs_give_same_result():
    a = universal_lift(triple(), verify=False)
    b = universal_lift(triple(), verify=False, jobs=3)
    assert a.F == b.F and a.e.assign == b.e.assign


def test_base_change_examples():
    g = node()
    X = g.target
    rep = base_change_network(g, SpaceMap(point_space("z"), X, {"z": "c"}))
    assert rep["ok"] and len(rep["F'"].F) == 2 and not rep["F'"].F.relation()
    assert base_change_network(g, identity(X))["ok"]
    branch = X.subspace({"η1", "c"})
    rep = base_change_network(g, inclusion(branch, X))
    assert len(rep["F'"].F) == 4


def test_base_change_multiplicity_drop():
    g = node()
    u = SpaceMap(point_space("z"), g.target, {"z": "η1"})
    assert not base_change_network(g, u)["ok"]
    assert base_change_network(g, u, keep_labels=True)["ok"]


@pytest.mark.parametrize("name,K,L", [("NODE", {1}, {1, 2}), ("TRIPLE", {1}, {1, 2}), ("TRIPLE", {1, 2}, {1, 2, 3})])
def test_subnetworks(name, K, L):
    N = canonical_network(SPACE_CATALOG[name]())
    assert subnetwork_check(N, K, L)


def test_suitable_cover_node():
    cover = suitable_cover(node(), lift_of("NODE"))
    assert len(cover.U) == 6 and len(cover.W) == 2
    assert len(cover.W[0] & cover.W[1]) == 2


def test_suitable_cover_closed_embedding_and_twin():
    c = suitable_cover(whisker(), lift_of("WHISKER"))
    assert len(c.U) == 3 and len(c.W) == 1
    t = suitable_cover(twin(), lift_of("TWIN"))
    assert len(t.U) == 5 and len(t.sheets) == 2


@pytest.mark.parametrize("name", sorted(SPACE_CATALOG))
def test_network_from_cover_agrees(name):
    g = SPACE_CATALOG[name]()
    N = network_from_cover(g, suitable_cover(g, lift_of(name)))
    assert N.history[-1]["agrees_with_canonical"]


def test_double_cover_is_pruned_or_rejected():
    g = node()
    cover = double_cover(suitable_cover(g, lift_of("NODE")))
    with pytest.raises(CoverNotSuitable):
        network_from_cover(g, cover, prune=False)
    N = network_from_cover(g, cover)
    assert N.history[-1]["pruned"] and N.history[-1]["agrees_with_canonical"]


def test_cover_violation_detected():
    g = node()
    cover = suitable_cover(g, lift_of("NODE"))
    cover.sheets = cover.sheets[:1]
    with pytest.raises(CoverNotSuitable):
        verify_cover(g, cover)


def _branch(X, k, tag):
    Y = point_space(tag)
    return SpaceMap(Y, X, {tag: k})


def test_product_network_trivial_agreements():
    X = nodeplus().target
    a, b = _branch(X, "ξ", "u"), _branch(X, "c", "v")
    assert product_network(a, b)["status"] == "agree"
    w = whisker()
    assert product_network(w, w)["status"] == "agree"


def test_product_network_node_branches_disagree():
    g = node()
    Y = g.source
    parts = [Y.subspace(c) for c in Y.components()]
    maps = [SpaceMap(P, g.target, {y: g.assign[y] for y in P.points}) for P in parts]
    out = product_network(*maps)
    assert out["product_points"] == 3
    assert out["disjoint_union_points"] == 6
    assert out["status"] == "discrepancy"


@st.composite
def relabelings(draw):
    g = node()
    Y, X = g.source, g.target
    ys = draw(st.permutations([f"y{k}" for k in range(len(Y))]))
    xs = draw(st.permutations([f"x{k}" for k in range(len(X))]))
    ry, rx = dict(zip(Y.points, ys)), dict(zip(X.points, xs))
    return g, SpaceMap(Y.relabel(ry), X.relabel(rx), {ry[y]: rx[g.assign[y]] for y in Y.points}), rx


@given(relabelings())
@settings(max_examples=10, deadline=None)
def test_lift_is_invariant_under_relabeling(data):
    g, h, rx = data
    a, b = lift_of("NODE"), universal_lift(h)
    iso = find_isomorphism(a.F, b.F, compatible=lambda p, q: rx[a.e.assign[p]] == b.e.assign[q])
    assert iso is not None
