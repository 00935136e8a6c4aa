import pytest

from conftest import lift_of
from stk import stackoid as sk
from stk.builtins import node, node_x, twin
from stk.errors import AxiomViolation, NonEtaleStructureMap, TargetMismatch
from stk.finspace import FinSpace, fiber_product, find_isomorphism, map_profile, point_space


def diag():
    return sk.group_hom_map(sk.BZ2(), sk.BZ2xZ2(), lambda a: a + a)


def test_bz2_presentation():
    G = sk.BZ2()
    assert len(G.U) == 1 and len(G.R) == 2
    assert len(G.aut("*")) == 2


def test_trivial_groupoid_round_trip():
    X = node_x()
    G = sk.trivial_groupoid(X)
    H = sk.validate_groupoid(G.U, G.R, G.src, G.tgt, G.unit, G.inv, G.comp)
    Q, q = sk.to_space(H)
    assert find_isomorphism(Q, X) is not None


def test_broken_associativity_rejected():
    G = sk.BZ2()
    comp = dict(G.comp)
    comp[("1", "1")] = "1"
    with pytest.raises(AxiomViolation):
        sk.validate_groupoid(G.U, G.R, G.src, G.tgt, G.unit, G.inv, comp)


def test_non_etale_source_rejected():
    U = point_space("u")
    R = FinSpace(["e", "r"], [("r", "e")])
    src = {"e": "u", "r": "u"}
    comp = {("e", "e"): "e", ("e", "r"): "r", ("r", "e"): "r", ("r", "r"): "e"}
    with pytest.raises((NonEtaleStructureMap, AxiomViolation)):
        sk.validate_groupoid(U, R, src, src, {"u": "e"}, {"e": "e", "r": "r"}, comp)


def test_inertia_components():
    I = sk.inertia(sk.BZ2(), 1)
    comps = sk.clopen_decomposition(I)
    assert len(comps) == 2
    assert all(sk.morita_equivalent(c, sk.BZ2()) for c in comps)
    assert len(sk.clopen_decomposition(sk.inertia(sk.BS3(), 1))) == 3


def test_inertia_of_space_is_space():
    X = node_x()
    I = sk.inertia(sk.trivial_groupoid(X), 1)
    Q, _ = sk.to_space(I)
    assert find_isomorphism(Q, X) is not None


def test_inertia_order_must_be_positive():
    with pytest.raises(ValueError):
        sk.inertia(sk.BZ2(), 0)


def test_fiber_product_with_identity_leg():
    d = diag()
    fp = sk.stack_fiber_product(d, sk.identity_map(d.target))
    assert sk.morita_check(fp.pr1).ok


def test_fiber_product_of_trivial_groupoids_matches_spaces():
    g = node()
    tg = sk.trivial_map(g)
    fp = sk.stack_fiber_product(tg, sk.trivial_map(g, target=tg.target))
    Q, _ = sk.to_space(fp.P)
    P, _, _ = fiber_product(g, g)
    assert find_isomorphism(Q, P) is not None


def test_fiber_product_target_mismatch():
    with pytest.raises(TargetMismatch):
        sk.stack_fiber_product(diag(), sk.identity_map(sk.BS3()))


def test_fiber_product_symmetric_up_to_equivalence():
    d = diag()
    a = sk.stack_fiber_product(d, d).P
    b = sk.stack_fiber_product(d, d).P
    swap = sk.StackMap(a, b, {(u, r, v): (v, d.target.inv.assign[r], u) for u, r, v in a.U.points},
                       {x: (x[2], d.target.inv.assign[x[1]], x[0], x[4], x[3]) for x in a.R.points})
    assert sk.morita_check(swap).ok


def test_morita_examples():
    B = sk.BZ2()
    assert sk.morita_check(sk.identity_map(B)).ok
    w = sk.morita_check(sk.atlas_map(B))
    assert not w.fully_faithful and w.essentially_surjective


def test_sheet_swap_of_node_gluing_is_equivalence():
    S = lift_of("NODE").F
    swap = {p: type(p)({3 - k: v for k, v in p}) if len(p) else p for p in S.points}
    m = sk.StackMap(sk.trivial_groupoid(S), sk.trivial_groupoid(S), swap, swap)
    assert sk.morita_check(m).ok


def test_clopen_decomposition_examples():
    assert len(sk.clopen_decomposition(sk.trivial_groupoid(node_x()))) == 1
    assert len(sk.clopen_decomposition(sk.trivial_groupoid(node().source))) == 2


def test_stack_profiles():
    p = sk.stack_map_profile(diag())
    assert p.representable and p.local_embedding
    B = sk.BZ2()
    pt = sk.trivial_groupoid(point_space("*"))
    to_pt = sk.StackMap(B, pt, {"*": "*"}, {"0": "*", "1": "*"})
    assert not sk.stack_map_profile(to_pt).representable


def test_profile_agrees_with_space_tier():
    g = node()
    flags = sk.stack_map_profile(sk.trivial_map(g)).flags()
    base = map_profile(g)
    for k in ("etale", "local_embedding", "closed_embedding", "proper", "separated"):
        assert flags[k] == getattr(base, k)


def test_groupoid_network_of_diagonal():
    N = sk.groupoid_canonical_network(diag())
    assert len(N.labels) == 2
    B = sk.BZ2()
    nodes = [N.nodes[frozenset(I)] for I in ((1,), (2,), (1, 2))]
    assert all(sk.morita_equivalent(G, B) for G in nodes)
    assert N.verify_functoriality()
    comps = sk.clopen_decomposition(sk.inertia(B, 1))
    assert any(sk.morita_equivalent(nodes[-1], c) for c in comps)


def test_groupoid_lifts_of_diagonal():
    g = diag()
    res = sk.groupoid_universal_lift(g, max_probe=2)
    assert all(res.certificates.values())
    assert sk.morita_equivalent(res.F, sk.BZ2())
    base = sk.groupoid_base_lift(g)
    assert base.certificates["literal_presentation_matches"]


def test_groupoid_split_of_diagonal():
    sp = sk.groupoid_degree_one_split(diag())
    assert sp.certificates["g=g1∘e"]
    assert len(sp.D.U) == 1


def test_groupoid_lift_of_space_map_matches():
    g = twin()
    res = sk.groupoid_universal_lift(sk.trivial_map(g), max_probe=2)
    Q, q = sk.to_space(res.F)
    assert len(Q) == len(lift_of("TWIN").F)
