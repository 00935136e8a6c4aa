import itertools

import pytest
from hypothesis import given, settings, strategies as st

from stk.builtins import SPACE_CATALOG, node, node_x, whisker
from stk.errors import (
    AntisymmetryViolation,
    NotClosed,
    NotClosedEmbedding,
    NotContinuous,
    TargetMismatch,
    UnknownPoint,
)
from stk.finspace import (
    SpaceMap,
    all_maps,
    all_spaces,
    complement_of_closed,
    disjoint_union,
    empty_space,
    fiber_product,
    fiber_product_universal_map,
    find_isomorphism,
    glue_along_closed,
    glue_universal_map,
    identity,
    image_factorization,
    map_profile,
    point_space,
    topology_query,
    validate_space,
)


@st.composite
def finite_spaces(draw, max_points=5):
    n = draw(st.integers(0, max_points))
    pts = [f"p{k}" for k in range(n)]
    # edges only from lower to higher index: always acyclic
    pairs = [(a, b) for a, b in itertools.combinations(pts, 2)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True) if pairs else st.just([]))
    perm = draw(st.permutations(pts))
    ren = dict(zip(pts, perm))
    return validate_space(perm, [(ren[a], ren[b]) for a, b in chosen])


def test_singleton():
    X = validate_space(["p"])
    assert X.points == ("p",)
    assert topology_query(X, "p") == ({"p"}, {"p"})


def test_node_target_closure():
    X = node_x()
    assert set(X.relation()) == {("η1", "c"), ("η2", "c")}
    assert topology_query(X, "c") == ({"η1", "η2", "c"}, {"c"})
    assert topology_query(X, "η1") == ({"η1"}, {"η1", "c"})


def test_transitive_closure_is_taken():
    X = validate_space("abc", [("a", "b"), ("b", "c")])
    assert X.leq("a", "c")


def test_two_cycle_rejected():
    with pytest.raises(AntisymmetryViolation):
        validate_space("ab", [("a", "b"), ("b", "a")])


def test_unknown_point():
    with pytest.raises(UnknownPoint):
        validate_space("a", [("a", "z")])
    with pytest.raises(UnknownPoint):
        node_x().gen("zz")


def test_discontinuous_map_rejected():
    X = node_x()
    with pytest.raises(NotContinuous):
        SpaceMap(X, X, {"η1": "c", "η2": "η2", "c": "η1"})


@given(finite_spaces())
def test_order_axioms_and_minimal_open_basis(X):
    for a in X.points:
        assert X.leq(a, a)
        for b in X.points:
            if a != b and X.leq(a, b):
                assert not X.leq(b, a)
            for c in X.points:
                if X.leq(a, b) and X.leq(b, c):
                    assert X.leq(a, c)
    # every open set is the union of the minimal opens of its points
    for r in range(len(X) + 1):
        for sub in itertools.combinations(X.points, r):
            if X.is_open(sub):
                assert X.open_hull(sub) == frozenset(sub)


def test_profiles_of_catalog_maps():
    p = map_profile(node())
    assert p.local_embedding and p.proper and p.surjective
    assert not p.etale and not p.closed_embedding
    w = map_profile(whisker())
    assert w.closed_embedding and w.proper
    i = map_profile(identity(node_x()))
    assert i.open_embedding and i.closed_embedding and i.etale


@pytest.mark.parametrize("name", sorted(SPACE_CATALOG))
def test_profile_implications(name):
    p = map_profile(SPACE_CATALOG[name]())
    if p.closed_embedding:
        assert p.proper and p.local_embedding
    if p.etale:
        assert p.local_embedding
    if p.open_embedding:
        assert p.etale


@given(finite_spaces(4), st.data())
@settings(max_examples=40, deadline=None)
def test_profile_implications_random(X, data):
    maps = list(all_maps(X, node_x()))
    f = SpaceMap(X, node_x(), data.draw(st.sampled_from(maps)))
    p = map_profile(f)
    if p.closed_embedding:
        assert p.local_embedding and p.proper
    if p.etale:
        assert p.local_embedding
    if p.open_embedding:
        assert p.etale
    if p.proper:
        assert p.separated and p.universally_closed
    assert sum(p.fiber_degrees.values()) == len(X)


def test_fiber_product_of_node_with_itself():
    g = node()
    P, p1, p2 = fiber_product(g, g)
    assert len(P) == 6
    assert {p for p in P.points if p[0][0] == "n"} == {
        ("n1", "n1"), ("n1", "n2"), ("n2", "n1"), ("n2", "n2")}


def test_fiber_product_with_identity_and_disjoint_images():
    g = whisker()
    P, _, p2 = fiber_product(identity(g.target), g)
    assert find_isomorphism(P, g.source) is not None
    X = node_x()
    a = SpaceMap(point_space("u"), X, {"u": "η1"})
    b = SpaceMap(point_space("v"), X, {"v": "η2"})
    assert len(fiber_product(a, b)[0]) == 0


def test_fiber_product_target_mismatch():
    with pytest.raises(TargetMismatch):
        fiber_product(node(), identity(point_space()))


@pytest.mark.parametrize("size", range(4))
def test_fiber_product_universal_property(size):
    g = node()
    P, p1, p2 = fiber_product(g, g)
    for T in all_spaces(size):
        pairs = 0
        for u in all_maps(T, g.source):
            for v in all_maps(T, g.source, constraint=lambda t: g.fiber(g.assign[u[t]])):
                w = fiber_product_universal_map(P, SpaceMap(T, g.source, u), SpaceMap(T, g.source, v))
                assert w.then(p1).assign == u and w.then(p2).assign == v
                pairs += 1
        assert pairs == sum(1 for _ in all_maps(T, P))


def _cross_glue():
    g = node()
    P, p1, p2 = fiber_product(g, g)
    off = P.subspace([p for p in P.points if p[0] != p[1]])
    i = SpaceMap(off, g.source, {p: p[0] for p in off.points})
    j = SpaceMap(off, g.source, {p: p[1] for p in off.points})
    return glue_along_closed(i, j), (i, j)


def test_glue_cross_projections_gives_six_points():
    (S, inA, inB), _ = _cross_glue()
    assert len(S) == 6
    assert len(S.components()) == 2


def test_glue_trivial_cases():
    X = node_x()
    S, _, _ = glue_along_closed(SpaceMap(empty_space(), X, {}), SpaceMap(empty_space(), X, {}))
    assert find_isomorphism(S, disjoint_union(X, X)) is not None
    S, _, _ = glue_along_closed(identity(X), identity(X))
    assert find_isomorphism(S, X) is not None


def test_glue_requires_closed_embeddings():
    X = node_x()
    eta = SpaceMap(point_space("z"), X, {"z": "η1"})
    with pytest.raises(NotClosedEmbedding):
        glue_along_closed(eta, eta)


def test_glue_universal_property():
    (S, inA, inB), (i, j) = _cross_glue()
    A = i.target
    for size in range(3):
        for T in all_spaces(size):
            families = 0
            for u in all_maps(A, T):
                for v in all_maps(A, T):
                    if all(u[i.assign[z]] == v[j.assign[z]] for z in i.source.points):
                        glue_universal_map(S, inA, inB, SpaceMap(A, T, u), SpaceMap(A, T, v))
                        families += 1
            assert families == sum(1 for _ in all_maps(S, T))


def test_glued_space_has_sheet_swap():
    (S, _, _), _ = _cross_glue()
    # an automorphism moving every point exchanges the two sheets
    iso = find_isomorphism(S, S, compatible=lambda a, b: a != b)
    assert iso is not None


def test_image_factorization():
    f1, inc = image_factorization(node())
    assert len(f1.target) == 3
    f1, inc = image_factorization(whisker())
    assert set(f1.target.points) == {"η1", "c"}
    f1, _ = image_factorization(SpaceMap(empty_space(), node_x(), {}))
    assert len(f1.target) == 0


def test_complement_of_closed():
    X = node_x()
    R = complement_of_closed(X, {"c"})
    assert set(R.points) == {"η1", "η2"} and not R.relation()
    assert len(complement_of_closed(X, X.points)) == 0
    assert complement_of_closed(X, set()) == X
    with pytest.raises(NotClosed):
        complement_of_closed(X, {"η1"})


def test_find_isomorphism_basic():
    X = node_x()
    assert find_isomorphism(X, X) is not None
    assert find_isomorphism(X, node().source) is None


@pytest.mark.parametrize("name", sorted(SPACE_CATALOG))
def test_diagonal_is_clopen(name):
    g = SPACE_CATALOG[name]()
    P, _, _ = fiber_product(g, g)
    diag = [p for p in P.points if p[0] == p[1]]
    assert P.is_closed(diag) and P.is_open(diag)


def test_space_counts():
    assert [len(all_spaces(n)) for n in range(5)] == [1, 1, 2, 5, 16]
