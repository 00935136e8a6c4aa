"""Acceptance criteria 1 to 12, each reported as a PASS/FAIL line in the terminal summary."""
import io
import random
import re

import pytest

from conftest import lift_of
from stk import corpus, stackoid as sk
from stk.builtins import SPACE_CATALOG, node, triple, twin
from stk.cli import main
from stk.finspace import (
    SpaceMap,
    disjoint_union,
    fiber_product,
    find_isomorphism,
    iso_over,
    map_profile,
)
from stk.lift import check_base_change, degree_one_split, lift_identities_check
from stk.network import (
    base_change_network,
    canonical_network,
    gluing_hom_check,
    product_network,
    universal_lift,
)
from stk.oracle import functor_agreement, probe_family


def test_01_node_lift(verdict):
    res = lift_of("NODE")
    prof = map_profile(res.e)
    agr = functor_agreement(node(), res, probe_family(node().target, 4))
    ok = (len(res.F) == 6 and res.fiber_sizes() == {"η1": 2, "η2": 2, "c": 2}
          and prof.etale and prof.surjective and prof.universally_closed and agr.ok)
    verdict("1", ok, f"|F|={len(res.F)} fibers={res.fiber_sizes()} probes={agr.probes}")


def test_02_triple_lift(verdict):
    res = lift_of("TRIPLE")
    fib = res.fiber_sizes()
    ok = len(res.F) == 15 and fib["c"] == 6 and all(fib[b] == 3 for b in ("η1", "η2", "η3"))
    verdict("2", ok, f"|F|={len(res.F)} fibers={fib}")


def test_03_closed_embeddings_and_etale_proper(verdict):
    closed = [n for n, mk in SPACE_CATALOG.items() if map_profile(mk()).closed_embedding]
    witnesses = {}
    for name in closed:
        res = lift_of(name)
        X = res.e.target
        witnesses[name] = find_isomorphism(res.F, X, compatible=lambda a, b: res.e.assign[a] == b)
    etale = lift_of("ETALE2")
    witnesses["ETALE2"] = iso_over(etale.e, SPACE_CATALOG["ETALE2"]())
    ok = "WHISKER" in closed and all(w is not None for w in witnesses.values())
    verdict("3", ok, "witnesses for " + ",".join(sorted(witnesses)))


def test_04_functor_agreement_whole_corpus(verdict):
    failed = []
    total = 0
    for name in corpus.CATALOG:
        inst = corpus.builtin(name)
        g = inst.map
        if g is None:
            continue
        if inst.tier == "space":
            agr = functor_agreement(g, lift_of(name), probe_family(g.target, 3 if name == "TRIPLE" else 4))
            total += agr.probes
            ok = agr.ok
        else:
            res = sk.groupoid_universal_lift(g, max_probe=2)
            out = sk.groupoid_functor_agreement(g, res, 4)
            total += out["probes"]
            ok = out["ok"]
        if not ok:
            failed.append(name)
    verdict("4", not failed, f"{total} probes, failing: {failed or 'none'}")


def test_05_lift_over_image_and_complement(verdict):
    certs = {n: lift_of(n).certificates for n in SPACE_CATALOG}
    image_ok = all(c["F×g(Y)≅S"] and c["F∖S≅X∖g(Y)"] for c in certs.values())
    g = node()
    P, _, _ = fiber_product(g, lift_of("NODE").e)
    copies = find_isomorphism(P, disjoint_union(g.source, g.source)) is not None
    verdict("5", image_ok and copies and len(P) == 8, f"|Y×F|={len(P)} over NODE")


def _base_change_tally(name, keep_labels):
    g = SPACE_CATALOG[name]()
    probes = probe_family(g.target, 3)
    good = sum(base_change_network(g, u, keep_labels=keep_labels)["ok"] for u in probes)
    return good, len(probes)


@pytest.mark.xfail(strict=True, reason="multiplicity drops under base change; see decisions ledger")
def test_06_base_change_rebuilt_network(verdict):
    tally = {n: _base_change_tally(n, False) for n in ("NODE", "TWIN")}
    ok = all(good == total for good, total in tally.values())
    verdict("6", ok, " ".join(f"{n}:{g}/{t}" for n, (g, t) in tally.items()))


def test_06_base_change_with_labels_kept(verdict):
    tally = {n: _base_change_tally(n, True) for n in ("NODE", "TWIN")}
    ok = all(good == total for good, total in tally.values())
    verdict("6 (label-preserving rebuild)", ok, " ".join(f"{n}:{g}/{t}" for n, (g, t) in tally.items()))


def test_07_twin(verdict):
    g = twin()
    direct = lift_of("TWIN")
    routed = universal_lift(g, via_split=True)
    split = degree_one_split(g)
    branch = split.g1.image()
    ok = (len(direct.F) == 5 and direct.fiber_sizes() == {"η1": 2, "c": 2, "η2": 1}
          and iso_over(direct.e, routed.e) is not None
          and map_profile(split.g1).closed_embedding and set(branch) == {"η1", "c"})
    verdict("7", ok, f"|F|={len(direct.F)} D={sorted(branch)}")


def test_08_groupoid_tier(verdict):
    B2, B3 = sk.BZ2(), sk.BS3()
    c2 = sk.clopen_decomposition(sk.inertia(B2, 1))
    c3 = sk.clopen_decomposition(sk.inertia(B3, 1))
    g = corpus.builtin("BZ2DIAG").map
    N = sk.groupoid_canonical_network(g)
    BZZ = sk.BZ2xZ2()
    nodes = {I: N.nodes[I] for I in N.indices()}
    multiset_ok = (
        sk.morita_equivalent(nodes[frozenset()], BZZ)
        and all(sk.morita_equivalent(nodes[frozenset({i})], B2) for i in (1, 2))
        and any(sk.morita_equivalent(nodes[frozenset({1, 2})], c) for c in c2)
    )
    F = sk.groupoid_universal_lift(g, max_probe=2).F
    ok = (len(c2) == 2 and len(c3) == 3 and len(N.labels) == 2 and multiset_ok
          and sk.morita_equivalent(F, B2))
    verdict("8", ok, f"inertia components {len(c2)},{len(c3)} n_g={len(N.labels)}")


def test_09_base_case_identities(verdict):
    N = lift_of("NODE").network
    h = N.edge(frozenset({1, 2}), frozenset({1}))
    sheet = N.edge(frozenset({1}), frozenset())
    results = {}
    for kind in ("closed_composite", "iterated", "two_step"):
        results.update({f"{kind}:{k}": v for k, v in lift_identities_check(kind, h, sheet).items()})
    for u in probe_family(sheet.target, 2):
        for k, v in check_base_change(sheet, u).items():
            results[f"base_change:{k}"] = results.get(f"base_change:{k}", True) and v
    w = SPACE_CATALOG["WHISKER"]()
    results.update({f"product:{k}": v for k, v in lift_identities_check("product", w, w).items()})
    bad = [k for k, v in results.items() if not v]
    verdict("9", not bad, f"{len(results)} identities, failing: {bad or 'none'}")


def test_10_gluing_universal_property(verdict):
    cases = {
        "NODE": (canonical_network(node()), [frozenset({1}), frozenset({2})]),
        "TRIPLE": (canonical_network(triple()), [frozenset({1, 2}), frozenset({1, 3})]),
    }
    detail, ok = [], True
    for name, (N, Q) in cases.items():
        out = gluing_hom_check(N, Q, max_points=4)
        ok &= all(good for _, _, good in out.values())
        detail.append(f"{name}:{out[4][0]} homs at size 4")
    verdict("10", ok, " ".join(detail))


def test_11_product_network_discrepancy_is_reported(verdict):
    g = node()
    maps = [SpaceMap(g.source.subspace(c), g.target, {y: g.assign[y] for y in c})
            for c in g.source.components()]
    out = product_network(*maps)
    out_err = io.StringIO()
    code = main(["check", "--suite", "reducible-product", "--corpus", "NODE"],
                stdout=io.StringIO(), stderr=out_err)
    ok = (out["product_points"] == 3 and out["disjoint_union_points"] == 6
          and out["status"] == "discrepancy" and code == 3)
    verdict("11", ok, f"product={out['product_points']} disjoint union={out['disjoint_union_points']}")


def _relabeled(inst, seed):
    """The instance with every point renamed by a random bijection; returns it and the inverse names."""
    g = inst.map
    X, Y = g.target, g.source
    rng = random.Random(seed)
    fresh = [f"pt{k}" for k in range(len(X) + len(Y))]
    rng.shuffle(fresh)
    names = dict(zip(list(X.points) + list(Y.points), fresh))
    X2 = X.relabel({p: names[p] for p in X.points})
    Y2 = Y.relabel({p: names[p] for p in Y.points})
    g2 = SpaceMap(Y2, X2, {names[y]: names[g.assign[y]] for y in Y.points})
    expect = [corpus.Expectation(e.key, ",".join(
        ":".join([names[part.split(":")[0]], part.split(":")[1]]) for part in e.value.split(","))
        if e.key == "F.fibers" else e.value, e.tag) for e in inst.expect]
    out = corpus.Instance(inst.name, inst.tier, {"X": X2, "Y": Y2}, {"g": g2}, g="g", expect=expect)
    return out, {v: k for k, v in names.items()}


def _normalized(report, inverse=None):
    lines = set()
    for line in report.splitlines():
        if inverse:
            line = re.sub(r"pt\d+", lambda m: inverse[m.group(0)], line)
        key, _, value = line.partition("=")
        lines.add((key, frozenset(value.split(","))))
    return lines


def _check(path_or_name, suite):
    out = io.StringIO()
    code = main(["check", "--suite", suite, "--corpus", path_or_name, "--max-probe", "3"],
                stdout=out, stderr=io.StringIO())
    return code, out.getvalue()


def test_12_determinism_under_relabeling(verdict, tmp_path):
    mismatches = []
    for name in ("NODE", "TWIN", "NODEPLUS"):
        inst = corpus.builtin(name)
        for seed in range(2):
            other, inverse = _relabeled(inst, seed)
            path = tmp_path / f"{name}{seed}.stk"
            corpus.save(other, path)
            a = lift_of(name)
            b = universal_lift(other.map)
            if find_isomorphism(a.F, b.F, compatible=lambda p, q: a.e.assign[p] == inverse[b.e.assign[q]]) is None:
                mismatches.append(f"{name}/lift")
            for suite in ("theorem-main", "base-change", "reducible-product", "identities", "gluing"):
                ca, ra = _check(name, suite)
                cb, rb = _check(str(path), suite)
                if ca != cb or _normalized(ra) != _normalized(rb, inverse):
                    mismatches.append(f"{name}/{suite}")
    verdict("12", not mismatches, f"mismatches: {sorted(set(mismatches)) or 'none'}")
