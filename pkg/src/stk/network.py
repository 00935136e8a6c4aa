"""Networks of local embeddings indexed by subsets of ``{1..n}`` and the universal lift.

Nodes of the canonical network carry :class:`~stk.lift.Label` points:
``Y_J`` consists of labels ``{j: y_j}`` with ``j`` ranging over ``J``.  The
descending sequence keeps that convention, so every point of the final lift
records the tuple of sheets it stands for.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
import math
from dataclasses import dataclass, field

from .errors import (
    CoverNotSuitable,
    EtaleOnImageFailed,
    NotClosedEmbedding,
    NotLocalEmbedding,
    StageInvariantBroken,
    VerificationFailure,
)
from .finspace import (
    FinSpace,
    SpaceMap,
    UnionFind,
    complement_of_closed,
    disjoint_union,
    fiber_product,
    find_isomorphism,
    glue_along_closed,
    identity,
    inclusion,
    is_closed_embedding,
    iso_over,
    map_profile,
    quotient,
    sort_key,
)
from .lift import Label, LiftResult, base_lift, degree_one_split, label_of


def index_key(I):
    return (len(I), tuple(sorted(I)))


def subsets(labels):
    labels = tuple(sorted(labels))
    for r in range(len(labels) + 1):
        for c in itertools.combinations(labels, r):
            yield frozenset(c)


# ---------------------------------------------------------------------------
# fibered powers


@dataclass
class FiberedPower:
    n: int
    space: FinSpace
    projections: list
    diagonal: frozenset
    Yn: FinSpace
    to_base: SpaceMap

    def permutation_action(self, perm):
        """Coordinate permutation of the full power (as a dict)."""
        return {p: tuple(p[perm[k]] for k in range(self.n)) for p in self.space.points}


def fibered_power(g, n, distinct_under=None):
    """``∏^n_X Y`` with points ``n``-tuples, and its off-diagonal part ``Y^n``.

    ``distinct_under`` (a map out of ``Y``) replaces equality of coordinates
    when deciding the diagonal locus.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    Y, X = g.source, g.target
    fibers = {x: sorted(g.fiber(x), key=sort_key) for x in X.points}
    pts = []
    for x in X.points:
        pts.extend(itertools.product(fibers[x], repeat=n))
    rel = [
        (p, q) for p in pts for q in pts
        if p != q and all(Y.leq(a, b) for a, b in zip(p, q))
    ]
    P = FinSpace(pts, rel)
    key = (lambda y: y) if distinct_under is None else distinct_under.assign.__getitem__
    diag = frozenset(p for p in P.points if len({key(y) for y in p}) < n)
    Yn = P.subspace([p for p in P.points if p not in diag])
    projs = [SpaceMap(P, Y, {p: p[k] for p in P.points}, check=False) for k in range(n)]
    to_base = SpaceMap(P, X, {p: g.assign[p[0]] for p in P.points}, check=False)
    return FiberedPower(n=n, space=P, projections=projs, diagonal=diag, Yn=Yn, to_base=to_base)


def multiplicity(g, distinct_under=None):
    """Largest ``n`` with ``Y^n`` non-empty (the maximal number of distinct points in a fiber)."""
    key = (lambda y: y) if distinct_under is None else distinct_under.assign.__getitem__
    return max((len({key(y) for y in g.fiber(x)}) for x in g.target.points), default=0)


# ---------------------------------------------------------------------------
# networks


@dataclass
class Network:
    labels: tuple
    nodes: dict
    edges: dict
    stage: int
    g: SpaceMap
    history: list = field(default_factory=list)

    @property
    def target(self):
        return self.nodes[frozenset()]

    def indices(self):
        return sorted(self.nodes, key=index_key)

    def edge(self, J, I):
        J, I = frozenset(J), frozenset(I)
        if I == J:
            return identity(self.nodes[J])
        return self.edges[(J, I)]

    def to_target(self, J):
        return self.edge(J, frozenset())

    def verify_functoriality(self):
        for K in self.nodes:
            for J in self.nodes:
                if not J < K:
                    continue
                for I in self.nodes:
                    if I < J:
                        a = self.edge(K, I).assign
                        b = self.edge(K, J).then(self.edge(J, I)).assign
                        if a != b:
                            return False
        return True

    def closed_from(self):
        """Smallest ``k`` such that every edge ``J ⊇ I`` with ``|I| ≥ k`` is a closed embedding."""
        bad = [len(I) for (J, I), m in self.edges.items() if not is_closed_embedding(m)]
        return max(bad) + 1 if bad else 0

    def summary(self):
        return {
            tuple(sorted(I)): (len(S), len(S.components())) for I, S in sorted(
                self.nodes.items(), key=lambda kv: index_key(kv[0]))
        }


def _label_edges(g, nodes, stage_labels=None):
    edges = {}
    for J in nodes:
        for I in nodes:
            if I < J:
                if I:
                    assign = {p: p.restrict(I) for p in nodes[J].points}
                else:
                    assign = {p: g.assign[p[0][1]] for p in nodes[J].points}
                edges[(J, I)] = SpaceMap(nodes[J], nodes[I], assign)
    return edges


def _power_node(g, J, distinct_under=None):
    fp = fibered_power(g, len(J), distinct_under)
    idx = sorted(J)
    mapping = {p: Label(zip(idx, p)) for p in fp.Yn.points}
    return fp.Yn.relabel(mapping)


def canonical_network(g, via_split=False, n_labels=None):
    """``N(Y/X)``: nodes ``Y_J = Y^{|J|}`` over ``J ⊆ {1..n_g}``, edges coordinate projections.

    With ``via_split`` the nodes are pulled back from the network of the
    generic-degree-one factor ``D``: tuples of points of ``Y`` over a common
    point with pairwise distinct images in ``D``.  ``n_labels`` pads the index
    set beyond the multiplicity; the extra nodes are empty.
    """
    prof = map_profile(g)
    if not prof.local_embedding:
        raise NotLocalEmbedding("canonical network needs a local embedding")
    if not prof.universally_closed:
        raise NotLocalEmbedding("canonical network needs a proper map")
    distinct = degree_one_split(g).e if via_split else None
    n = multiplicity(g, distinct)
    if n_labels is not None:
        if n_labels < n:
            raise ValueError(f"{n_labels} labels cannot hold multiplicity {n}")
        n = n_labels
    labels = tuple(range(1, n + 1))
    nodes = {}
    for J in subsets(labels):
        if not J:
            nodes[J] = g.target
        elif len(J) > multiplicity(g, distinct):
            nodes[J] = FinSpace([], [])
        else:
            nodes[J] = _power_node(g, J, distinct)
    N = Network(labels=labels, nodes=nodes, edges=_label_edges(g, nodes), stage=n, g=g)
    if not N.verify_functoriality():
        raise VerificationFailure("canonical network is not functorial")
    return N


# ---------------------------------------------------------------------------
# gluing


@dataclass
class Glued:
    S: FinSpace
    inj: dict  # index -> SpaceMap Y_J -> S

    def reps(self):
        out = {}
        for J, m in self.inj.items():
            for z, s in m.assign.items():
                out.setdefault(s, []).append((J, z))
        return out


def _induced(glued, value):
    """Map out of ``glued.S`` given ``value(J, z)`` on representatives; checks consistency."""
    out = {}
    for s, reps in glued.reps().items():
        vals = {value(J, z) for J, z in reps}
        if len(vals) != 1:
            raise VerificationFailure(f"glued point {s!r} has inconsistent images {vals}")
        out[s] = vals.pop()
    return out


def _label_union(reps):
    merged = {}
    for _, z in reps:
        for k, v in label_of(z).items():
            if merged.setdefault(k, v) != v:
                raise VerificationFailure(f"incompatible labels glued together: {reps}")
    return Label(merged)


def _relabel_glued(glued, nodes):
    if not all(isinstance(p, Label) for J in glued.inj for p in nodes[J].points):
        return glued
    mapping = {s: _label_union(reps) for s, reps in glued.reps().items()}
    if len(set(mapping.values())) != len(mapping):
        return glued
    S = glued.S.relabel(mapping)
    inj = {J: SpaceMap(m.source, S, {z: mapping[s] for z, s in m.assign.items()}, check=False)
           for J, m in glued.inj.items()}
    return Glued(S, inj)


def glue_subnetwork(N, Q):
    """Glue ``{Y_J}_{J ∈ Q}`` along the joins ``Y_{I ∪ J}``, adjoining one index at a time.

    Returns a :class:`Glued` whose ``inj`` has a closed embedding for every
    member of ``Q``.
    """
    Q = sorted({frozenset(J) for J in Q}, key=index_key)
    if not Q:
        raise ValueError("cannot glue an empty family")
    first = Q[0]
    glued = Glued(N.nodes[first], {first: identity(N.nodes[first])})
    members = [first]
    for J in Q[1:]:
        below = next((I for I in members if I <= J), None)
        if below is not None:
            glued.inj[J] = N.edge(J, below).then(glued.inj[below])
            continue
        QJ = sorted({I | J for I in members}, key=index_key)
        sub = glue_subnetwork(N, QJ)

        def into_current(K, z):
            vals = {glued.inj[I].assign[N.edge(K, I).assign[z]] for I in members if I | J == K}
            if len(vals) != 1:
                raise VerificationFailure("join maps disagree")
            return vals.pop()

        to_S = SpaceMap(sub.S, glued.S, _induced(sub, into_current))
        to_J = SpaceMap(sub.S, N.nodes[J], _induced(sub, lambda K, z: N.edge(K, J).assign[z]))
        if not (is_closed_embedding(to_S) and is_closed_embedding(to_J)):
            raise NotClosedEmbedding(f"gluing {sorted(J)} requires closed embeddings")
        S2, inS, inJ = glue_along_closed(to_S, to_J)
        inj = {I: m.then(inS) for I, m in glued.inj.items()}
        inj[J] = inJ
        members.append(J)
        glued = _relabel_glued(Glued(S2, inj), N.nodes)
    return _relabel_glued(glued, N.nodes)


def glued_to(N, glued, I):
    """The map ``S_Q → Y_I`` for ``I`` contained in every member of ``Q``."""
    return SpaceMap(glued.S, N.nodes[I], _induced(glued, lambda K, z: N.edge(K, I).assign[z]))


def gluing_hom_check(N, Q, max_points=4):
    """Exhaustively test that ``S_Q`` is the colimit, probing with every space of at most ``max_points``.

    For each test space ``T``, restriction along the injections must be a
    bijection from ``Hom(S_Q, T)`` onto families ``f_K: Y_K → T`` that agree
    on every join ``Y_{K ∪ K'}``.  Returns ``{T size: (homs, families, ok)}``
    summed over the spaces of that size.
    """
    from .finspace import all_maps, all_spaces

    glued = glue_subnetwork(N, Q)
    Q = sorted(glued.inj, key=index_key)
    joins = [(K, L, K | L) for K, L in itertools.combinations(Q, 2) if (K | L) in N.nodes]
    report = {}
    for size in range(max_points + 1):
        homs_total, fam_total, ok = 0, 0, True
        for T in all_spaces(size):
            families = set()
            # index maps out of each node by their values on the joins with earlier nodes
            keyed = []
            for pos, L in enumerate(Q):
                cons = [(K, M, z) for K, L2, M in joins if L2 == L and Q.index(K) < pos
                        for z in N.nodes[M].points]
                table = {}
                for m in all_maps(N.nodes[L], T):
                    key = tuple(m[N.edge(M, L).assign[z]] for _, M, z in cons)
                    table.setdefault(key, []).append(m)
                keyed.append((L, cons, table))

            def extend(pos, chosen):
                if pos == len(keyed):
                    families.add(tuple(chosen[K][z] for K in Q for z in N.nodes[K].points))
                    return
                L, cons, table = keyed[pos]
                key = tuple(chosen[K][N.edge(M, K).assign[z]] for K, M, z in cons)
                for m in table.get(key, ()):
                    chosen[L] = m
                    extend(pos + 1, chosen)
                chosen.pop(L, None)

            extend(0, {})
            flat = [glued.inj[K].assign[z] for K in Q for z in N.nodes[K].points]
            restricted = [tuple(h[s] for s in flat) for h in all_maps(glued.S, T)]
            homs_total += len(restricted)
            fam_total += len(families)
            ok = ok and len(set(restricted)) == len(restricted) and set(restricted) == families
        report[size] = (homs_total, fam_total, ok)
    return report


# ---------------------------------------------------------------------------
# descent


def _lift_node(N, I):
    Q = [I | {j} for j in N.labels if j not in I]
    glued = glue_subnetwork(N, Q)
    s_to_y = glued_to(N, glued, I)
    prof = map_profile(s_to_y)
    if not (prof.universally_closed and prof.etale_on_image):
        raise EtaleOnImageFailed(I, str(prof.flags()))
    lift = base_lift(s_to_y)
    iinv = {v: k for k, v in lift.i.assign.items()}
    mapping = {p: iinv[p] if p in iinv else lift.e.assign[p] for p in lift.F.points}
    if len(set(mapping.values())) != len(mapping):
        raise VerificationFailure(f"lifted node {sorted(I)} has colliding point ids")
    F = lift.F.relabel(mapping)
    e_I = SpaceMap(F, N.nodes[I], {mapping[p]: lift.e.assign[p] for p in lift.F.points})
    return Q, glued, F, e_I, prof.closed_embedding


def descend(N, jobs=1):
    """``N^i → N^{i-1}``: replace every ``Y_I`` with ``|I| = i-1`` by the lift of ``S_I → Y_I``.

    Indices of one level are independent; ``jobs > 1`` lifts them in a thread pool.
    """
    i = N.stage
    if i < 1:
        raise StageInvariantBroken("network is already at stage 0")
    if N.closed_from() > i:
        raise StageInvariantBroken(f"edges from |I| ≥ {i} are not all closed embeddings")
    level = [I for I in N.indices() if len(I) == i - 1 and len(I) < len(N.labels)]
    if jobs > 1 and len(level) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            lifted = list(pool.map(lambda I: _lift_node(N, I), level))
    else:
        lifted = [_lift_node(N, I) for I in level]
    nodes, edges = dict(N.nodes), dict(N.edges)
    step = {}
    for I, (Q, glued, F, e_I, closed) in zip(level, lifted):
        nodes[I] = F
        step[I] = "closed embedding" if closed else f"lifted {len(N.nodes[I])}→{len(F)}"
        for J in N.nodes:
            if J > I:
                K = next(K for K in Q if K <= J)
                embed = N.edge(J, K).then(glued.inj[K]).assign
                edges[(J, I)] = SpaceMap(N.nodes[J], F, embed)
            elif J < I:
                edges[(I, J)] = e_I.then(N.edge(I, J))
    M = Network(labels=N.labels, nodes=nodes, edges=edges, stage=i - 1, g=N.g,
                history=N.history + [step])
    # rebuild edge sources/targets so composed maps refer to the new node objects
    for (J, I), m in list(M.edges.items()):
        if m.source is not M.nodes[J] or m.target is not M.nodes[I]:
            M.edges[(J, I)] = SpaceMap(M.nodes[J], M.nodes[I], m.assign)
    if not M.verify_functoriality():
        raise VerificationFailure(f"network at stage {i - 1} is not functorial")
    if M.closed_from() > i - 1:
        raise StageInvariantBroken(f"stage {i - 1} invariant fails after descent")
    return M


def lift_to_base(N, F):
    g = N.g
    return SpaceMap(F, g.target, {
        p: (g.assign[p[0][1]] if isinstance(p, Label) and len(p) else p) for p in F.points
    })


def universal_lift(g, via_split=False, verify=True, oracle_probe=None, n_labels=None, jobs=1):
    """``F_{Y/X}``: target of the stage-0 network, with its étale map to ``X``."""
    N = canonical_network(g, via_split=via_split, n_labels=n_labels)
    stages = [N]
    while N.stage > 0:
        N = descend(N, jobs=jobs)
        stages.append(N)
    F = N.target
    e = lift_to_base(N, F)
    res = LiftResult(F=F, e=e, g=g, network=N)
    res.stages = stages
    if verify:
        res.certificates = verify_universal_lift(res, power_nodes=not via_split)
        if oracle_probe is not None:
            from .oracle import functor_agreement, probe_family

            cert = functor_agreement(g, res, probe_family(g.target, oracle_probe), naturality=False)
            res.certificates["oracle_agreement"] = cert.ok
        bad = [k for k, v in res.certificates.items() if v is False]
        if bad:
            raise VerificationFailure(f"universal lift failed {bad}", res.certificates)
    return res


def sheet_union(N0):
    """``S_{Y/X}``: the nodes ``Y_i`` of a stage-0 network glued together."""
    Q = [frozenset([j]) for j in N0.labels]
    return glue_subnetwork(N0, Q) if Q else None


def verify_universal_lift(res, power_nodes=True):
    """Structural checks on a universal lift: restriction to ``g(Y)``, node pullbacks, special cases.

    The node pullback checks assume nodes ``Y_I = Y^{|I|}``; pass
    ``power_nodes=False`` for networks routed through the degree-one split.
    """
    g, e, F, N0 = res.g, res.e, res.F, res.network
    X = g.target
    cert = {}
    prof = map_profile(e)
    cert["e_etale"] = prof.etale
    cert["e_universally_closed"] = prof.universally_closed
    gy = X.subspace(g.image())
    P, _, pF = fiber_product(inclusion(gy, X), e)
    glued = sheet_union(N0)
    if glued is None:
        cert["F×g(Y)≅S"] = len(P) == 0
        S_img = frozenset()
    else:
        to_F = glued_to(N0, glued, frozenset())
        S_img = to_F.image()
        cert["F×g(Y)≅S"] = is_closed_embedding(to_F) and iso_over(
            pF.then(e), to_F.then(e)) is not None
    rest = complement_of_closed(F, S_img)
    xrest = complement_of_closed(X, g.image())
    cert["F∖S≅X∖g(Y)"] = find_isomorphism(
        rest, xrest, compatible=lambda a, b: e.assign[a] == b) is not None
    base = res.stages[0] if hasattr(res, "stages") and power_nodes else None
    literal, ordered = True, True
    if base is not None:
        for I in base.indices():
            if not I:
                continue
            P2, _, _ = fiber_product(base.to_target(I), e)
            P2x = {p: base.to_target(I).assign[p[0]] for p in P2.points}
            parts = [J for J in N0.indices() if len(J) == len(I)]
            # each unordered index set contributes |I|! ordered copies
            copies = [J for J in parts for _ in range(math.factorial(len(I)))]
            U = disjoint_union(*[N0.nodes[J] for J in copies])
            to_x = {}
            for t, J in enumerate(copies):
                m = N0.to_target(J).then(e)
                for p in N0.nodes[J].points:
                    to_x[(t, p)] = m.assign[p]
            ok = find_isomorphism(P2, U, compatible=lambda a, b: P2x[a] == to_x[b]) is not None
            ordered = ordered and ok
            if len(I) == 1:
                literal = literal and ok
    if base is not None:
        cert["Y_i×F≅⊔F_i"] = literal
        cert["Y_I×F≅⊔F_I (ordered copies)"] = ordered
    gp = map_profile(g)
    if gp.closed_embedding:
        cert["closed embedding: F≅X"] = find_isomorphism(F, X, compatible=lambda a, b: e.assign[a] == b) is not None
    if gp.etale and gp.proper and len(X.components()) == 1:
        cert["étale proper: F≅Y"] = iso_over(e, g) is not None
    return cert


# ---------------------------------------------------------------------------
# base change


def pullback_map(g, u):
    """``g': Y ×_X X' → X'``."""
    _, _, pX = fiber_product(g, u)
    return pX


def base_change_network(g, u, keep_labels=False):
    """Compare ``N(Y'/X')`` with ``N(Y/X) ×_X X'`` node-wise, and ``F'`` with ``X' ×_X F``.

    Nodes are matched by index size, since ``Y^k ×_X X' = Y'^k``.  When the
    multiplicity drops under base change the rebuilt network has fewer
    labels and ``F'`` is smaller than ``X' ×_X F``; ``keep_labels`` rebuilds
    with the original label set instead.
    """
    gp = pullback_map(g, u)
    N = canonical_network(g)
    n_labels = len(N.labels) if keep_labels else None
    Np = canonical_network(gp, n_labels=n_labels)
    report = {"nodes": {}, "ok": True, "multiplicity": (len(N.labels), multiplicity(gp))}
    for I in N.indices():
        if not I:
            continue
        P, pI, pX = fiber_product(N.to_target(I), u)
        J = frozenset(Np.labels[: len(I)])
        if len(J) == len(I):
            ok = iso_over(Np.to_target(J), pX) is not None
        else:
            ok = len(P) == 0
        report["nodes"][tuple(sorted(I))] = ok
        report["ok"] &= ok
    F = universal_lift(g, verify=False)
    Fp = universal_lift(gp, verify=False, n_labels=n_labels)
    P, pu, pF = fiber_product(u, F.e)
    report["F'≅X'×F"] = iso_over(Fp.e, pu) is not None
    report["ok"] &= report["F'≅X'×F"]
    report["F'"] = Fp
    return report


def subnetwork_check(N, K, L):
    """``N(Y_L/Y_K)`` agrees node-wise with the part ``{Y_J}_{J ⊇ K}`` of ``N``."""
    K, L = frozenset(K), frozenset(L)
    phi = N.edge(L, K)
    sub = canonical_network(phi)
    ok = sub.stage == N.stage - len(K)
    for M in sub.indices():
        if not M:
            continue
        rest = sorted(set(N.labels) - K)[: len(M)]
        J = K | frozenset(rest)
        to_K_sub = sub.to_target(M)
        ok = ok and iso_over(to_K_sub, N.edge(J, K)) is not None
    return ok


# ---------------------------------------------------------------------------
# suitable covers


@dataclass
class SuitableCover:
    U: FinSpace
    e: SpaceMap
    sheets: list  # dicts u -> y, one per sheet
    W: list = field(default_factory=list)  # distinct sheet images
    sheet_image: list = field(default_factory=list)  # sheet index -> index into W

    def strata(self, g):
        out = {}
        for m in range(1, len(self.sheets) + 1):
            out[m] = frozenset(
                u for u in self.U.points
                if sum(1 for s in self.sheets if u in s) >= m
            )
        return out


def _cover(U, e, sheets):
    W, image_of = [], []
    for s in sheets:
        dom = frozenset(s)
        if dom not in W:
            W.append(dom)
        image_of.append(W.index(dom))
    return SuitableCover(U=U, e=e, sheets=sheets, W=W, sheet_image=image_of)


def suitable_cover(g, lift=None):
    """Cover by the universal lift: sheet ``l`` is the section ``u ↦ label(u)[l]``."""
    prof = map_profile(g)
    if not prof.local_embedding:
        raise NotLocalEmbedding("suitable cover needs a local embedding")
    lift = lift or universal_lift(g, verify=False)
    n = len(lift.network.labels)
    sheets = []
    for l in range(1, n + 1):
        sheets.append({u: label_of(u)[l] for u in lift.F.points if l in label_of(u)})
    cover = _cover(lift.F, lift.e, sheets)
    verify_cover(g, cover)
    return cover


def double_cover(cover):
    """``U ⊔ U`` with every sheet duplicated (the non-pruned cover)."""
    U = disjoint_union(cover.U, cover.U)
    e = SpaceMap(U, cover.e.target, {(t, p): cover.e.assign[p] for t, p in U.points})
    sheets = [{(t, u): y for u, y in s.items()} for t in (0, 1) for s in cover.sheets]
    return _cover(U, e, sheets)


def verify_cover(g, cover):
    X, Y = g.target, g.source
    U, e = cover.U, cover.e
    pe = map_profile(e)
    if not (pe.etale and pe.surjective):
        raise CoverNotSuitable("étale cover", "U → X must be étale and surjective")
    pre = frozenset(u for u in U.points if e.assign[u] in g.image())
    if pre != frozenset().union(*cover.W):
        raise CoverNotSuitable(1, "sheet images do not cover g(Y)×_X U")
    n = len(cover.sheets)
    dom = [frozenset(s) for s in cover.sheets]
    for m in range(1, n + 1):
        Gm = {x for x in X.points if len(g.fiber(x)) >= m}
        union = set()
        for I in itertools.combinations(range(n), m):
            WI = frozenset.intersection(*[dom[l] for l in I])
            union |= WI
        if union != {u for u in U.points if e.assign[u] in Gm} and m <= multiplicity(g):
            raise CoverNotSuitable(2, f"stratum {m} mismatch")
    seen = set()
    for l, s in enumerate(cover.sheets):
        if not U.is_closed(dom[l]):
            raise CoverNotSuitable(3, f"sheet {l} image not closed")
        sub = U.subspace(dom[l])
        try:
            SpaceMap(sub, Y, s)
        except Exception as exc:
            raise CoverNotSuitable(3, f"sheet {l} is not continuous") from exc
        if any(g.assign[s[u]] != e.assign[u] for u in s):
            raise CoverNotSuitable(3, f"sheet {l} does not lie over g")
        for u, y in s.items():
            if (y, u) in seen:
                raise CoverNotSuitable(3, "sheets overlap")
            seen.add((y, u))
    full = {(y, u) for u in U.points for y in g.fiber(e.assign[u])}
    if seen != full:
        raise CoverNotSuitable(3, "sheets do not exhaust Y×_X U")
    return True


def prune_cover(g, cover):
    """Keep the first ``n_g`` sheets and drop the images of the others from ``U``."""
    n = multiplicity(g)
    if len(cover.sheets) <= n:
        return cover
    drop = set().union(*[frozenset(s) for s in cover.sheets[n:]])
    keep = [u for u in cover.U.points if u not in drop]
    U = cover.U.subspace(keep)
    e = SpaceMap(U, cover.e.target, {u: cover.e.assign[u] for u in keep})
    sheets = [{u: y for u, y in s.items() if u in U} for s in cover.sheets[:n]]
    return _cover(U, e, sheets)


def network_from_cover(g, cover, prune=True):
    """Network of quotients ``[R_I ⇉ V_I]`` built from the sheets of a suitable cover.

    Covers with more sheets than ``n_g`` are pruned first (or rejected with
    ``prune=False``).  The result is compared node-wise with the canonical
    network; the comparison lands in ``network.history``.
    """
    n = multiplicity(g)
    pruned = False
    if len(cover.sheets) > n:
        if not prune:
            raise CoverNotSuitable("pruned", f"{len(cover.sheets)} sheets for n_g = {n}")
        cover = prune_cover(g, cover)
        pruned = True
    verify_cover(g, cover)
    X = g.target
    labels = tuple(range(1, len(cover.sheets) + 1))
    nodes = {}
    for I in subsets(labels):
        if not I:
            nodes[I] = X
            continue
        VI = [u for u in cover.U.points if all(u in cover.sheets[l - 1] for l in I)]
        # R_I: points over the same x whose sheets in I pick the same points of Y
        cls = {u: Label((l, cover.sheets[l - 1][u]) for l in I) for u in VI}
        sub = cover.U.subspace(VI)
        nodes[I] = quotient(sub.relation(), sub.points, cls)
    N = Network(labels=labels, nodes=nodes, edges=_label_edges(g, nodes), stage=len(labels), g=g)
    canon = canonical_network(g)
    agree = {}
    for I in N.indices():
        agree[tuple(sorted(I))] = I in canon.nodes and (
            find_isomorphism(N.nodes[I], canon.nodes[I]) is not None)
    N.history.append({"pruned": pruned, "agrees_with_canonical": agree})
    return N


# ---------------------------------------------------------------------------
# reducible Y: component products


def local_sheet_union(g, f):
    """``Y ⋃ T``: ``Y ⊔ T`` with points identified where they are the same local sheet."""
    X = g.target
    U = disjoint_union(g.source, f.source)
    m = {(0, y): g.assign[y] for y in g.source.points}
    m.update({(1, t): f.assign[t] for t in f.source.points})
    h = SpaceMap(U, X, m)
    uf = UnionFind(U.points)
    germ = lambda p: (h.assign[p], frozenset(h.assign[a] for a in U.gen(p)))
    for y in g.source.points:
        for t in f.source.points:
            if germ((0, y)) == germ((1, t)):
                uf.union((0, y), (1, t))
    classes = uf.classes()
    Q = quotient(U.relation(), U.points, classes)
    return SpaceMap(Q, X, {classes[p]: h.assign[p] for p in U.points}), h


def product_network(g, f):
    """Compare ``F_{Y/X} ×_X F_{T/X}`` with the lift of ``Y ⋃ T`` and of ``Y ⊔ T``."""
    NY, NT = canonical_network(g), canonical_network(f)
    nodes = {}
    for I in NY.indices():
        for A in NT.indices():
            P, _, _ = fiber_product(NY.to_target(I), NT.to_target(A))
            nodes[(tuple(sorted(I)), tuple(sorted(A)))] = len(P)
    FY, FT = universal_lift(g), universal_lift(f)
    prod, p1, _ = fiber_product(FY.e, FT.e)
    to_x = p1.then(FY.e)
    union_map, disjoint_map = local_sheet_union(g, f)
    F_union = universal_lift(union_map)
    F_disj = universal_lift(disjoint_map)
    agree_union = iso_over(to_x, F_union.e) is not None
    agree_disj = iso_over(to_x, F_disj.e) is not None
    return {
        "product_nodes": nodes,
        "product_points": len(prod),
        "union_points": len(F_union.F),
        "disjoint_union_points": len(F_disj.F),
        "agree_union": agree_union,
        "agree_disjoint_union": agree_disj,
        "status": "agree" if agree_union else "discrepancy",
    }
