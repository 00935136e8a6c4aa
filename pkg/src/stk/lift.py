"""Étale lift of a map that is étale on its image, and the generic-degree-one split.

Space tier only; the groupoid-tier lift lives in :mod:`stk.stackoid`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    HypothesisNotMet,
    NotEtaleOnImage,
    NotLocalEmbedding,
    VerificationFailure,
)
from .finspace import (
    FinSpace,
    SpaceMap,
    UnionFind,
    complement_of_closed,
    fiber_product,
    find_isomorphism,
    glue_along_closed,
    inclusion,
    is_closed_embedding,
    iso_over,
    map_profile,
    quotient,
    sort_key,
    all_maps,
    validate_space,
)


class Label(tuple):
    """Partial assignment ``index -> point of Y`` carried by points of lifted spaces.

    A plain tuple of ``(index, y)`` pairs, sorted by index.
    """

    __slots__ = ()

    def __new__(cls, items=()):
        if isinstance(items, dict):
            items = items.items()
        return super().__new__(cls, tuple(sorted(items, key=lambda kv: kv[0])))

    def as_dict(self):
        return dict(self)

    def domain(self):
        return frozenset(k for k, _ in self)

    def restrict(self, indices):
        return Label((k, v) for k, v in self if k in indices)

    def __repr__(self):
        return "⟨" + ",".join(f"{k}:{v}" for k, v in self) + "⟩"


def label_of(p):
    return p.as_dict() if isinstance(p, Label) else {}


@dataclass
class LiftResult:
    """An étale lift ``e: F → X`` of ``g: Y → X``.

    ``i`` and ``phi`` are only present for the base case (``g`` étale on its
    image).  ``network`` is the stage-0 network for universal lifts.
    """

    F: object
    e: object
    g: object
    i: object = None
    phi: object = None
    certificates: dict = field(default_factory=dict)
    network: object = None
    tier: str = "space"

    def fiber_sizes(self):
        X = self.e.target
        return {x: len(self.e.fiber(x)) for x in X.points}


def _check_lift_hypothesis(g):
    prof = map_profile(g)
    if not prof.universally_closed:
        raise NotEtaleOnImage("map is not universally closed (specialization lifting fails)")
    if not prof.etale_on_image:
        raise NotEtaleOnImage("map is not étale onto its image")
    return prof


def base_lift(g, verify=True):
    """``F = Y ⊔ (X ∖ g(Y))`` with ``x ⤳ y`` exactly when ``x ⤳ g(y)`` in ``X``.

    Point ids are kept when the two pieces do not collide, otherwise tagged
    ``("Y", y)`` / ``("X", x)``.
    """
    _check_lift_hypothesis(g)
    Y, X = g.source, g.target
    img = g.image()
    outside = [x for x in X.points if x not in img]
    if set(Y.points) & set(outside):
        ty = {y: ("Y", y) for y in Y.points}
        tx = {x: ("X", x) for x in outside}
    else:
        ty = {y: y for y in Y.points}
        tx = {x: x for x in outside}
    rel = [(ty[a], ty[b]) for a, b in Y.relation()]
    rel += [(tx[a], tx[b]) for a, b in X.relation() if a in tx and b in tx]
    rel += [(tx[x], ty[y]) for x in outside for y in Y.points if X.leq(x, g.assign[y])]
    F = validate_space(list(ty.values()) + list(tx.values()), rel)
    e_assign = {ty[y]: g.assign[y] for y in Y.points}
    e_assign.update({tx[x]: x for x in outside})
    e = SpaceMap(F, X, e_assign)
    i = SpaceMap(Y, F, ty)
    gy = X.subspace(img)
    P, pr1, pr2 = fiber_product(inclusion(gy, X), e)
    yinv = {v: k for k, v in ty.items()}
    phi = SpaceMap(P, Y, {p: yinv[p[1]] for p in P.points})
    res = LiftResult(F=F, e=e, g=g, i=i, phi=phi)
    if verify:
        res.certificates = verify_base_lift(res)
        bad = [k for k, v in res.certificates.items() if not v]
        if bad:
            raise VerificationFailure(f"base lift failed checks {bad}", res.certificates)
    return res


def verify_base_lift(res):
    g, e, i, phi = res.g, res.e, res.i, res.phi
    F, X, Y = e.source, e.target, g.source
    prof = map_profile(e)
    cert = {
        "e_etale": prof.etale,
        "e_universally_closed": prof.universally_closed,
        "e_after_i_is_g": all(e.assign[i.assign[y]] == g.assign[y] for y in Y.points),
        "i_closed_embedding": is_closed_embedding(i),
    }
    # phi is an isomorphism and p2 ∘ phi^{-1} = i
    P = phi.source
    inv = {}
    ok = len(set(phi.assign.values())) == len(P) == len(Y)
    if ok:
        inv = {v: k for k, v in phi.assign.items()}
        ok = all(
            P.leq(inv[a], inv[b]) == Y.leq(a, b) for a in Y.points for b in Y.points
        ) and all(inv[y][1] == i.assign[y] for y in Y.points)
    cert["phi_isomorphism"] = ok
    # F ∖ i(Y) → X ∖ g(Y)
    rest = complement_of_closed(F, i.image())
    xrest = complement_of_closed(X, g.image())
    er = e.restrict(rest.points).corestrict(xrest)
    cert["complement_isomorphism"] = (
        len(rest) == len(xrest)
        and find_isomorphism(rest, xrest, compatible=lambda a, b: er.assign[a] == b) is not None
    )
    return cert


def section_correspondence(g, alpha, lift=None):
    """Sections of ``Y ×_X Z → g(Y) ×_X Z`` over a probe ``alpha: Z → X``.

    Sections are returned as dicts ``z -> y`` on ``alpha^{-1}(g(Y))``.  The
    bijection with ``Hom_X(Z, F)`` is checked and returned alongside.
    """
    _check_lift_hypothesis(g)
    lift = lift or base_lift(g)
    Z = alpha.source
    img = g.image()
    dom = [z for z in Z.points if alpha.assign[z] in img]
    sub = Z.subspace(dom)
    Y = g.source
    sections = list(all_maps(sub, Y, constraint=lambda z: sorted(g.fiber(alpha.assign[z]), key=sort_key)))
    homs = [
        h for h in all_maps(Z, lift.F, constraint=lambda z: sorted(lift.e.fiber(alpha.assign[z]), key=sort_key))
    ]
    i_inv = {v: k for k, v in lift.i.assign.items()}
    to_section = []
    for h in homs:
        to_section.append({z: i_inv[h[z]] for z in dom})
    key = lambda s: tuple(sorted(s.items(), key=lambda kv: sort_key(kv[0])))
    bijective = sorted(map(key, to_section)) == sorted(map(key, sections)) and len(
        set(map(key, to_section))
    ) == len(homs)
    return sections, {"homs": len(homs), "sections": len(sections), "bijective": bijective}


@dataclass
class DegreeOneSplit:
    D: FinSpace
    e: SpaceMap
    g1: SpaceMap
    certificates: dict = field(default_factory=dict)


def _germ(g, y):
    return frozenset(g.assign[a] for a in g.source.gen(y))


def degree_one_split(g, verify=True):
    """Factor ``g = g1 ∘ e`` with ``e`` étale surjective and ``g1`` of generic degree 1.

    Points of ``Y`` over the same point of ``X`` are identified when their
    minimal neighbourhoods have the same image (same local sheet).  Class ids
    are the smallest representative.
    """
    prof = map_profile(g)
    if not prof.local_embedding:
        raise NotLocalEmbedding("degree_one_split needs a local embedding")
    if not prof.universally_closed:
        raise NotLocalEmbedding("degree_one_split needs a proper map")
    Y = g.source
    uf = UnionFind(Y.points)
    by_key = {}
    for y in Y.points:
        k = (g.assign[y], _germ(g, y))
        if k in by_key:
            uf.union(by_key[k], y)
        else:
            by_key[k] = y
    classes = uf.classes()
    D = quotient(Y.relation(), Y.points, classes)
    e = SpaceMap(Y, D, classes)
    g1 = SpaceMap(D, g.target, {classes[y]: g.assign[y] for y in Y.points})
    split = DegreeOneSplit(D=D, e=e, g1=g1)
    if verify:
        split.certificates = verify_split(g, split)
        bad = [k for k, v in split.certificates.items() if not v]
        if bad:
            raise VerificationFailure(f"degree-one split failed {bad}", split.certificates)
    return split


def generic_degree(f):
    """Fiber sizes of ``f`` over the generic points of its image."""
    img = f.target.subspace(f.image())
    return {x: len(f.fiber(x)) for x in img.generic_points()}


def verify_split(g, split):
    pe, pg1 = map_profile(split.e), map_profile(split.g1)
    return {
        "e_etale": pe.etale,
        "e_surjective": pe.surjective,
        "g1_local_embedding": pg1.local_embedding,
        "g1_proper": pg1.universally_closed,
        "factorization": all(
            split.g1.assign[split.e.assign[y]] == g.assign[y] for y in g.source.points
        ),
        "generic_degree_one": all(v == 1 for v in generic_degree(split.g1).values()),
    }


def split_isomorphism(s1, s2):
    """The isomorphism ``D1 → D2`` forced by ``e2 ∘ σ`` for any section ``σ`` of ``e1``.

    Returns the dict or ``None`` when the forced map is not an isomorphism
    commuting with both factorizations.
    """
    Y = s1.e.source
    phi = {}
    for y in Y.points:
        d1, d2 = s1.e.assign[y], s2.e.assign[y]
        if phi.setdefault(d1, d2) != d2:
            return None
    D1, D2 = s1.D, s2.D
    if len(set(phi.values())) != len(D1) or len(D1) != len(D2):
        return None
    for a in D1.points:
        for b in D1.points:
            if D1.leq(a, b) != D2.leq(phi[a], phi[b]):
                return None
    if any(s2.g1.assign[phi[d]] != s1.g1.assign[d] for d in D1.points):
        return None
    return phi


# ---------------------------------------------------------------------------
# identities between base-case lifts


def _require(cond, prop, detail=""):
    if not cond:
        raise HypothesisNotMet(prop, detail)


def _base_hyp(m):
    p = map_profile(m)
    return p.universally_closed and p.etale_on_image


def check_base_change(g, u):
    """``F_{Y'/X'} ≅ X' ×_X F_{Y/X}`` over ``X'``, and ``Y' ≅ Y ×_F F'``."""
    _require(_base_hyp(g), "base_change")
    Yp, pY, pX = fiber_product(g, u)
    gp = pX
    Fp = base_lift(gp)
    F = base_lift(g)
    P, pu, pF = fiber_product(u, F.e)
    over = iso_over(Fp.e, pu)
    out = {"F'≅X'×F": over is not None}
    if over is not None:
        # F_u := pF ∘ iso; check left square Cartesian: Y' ≅ Y ×_F F'
        Fu = SpaceMap(Fp.F, F.F, {p: pF.assign[over[p]] for p in Fp.F.points})
        Q, q1, q2 = fiber_product(F.i, Fu)
        out["Y'≅Y×_F F'"] = find_isomorphism(Q, Yp) is not None
    return out


def check_closed_composite(h, g):
    """``h`` étale on image and ``g`` a closed embedding give ``F_{Z/Y} ≅ Y ×_X F_{Z/X}``."""
    _require(_base_hyp(h), "closed_composite", "h must be étale on its image")
    _require(is_closed_embedding(g), "closed_composite", "g must be a closed embedding")
    gh = h.then(g)
    FZY = base_lift(h)
    FZX = base_lift(gh)
    P, pY, pF = fiber_product(g, FZX.e)
    iso = iso_over(FZY.e, pY)
    return {"F_{Z/Y}≅Y×F_{Z/X}": iso is not None}


def check_iterated(h, g):
    """Lifting in two steps: ``F_{F_{Z/Y}/X} ≅ F_{Z/F_{Y/X}}`` over ``X``."""
    _require(_base_hyp(h), "iterated", "h must be étale on its image")
    _require(_base_hyp(g), "iterated", "g must be étale on its image")
    FZY = base_lift(h)
    comp = FZY.e.then(g)
    _require(_base_hyp(comp), "iterated", "g∘e_h must be étale on its image")
    lhs = base_lift(comp)
    FYX = base_lift(g)
    ih = h.then(FYX.i)
    _require(_base_hyp(ih), "iterated", "i∘h must be étale on its image")
    inner = base_lift(ih)
    rhs_e = inner.e.then(FYX.e)
    return {"F_{F_{Z/Y}/X}≅F_{Z/F_{Y/X}}": iso_over(lhs.e, rhs_e) is not None}


def pushforward_map(h, g, FZY, FZX):
    """``g_*: F_{Z/Y} → F_{Z/X}`` determined by the identity section on ``Z``."""
    zi = {v: k for k, v in FZY.i.assign.items()}
    assign = {}
    for p in FZY.F.points:
        if p in zi:
            assign[p] = FZX.i.assign[zi[p]]
        else:
            x = g.assign[FZY.e.assign[p]]
            pts = [q for q in FZX.e.fiber(x) if q not in set(FZX.i.assign.values())]
            if len(pts) != 1:
                return None
            assign[p] = pts[0]
    return SpaceMap(FZY.F, FZX.F, assign)


def check_two_step(h, g):
    """Pushforward ``g_*`` and ``F_{F_{Z/Y}/F_{Z/X}} ≅ F_{F_{Z/Y}/X} ≅ F_{Z/F_{Y/X}}``."""
    _require(_base_hyp(h) and _base_hyp(g), "two_step")
    Y = g.source
    ghz = {g.assign[y] for y in h.image()}
    pre = {y for y in Y.points if g.assign[y] in ghz}
    _require(pre == set(h.image()), "two_step", "g(h(Z))×_X Y ≇ h(Z)")
    FZY, FZX = base_lift(h), base_lift(h.then(g))
    gstar = pushforward_map(h, g, FZY, FZX)
    _require(gstar is not None, "two_step", "no pushforward map")
    out = {}
    _require(_base_hyp(gstar), "two_step", "g_* must be étale on its image")
    a = base_lift(gstar)
    a_e = a.e.then(FZX.e)
    comp = FZY.e.then(g)
    b = base_lift(comp)
    FYX = base_lift(g)
    c_inner = base_lift(h.then(FYX.i))
    c_e = c_inner.e.then(FYX.e)
    out["F_{F_{Z/Y}/F_{Z/X}}≅F_{F_{Z/Y}/X}"] = iso_over(a_e, b.e) is not None
    out["F_{F_{Z/Y}/X}≅F_{Z/F_{Y/X}}"] = iso_over(b.e, c_e) is not None
    return out


def check_product(g, f):
    """The four descriptions of ``F_{Y/X} ×_X F_{T/X}`` agree over ``X``."""
    _require(_base_hyp(g) and _base_hyp(f), "product")
    FY, FT = base_lift(g), base_lift(f)
    prod, p1, p2 = fiber_product(FY.e, FT.e)
    to_x = p1.then(FY.e)
    Z, zy, zt = fiber_product(g, f)
    out = {}

    def lift_over(m, Fbig):
        # m: Z → W (W = T or Y), lift F_{Z/W}, then map it into Fbig = F_{Y/X} (or F_{T/X})
        FZW = base_lift(m)
        zi = {v: k for k, v in FZW.i.assign.items()}
        big_outside = [q for q in Fbig.F.points if q not in set(Fbig.i.assign.values())]
        assign = {}
        for p in FZW.F.points:
            if p in zi:
                z = zi[p]
                y = z[0] if Fbig is FY else z[1]
                assign[p] = Fbig.i.assign[y]
            else:
                x = (f if Fbig is FY else g).assign[FZW.e.assign[p]]
                cands = [q for q in big_outside if Fbig.e.assign[q] == x]
                if len(cands) != 1:
                    return None, FZW
                assign[p] = cands[0]
        return SpaceMap(FZW.F, Fbig.F, assign), FZW

    m1, FZT = lift_over(zt, FY)
    m2, FZY = lift_over(zy, FT)
    for name, m, big in (("F_{F_{Z/T}/F_{Y/X}}", m1, FY), ("F_{F_{Z/Y}/F_{T/X}}", m2, FT)):
        ok = m is not None and _base_hyp(m)
        if ok:
            L = base_lift(m)
            ok = iso_over(L.e.then(big.e), to_x) is not None
        out[f"F_Y×F_T≅{name}"] = ok
    # gluing along Z
    gz = zy.then(g)
    FZX = base_lift(gz)
    zi_y = {v: k for k, v in FZY.i.assign.items()}
    zi_t = {v: k for k, v in FZT.i.assign.items()}
    a = SpaceMap(Z, FZY.F, FZY.i.assign)
    b = SpaceMap(Z, FZT.F, FZT.i.assign)
    glued, inY, inT = glue_along_closed(a, b)

    def to_fzx(FZW, zi, other_map):
        outside = [q for q in FZX.F.points if q not in set(FZX.i.assign.values())]
        assign = {}
        for p in FZW.F.points:
            if p in zi:
                assign[p] = FZX.i.assign[zi[p]]
            else:
                x = other_map.assign[FZW.e.assign[p]]
                cands = [q for q in outside if FZX.e.assign[q] == x]
                assign[p] = cands[0] if len(cands) == 1 else None
        return assign

    ay, at = to_fzx(FZY, zi_y, g), to_fzx(FZT, zi_t, f)
    ok = None not in ay.values() and None not in at.values()
    if ok:
        assign = {}
        for src, ins in ((ay, inY), (at, inT)):
            for p, q in src.items():
                s = ins.assign[p]
                if assign.setdefault(s, q) != q:
                    ok = False
        if ok:
            m = SpaceMap(glued, FZX.F, assign)
            ok = _base_hyp(m)
            if ok:
                L = base_lift(m)
                ok = iso_over(L.e.then(FZX.e), to_x) is not None
    out["F_Y×F_T≅F_{F_{Z/Y}∪F_{Z/T}/F_{Z/X}}"] = ok
    return out


def lift_identities_check(kind, *maps):
    """Dispatch one of the base-case identity checks; returns ``{identity: bool}``."""
    table = {
        "base_change": check_base_change,
        "closed_composite": check_closed_composite,
        "iterated": check_iterated,
        "two_step": check_two_step,
        "product": check_product,
    }
    return table[kind](*maps)
