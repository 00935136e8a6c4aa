"""Finite étale groupoids ``[R ⇉ U]`` over finite spaces, as models of DM stacks.

Composition is stored as ``comp[(r, s)]`` for arrows with ``tgt(r) == src(s)``;
the value is "first ``r``, then ``s``".
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import (
    AxiomViolation,
    NonEtaleStructureMap,
    NotLocalEmbedding,
    TargetMismatch,
    ValidationError,
    VerificationFailure,
)
from .finspace import (
    FinSpace,
    MapProfile,
    SpaceMap,
    UnionFind,
    all_maps,
    is_etale,
    map_profile,
    point_space,
    quotient,
    sort_key,
)


def product_order_space(points, factors):
    """Space on tuples ``points`` ordered coordinate-wise by the spaces ``factors``."""
    points = list(points)
    index = {}
    for p in points:
        index.setdefault(p[0], []).append(p)
    rel = []
    for p in points:
        for c in factors[0].closure(p[0]):
            for q in index.get(c, ()):
                if q != p and all(f.leq(a, b) for f, a, b in zip(factors, p, q)):
                    rel.append((p, q))
    return FinSpace(points, rel)


class GroupoidPresentation:
    __slots__ = ("U", "R", "src", "tgt", "unit", "inv", "comp", "name", "_hom")

    def __init__(self, U, R, src, tgt, unit, inv, comp, name=None):
        self.U, self.R = U, R
        self.src, self.tgt, self.unit, self.inv = src, tgt, unit, inv
        self.comp = dict(comp)
        self.name = name
        self._hom = None

    def __repr__(self):
        tag = f"{self.name}: " if self.name else ""
        return f"Groupoid({tag}{len(self.U)} objects, {len(self.R)} arrows)"

    def compose(self, r, s):
        """First ``r``, then ``s``."""
        return self.comp[(r, s)]

    def hom(self, a, b):
        if self._hom is None:
            h = {}
            for r in self.R.points:
                h.setdefault((self.src.assign[r], self.tgt.assign[r]), []).append(r)
            self._hom = h
        return self._hom.get((a, b), [])

    def aut(self, a):
        return self.hom(a, a)

    def is_trivial(self):
        return all(self.unit.assign[self.src.assign[r]] == r for r in self.R.points)

    def orbit_classes(self):
        uf = UnionFind(self.U.points)
        for r in self.R.points:
            uf.union(self.src.assign[r], self.tgt.assign[r])
        return uf.classes()

    def restrict(self, subset, name=None):
        """Full sub-presentation on an arrow-saturated set of atlas points."""
        subset = frozenset(subset)
        arrows = [r for r in self.R.points
                  if self.src.assign[r] in subset and self.tgt.assign[r] in subset]
        U = self.U.subspace(subset)
        R = self.R.subspace(arrows)
        aset = set(arrows)
        return GroupoidPresentation(
            U, R,
            SpaceMap(R, U, {r: self.src.assign[r] for r in arrows}, check=False),
            SpaceMap(R, U, {r: self.tgt.assign[r] for r in arrows}, check=False),
            SpaceMap(U, R, {u: self.unit.assign[u] for u in subset}, check=False),
            SpaceMap(R, R, {r: self.inv.assign[r] for r in arrows}, check=False),
            {k: v for k, v in self.comp.items() if k[0] in aset},
            name=name,
        )


def _check_map(source, target, assign, what):
    missing = [p for p in source.points if p not in assign]
    if missing:
        raise AxiomViolation(f"{what} is not total", missing[0])
    bad = [p for p in source.points if assign[p] not in target]
    if bad:
        raise AxiomViolation(f"{what} leaves its target", bad[0])
    try:
        return SpaceMap(source, target, assign)
    except Exception as exc:
        raise AxiomViolation(f"{what} is not continuous", str(exc)) from exc


def validate_groupoid(U, R, src, tgt, unit, inv, comp, name=None, exhaustive=True):
    """Check the groupoid axioms pointwise and that ``src``/``tgt`` are étale.

    Structure maps may be given as dicts or :class:`SpaceMap`.  With
    ``exhaustive=False`` associativity is left out (used for presentations
    produced by constructions that guarantee it).
    """
    as_dict = lambda m: m.assign if isinstance(m, SpaceMap) else dict(m)
    src = _check_map(R, U, as_dict(src), "src")
    tgt = _check_map(R, U, as_dict(tgt), "tgt")
    unit = _check_map(U, R, as_dict(unit), "unit")
    inv = _check_map(R, R, as_dict(inv), "inv")
    comp = dict(comp)
    s, t, e, i = src.assign, tgt.assign, unit.assign, inv.assign
    by_src = {}
    for r in R.points:
        by_src.setdefault(s[r], []).append(r)
    for u in U.points:
        if s[e[u]] != u or t[e[u]] != u:
            raise AxiomViolation("unit endpoints", u)
    pairs = []
    for r in R.points:
        for q in by_src.get(t[r], ()):
            if (r, q) not in comp:
                raise AxiomViolation("composition undefined on a composable pair", (r, q))
            c = comp[(r, q)]
            if c not in R or s[c] != s[r] or t[c] != t[q]:
                raise AxiomViolation("composite endpoints", (r, q))
            pairs.append((r, q))
    extra = set(comp) - set(pairs)
    if extra:
        raise AxiomViolation("composition defined on a non-composable pair", sorted(extra, key=sort_key)[0])
    for r in R.points:
        if comp[(e[s[r]], r)] != r or comp[(r, e[t[r]])] != r:
            raise AxiomViolation("unit law", r)
        if s[i[r]] != t[r] or t[i[r]] != s[r]:
            raise AxiomViolation("inverse endpoints", r)
        if comp[(r, i[r])] != e[s[r]] or comp[(i[r], r)] != e[t[r]]:
            raise AxiomViolation("inverse law", r)
    if exhaustive:
        for r, q in pairs:
            rq = comp[(r, q)]
            for w in by_src.get(t[q], ()):
                if comp[(rq, w)] != comp[(r, comp[(q, w)])]:
                    raise AxiomViolation("associativity", (r, q, w))
    # composition must be continuous on the space of composable pairs
    for (r1, q1) in pairs:
        for r2 in R.closure(r1):
            for q2 in R.closure(q1):
                if (r2, q2) in comp and not R.leq(comp[(r1, q1)], comp[(r2, q2)]):
                    raise AxiomViolation("composition is not continuous", ((r1, q1), (r2, q2)))
    for m, what in ((src, "src"), (tgt, "tgt")):
        if not is_etale(m):
            raise NonEtaleStructureMap(f"{what} is not étale")
    return GroupoidPresentation(U, R, src, tgt, unit, inv, comp, name=name)


# ---------------------------------------------------------------------------
# builders


def trivial_groupoid(A, name=None):
    """A space as a groupoid with identity arrows only (``R = A``)."""
    ident = {a: a for a in A.points}
    return GroupoidPresentation(
        A, A,
        SpaceMap(A, A, ident, check=False), SpaceMap(A, A, ident, check=False),
        SpaceMap(A, A, ident, check=False), SpaceMap(A, A, ident, check=False),
        {(a, a): a for a in A.points}, name=name,
    )


def group_groupoid(elements, mul, identity, name=None, point="*"):
    """``BG``: one object, arrows the group elements; ``mul(a, b)`` is ``a·b``."""
    U = point_space(point)
    R = FinSpace(elements, [])
    inverse = {}
    for a in elements:
        inverse[a] = next(b for b in elements if mul(a, b) == identity)
    # first r, then s  ↦  s·r
    comp = {(r, s): mul(s, r) for r in elements for s in elements}
    return validate_groupoid(
        U, R, {r: point for r in elements}, {r: point for r in elements},
        {point: identity}, inverse, comp, name=name,
    )


def cyclic_group(n):
    els = [str(k) for k in range(n)]
    return els, (lambda a, b: str((int(a) + int(b)) % n)), "0"


def z2_squared():
    els = ["00", "01", "10", "11"]
    return els, (lambda x, y: "".join(str((int(a) + int(b)) % 2) for a, b in zip(x, y))), "00"


def symmetric_group(n):
    """Permutations written as strings of images, e.g. ``"102"`` swaps 0 and 1."""
    els = ["".join(map(str, p)) for p in itertools.permutations(range(n))]
    return els, (lambda a, b: "".join(a[int(b[i])] for i in range(n))), "".join(map(str, range(n)))


def BZ2():
    return group_groupoid(*cyclic_group(2), name="BZ2")


def BZ2xZ2():
    return group_groupoid(*z2_squared(), name="B(Z2×Z2)")


def BS3():
    return group_groupoid(*symmetric_group(3), name="BS3")


def action_groupoid(G, P, anchor, act, name=None):
    """``G`` acting on the space ``P`` over its atlas: arrows ``(p, r)`` with ``anchor(p) = src(r)``."""
    pts = [(p, r) for p in P.points for r in G.R.points if G.src.assign[r] == anchor[p]]
    R = product_order_space(pts, [P, G.R])
    src = {(p, r): p for p, r in pts}
    tgt = {(p, r): act(r, p) for p, r in pts}
    unit = {p: (p, G.unit.assign[anchor[p]]) for p in P.points}
    inv = {(p, r): (act(r, p), G.inv.assign[r]) for p, r in pts}
    comp = {}
    for p, r in pts:
        q = act(r, p)
        for s in G.R.points:
            if G.src.assign[s] == anchor[q]:
                comp[((p, r), (q, s))] = (p, G.compose(r, s))
    return validate_groupoid(P, R, src, tgt, unit, inv, comp, name=name, exhaustive=False)


def product_groupoid(G, H, name=None):
    U = product_order_space([(a, b) for a in G.U.points for b in H.U.points], [G.U, H.U])
    R = product_order_space([(r, s) for r in G.R.points for s in H.R.points], [G.R, H.R])
    src = {(r, s): (G.src.assign[r], H.src.assign[s]) for r, s in R.points}
    tgt = {(r, s): (G.tgt.assign[r], H.tgt.assign[s]) for r, s in R.points}
    unit = {(a, b): (G.unit.assign[a], H.unit.assign[b]) for a, b in U.points}
    inv = {(r, s): (G.inv.assign[r], H.inv.assign[s]) for r, s in R.points}
    comp = {((r1, s1), (r2, s2)): (G.comp[(r1, r2)], H.comp[(s1, s2)])
            for (r1, r2) in G.comp for (s1, s2) in H.comp}
    return validate_groupoid(U, R, src, tgt, unit, inv, comp, name=name, exhaustive=False)


# ---------------------------------------------------------------------------
# strict maps


class StackMap:
    """A strict morphism ``(F_U, F_R)`` of presentations."""

    __slots__ = ("source", "target", "fU", "fR", "objects_map", "arrows_map")

    def __init__(self, source, target, fU, fR, check=True):
        self.source, self.target = source, target
        self.fU, self.fR = dict(fU), dict(fR)
        self.objects_map = self.arrows_map = None
        if check:
            self._check()

    @property
    def assign(self):
        return self.fU

    def _check(self):
        G, H = self.source, self.target
        SpaceMap(G.U, H.U, self.fU)
        SpaceMap(G.R, H.R, self.fR)
        for r in G.R.points:
            h = self.fR[r]
            if H.src.assign[h] != self.fU[G.src.assign[r]] or H.tgt.assign[h] != self.fU[G.tgt.assign[r]]:
                raise AxiomViolation("map does not commute with src/tgt", r)
            if self.fR[G.inv.assign[r]] != H.inv.assign[h]:
                raise AxiomViolation("map does not commute with inv", r)
        for u in G.U.points:
            if self.fR[G.unit.assign[u]] != H.unit.assign[self.fU[u]]:
                raise AxiomViolation("map does not preserve units", u)
        for (r, s), c in G.comp.items():
            if self.fR[c] != H.comp[(self.fR[r], self.fR[s])]:
                raise AxiomViolation("map does not preserve composition", (r, s))

    def then(self, other):
        if other.source is not self.target and (
                other.source.U != self.target.U or other.source.R != self.target.R):
            raise TargetMismatch("composition of non-composable stack maps")
        return StackMap(self.source, other.target,
                        {u: other.fU[v] for u, v in self.fU.items()},
                        {r: other.fR[s] for r, s in self.fR.items()}, check=False)

    def __eq__(self, other):
        return isinstance(other, StackMap) and self.fU == other.fU and self.fR == other.fR

    __hash__ = None


def identity_map(G):
    return StackMap(G, G, {u: u for u in G.U.points}, {r: r for r in G.R.points}, check=False)


def trivial_map(f, source=None, target=None):
    """A continuous map of spaces as a strict map of trivial groupoids."""
    G = source or trivial_groupoid(f.source)
    H = target or trivial_groupoid(f.target)
    return StackMap(G, H, f.assign, f.assign)


def atlas_map(G):
    """The atlas ``U → [R ⇉ U]`` as a strict map out of the trivial groupoid on ``U``."""
    return StackMap(trivial_groupoid(G.U), G, {u: u for u in G.U.points},
                    {u: G.unit.assign[u] for u in G.U.points}, check=False)


def group_hom_map(G, H, hom):
    """``BG → BH`` from a homomorphism given on elements."""
    (g0,), (h0,) = G.U.points, H.U.points
    return StackMap(G, H, {g0: h0}, {r: hom(r) for r in G.R.points})


def diagonal(G):
    GG = product_groupoid(G, G, name=f"{G.name or 'G'}²")
    return StackMap(G, GG, {u: (u, u) for u in G.U.points}, {r: (r, r) for r in G.R.points},
                    check=False)


# ---------------------------------------------------------------------------
# fiber products, inertia


@dataclass
class FiberProduct:
    P: GroupoidPresentation
    pr1: StackMap
    pr2: StackMap
    cell: dict  # atlas point -> arrow f(pr1) → g(pr2)


def stack_fiber_product(f, g):
    """2-fiber product: atlas points ``(u1, r, u2)`` with ``r: f(u1) → g(u2)``."""
    G1, G2, H = f.source, g.source, f.target
    if g.target is not H and (g.target.U != H.U or g.target.R != H.R):
        raise TargetMismatch("fiber product of maps with different targets")
    atlas = [(u1, r, u2) for u1 in G1.U.points for u2 in G2.U.points
             for r in H.hom(f.fU[u1], g.fU[u2])]
    U = product_order_space(atlas, [G1.U, H.R, G2.U])
    out1, out2 = {}, {}
    for r in G1.R.points:
        out1.setdefault(G1.src.assign[r], []).append(r)
    for r in G2.R.points:
        out2.setdefault(G2.src.assign[r], []).append(r)
    arrows = [(a, r1, r2) for a in atlas for r1 in out1.get(a[0], ()) for r2 in out2.get(a[2], ())]

    def target_of(a, r1, r2):
        back = H.inv.assign[f.fR[r1]]
        return (G1.tgt.assign[r1], H.compose(H.compose(back, a[1]), g.fR[r2]), G2.tgt.assign[r2])

    flat = [(a[0], a[1], a[2], r1, r2) for a, r1, r2 in arrows]
    Rflat = product_order_space(flat, [G1.U, H.R, G2.U, G1.R, G2.R])
    key = lambda a, r1, r2: (a[0], a[1], a[2], r1, r2)
    src = {key(*x): x[0] for x in arrows}
    tgt = {key(*x): target_of(*x) for x in arrows}
    unit = {a: key(a, G1.unit.assign[a[0]], G2.unit.assign[a[2]]) for a in atlas}
    inv = {key(*x): key(target_of(*x), G1.inv.assign[x[1]], G2.inv.assign[x[2]]) for x in arrows}
    comp = {}
    for a, r1, r2 in arrows:
        b = target_of(a, r1, r2)
        for s1 in out1.get(b[0], ()):
            for s2 in out2.get(b[2], ()):
                comp[(key(a, r1, r2), key(b, s1, s2))] = key(a, G1.compose(r1, s1), G2.compose(r2, s2))
    P = validate_groupoid(U, Rflat, src, tgt, unit, inv, comp, exhaustive=False)
    pr1 = StackMap(P, G1, {a: a[0] for a in atlas}, {x: x[3] for x in Rflat.points}, check=False)
    pr2 = StackMap(P, G2, {a: a[2] for a in atlas}, {x: x[4] for x in Rflat.points}, check=False)
    return FiberProduct(P, pr1, pr2, {a: a[1] for a in atlas})


def inertia(G, n=1):
    """``n``-th inertia: the fiber product of ``n + 1`` copies of ``G`` over ``G × G`` along the diagonal."""
    if n < 1:
        raise ValueError("n must be at least 1")
    d = diagonal(G)
    fp = stack_fiber_product(d, d)
    P, to_base = fp.P, fp.pr1.then(d)
    for _ in range(n - 1):
        fp = stack_fiber_product(to_base, d)
        P, to_base = fp.P, fp.pr1.then(to_base)
    P.name = f"I^{n}({G.name or 'G'})"
    return P


# ---------------------------------------------------------------------------
# components, coarse spaces, equivalences


def clopen_decomposition(G):
    """Minimal open, closed and arrow-saturated pieces of the atlas."""
    uf = UnionFind(G.U.points)
    for a, b in G.U.relation():
        uf.union(a, b)
    for r in G.R.points:
        uf.union(G.src.assign[r], G.tgt.assign[r])
    classes = {}
    for u, rep in uf.classes().items():
        classes.setdefault(rep, set()).add(u)
    pieces = sorted(classes.values(), key=lambda s: sort_key(min(s, key=sort_key)))
    return [G.restrict(p) for p in pieces]


def coarse_space(G):
    """Orbit space ``U / R`` with the induced order, and the quotient map from the atlas."""
    classes = G.orbit_classes()
    Q = quotient(G.U.relation(), G.U.points, classes)
    return Q, SpaceMap(G.U, Q, classes, check=False)


def has_trivial_stabilizers(G):
    return all(len(G.aut(u)) == 1 for u in G.U.points)


def to_space(G):
    """The space presented by ``G`` when all stabilizers are trivial and orbits are discrete."""
    if not has_trivial_stabilizers(G):
        raise ValidationError("presentation has non-trivial stabilizers")
    return coarse_space(G)


@dataclass
class MoritaWitness:
    fully_faithful: bool
    essentially_surjective: bool
    detail: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.fully_faithful and self.essentially_surjective


def morita_check(m):
    """Fully faithful (arrow square Cartesian) and essentially surjective (étale, surjective)."""
    G, H = m.source, m.target
    detail = {}
    ff = True
    images = {}
    for r in G.R.points:
        images[r] = (G.src.assign[r], G.tgt.assign[r], m.fR[r])
    expected = {(a, b, h) for a in G.U.points for b in G.U.points for h in H.hom(m.fU[a], m.fU[b])}
    if len(set(images.values())) != len(images) or set(images.values()) != expected:
        ff = False
        detail["arrow_square"] = "not a bijection onto U×U ×_{H×H} R"
    else:
        for r in G.R.points:
            for q in G.R.points:
                a, b = images[r], images[q]
                geo = G.U.leq(a[0], b[0]) and G.U.leq(a[1], b[1]) and H.R.leq(a[2], b[2])
                if geo != G.R.leq(r, q):
                    ff = False
                    detail["arrow_square"] = f"order mismatch at {(r, q)}"
                    break
            if not ff:
                break
    pts = [(a, h) for a in G.U.points for h in H.R.points if H.src.assign[h] == m.fU[a]]
    P = product_order_space(pts, [G.U, H.R])
    t = SpaceMap(P, H.U, {(a, h): H.tgt.assign[h] for a, h in pts}, check=False)
    prof = map_profile(t)
    es = prof.etale and prof.surjective
    if not es:
        detail["essential_surjectivity"] = prof.flags()
    return MoritaWitness(ff, es, detail)


def _strict_maps(G, H, injective_on_hom=True):
    """Generate strict maps ``G → H`` by backtracking over arrow assignments."""
    arrows = sorted(G.R.points, key=lambda r: (r != G.unit.assign[G.src.assign[r]], sort_key(r)))
    for fU in all_maps(G.U, H.U):
        fR = {}

        def consistent(r, h):
            a, b = G.src.assign[r], G.tgt.assign[r]
            if H.src.assign[h] != fU[a] or H.tgt.assign[h] != fU[b]:
                return False
            if injective_on_hom:
                for q in G.hom(a, b):
                    if q != r and fR.get(q) == h:
                        return False
            return True

        def assign(r, h, trail):
            stack = [(r, h)]
            while stack:
                r, h = stack.pop()
                if r in fR:
                    if fR[r] != h:
                        return False
                    continue
                if not consistent(r, h):
                    return False
                fR[r] = h
                trail.append(r)
                stack.append((G.inv.assign[r], H.inv.assign[h]))
                for q in G.R.points:
                    if q in fR:
                        if (r, q) in G.comp:
                            stack.append((G.comp[(r, q)], H.comp[(h, fR[q])]))
                        if (q, r) in G.comp:
                            stack.append((G.comp[(q, r)], H.comp[(fR[q], h)]))
            return True

        def rec(k):
            while k < len(arrows) and arrows[k] in fR:
                k += 1
            if k == len(arrows):
                try:
                    yield StackMap(G, H, fU, fR)
                except Exception:
                    pass
                return
            r = arrows[k]
            if r == G.unit.assign[G.src.assign[r]]:
                cands = [H.unit.assign[fU[G.src.assign[r]]]]
            else:
                cands = H.hom(fU[G.src.assign[r]], fU[G.tgt.assign[r]])
            for h in cands:
                trail = []
                if assign(r, h, trail):
                    yield from rec(k + 1)
                for q in trail:
                    del fR[q]

        yield from rec(0)


def find_equivalence(G, H, max_atlas=12):
    """Search exhaustively for a strict Morita map between small presentations (either direction)."""
    if len(G.U) > max_atlas or len(H.U) > max_atlas:
        raise ValueError("exhaustive equivalence search is limited to small atlases")
    for A, B in ((G, H), (H, G)):
        for m in _strict_maps(A, B):
            if morita_check(m).ok:
                return m
    return None


def morita_equivalent(G, H, max_atlas=12):
    return find_equivalence(G, H, max_atlas) is not None


# ---------------------------------------------------------------------------
# map profiles


@dataclass
class StackProfile:
    representable: bool
    base: MapProfile = None

    def flags(self):
        out = {"representable": self.representable}
        keys = ("etale", "local_embedding", "closed_embedding", "proper", "separated",
                "surjective", "universally_closed", "etale_on_image")
        for k in keys:
            val = bool(self.base and getattr(self.base, k))
            if k in ("local_embedding", "closed_embedding"):
                val = val and self.representable
            out[k] = val
        return out

    def __getattr__(self, name):
        if name in ("etale", "local_embedding", "closed_embedding", "proper", "separated",
                    "surjective", "universally_closed", "etale_on_image"):
            return self.flags()[name]
        raise AttributeError(name)


def atlas_base_change(m):
    """``G ×_H U_H`` as a space over ``U_H`` (requires representability)."""
    H = m.target
    fp = stack_fiber_product(m, atlas_map(H))
    Q, q = coarse_space(fp.P)
    down = {}
    for a in fp.P.U.points:
        down[q.assign[a]] = a[2]
    return fp, q, SpaceMap(Q, H.U, down)


def stack_map_profile(m):
    G = m.source
    representable = True
    for a in G.U.points:
        if len({m.fR[r] for r in G.aut(a)}) != len(G.aut(a)):
            representable = False
            break
    if not representable:
        return StackProfile(False, None)
    fp, _, base = atlas_base_change(m)
    if not has_trivial_stabilizers(fp.P):
        return StackProfile(False, None)
    return StackProfile(True, map_profile(base))


# ---------------------------------------------------------------------------
# lifting through the atlas


@dataclass
class AtlasPullback:
    """``Y ×_X U_X`` as a space ``V0`` over ``U0`` with the transport action of ``R_X``."""

    g: StackMap
    V0: FinSpace
    g0: SpaceMap
    fp: FiberProduct
    cls: dict

    def transport(self, r, v):
        X = self.g.target
        u1, rho, u0 = v
        if X.src.assign[r] != u0:
            raise ValueError("arrow does not start at the anchor of the point")
        return self.cls[(u1, X.compose(rho, r), X.tgt.assign[r])]

    def section_point(self, u1):
        """The class of an atlas point of ``Y`` (with the unit arrow)."""
        X = self.g.target
        x = self.g.fU[u1]
        return self.cls[(u1, X.unit.assign[x], x)]


def atlas_pullback(g):
    X = g.target
    fp = stack_fiber_product(g, atlas_map(X))
    if not has_trivial_stabilizers(fp.P):
        raise NotLocalEmbedding("map is not representable (stabilizers do not inject)")
    classes = fp.P.orbit_classes()
    Q = quotient(fp.P.U.relation(), fp.P.U.points, classes)
    g0 = SpaceMap(Q, X.U, {classes[a]: a[2] for a in fp.P.U.points})
    return AtlasPullback(g, Q, g0, fp, classes)


def _lifted_groupoid(ap, res, act_point):
    X = ap.g.target
    anchor = res.e.assign
    F = action_groupoid(X, res.F, anchor, act_point, name="F")
    e = StackMap(F, X, dict(anchor), {(p, r): r for p, r in F.R.points})
    return F, e


def groupoid_base_lift(g):
    """Lift of a representable map that is étale on its image, via the atlas.

    The atlas of the lift is the space lift of ``V0 → U0``; arrows come from
    ``R_X`` transporting points.  The literal presentation obtained by removing
    the mixed components from ``U ×_X U`` is built as well and compared.
    """
    from .lift import LiftResult, base_lift

    ap = atlas_pullback(g)
    res = base_lift(ap.g0)
    X = g.target
    iinv = {v: k for k, v in res.i.assign.items()}
    outside = {res.e.assign[p]: p for p in res.F.points if p not in iinv}

    def act(r, p):
        if p in iinv:
            return res.i.assign[ap.transport(r, iinv[p])]
        return outside[X.tgt.assign[r]]

    F, e = _lifted_groupoid(ap, res, act)
    cert = {"atlas_lift": all(res.certificates.values())}
    cert["literal_presentation_matches"] = _literal_arrows(ap, res, iinv) == {
        (p, r, act(r, p)) for p, r in F.R.points}
    prof = stack_map_profile(e)
    cert["e_etale"] = prof.etale
    cert["e_universally_closed"] = prof.universally_closed
    out = LiftResult(F=F, e=e, g=g, certificates=cert, tier="groupoid")
    out.atlas = res
    bad = [k for k, v in cert.items() if not v]
    if bad:
        raise VerificationFailure(f"groupoid base lift failed {bad}", cert)
    return out


def _literal_arrows(ap, res, iinv):
    """``(U ×_X U) ∖ (S12 ∪ S21 ∪ (S22 ∖ S11)) ∪ units`` as triples ``(p, r, p')``."""
    X = ap.g.target
    eU = res.e.assign
    U = res.F.points
    V = [(v, p) for v in ap.V0.points for p in U if ap.g0.assign[v] == eU[p]]
    first = {(v, p) for v, p in V if iinv.get(p) == v}
    part = lambda v, p: 1 if (v, p) in first else 2
    S = {(1, 1): set(), (1, 2): set(), (2, 1): set(), (2, 2): set()}
    for v, p in V:
        for r in X.R.points:
            if X.src.assign[r] != eU[p]:
                continue
            w = ap.transport(r, v)
            for q in U:
                if eU[q] == X.tgt.assign[r]:
                    S[(part(v, p), part(w, q))].add((p, r, q))
    allpairs = {(p, r, q) for p in U for q in U for r in X.hom(eU[p], eU[q])}
    bad = S[(1, 2)] | S[(2, 1)] | (S[(2, 2)] - S[(1, 1)])
    units = {(p, X.unit.assign[eU[p]], p) for p in U}
    return (allpairs - bad) | units


def groupoid_universal_lift(g, verify=True, max_probe=3):
    """Universal lift of a representable proper local embedding of groupoids.

    The atlas is the space universal lift of ``V0 → U0``; its points carry
    labels of points of ``V0`` which ``R_X`` transports sheet by sheet.
    """
    from .lift import Label, LiftResult, label_of
    from .network import universal_lift

    ap = atlas_pullback(g)
    res = universal_lift(ap.g0, verify=verify)
    X = g.target

    def act(r, p):
        if isinstance(p, Label) and len(p):
            return Label({k: ap.transport(r, v) for k, v in label_of(p).items()})
        return X.tgt.assign[r]

    F, e = _lifted_groupoid(ap, res, act)
    out = LiftResult(F=F, e=e, g=g, network=res.network, tier="groupoid")
    out.atlas = res
    if verify:
        cert = {f"atlas {k}": v for k, v in res.certificates.items()}
        prof = stack_map_profile(e)
        cert["e_representable"] = prof.representable
        cert["e_etale"] = prof.etale
        cert["e_universally_closed"] = prof.universally_closed
        if max_probe is not None:
            rep = groupoid_functor_agreement(g, out, max_probe)
            cert["oracle_agreement"] = rep["ok"]
        out.certificates = cert
        bad = [k for k, v in cert.items() if v is False]
        if bad:
            raise VerificationFailure(f"groupoid universal lift failed {bad}", cert)
    return out


def probe_pullback(m, alpha):
    """``coarse(G ×_X T) → T`` for a probe ``α: T → U_X`` viewed as a map of stacks."""
    X = m.target
    T = alpha.source
    probe = StackMap(trivial_groupoid(T), X, alpha.assign,
                     {t: X.unit.assign[alpha.assign[t]] for t in T.points}, check=False)
    fp = stack_fiber_product(m, probe)
    Q, q = coarse_space(fp.P)
    return SpaceMap(Q, T, {q.assign[a]: a[2] for a in fp.P.U.points}), fp


def groupoid_functor_agreement(g, lift, max_probe):
    """Compare families over ``Y ×_X T → T`` with sections of ``F ×_X T → T`` for space probes."""
    from .finspace import identity
    from .oracle import enumerate_points, probe_family

    n = len(lift.network.labels) if lift.network is not None else None
    X = g.target
    report = {"ok": True, "probes": 0, "failures": []}
    for alpha in probe_family(X.U, max_probe):
        report["probes"] += 1
        gT, fpY = probe_pullback(g, alpha)
        eT, fpF = probe_pullback(lift.e, alpha)
        if not has_trivial_stabilizers(fpY.P) or not has_trivial_stabilizers(fpF.P):
            report["ok"] = False
            report["failures"].append((alpha, "stabilizers"))
            continue
        pts = enumerate_points(gT, identity(alpha.source), n=n)
        T = alpha.source
        sections = list(all_maps(T, eT.source, constraint=lambda t: eT.fiber(t)))
        if len(pts) != len(sections):
            report["ok"] = False
            report["failures"].append((alpha, len(pts), len(sections)))
    return report


def groupoid_degree_one_split(g):
    """Generic-degree-one factor at groupoid tier: the space split of ``V0 → U0``, acted on by ``R_X``."""
    from .lift import DegreeOneSplit, degree_one_split

    ap = atlas_pullback(g)
    sp = degree_one_split(ap.g0)
    X = g.target

    def act(r, d):
        vs = [v for v in ap.V0.points if sp.e.assign[v] == d]
        imgs = {sp.e.assign[ap.transport(r, v)] for v in vs}
        if len(imgs) != 1:
            raise VerificationFailure("sheet germs are not preserved by transport")
        return imgs.pop()

    D = action_groupoid(X, sp.D, sp.g1.assign, act, name="D")
    g1 = StackMap(D, X, dict(sp.g1.assign), {(d, r): r for d, r in D.R.points})
    Y = g.source
    eU = {u: sp.e.assign[ap.section_point(u)] for u in Y.U.points}
    eR = {s: (eU[Y.src.assign[s]], g.fR[s]) for s in Y.R.points}
    e = StackMap(Y, D, eU, eR)
    cert = {"g=g1∘e": e.then(g1) == g, "atlas": sp.certificates}
    return DegreeOneSplit(D=D, e=e, g1=g1, certificates=cert)


# ---------------------------------------------------------------------------
# canonical network at groupoid tier


def groupoid_power(g, n):
    """``∏^n_X Y`` over a common atlas point of ``X``, and its off-diagonal part ``Y^n``.

    Atlas points are ``(u, ((v_1, ρ_1), ..., (v_n, ρ_n)))`` with ``ρ_k: g(v_k) → u``.
    """
    X, Y = g.target, g.source
    per_u = {}
    for v in Y.U.points:
        for rho in X.R.points:
            if X.src.assign[rho] == g.fU[v]:
                per_u.setdefault(X.tgt.assign[rho], []).append((v, rho))
    atlas = []
    for u in X.U.points:
        for coords in itertools.product(per_u.get(u, []), repeat=n):
            atlas.append((u, coords))

    def diagonal_point(p):
        u, coords = p
        for k, l in itertools.combinations(range(n), 2):
            (vk, rk), (vl, rl) = coords[k], coords[l]
            for s in Y.hom(vk, vl):
                if X.compose(g.fR[s], rl) == rk:
                    return True
        return False

    off = [p for p in atlas if not diagonal_point(p)]
    return _power_groupoid(g, off, n)


def _power_groupoid(g, atlas, n):
    X, Y = g.target, g.source
    flat = lambda p: (p[0],) + tuple(c for vr in p[1] for c in vr)
    unflat = {flat(p): p for p in atlas}
    factors = [X.U] + [Y.U, X.R] * n
    Uf = product_order_space([flat(p) for p in atlas], factors)
    U = Uf.relabel(unflat)
    aset = set(atlas)
    ys = {}
    for s in Y.R.points:
        ys.setdefault(Y.src.assign[s], []).append(s)
    arrows = []
    for p in atlas:
        u, coords = p
        for r in X.R.points:
            if X.src.assign[r] != u:
                continue
            for sig in itertools.product(*[ys[v] for v, _ in coords]):
                arrows.append((p, r, sig))

    def act(p, r, sig):
        u, coords = p
        new = tuple(
            (Y.tgt.assign[s], X.compose(X.compose(X.inv.assign[g.fR[s]], rho), r))
            for (v, rho), s in zip(coords, sig)
        )
        return (X.tgt.assign[r], new)

    rflat = lambda a: flat(a[0]) + (a[1],) + a[2]
    Rf = product_order_space([rflat(a) for a in arrows], factors + [X.R] + [Y.R] * n)
    back = {rflat(a): a for a in arrows}
    R = Rf.relabel(back)
    src = {a: a[0] for a in arrows}
    tgt = {a: act(*a) for a in arrows}
    for a, b in tgt.items():
        if b not in aset:
            raise VerificationFailure("off-diagonal locus is not saturated")
    unit = {p: (p, X.unit.assign[p[0]], tuple(Y.unit.assign[v] for v, _ in p[1])) for p in atlas}
    inv = {a: (tgt[a], X.inv.assign[a[1]], tuple(Y.inv.assign[s] for s in a[2])) for a in arrows}
    by_src = {}
    for a in arrows:
        by_src.setdefault(a[0], []).append(a)
    comp = {}
    for a in arrows:
        for b in by_src.get(tgt[a], ()):
            comp[(a, b)] = (a[0], X.compose(a[1], b[1]),
                            tuple(Y.compose(s, t) for s, t in zip(a[2], b[2])))
    return validate_groupoid(U, R, src, tgt, unit, inv, comp, exhaustive=False)


def groupoid_multiplicity(g, cap=8):
    n = 0
    while n < cap and len(groupoid_power(g, n + 1).U):
        n += 1
    return n


def power_projection(g, big, small, positions):
    """Strict map ``Y^{|J|} → Y^{|I|}`` keeping the coordinates in ``positions`` (or to ``X`` when empty)."""
    if not positions:
        return StackMap(big, small, {p: p[0] for p in big.U.points},
                        {a: a[1] for a in big.R.points}, check=False)
    fU = {p: (p[0], tuple(p[1][k] for k in positions)) for p in big.U.points}
    fR = {a: (fU[a[0]], a[1], tuple(a[2][k] for k in positions)) for a in big.R.points}
    return StackMap(big, small, fU, fR)


def groupoid_canonical_network(g):
    """Nodes ``Y_J = Y^{|J|}`` (common-atlas model), target ``X``, edges coordinate projections."""
    from .network import Network, subsets

    n = groupoid_multiplicity(g)
    labels = tuple(range(1, n + 1))
    powers = {k: groupoid_power(g, k) for k in range(1, n + 1)}
    nodes = {}
    for J in subsets(labels):
        nodes[J] = g.target if not J else powers[len(J)]
    edges = {}
    for J in nodes:
        for I in nodes:
            if I < J:
                order = sorted(J)
                positions = [order.index(i) for i in sorted(I)]
                edges[(J, I)] = power_projection(g, nodes[J], nodes[I], positions)
    return Network(labels=labels, nodes=nodes, edges=edges, stage=n, g=g)
