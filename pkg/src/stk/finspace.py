"""Finite T0 spaces, presented by their specialization order.

Orientation: ``a ⤳ b`` (written ``space.leq(a, b)``) means ``b`` lies in the
closure of ``a``.  Open sets are the generization-closed subsets, closed sets
the specialization-closed ones.  Neither is stored.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import (
    AntisymmetryViolation,
    NotClosed,
    NotClosedEmbedding,
    NotContinuous,
    TargetMismatch,
    UnknownPoint,
    ValidationError,
)


def sort_key(p):
    """Deterministic total order on the point ids we produce (str, int, nested tuples)."""
    if isinstance(p, tuple):
        return (2, tuple(sort_key(x) for x in p))
    if isinstance(p, bool):
        return (0, int(p), "")
    if isinstance(p, int):
        return (0, p, "")
    return (1, 0, str(p))


def sorted_points(pts):
    return tuple(sorted(pts, key=sort_key))


class FinSpace:
    """A finite T0 space.

    Built through :func:`validate_space`; the constructor trusts that ``le``
    is already a reflexive, transitive, antisymmetric relation.
    """

    __slots__ = ("points", "_pset", "_gen", "_clo")

    def __init__(self, points, le):
        self.points = sorted_points(points)
        self._pset = frozenset(self.points)
        gen = {p: {p} for p in self.points}
        clo = {p: {p} for p in self.points}
        for a, b in le:
            clo[a].add(b)
            gen[b].add(a)
        self._gen = {p: frozenset(s) for p, s in gen.items()}
        self._clo = {p: frozenset(s) for p, s in clo.items()}

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, p):
        return p in self._pset

    def __eq__(self, other):
        return (
            isinstance(other, FinSpace)
            and self._pset == other._pset
            and self._clo == other._clo
        )

    def __hash__(self):
        return hash((self._pset, frozenset(self.relation())))

    def __repr__(self):
        return f"FinSpace({len(self)} points, {len(self.relation())} strict specializations)"

    def _check(self, p):
        if p not in self._pset:
            raise UnknownPoint(p)

    def leq(self, a, b):
        """True when ``a ⤳ b``."""
        return b in self._clo[a]

    def gen(self, p):
        """Minimal open neighbourhood of ``p``: all of its generizations."""
        self._check(p)
        return self._gen[p]

    def closure(self, p):
        self._check(p)
        return self._clo[p]

    def relation(self):
        """Strict specialization pairs, sorted."""
        return tuple(
            (a, b) for a in self.points for b in sorted_points(self._clo[a]) if a != b
        )

    def covers(self):
        """Hasse diagram edges ``a ⤳ b`` with nothing strictly in between."""
        out = []
        for a, b in self.relation():
            if not any(c not in (a, b) and self.leq(a, c) and self.leq(c, b) for c in self._clo[a]):
                out.append((a, b))
        return tuple(out)

    def is_open(self, subset):
        subset = set(subset)
        return all(self._gen[p] <= subset for p in subset)

    def is_closed(self, subset):
        subset = set(subset)
        return all(self._clo[p] <= subset for p in subset)

    def closure_of(self, subset):
        out = set()
        for p in subset:
            out |= self._clo[p]
        return frozenset(out)

    def open_hull(self, subset):
        out = set()
        for p in subset:
            out |= self._gen[p]
        return frozenset(out)

    def closed_subsets(self):
        """All closed subsets, smallest first (deterministic)."""
        pts = self.points
        seen = set()
        out = []
        for r in range(len(pts) + 1):
            for combo in itertools.combinations(pts, r):
                s = frozenset(combo)
                if s not in seen and self.is_closed(s):
                    seen.add(s)
                    out.append(s)
        return out

    def subspace(self, subset):
        subset = set(subset)
        for p in subset:
            self._check(p)
        return FinSpace(subset, [(a, b) for a, b in self.relation() if a in subset and b in subset])

    def generic_points(self):
        return tuple(p for p in self.points if len(self._gen[p]) == 1)

    def components(self):
        """Connected components, as frozensets, in deterministic order."""
        seen = set()
        comps = []
        for p in self.points:
            if p in seen:
                continue
            stack, comp = [p], set()
            while stack:
                q = stack.pop()
                if q in comp:
                    continue
                comp.add(q)
                stack.extend((self._gen[q] | self._clo[q]) - comp)
            seen |= comp
            comps.append(frozenset(comp))
        return comps

    def topological_order(self):
        """Points ordered so every generization precedes its specializations."""
        return tuple(sorted(self.points, key=lambda p: (len(self._gen[p]), sort_key(p))))

    def relabel(self, mapping):
        return FinSpace([mapping[p] for p in self.points],
                        [(mapping[a], mapping[b]) for a, b in self.relation()])


def validate_space(points, relation=()):
    """Close ``relation`` reflexively and transitively and check antisymmetry.

    ``relation`` holds pairs ``(a, b)`` meaning ``a ⤳ b``.
    """
    pts = sorted_points(set(points))
    pset = set(pts)
    clo = {p: {p} for p in pts}
    for a, b in relation:
        if a not in pset or b not in pset:
            raise UnknownPoint(a if a not in pset else b)
        clo[a].add(b)
    # Warshall
    for k in pts:
        for a in pts:
            if k in clo[a]:
                clo[a] |= clo[k]
    for a in pts:
        for b in clo[a]:
            if a != b and a in clo[b]:
                x, y = sorted_points((a, b))
                raise AntisymmetryViolation(x, y)
    return FinSpace(pts, [(a, b) for a in pts for b in clo[a] if a != b])


def point_space(p="pt"):
    return FinSpace([p], [])


def empty_space():
    return FinSpace([], [])


def discrete(points):
    return FinSpace(points, [])


def disjoint_union(*spaces, tags=None):
    """Disjoint union with points ``(tag, p)``; tags default to 0, 1, ..."""
    tags = list(range(len(spaces))) if tags is None else list(tags)
    pts, rel = [], []
    for t, s in zip(tags, spaces):
        pts.extend((t, p) for p in s.points)
        rel.extend(((t, a), (t, b)) for a, b in s.relation())
    return FinSpace(pts, rel)


class SpaceMap:
    """A continuous map between finite spaces (checked on construction)."""

    __slots__ = ("source", "target", "assign")

    def __init__(self, source, target, assign, check=True):
        self.source = source
        self.target = target
        self.assign = {p: assign[p] for p in source.points} if check else dict(assign)
        if check:
            for p in source.points:
                if self.assign[p] not in target:
                    raise UnknownPoint(self.assign[p])
            for a, b in source.relation():
                if not target.leq(self.assign[a], self.assign[b]):
                    raise NotContinuous(f"{a!r} ⤳ {b!r} but images {self.assign[a]!r}, {self.assign[b]!r} are not")

    def __call__(self, p):
        return self.assign[p]

    def __eq__(self, other):
        return (
            isinstance(other, SpaceMap)
            and self.source == other.source
            and self.target == other.target
            and self.assign == other.assign
        )

    def __hash__(self):
        return hash(tuple(sorted(self.assign.items(), key=lambda kv: sort_key(kv[0]))))

    def __repr__(self):
        return f"SpaceMap({len(self.source)} -> {len(self.target)})"

    def image(self):
        return frozenset(self.assign.values())

    def fiber(self, q):
        return frozenset(p for p, v in self.assign.items() if v == q)

    def then(self, other):
        """``other ∘ self``."""
        if other.source != self.target:
            raise TargetMismatch("composition of non-composable maps")
        return SpaceMap(self.source, other.target,
                        {p: other.assign[v] for p, v in self.assign.items()}, check=False)

    def restrict(self, subset):
        sub = self.source.subspace(subset)
        return SpaceMap(sub, self.target, {p: self.assign[p] for p in sub.points}, check=False)

    def corestrict(self, target):
        return SpaceMap(self.source, target, self.assign)


def identity(space):
    return SpaceMap(space, space, {p: p for p in space.points}, check=False)


def inclusion(sub, space):
    return SpaceMap(sub, space, {p: p for p in sub.points})


def topology_query(space, point):
    """``(minimal_open, closure)`` of a point."""
    return space.gen(point), space.closure(point)


@dataclass(frozen=True)
class MapProfile:
    open_embedding: bool
    closed_embedding: bool
    etale: bool
    local_embedding: bool
    proper: bool
    separated: bool
    surjective: bool
    universally_closed: bool
    etale_on_image: bool
    fiber_degrees: dict = field(default_factory=dict, compare=False)

    def flags(self):
        return {k: getattr(self, k) for k in (
            "open_embedding", "closed_embedding", "etale", "local_embedding",
            "proper", "separated", "surjective", "universally_closed", "etale_on_image")}


def _order_embedding(f, subset):
    """Is ``f`` injective and order reflecting on ``subset``?"""
    src, tgt = f.source, f.target
    subset = list(subset)
    if len({f.assign[p] for p in subset}) != len(subset):
        return False
    for a in subset:
        for b in subset:
            if tgt.leq(f.assign[a], f.assign[b]) and not src.leq(a, b):
                return False
    return True


def is_local_embedding(f):
    return all(_order_embedding(f, f.source.gen(p)) for p in f.source.points)


def is_etale(f):
    return is_local_embedding(f) and all(
        len(f.source.gen(p)) == len(f.target.gen(f.assign[p])) for p in f.source.points
    )


def lifts_specializations(f):
    """Closedness proxy: every specialization of f(a) is hit by a specialization of a."""
    for a in f.source.points:
        hit = {f.assign[b] for b in f.source.closure(a)}
        if not f.target.closure(f.assign[a]) <= hit:
            return False
    return True


def is_separated(f):
    """The diagonal of ``f`` is closed in the fiber product of ``f`` with itself."""
    src = f.source
    for c in src.points:
        cl = src.closure(c)
        for a in cl:
            for b in cl:
                if a != b and f.assign[a] == f.assign[b]:
                    return False
    return True


def is_closed_embedding(f):
    img = f.image()
    return f.target.is_closed(img) and _order_embedding(f, f.source.points)


def is_etale_on_image(f):
    return is_etale(f.corestrict(f.target.subspace(f.image())))


def map_profile(f):
    if not isinstance(f, SpaceMap):
        raise TypeError("map_profile expects a SpaceMap")
    for a, b in f.source.relation():
        if not f.target.leq(f.assign[a], f.assign[b]):
            raise NotContinuous((a, b))
    local = is_local_embedding(f)
    etale = is_etale(f)
    injective = len(f.image()) == len(f.source)
    closed_emb = is_closed_embedding(f)
    uc = lifts_specializations(f)
    sep = is_separated(f)
    return MapProfile(
        open_embedding=etale and injective and f.target.is_open(f.image()),
        closed_embedding=closed_emb,
        etale=etale,
        local_embedding=local,
        proper=sep and uc,
        separated=sep,
        surjective=f.image() == frozenset(f.target.points),
        universally_closed=uc,
        etale_on_image=is_etale_on_image(f),
        fiber_degrees={q: len(f.fiber(q)) for q in f.target.points},
    )


def fiber_product(f, g):
    """``A ×_X B`` for ``f: A → X``, ``g: B → X``; points are pairs ``(a, b)``."""
    if f.target != g.target:
        raise TargetMismatch("fiber product of maps with different targets")
    A, B = f.source, g.source
    pts = [(a, b) for a in A.points for b in B.points if f.assign[a] == g.assign[b]]
    pset = set(pts)
    rel = [
        (p, q) for p in pts for q in pts
        if p != q and A.leq(p[0], q[0]) and B.leq(p[1], q[1])
    ]
    P = FinSpace(pset, rel)
    pr1 = SpaceMap(P, A, {p: p[0] for p in P.points}, check=False)
    pr2 = SpaceMap(P, B, {p: p[1] for p in P.points}, check=False)
    return P, pr1, pr2


def fiber_product_universal_map(P, u, v):
    """The induced map ``T → A ×_X B`` from ``u: T → A`` and ``v: T → B``."""
    assign = {}
    for t in u.source.points:
        pt = (u.assign[t], v.assign[t])
        if pt not in P:
            raise TargetMismatch(f"{t!r} does not land in the fiber product")
        assign[t] = pt
    return SpaceMap(u.source, P, assign)


def quotient(space_pairs, points, classes):
    """Order generated on equivalence classes; ``classes`` maps point -> class id."""
    pts = set(classes[p] for p in points)
    rel = [(classes[a], classes[b]) for a, b in space_pairs if classes[a] != classes[b]]
    try:
        return validate_space(pts, rel)
    except AntisymmetryViolation as exc:
        raise ValidationError(f"quotient is not T0: {exc}") from exc


class UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # smallest id wins so class representatives are canonical
        if sort_key(rb) < sort_key(ra):
            ra, rb = rb, ra
        self.parent[rb] = ra

    def classes(self):
        return {x: self.find(x) for x in self.parent}


def glue_along_closed(i, j):
    """Pushout of closed embeddings ``A ← Z → B``.

    Points of the result are ``(0, a)`` for points of ``A`` and ``(1, b)`` for
    points of ``B`` outside ``j(Z)``.  Returns ``(S, inA, inB)``.
    """
    if i.source != j.source:
        raise TargetMismatch("gluing maps must share their source")
    for m, name in ((i, "first"), (j, "second")):
        if not is_closed_embedding(m):
            raise NotClosedEmbedding(f"{name} gluing map is not a closed embedding")
    A, B = i.target, j.target
    jinv = {j.assign[z]: z for z in i.source.points}
    to_s_a = {a: (0, a) for a in A.points}
    to_s_b = {b: (0, i.assign[jinv[b]]) if b in jinv else (1, b) for b in B.points}
    rel = [(to_s_a[a], to_s_a[b]) for a, b in A.relation()]
    rel += [(to_s_b[a], to_s_b[b]) for a, b in B.relation()]
    pts = set(to_s_a.values()) | set(to_s_b.values())
    try:
        S = validate_space(pts, rel)
    except AntisymmetryViolation as exc:
        raise ValidationError(f"glued space is not T0: {exc}") from exc
    return S, SpaceMap(A, S, to_s_a, check=False), SpaceMap(B, S, to_s_b, check=False)


def glue_universal_map(S, inA, inB, u, v):
    """Map ``S → T`` induced by ``u: A → T`` and ``v: B → T`` agreeing on ``Z``."""
    assign = {}
    for src_map, m in ((inA, u), (inB, v)):
        for p, s in src_map.assign.items():
            val = m.assign[p]
            if assign.setdefault(s, val) != val:
                raise TargetMismatch(f"maps disagree on glued point {s!r}")
    return SpaceMap(S, u.target, assign)


def image_factorization(f):
    img = f.target.subspace(f.image())
    return SpaceMap(f.source, img, f.assign), inclusion(img, f.target)


def complement_of_closed(space, closed):
    closed = set(closed)
    if not space.is_closed(closed):
        raise NotClosed("subset is not specialization-closed")
    return space.subspace(set(space.points) - closed)


def _invariant(space, p):
    return (len(space.gen(p)), len(space.closure(p)))


def find_isomorphism(A, B, compatible=None):
    """An order isomorphism ``A → B`` as a dict, or ``None``.

    ``compatible(a, b)`` may further restrict which pairs can correspond,
    e.g. to demand an isomorphism over a common base.
    """
    if len(A) != len(B):
        return None
    if sorted(_invariant(A, p) for p in A.points) != sorted(_invariant(B, p) for p in B.points):
        return None
    order = sorted(A.points, key=lambda p: (-len(A.gen(p)) - len(A.closure(p)), sort_key(p)))
    cands = {
        a: [b for b in B.points if _invariant(B, b) == _invariant(A, a)
            and (compatible is None or compatible(a, b))]
        for a in A.points
    }
    assign, used = {}, set()

    def consistent(a, b):
        for a2, b2 in assign.items():
            if A.leq(a, a2) != B.leq(b, b2) or A.leq(a2, a) != B.leq(b2, b):
                return False
        return True

    def search(k):
        if k == len(order):
            return True
        a = order[k]
        for b in cands[a]:
            if b in used or not consistent(a, b):
                continue
            assign[a] = b
            used.add(b)
            if search(k + 1):
                return True
            del assign[a]
            used.discard(b)
        return False

    return dict(assign) if search(0) else None


def isomorphic(A, B):
    return find_isomorphism(A, B) is not None


def iso_over(eA, eB):
    """Isomorphism of spaces over a common base (commuting with eA, eB)."""
    if eA.target != eB.target:
        raise TargetMismatch("spaces live over different bases")
    return find_isomorphism(eA.source, eB.source,
                            compatible=lambda a, b: eA.assign[a] == eB.assign[b])


def all_maps(T, X, constraint=None):
    """Every continuous map ``T → X`` (as dicts), optionally with allowed targets per point."""
    order = T.topological_order()
    choices = {t: (constraint(t) if constraint else X.points) for t in order}
    assign = {}

    def rec(k):
        if k == len(order):
            yield dict(assign)
            return
        t = order[k]
        for x in choices[t]:
            ok = True
            for s in T.gen(t):
                if s != t and not X.leq(assign[s], x):
                    ok = False
                    break
            if ok:
                assign[t] = x
                yield from rec(k + 1)
        assign.pop(t, None)

    yield from rec(0)


def canonical_form(space):
    """A relabelling-invariant key (brute force over permutations; small spaces only)."""
    pts = space.points
    best = None
    for perm in itertools.permutations(range(len(pts))):
        idx = dict(zip(pts, perm))
        key = tuple(sorted((idx[a], idx[b]) for a, b in space.relation()))
        if best is None or key < best:
            best = key
    return (len(pts), best or ())


def all_spaces(n, prefix="t"):
    """All T0 spaces with exactly ``n`` points, one per isomorphism class."""
    names = [f"{prefix}{k}" for k in range(n)]
    pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
    seen = {}
    for mask in range(1 << len(pairs)):
        rel = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
        rs = set(rel)
        if any((b, a) in rs for a, b in rel):
            continue
        if any((a, c) not in rs for a, b in rel for b2, c in rel if b == b2 and a != c):
            continue
        sp = FinSpace(names, [(names[a], names[b]) for a, b in rel])
        key = canonical_form(sp)
        if key not in seen:
            seen[key] = sp
    return [seen[k] for k in sorted(seen)]
