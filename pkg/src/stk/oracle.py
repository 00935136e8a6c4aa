"""Brute-force functor of points for the universal lift.

For a probe ``α: T → X`` a point is a family ``(T_i, β_i)``: closed subsets
``T_i ⊆ T`` with sections ``β_i: T_i → Y`` over ``α``, subject to the stratum
condition and pointwise distinctness.  The enumeration here never looks at
the network construction, so agreement with ``Hom_X(T, F)`` is an
independent check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .errors import OracleDisagreement
from .finspace import SpaceMap, all_maps, all_spaces
from .lift import Label, label_of


class PointTuple(tuple):
    """A family ``(T_i, β_i)`` stored pointwise as sorted ``(t, label)`` pairs."""

    __slots__ = ()

    def __new__(cls, labels):
        if isinstance(labels, dict):
            labels = labels.items()
        return super().__new__(cls, tuple(sorted(labels, key=lambda kv: repr(kv[0]))))

    def label(self, t):
        return dict(self)[t]

    def domain(self, i):
        """``T_i``."""
        return frozenset(t for t, lab in self if i in lab.domain())

    def section(self, i):
        """``β_i`` as a dict on ``T_i``."""
        return {t: lab.as_dict()[i] for t, lab in self if i in lab.domain()}

    def pullback(self, phi):
        """Restriction along ``φ: T' → T``."""
        d = dict(self)
        return PointTuple({s: d[phi.assign[s]] for s in phi.source.points})


def strata(g):
    """``G_m``: points of ``X`` whose fiber has at least ``m`` points."""
    X = g.target
    n = max((len(g.fiber(x)) for x in X.points), default=0)
    return {m: frozenset(x for x in X.points if len(g.fiber(x)) >= m) for m in range(n + 2)}


def _partial_labels(n, fiber):
    out = []
    for k in range(0, min(n, len(fiber)) + 1):
        for dom in itertools.combinations(range(1, n + 1), k):
            for vals in itertools.permutations(fiber, k):
                out.append(Label(zip(dom, vals)))
    return out


def _stratum_condition(T, alpha, labels, n, G, reading):
    # T_I ∩ α^{-1}(G_m) = ∪_{J ⊇ I, |J| = k + |I|} T_J, m = k + |I| (corrected) or k (literal)
    doms = {t: labels[t].domain() for t in T.points}

    def T_of(I):
        return frozenset(t for t, d in doms.items() if I <= d)

    for size in range(0, n + 1):
        for I in itertools.combinations(range(1, n + 1), size):
            I = frozenset(I)
            TI = T_of(I)
            for k in range(1, n + 1):
                m = k + size if reading == "corrected" else k
                lhs = frozenset(t for t in TI if alpha.assign[t] in G.get(m, frozenset()))
                rhs = frozenset()
                if k + size <= n:
                    for extra in itertools.combinations(sorted(set(range(1, n + 1)) - I), k):
                        rhs |= T_of(I | frozenset(extra))
                if lhs != rhs:
                    return False
    return True


def enumerate_points(g, alpha, n=None, reading="corrected"):
    """All families ``(T_i, β_i)`` over ``α: T → X`` (as :class:`PointTuple`).

    Backtracks over the points of ``T``; closedness of each ``T_i`` and
    continuity of each ``β_i`` are pairwise conditions and prune early, the
    stratum condition is checked on complete families.
    """
    if reading not in ("corrected", "literal"):
        raise ValueError(f"unknown reading {reading!r}")
    Y = g.source
    T = alpha.source
    if n is None:
        n = max((len(g.fiber(x)) for x in g.target.points), default=0)
    G = strata(g)
    order = T.topological_order()
    # the stratum condition at I = ∅ is pointwise: t lies over G_k iff |dom label(t)| ≥ k
    cands = {}
    for t in order:
        level = max((k for k in range(1, n + 1) if alpha.assign[t] in G.get(k, ())), default=0)
        cands[t] = [
            (lab, lab.as_dict())
            for lab in _partial_labels(n, sorted(g.fiber(alpha.assign[t]), key=repr))
            if len(lab) == level
        ]
    chosen = {}
    out = []

    def compatible(s, ds, t, dt):
        # s ⤳ t: membership passes to t and sections respect the specialization
        for i, y in ds.items():
            if i not in dt or not Y.leq(y, dt[i]):
                return False
        return True

    def rec(k):
        if k == len(order):
            labels = {t: lab for t, (lab, _) in chosen.items()}
            if _stratum_condition(T, alpha, labels, n, G, reading):
                out.append(PointTuple(labels))
            return
        t = order[k]
        for lab, d in cands[t]:
            ok = True
            for s, (_, ds) in chosen.items():
                if T.leq(s, t) and not compatible(s, ds, t, d):
                    ok = False
                    break
                if T.leq(t, s) and not compatible(t, d, s, ds):
                    ok = False
                    break
            if ok:
                chosen[t] = (lab, d)
                rec(k + 1)
                del chosen[t]

    rec(0)
    return out


def enumerate_homs(lift, alpha):
    """All ``h: T → F`` with ``e ∘ h = α``."""
    e = lift.e
    T = alpha.source
    return [
        SpaceMap(T, lift.F, m, check=False)
        for m in all_maps(T, lift.F, constraint=lambda t: e.fiber(alpha.assign[t]))
    ]


def hom_to_tuple(h):
    return PointTuple({t: Label(label_of(h.assign[t])) for t in h.source.points})


@dataclass
class AgreementReport:
    ok: bool = True
    probes: int = 0
    points: int = 0
    naturality_checks: int = 0
    failures: list = field(default_factory=list)

    def summary(self):
        status = "agree" if self.ok else "DISAGREE"
        return (f"{status}: {self.probes} probes, {self.points} points, "
                f"{self.naturality_checks} naturality checks, {len(self.failures)} failures")


def probe_family(X, max_points):
    """All probes ``α: T → X`` with ``T`` running over finite spaces up to isomorphism."""
    probes = []
    for size in range(0, max_points + 1):
        for T in all_spaces(size):
            for m in all_maps(T, X):
                probes.append(SpaceMap(T, X, m, check=False))
    return probes


def functor_agreement(g, lift, probes, naturality=True, reading="corrected",
                      naturality_limit=2, raise_on_failure=False):
    """Compare ``enumerate_points`` with ``Hom_X(T, F)`` on every probe.

    The bijection sends ``h`` to the family of labels of ``h(t)``.  With
    ``naturality`` it is also checked against restriction along every map of
    probes over ``X`` whose source has at most ``naturality_limit`` points.
    """
    rep = AgreementReport()
    n = len(lift.network.labels) if lift.network is not None else None
    cache = {}
    for alpha in probes:
        rep.probes += 1
        pts = enumerate_points(g, alpha, n=n, reading=reading)
        homs = enumerate_homs(lift, alpha)
        images = [hom_to_tuple(h) for h in homs]
        rep.points += len(pts)
        if len(set(images)) != len(images) or set(images) != set(pts):
            rep.ok = False
            rep.failures.append({"probe": alpha, "points": len(pts), "homs": len(homs)})
            if raise_on_failure:
                raise OracleDisagreement(alpha, (len(pts), len(homs)))
        cache[id(alpha)] = (alpha, set(pts), homs)
    if naturality:
        small = [v for v in cache.values() if len(v[0].source) <= naturality_limit]
        for a1, _, homs in small:
            for a2, pts2, _ in small:
                for m in all_maps(a2.source, a1.source,
                                  constraint=lambda s: a1.fiber(a2.assign[s])):
                    phi = SpaceMap(a2.source, a1.source, m, check=False)
                    for h in homs:
                        rep.naturality_checks += 1
                        lhs = hom_to_tuple(phi.then(h))
                        rhs = hom_to_tuple(h).pullback(phi)
                        if lhs != rhs or rhs not in pts2:
                            rep.ok = False
                            rep.failures.append({"naturality": (a2, a1)})
    return rep
