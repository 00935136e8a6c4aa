"""Catalog of built-in example maps (space tier) used across the test-suite."""
from __future__ import annotations

from .finspace import SpaceMap, validate_space


def node_x():
    return validate_space(["η1", "η2", "c"], [("η1", "c"), ("η2", "c")])


def branch(k, sheet=""):
    a, n = f"a{k}{sheet}", f"n{k}{sheet}"
    return [a, n], [(a, n)]


def _branches(ks, X, sheets=None):
    pts, rel, assign = [], [], {}
    for idx, k in enumerate(ks):
        sheet = "" if sheets is None else sheets[idx]
        p, r = branch(k, sheet)
        pts += p
        rel += r
        assign[p[0]] = f"η{k}"
        assign[p[1]] = "c"
    Y = validate_space(pts, rel)
    return SpaceMap(Y, X, assign)


def node():
    """Two branches crossing at ``c``."""
    return _branches([1, 2], node_x())


def triple():
    X = validate_space(["η1", "η2", "η3", "c"], [("η1", "c"), ("η2", "c"), ("η3", "c")])
    return _branches([1, 2, 3], X)


def whisker():
    return _branches([1], node_x())


def nodeplus():
    X = validate_space(["η1", "η2", "c", "ξ"], [("η1", "c"), ("η2", "c")])
    return _branches([1, 2], X)


def twin():
    return _branches([1, 1], node_x(), sheets=["", "'"])


def etale2():
    """Two sheets over the node, cross-glued: each node point sees both branches."""
    X = node_x()
    Y = validate_space(
        ["p1", "p2", "q1", "q2", "d1", "d2"],
        [("p1", "d1"), ("q2", "d1"), ("q1", "d2"), ("p2", "d2")],
    )
    assign = {"p1": "η1", "q1": "η1", "p2": "η2", "q2": "η2", "d1": "c", "d2": "c"}
    return SpaceMap(Y, X, assign)


SPACE_CATALOG = {
    "NODE": node,
    "TRIPLE": triple,
    "WHISKER": whisker,
    "ETALE2": etale2,
    "NODEPLUS": nodeplus,
    "TWIN": twin,
}
