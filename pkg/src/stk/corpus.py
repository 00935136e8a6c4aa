"""Built-in instances, the line-oriented text format, and an on-disk result cache.

Format, one declaration per line (``#`` starts a comment)::

    space X { points: η1 η2 c; spec: η1>c, η2>c }
    map g : Y -> X { a1->η1; n1->c }
    groupoid G { objects: U; arrows: R; src: s; tgt: t; unit: u; inv: i; comp: (r,s)->t; ... }
    stackmap d : G -> H { objects: fU; arrows: fR }
    instance NODE { tier: space; g: g; expect: F.points = 6 [DERIVED]; ... }

``a>b`` means ``b`` lies in the closure of ``a``.  Names of spaces, maps and
groupoids share one namespace and must be declared before use.
"""
from __future__ import annotations

import hashlib
import os
import pickle
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from . import builtins as _spaces
from . import stackoid
from .errors import ParseError, UnknownInstance, ValidationError
from .finspace import SpaceMap, sort_key, validate_space

ENGINE_VERSION = "0.1.0"

_NAME = re.compile(r"^[^\s,;{}()>:\-]+$")
_TAGS = ("PAPER", "DERIVED", "TRIVIAL")


@dataclass
class Expectation:
    key: str
    value: str
    tag: str


@dataclass
class Instance:
    """A named example: declared spaces, maps and groupoids, the map ``g`` and expected values."""

    name: str
    tier: str
    spaces: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    groupoids: dict = field(default_factory=dict)
    stackmaps: dict = field(default_factory=dict)
    g: str | None = None
    expect: list = field(default_factory=list)

    @property
    def map(self):
        if self.g is None:
            return None
        return self.stackmaps.get(self.g) or self.maps[self.g]

    def expected(self, key):
        for e in self.expect:
            if e.key == key:
                return e.value
        raise KeyError(key)

    def __eq__(self, other):
        return isinstance(other, Instance) and dumps(self) == dumps(other)

    __hash__ = None


# ---------------------------------------------------------------------------
# serialization


def _check_name(name, what):
    s = str(name)
    if not _NAME.match(s):
        raise ValidationError(f"{what} name {s!r} cannot be written in the text format")
    return s


def _space_line(name, X):
    pts = " ".join(_check_name(p, "point") for p in X.points)
    rel = ", ".join(f"{a}>{b}" for a, b in sorted(X.relation(), key=lambda ab: (sort_key(ab[0]), sort_key(ab[1]))))
    return f"space {name} {{ points: {pts}; spec: {rel} }}"


def _map_line(name, src, tgt, m):
    body = "; ".join(f"{p}->{m.assign[p]}" for p in m.source.points)
    return f"map {name} : {src} -> {tgt} {{ {body} }}"


def _name_of(table, obj):
    for k, v in table.items():
        if v is obj:
            return k
    for k, v in table.items():
        if v == obj:
            return k
    raise ValidationError("object referenced by a declaration was not declared")


def dumps(inst):
    """Text form; deterministic, so equal instances give identical bytes."""
    lines = [f"# instance {inst.name}"]
    for name, X in inst.spaces.items():
        lines.append(_space_line(_check_name(name, "space"), X))
    for name, m in inst.maps.items():
        src = _name_of(inst.spaces, m.source)
        tgt = _name_of(inst.spaces, m.target)
        lines.append(_map_line(_check_name(name, "map"), src, tgt, m))
    for name, G in inst.groupoids.items():
        parts = [f"objects: {_name_of(inst.spaces, G.U)}", f"arrows: {_name_of(inst.spaces, G.R)}"]
        for key in ("src", "tgt", "unit", "inv"):
            parts.append(f"{key}: {_name_of(inst.maps, getattr(G, key))}")
        comp = sorted(G.comp.items(), key=lambda kv: (sort_key(kv[0][0]), sort_key(kv[0][1])))
        parts.append("comp: " + "; ".join(f"({r},{s})->{t}" for (r, s), t in comp))
        lines.append(f"groupoid {_check_name(name, 'groupoid')} {{ " + "; ".join(parts) + " }")
    for name, m in inst.stackmaps.items():
        src = _name_of(inst.groupoids, m.source)
        tgt = _name_of(inst.groupoids, m.target)
        fU = _name_of(inst.maps, m.objects_map)
        fR = _name_of(inst.maps, m.arrows_map)
        lines.append(f"stackmap {name} : {src} -> {tgt} {{ objects: {fU}; arrows: {fR} }}")
    parts = [f"tier: {inst.tier}"]
    if inst.g is not None:
        parts.append(f"g: {inst.g}")
    for e in inst.expect:
        if e.tag not in _TAGS:
            raise ValidationError(f"expectation {e.key} lacks a provenance tag")
        parts.append(f"expect: {e.key} = {e.value} [{e.tag}]")
    lines.append(f"instance {inst.name} {{ " + "; ".join(parts) + " }")
    return "\n".join(lines) + "\n"


def save(inst, path):
    Path(path).write_text(dumps(inst), encoding="utf-8")


_DECL = re.compile(r"^(space|map|groupoid|stackmap|instance)\s+(\S+)\s*(?::\s*(\S+)\s*->\s*(\S+)\s*)?\{(.*)\}\s*$")


def _fields(body, lineno):
    out = []
    for chunk in body.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk.startswith("(") and out and out[-1][0] == "comp":
            out[-1][1].append(chunk)
            continue
        if ":" not in chunk:
            raise ParseError(lineno, "'key: value'")
        key, val = chunk.split(":", 1)
        out.append((key.strip(), [val.strip()]))
    return out


def _one(fields, key, lineno):
    vals = [v for k, v in fields if k == key]
    if len(vals) != 1:
        raise ParseError(lineno, f"exactly one '{key}:' field")
    return vals[0][0]


def loads(text):
    """Parse the text form; errors carry the 1-based line number."""
    spaces, maps, groupoids, stackmaps = {}, {}, {}, {}
    inst = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DECL.match(line)
        if not m:
            raise ParseError(lineno, "a declaration 'space|map|groupoid|stackmap|instance <name> ... { ... }'")
        kind, name, src, tgt, body = m.groups()
        if name in spaces or name in maps or name in groupoids or name in stackmaps:
            raise ParseError(lineno, f"a fresh name (got duplicate {name!r})")
        if kind in ("map", "stackmap") and src is None:
            raise ParseError(lineno, "': <source> -> <target>'")
        if kind in ("space", "groupoid", "instance") and src is not None:
            raise ParseError(lineno, "'{' after the name")
        if kind == "space":
            spaces[name] = _parse_space(body, lineno)
        elif kind == "map":
            maps[name] = _parse_map(body, lineno, spaces, src, tgt)
        elif kind == "groupoid":
            groupoids[name] = _parse_groupoid(name, body, lineno, spaces, maps)
        elif kind == "stackmap":
            stackmaps[name] = _parse_stackmap(body, lineno, groupoids, maps, src, tgt)
        else:
            if inst is not None:
                raise ParseError(lineno, "a single instance declaration")
            inst = _parse_instance(name, body, lineno, maps, stackmaps)
            inst.spaces, inst.maps, inst.groupoids, inst.stackmaps = spaces, maps, groupoids, stackmaps
    if inst is None:
        raise ParseError(len(text.splitlines()) + 1, "an instance declaration")
    return inst


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))


def _parse_space(body, lineno):
    fields = _fields(body, lineno)
    pts = _one(fields, "points", lineno).split()
    spec = _one(fields, "spec", lineno)
    rel = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if ">" not in item:
            raise ParseError(lineno, "'a>b' in spec")
        a, b = (x.strip() for x in item.split(">", 1))
        for p in (a, b):
            if p not in pts:
                raise ParseError(lineno, f"a declared point (got {p!r})")
        rel.append((a, b))
    return validate_space(pts, rel)


def _lookup(table, name, lineno, what):
    if name not in table:
        raise ParseError(lineno, f"a declared {what} (got {name!r})")
    return table[name]


def _parse_map(body, lineno, spaces, src, tgt):
    S = _lookup(spaces, src, lineno, "space")
    T = _lookup(spaces, tgt, lineno, "space")
    assign = {}
    for chunk in filter(None, (c.strip() for c in body.split(";"))):
        if "->" not in chunk:
            raise ParseError(lineno, "'p->q'")
        p, q = (x.strip() for x in chunk.split("->", 1))
        if p not in S:
            raise ParseError(lineno, f"a point of {src} (got {p!r})")
        if q not in T:
            raise ParseError(lineno, f"a point of {tgt} (got {q!r})")
        assign[p] = q
    missing = [p for p in S.points if p not in assign]
    if missing:
        raise ParseError(lineno, f"an image for {missing[0]!r}")
    return SpaceMap(S, T, assign)


def _parse_groupoid(name, body, lineno, spaces, maps):
    fields = _fields(body, lineno)
    U = _lookup(spaces, _one(fields, "objects", lineno), lineno, "space")
    R = _lookup(spaces, _one(fields, "arrows", lineno), lineno, "space")
    structure = {k: _lookup(maps, _one(fields, k, lineno), lineno, "map")
                 for k in ("src", "tgt", "unit", "inv")}
    comp_items = [v for k, v in fields if k == "comp"]
    if len(comp_items) != 1:
        raise ParseError(lineno, "exactly one 'comp:' field")
    comp = {}
    for entry in filter(None, comp_items[0]):
        m = re.fullmatch(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)\s*->\s*(\S+)", entry)
        if not m:
            raise ParseError(lineno, "'(r,s)->t' in comp")
        r, s, t = m.groups()
        for a in (r, s, t):
            if a not in R:
                raise ParseError(lineno, f"an arrow of the groupoid (got {a!r})")
        comp[(r, s)] = t
    G = stackoid.validate_groupoid(U, R, structure["src"], structure["tgt"], structure["unit"],
                                   structure["inv"], comp, name=name)
    # keep references to the declared maps so that saving reproduces the file
    G.src, G.tgt, G.unit, G.inv = (structure[k] for k in ("src", "tgt", "unit", "inv"))
    return G


def _parse_stackmap(body, lineno, groupoids, maps, src, tgt):
    G = _lookup(groupoids, src, lineno, "groupoid")
    H = _lookup(groupoids, tgt, lineno, "groupoid")
    fields = _fields(body, lineno)
    fU = _lookup(maps, _one(fields, "objects", lineno), lineno, "map")
    fR = _lookup(maps, _one(fields, "arrows", lineno), lineno, "map")
    return _stackmap(G, H, fU, fR)


def _stackmap(G, H, fU, fR):
    m = stackoid.StackMap(G, H, fU.assign, fR.assign)
    m.objects_map, m.arrows_map = fU, fR
    return m


def _parse_instance(name, body, lineno, maps, stackmaps):
    fields = _fields(body, lineno)
    tier = _one(fields, "tier", lineno)
    if tier not in ("space", "groupoid"):
        raise ParseError(lineno, "tier 'space' or 'groupoid'")
    g = None
    if any(k == "g" for k, _ in fields):
        g = _one(fields, "g", lineno)
        table = maps if tier == "space" else stackmaps
        _lookup(table, g, lineno, "map" if tier == "space" else "stackmap")
    expect = []
    for k, v in fields:
        if k != "expect":
            continue
        m = re.fullmatch(r"(\S+)\s*=\s*(.*?)\s*\[(\w+)\]", v[0])
        if not m or m.group(3) not in _TAGS:
            raise ParseError(lineno, "'expect: key = value [TAG]'")
        expect.append(Expectation(*m.groups()))
    return Instance(name=name, tier=tier, g=g, expect=expect)


# ---------------------------------------------------------------------------
# catalog


def _space_instance(name, g, names, expect):
    ysrc, xtgt = names
    inst = Instance(name=name, tier="space", spaces={xtgt: g.target, ysrc: g.source},
                    maps={"g": g}, g="g")
    inst.expect = [Expectation(k, v, t) for k, v, t in expect]
    return inst


_SPACE_EXPECT = {
    "NODE": [("F.points", "6", "DERIVED"), ("F.fibers", "η1:2,η2:2,c:2", "DERIVED"),
             ("n_g", "2", "DERIVED"), ("YxF.points", "8", "DERIVED")],
    "TRIPLE": [("F.points", "15", "DERIVED"), ("F.fibers", "η1:3,η2:3,η3:3,c:6", "DERIVED"),
               ("n_g", "3", "DERIVED")],
    "WHISKER": [("F.iso", "X", "PAPER"), ("n_g", "1", "DERIVED")],
    "ETALE2": [("F.iso", "Y", "PAPER"), ("n_g", "2", "DERIVED")],
    "NODEPLUS": [("F.points", "7", "DERIVED"), ("n_g", "2", "DERIVED")],
    "TWIN": [("F.points", "5", "DERIVED"), ("F.fibers", "η1:2,η2:1,c:2", "DERIVED"),
             ("n_g", "2", "DERIVED")],
}


def _group_decls(inst, prefix, G):
    """Register the spaces and maps of a group presentation under derived names."""
    inst.spaces[f"{prefix}_U"] = G.U
    inst.spaces[f"{prefix}_R"] = G.R
    for key in ("src", "tgt", "unit", "inv"):
        inst.maps[f"{prefix}_{key}"] = getattr(G, key)
    inst.groupoids[prefix] = G


def _bz2diag():
    B, B2 = stackoid.BZ2(), stackoid.BZ2xZ2()
    B.name, B2.name = "BZ2", "BZZ"
    inst = Instance(name="BZ2DIAG", tier="groupoid")
    _group_decls(inst, "BZ2", B)
    _group_decls(inst, "BZZ", B2)
    d = stackoid.group_hom_map(B, B2, lambda a: a + a)
    fU = SpaceMap(B.U, B2.U, d.fU)
    fR = SpaceMap(B.R, B2.R, d.fR)
    inst.maps["diag_U"] = fU
    inst.maps["diag_R"] = fR
    inst.stackmaps["diag"] = _stackmap(B, B2, fU, fR)
    inst.g = "diag"
    inst.expect = [Expectation("n_g", "2", "DERIVED"),
                   Expectation("network.nodes", "B(Z2²),BZ2,BZ2,I¹₀", "DERIVED"),
                   Expectation("F.morita", "BZ2", "DERIVED")]
    return inst


def _bs3inertia():
    G = stackoid.BS3()
    G.name = "BS3"
    inst = Instance(name="BS3INERTIA", tier="groupoid")
    _group_decls(inst, "BS3", G)
    inst.expect = [Expectation("inertia.components", "3", "DERIVED")]
    return inst


CATALOG = ("NODE", "TRIPLE", "WHISKER", "ETALE2", "NODEPLUS", "TWIN", "BZ2DIAG", "BS3INERTIA")


def builtin(name):
    if name in _spaces.SPACE_CATALOG:
        g = _spaces.SPACE_CATALOG[name]()
        return _space_instance(name, g, ("Y", "X"), _SPACE_EXPECT[name])
    if name == "BZ2DIAG":
        return _bz2diag()
    if name == "BS3INERTIA":
        return _bs3inertia()
    raise UnknownInstance(name)


def resolve(name_or_path):
    """A catalog name or a path to a file in the text format."""
    if name_or_path in CATALOG:
        return builtin(name_or_path)
    if os.path.exists(name_or_path):
        return load(name_or_path)
    raise UnknownInstance(name_or_path)


# ---------------------------------------------------------------------------
# cache


def cache_dir():
    root = os.environ.get("STK_CACHE_DIR") or os.path.join(
        os.environ.get("XDG_CACHE_HOME", os.path.expanduser("~/.cache")), "stk")
    Path(root).mkdir(parents=True, exist_ok=True)
    return Path(root)


def cache_key(inst, operation):
    h = hashlib.sha256()
    for part in (dumps(inst), operation, ENGINE_VERSION):
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    return h.hexdigest()


def cached(inst, operation, compute):
    """Return ``compute()`` for ``(inst, operation)``, reusing a stored result when present."""
    root = cache_dir()
    key = cache_key(inst, operation)
    path = root / f"{key}.pkl"
    with FileLock(str(root / ".lock")):
        if path.exists():
            try:
                with open(path, "rb") as fh:
                    return pickle.load(fh)
            except (OSError, pickle.UnpicklingError, EOFError):
                path.unlink(missing_ok=True)
        value = compute()
        fd, tmp = tempfile.mkstemp(dir=root, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            pickle.dump(value, fh)
        os.replace(tmp, path)
        return value
