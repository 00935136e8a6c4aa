import pytest

from stk import corpus, stackoid
from stk.errors import ParseError, UnknownInstance, ValidationError
from stk.finspace import find_isomorphism, map_profile
from stk.network import universal_lift


@pytest.mark.parametrize("name", corpus.CATALOG)
def test_round_trip_is_byte_identical(name, tmp_path):
    inst = corpus.builtin(name)
    path = tmp_path / f"{name}.stk"
    corpus.save(inst, path)
    back = corpus.load(path)
    assert back == inst
    assert corpus.dumps(back) == path.read_text(encoding="utf-8")


@pytest.mark.parametrize("name", corpus.CATALOG)
def test_expectations_carry_tags(name):
    inst = corpus.builtin(name)
    assert inst.expect and all(e.tag in ("PAPER", "DERIVED", "TRIVIAL") for e in inst.expect)


def test_node_instance():
    inst = corpus.builtin("NODE")
    assert len(inst.map.target) == 3 and len(inst.map.source) == 4
    assert map_profile(corpus.builtin("WHISKER").map).closed_embedding


def test_bs3_inertia_components():
    inst = corpus.builtin("BS3INERTIA")
    G = inst.groupoids["BS3"]
    assert len(stackoid.clopen_decomposition(stackoid.inertia(G, 1))) == 3


def test_unknown_instance():
    with pytest.raises(UnknownInstance):
        corpus.builtin("NOPE")


GOOD = """space X { points: a b; spec: a>b }
map g : X -> X { a->a; b->b }
instance T { tier: space; g: g; expect: F.points = 2 [TRIVIAL] }
"""


def test_parse_minimal():
    inst = corpus.loads(GOOD)
    assert inst.name == "T" and inst.expected("F.points") == "2"


@pytest.mark.parametrize("text,line", [
    (GOOD.replace("a->a; b->b", "a->a; b->z"), 2),
    (GOOD.replace("points: a b", "points: a"), 1),
    (GOOD.replace("[TRIVIAL]", ""), 3),
    ("nonsense\n", 1),
    (GOOD.replace("instance T", "# no instance\n#"), 5),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        corpus.loads(text)
    assert info.value.line == line


def test_groupoid_missing_inverse_is_parse_error():
    text = corpus.dumps(corpus.builtin("BZ2DIAG"))
    lines = [l.replace("inv: BZ2_inv; ", "") if l.startswith("groupoid BZ2 ") else l
             for l in text.splitlines()]
    with pytest.raises(ParseError):
        corpus.loads("\n".join(lines))


def test_validation_errors_are_forwarded():
    with pytest.raises(ValidationError):
        corpus.loads("space X { points: a b; spec: a>b, b>a }\ninstance T { tier: space }\n")


def test_cache_returns_same_result(tmp_path, monkeypatch):
    monkeypatch.setenv("STK_CACHE_DIR", str(tmp_path / "c"))
    inst = corpus.builtin("NODE")
    calls = []

    def compute():
        calls.append(1)
        return universal_lift(inst.map, verify=False).F

    first = corpus.cached(inst, "lift", compute)
    second = corpus.cached(inst, "lift", compute)
    assert len(calls) == 1
    assert find_isomorphism(first, second) is not None
    assert corpus.cache_key(inst, "lift") != corpus.cache_key(inst, "network")
    assert any((tmp_path / "c").iterdir())
