"""``stk``: batch front end over the library.

Exit codes: 0 success, 1 parse or validation error, 2 unmet precondition,
3 failed property check or structured discrepancy.  Reports are
``key=value`` lines on standard output (or in ``--out``); diagnostics go to
standard error.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import corpus, stackoid
from .errors import PreconditionError, StkError, UnknownInstance, ValidationError, VerificationFailure
from .finspace import SpaceMap, find_isomorphism, iso_over, map_profile
from .lift import check_closed_composite, check_iterated, check_product, check_two_step
from .network import (
    base_change_network,
    canonical_network,
    gluing_hom_check,
    product_network,
    universal_lift,
)
from .oracle import functor_agreement, probe_family

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_PROPERTY = 0, 1, 2, 3

SUITES = ("theorem-main", "base-change", "reducible-product", "identities", "gluing", "groupoid")


class Report:
    """Ordered ``key=value`` lines plus an overall verdict."""

    def __init__(self):
        self.lines = []
        self.failed = False
        self.discrepancy = False

    def add(self, key, value):
        if isinstance(value, bool):
            value = "true" if value else "false"
        self.lines.append(f"{key}={value}")

    def check(self, key, ok):
        self.add(key, bool(ok))
        if not ok:
            self.failed = True

    def extend(self, other, prefix=""):
        self.lines.extend(prefix + line for line in other.lines)
        self.failed |= other.failed
        self.discrepancy |= other.discrepancy

    def text(self):
        return "\n".join(self.lines) + "\n"


def _pt(p):
    return str(p)


def fiber_table(e):
    X = e.target
    return ",".join(f"{_pt(x)}:{len(e.fiber(x))}" for x in X.points)


def _need_space(inst):
    if inst.tier != "space" or inst.map is None:
        raise PreconditionError(f"{inst.name} is not a space-tier instance with a map")
    return inst.map


# ---------------------------------------------------------------------------
# DOT


def space_dot(X, name, cluster=True, prefix=""):
    """Hasse diagram of a finite space; arrows point from a point to its immediate specializations."""
    ident = lambda p: f'"{prefix}{_pt(p)}"'
    head = f"subgraph cluster_{name}" if cluster else f"digraph {name}"
    lines = [f"{head} {{", f'  label="{name}";']
    for p in X.points:
        lines.append(f'  {ident(p)} [label="{_pt(p)}"];')
    for a, b in X.covers():
        lines.append(f"  {ident(a)} -> {ident(b)};")
    lines.append("}")
    return lines


def map_dot(f, src_name, tgt_name):
    lines = [f"digraph {src_name}_to_{tgt_name} {{", "  compound=true;"]
    lines += ["  " + x for x in space_dot(f.source, src_name, prefix=f"{src_name}:")]
    lines += ["  " + x for x in space_dot(f.target, tgt_name, prefix=f"{tgt_name}:")]
    for p in f.source.points:
        lines.append(f'  "{src_name}:{_pt(p)}" -> "{tgt_name}:{_pt(f.assign[p])}" '
                     f"[style=dashed, color=gray];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def groupoid_dot(G, name):
    lines = [f"digraph {name} {{"]
    for u in G.U.points:
        lines.append(f'  "{_pt(u)}" [label="{_pt(u)} |Aut|={len(G.aut(u))}"];')
    for a, b in G.U.covers():
        lines.append(f'  "{_pt(a)}" -> "{_pt(b)}";')
    seen = set()
    for r in G.R.points:
        s, t = G.src.assign[r], G.tgt.assign[r]
        if s != t and (s, t) not in seen:
            seen.add((s, t))
            lines.append(f'  "{_pt(s)}" -> "{_pt(t)}" [style=dotted, label="{len(G.hom(s, t))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# verbs


def do_validate(inst, args):
    rep = Report()
    rep.add("instance", inst.name)
    rep.add("tier", inst.tier)
    for name, X in inst.spaces.items():
        rep.add(f"space.{name}.points", len(X))
    for name, G in inst.groupoids.items():
        rep.add(f"groupoid.{name}.objects", len(G.U))
        rep.add(f"groupoid.{name}.arrows", len(G.R))
    rep.add("valid", True)
    return rep


def _profile_lines(rep, flags):
    for k in sorted(flags):
        rep.add(f"profile.{k}", flags[k])


def do_classify(inst, args):
    rep = Report()
    rep.add("instance", inst.name)
    m = inst.map
    if m is None:
        raise PreconditionError(f"{inst.name} has no map to classify")
    if inst.tier == "space":
        _profile_lines(rep, map_profile(m).flags())
    else:
        _profile_lines(rep, stackoid.stack_map_profile(m).flags())
    return rep


def _lift_space(inst, args, rep, files):
    g = _need_space(inst)
    res = universal_lift(g, jobs=args.jobs)
    rep.add("instance", inst.name)
    rep.add("multiplicity", len(res.network.labels))
    rep.add("F.points", len(res.F))
    rep.add("fibers", fiber_table(res.e))
    rep.add("fiber_table", "(" + ",".join(str(len(res.e.fiber(x))) for x in g.target.points) + ")")
    for k, v in sorted(res.certificates.items()):
        rep.check(f"identity[{k}]", v)
    prof = map_profile(g)
    if prof.closed_embedding:
        ok = find_isomorphism(res.F, g.target, compatible=lambda a, b: res.e.assign[a] == b)
        rep.check("closed_embedding.F≅X", ok is not None)
    if prof.etale and prof.proper and len(g.target.components()) == 1:
        rep.check("etale_proper_connected.F≅Y",
                  iso_over(res.e, g) is not None)
    if args.check_functor:
        agr = functor_agreement(g, res, probe_family(g.target, args.max_probe))
        rep.add("functor.probes", agr.probes)
        rep.add("functor.points", agr.points)
        rep.add("functor.naturality_checks", agr.naturality_checks)
        rep.check("functor.agrees_with_homs", agr.ok)
    files["F.dot"] = map_dot(res.e, "F", "X")
    files["g.dot"] = map_dot(g, "Y", "X")


def _lift_groupoid(inst, args, rep, files):
    g = inst.map
    if g is None:
        raise PreconditionError(f"{inst.name} has no map to lift")
    res = stackoid.groupoid_universal_lift(g, max_probe=args.max_probe if args.check_functor else None)
    rep.add("instance", inst.name)
    rep.add("F.objects", len(res.F.U))
    rep.add("F.arrows", len(res.F.R))
    rep.add("F.isotropy", ",".join(str(len(res.F.aut(u))) for u in res.F.U.points))
    rep.add("F.components", len(stackoid.clopen_decomposition(res.F)))
    for k, v in sorted(res.certificates.items()):
        rep.check(f"identity[{k}]", v)
    files["F.dot"] = groupoid_dot(res.F, "F")


def do_lift(inst, args):
    rep = Report()
    files = {}
    if inst.tier == "space":
        _lift_space(inst, args, rep, files)
    else:
        _lift_groupoid(inst, args, rep, files)
    rep.files = files if args.emit == "dot" else {}
    return rep


def do_network(inst, args):
    g = _need_space(inst)
    res = universal_lift(g, verify=False, jobs=args.jobs)
    n = len(res.network.labels)
    stage = n if args.stage is None else args.stage
    if not 0 <= stage <= n:
        raise PreconditionError(f"stage must lie between 0 and {n}")
    N = res.stages[n - stage]
    rep = Report()
    rep.add("instance", inst.name)
    rep.add("stage", N.stage)
    rep.add("labels", ",".join(map(str, N.labels)))
    for I in N.indices():
        key = "{" + ",".join(map(str, sorted(I))) + "}"
        node = N.nodes[I]
        rep.add(f"node{key}.points", len(node))
        rep.add(f"node{key}.components", len(node.components()))
    for step, hist in enumerate(N.history, start=1):
        for I in sorted(hist, key=lambda I: (len(I), sorted(I))):
            rep.add(f"history.{step}." + "{" + ",".join(map(str, sorted(I))) + "}", hist[I])
    rep.check("functorial", N.verify_functoriality())
    if args.emit == "dot":
        rep.files = {f"N{N.stage}.dot": network_dot(N)}
    return rep


def network_dot(N):
    name = lambda I: "Y_" + ("".join(map(str, sorted(I))) or "0")
    lines = [f"digraph N{N.stage} {{"]
    for I in N.indices():
        lines.append(f'  "{name(I)}" [label="{name(I)} ({len(N.nodes[I])})"];')
    for I in N.indices():
        for J in N.indices():
            if I < J and len(J) == len(I) + 1:
                lines.append(f'  "{name(J)}" -> "{name(I)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def do_render(inst, args):
    rep = Report()
    rep.add("instance", inst.name)
    if inst.tier == "space":
        text = map_dot(_need_space(inst), "Y", "X")
    else:
        text = "".join(groupoid_dot(G, name) for name, G in inst.groupoids.items())
    rep.files = {f"{inst.name}.dot": text}
    rep.inline = text
    return rep


def do_corpus(args):
    rep = Report()
    if args.target in (None, "list"):
        for name in corpus.CATALOG:
            rep.add("instance", name)
        return rep
    inst = corpus.resolve(args.target)
    rep.inline = corpus.dumps(inst)
    rep.files = {f"{inst.name}.stk": rep.inline}
    return rep


# ---------------------------------------------------------------------------
# suites


def suite_theorem_main(inst, args):
    rep = Report()
    if inst.tier != "space":
        return suite_groupoid(inst, args)
    g = inst.map
    res = universal_lift(g, jobs=1)
    rep.add("F.points", len(res.F))
    rep.add("fibers", fiber_table(res.e))
    for k, v in sorted(res.certificates.items()):
        rep.check(f"identity[{k}]", v)
    for exp in inst.expect:
        if exp.key == "F.points":
            rep.check(f"expected F.points [{exp.tag}]", str(len(res.F)) == exp.value)
        elif exp.key == "F.fibers":
            want = dict(kv.split(":") for kv in exp.value.split(","))
            got = {_pt(x): str(len(res.e.fiber(x))) for x in g.target.points}
            rep.check(f"expected F.fibers [{exp.tag}]", want == got)
        elif exp.key == "n_g":
            rep.check(f"expected n_g [{exp.tag}]", str(len(res.network.labels)) == exp.value)
    probe = min(args.max_probe, 3) if inst.name == "TRIPLE" else args.max_probe
    agr = functor_agreement(g, res, probe_family(g.target, probe))
    rep.add("functor.probes", agr.probes)
    rep.check("functor.agrees_with_homs", agr.ok)
    return rep


def suite_base_change(inst, args):
    rep = Report()
    if inst.tier != "space":
        rep.add("skipped", "groupoid tier")
        return rep
    g = inst.map
    literal = kept = total = 0
    for u in probe_family(g.target, min(args.max_probe, 3)):
        total += 1
        literal += base_change_network(g, u)["ok"]
        kept += base_change_network(g, u, keep_labels=True)["ok"]
    rep.add("probes", total)
    rep.add("rebuilt_network.agreeing_probes", literal)
    rep.add("label_preserving.agreeing_probes", kept)
    rep.check("base_change.rebuilt_matches_pullback", literal == total)
    rep.add("base_change.label_preserving_matches_pullback", kept == total)
    return rep


def _components_split(g):
    comps = g.source.components()
    if len(comps) < 2:
        return None
    first = comps[0]
    rest = frozenset().union(*comps[1:])
    restrict = lambda part: SpaceMap(g.source.subspace(part), g.target,
                                     {y: g.assign[y] for y in part})
    return restrict(first), restrict(rest)


def suite_reducible_product(inst, args):
    rep = Report()
    split = _components_split(inst.map) if inst.tier == "space" else None
    if split is None:
        rep.add("skipped", "source is not reducible")
        return rep
    out = product_network(*split)
    rep.add("product.points", out["product_points"])
    rep.add("local_sheet_union.points", out["union_points"])
    rep.add("disjoint_union.points", out["disjoint_union_points"])
    rep.add("agrees_with_local_sheet_union", out["agree_union"])
    rep.add("agrees_with_disjoint_union", out["agree_disjoint_union"])
    rep.add("status", out["status"])
    if out["status"] != "agree":
        rep.discrepancy = True
    return rep


def suite_identities(inst, args):
    rep = Report()
    if inst.tier != "space":
        rep.add("skipped", "groupoid tier")
        return rep
    g = inst.map
    res = universal_lift(g, verify=False)
    N = res.network
    if len(N.labels) >= 2:
        # chain Y²_X → Y → F: first projection, then the sheet embedding into the lift
        h = N.edge(frozenset({1, 2}), frozenset({1}))
        sheet = N.edge(frozenset({1}), frozenset())
        for name, fn, args2 in (("closed_composite", check_closed_composite, (h, sheet)),
                                ("iterated", check_iterated, (h, sheet)),
                                ("two_step", check_two_step, (h, sheet))):
            try:
                for k, v in sorted(fn(*args2).items()):
                    rep.check(f"{name}[{k}]", v)
            except PreconditionError as exc:
                rep.add(f"{name}.skipped", str(exc))
    if map_profile(g).closed_embedding:
        for k, v in sorted(check_product(g, g).items()):
            rep.check(f"product[{k}]", v)
    if not rep.lines:
        rep.add("skipped", "no designated chain")
    return rep


def suite_gluing(inst, args):
    rep = Report()
    if inst.tier != "space":
        rep.add("skipped", "groupoid tier")
        return rep
    N = canonical_network(inst.map)
    n = len(N.labels)
    if n < 2:
        rep.add("skipped", "multiplicity below 2")
        return rep
    Q = [frozenset({1, j}) for j in range(2, n + 1)] if n > 2 else [frozenset({1}), frozenset({2})]
    out = gluing_hom_check(N, Q, min(args.max_probe, 4))
    for size, (homs, fams, ok) in sorted(out.items()):
        rep.add(f"size{size}.homs", homs)
        rep.add(f"size{size}.families", fams)
        rep.check(f"size{size}.gluing_is_colimit", ok)
    return rep


def suite_groupoid(inst, args):
    rep = Report()
    if inst.tier != "groupoid":
        rep.add("skipped", "space tier")
        return rep
    for name, G in inst.groupoids.items():
        if len(G.U) == 1 and inst.map is None:
            comps = stackoid.clopen_decomposition(stackoid.inertia(G, 1))
            rep.add(f"inertia.{name}.components", len(comps))
            for exp in inst.expect:
                if exp.key == "inertia.components":
                    rep.check(f"expected inertia.components [{exp.tag}]", str(len(comps)) == exp.value)
    g = inst.map
    if g is not None:
        N = stackoid.groupoid_canonical_network(g)
        rep.add("n_g", len(N.labels))
        for I in N.indices():
            G = N.nodes[I]
            rep.add("node{" + ",".join(map(str, sorted(I))) + "}",
                    f"objects:{len(G.U)},arrows:{len(G.R)},components:{len(stackoid.clopen_decomposition(G))}")
        res = stackoid.groupoid_universal_lift(g, max_probe=min(args.max_probe, 3))
        for k, v in sorted(res.certificates.items()):
            rep.check(f"identity[{k}]", v)
        rep.check("F.morita_equivalent_to_source", stackoid.morita_equivalent(res.F, g.source))
        for exp in inst.expect:
            if exp.key == "n_g":
                rep.check(f"expected n_g [{exp.tag}]", str(len(N.labels)) == exp.value)
    return rep


SUITE_FUNCS = {
    "theorem-main": suite_theorem_main,
    "base-change": suite_base_change,
    "reducible-product": suite_reducible_product,
    "identities": suite_identities,
    "gluing": suite_gluing,
    "groupoid": suite_groupoid,
}


def run_suite(suite, inst, args):
    """One suite on one instance; errors become failed lines rather than aborting the batch."""
    try:
        return SUITE_FUNCS[suite](inst, args)
    except StkError as exc:
        rep = Report()
        rep.check(f"error[{type(exc).__name__}]", False)
        return rep


def _suite_job(job):
    return run_suite(*job)


def do_check(args):
    suites = SUITES if args.suite == "all" else (args.suite,)
    names = corpus.CATALOG if args.corpus == "all" else tuple(args.corpus.split(","))
    instances = [corpus.resolve(n) for n in names]
    jobs = [(s, inst) for s in suites for inst in instances]
    if args.jobs > 1:
        # suites are CPU bound; worker processes sidestep the interpreter lock
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_suite_job, [(s, inst, args) for s, inst in jobs]))
    else:
        results = [run_suite(s, inst, args) for s, inst in jobs]
    rep = Report()
    for (s, inst), r in zip(jobs, results):
        rep.extend(r, prefix=f"{s}.{inst.name}.")
    rep.add("discrepancy", rep.discrepancy)
    rep.add("passed", not rep.failed)
    return rep


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="stk", description="Finite models of universal étale lifts.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, target=True):
        if target:
            sp.add_argument("target", help="catalog name or path to an instance file")
        sp.add_argument("--out", help="directory for report and DOT files")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--max-probe", type=int, default=3)
        sp.add_argument("--emit", choices=["dot"], default=None)
        sp.add_argument("--expect-discrepancy", action="store_true")

    for verb in ("validate", "classify", "render"):
        common(sub.add_parser(verb))
    sp = sub.add_parser("lift")
    common(sp)
    sp.add_argument("--check-functor", action="store_true")
    sp = sub.add_parser("network")
    common(sp)
    sp.add_argument("--stage", type=int, default=None)
    sp = sub.add_parser("check")
    common(sp, target=False)
    sp.add_argument("--suite", choices=SUITES + ("all",), default="all")
    sp.add_argument("--corpus", default="all")
    sp = sub.add_parser("corpus")
    sp.add_argument("target", nargs="?", default="list")
    sp.add_argument("--out")
    return p


def _emit(rep, args, stdout):
    files = getattr(rep, "files", {})
    inline = getattr(rep, "inline", None)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(rep.text(), encoding="utf-8")
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
        stdout.write(rep.text())
    else:
        stdout.write(rep.text())
        if inline is not None:
            stdout.write(inline)
        else:
            for name in sorted(files):
                stdout.write(f"# {name}\n{files[name]}")


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "check":
            rep = do_check(args)
        elif args.verb == "corpus":
            rep = do_corpus(args)
        else:
            inst = corpus.resolve(args.target)
            rep = {"validate": do_validate, "classify": do_classify, "lift": do_lift,
                   "network": do_network, "render": do_render}[args.verb](inst, args)
    except UnknownInstance as exc:
        stderr.write(f"stk: unknown instance {exc.args[0]!r}\n")
        return EXIT_INPUT
    except ValidationError as exc:
        stderr.write(f"stk: {exc}\n")
        return EXIT_INPUT
    except PreconditionError as exc:
        stderr.write(f"stk: precondition not met: {exc}\n")
        return EXIT_PRECONDITION
    except VerificationFailure as exc:
        stderr.write(f"stk: verification failed: {exc}\n")
        return EXIT_PROPERTY
    except StkError as exc:
        stderr.write(f"stk: {exc}\n")
        return EXIT_INPUT
    _emit(rep, args, stdout)
    if rep.failed:
        return EXIT_PROPERTY
    expect = getattr(args, "expect_discrepancy", False)
    if rep.discrepancy != expect:
        if rep.discrepancy:
            stderr.write("stk: structured discrepancy reported (pass --expect-discrepancy to accept)\n")
        else:
            stderr.write("stk: a discrepancy was expected but none was found\n")
        return EXIT_PROPERTY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
