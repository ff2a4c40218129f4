from __future__ import annotations

from hypothesis import HealthCheck, given, settings

from cgen import function_source
from conftest import corpus_cases, one_function, tree_of
from oracles import oracle_reaching
from trigloc.cexpr import VarRef
from trigloc.code_model import parse_source_tree
from trigloc.dependence import (
    EXIT,
    build_call_graph,
    build_cfg,
    build_pdg,
    call_graph_to_dot,
    collect_dependency_files,
    pdg_to_dot,
    pointer_arg_defs,
    reaching_definitions,
)
from trigloc.report import load_manifest

LOOP = """\
int f(int n, int *out)
{
    int s = 0;
    int i;
    for (i = 0; i < n; i++) {
        if (i == 3)
            continue;
        s = s + i;
    }
    *out = s;
    return s;
}
"""


def _at(f, line):
    (s,) = f.statements_at(line)
    return s.id


def test_cfg_loop_and_continue():
    _, f = one_function(LOOP)
    succ = build_cfg(f)
    loop, cond, cont, acc = _at(f, 5), _at(f, 6), _at(f, 7), _at(f, 8)
    assert set(succ[loop]) == {cond, _at(f, 10)}
    assert succ[cont] == (loop,)
    assert succ[acc] == (loop,)
    assert succ[_at(f, 11)] == (EXIT,)


def test_reaching_definitions_through_loop():
    _, f = one_function(LOOP)
    pdg = build_pdg(f)
    s_ref = VarRef("s")
    assert pdg.reaching(_at(f, 10), s_ref) == {_at(f, 3), _at(f, 8)}
    assert (_at(f, 8), _at(f, 8), s_ref) in pdg.data_edges


def test_member_write_keeps_other_members():
    src = "void f(struct p *q)\n{\n    q->a = 1;\n    q->b = 2;\n    use(q->a);\n}\n"
    _, f = one_function(src)
    pdg = build_pdg(f)
    assert pdg.reaching(_at(f, 5), VarRef("q", ("a",))) == {_at(f, 3)}


def test_pointer_arguments_define_in_augmented_mode():
    src = "void f(char *p)\n{\n    int v;\n    fill(p, &v);\n    use(*p, v);\n}\n"
    _, f = one_function(src)
    call = f.by_id[_at(f, 4)]
    assert {r.base for r in pointer_arg_defs(call)} == {"p", "v"}
    plain, aug = build_pdg(f), build_pdg(f, augmented=True)
    edge = (_at(f, 4), _at(f, 5), VarRef("v"))
    assert edge not in plain.data_edges
    assert edge in aug.data_edges


def test_address_of_array_element_defines_array_only():
    src = "void f(char *buf, int j)\n{\n    g(&buf[j]);\n}\n"
    _, f = one_function(src)
    assert {r.base for r in pointer_arg_defs(f.body[0])} == {"buf"}


def test_control_edges_to_direct_children():
    _, f = one_function(LOOP)
    pdg = build_pdg(f)
    assert pdg.ctrl_children(_at(f, 5)) == sorted([_at(f, 6), _at(f, 8)])
    assert pdg.ctrl_children(_at(f, 6)) == [_at(f, 7)]


def test_reaching_matches_path_oracle_on_corpus():
    checked = 0
    for group in ("triggers", "patches", "figures", "baseline"):
        for case in corpus_cases(group):
            m = load_manifest(case)
            for root, tag in ((m.vuln_root, "vulnerable"), (m.patched_root, "patched")):
                for f in parse_source_tree(root, tag).functions():
                    for aug in (False, True):
                        got = reaching_definitions(f, build_cfg(f), aug)
                        assert {k: frozenset(v) for k, v in got.items()} == oracle_reaching(f, aug)
                        checked += 1
    assert checked > 100


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(function_source())
def test_reaching_matches_path_oracle_on_random_functions(src):
    _, f = one_function(src)
    assert not any(s.kind == "opaque" for s in f.body)
    for aug in (False, True):
        got = reaching_definitions(f, build_cfg(f), aug)
        assert {k: frozenset(v) for k, v in got.items()} == oracle_reaching(f, aug)


CALLS = """\
static int leaf(int v)
{
    return v + 1;
}

static int mid(int v)
{
    return leaf(v) * 2;
}

int top(int a, int (*cb)(int))
{
    int r = mid(a);
    r = r + cb(a);
    return top(r, cb) + strlen("x");
}
"""


def test_call_graph_edges_and_cycles():
    tree = tree_of({"a.c": CALLS})
    cg = build_call_graph(tree)
    assert [c for c, _ in cg.callees("top")] == ["mid", "top"]
    assert [c for c, _ in cg.callers("leaf")] == ["mid"]
    assert cg.reachable("top") == {"mid", "leaf", "top"}
    assert cg.in_cycle("top") and not cg.in_cycle("mid")
    assert cg.external == {("top", "cb"), ("top", "strlen")}


def test_dependency_files_follow_includes_and_calls():
    tree = tree_of({
        "main.c": '#include "lib.h"\nint main(void)\n{\n    return helper(1);\n}\n',
        "lib.h": "int helper(int a);\n",
        "lib.c": "int helper(int a)\n{\n    return a;\n}\n",
    })
    deps = collect_dependency_files(tree, tree.function("main"))
    assert deps.seed == "main.c"
    assert set(deps.closure) == {"main.c", "lib.h", "lib.c"}


def test_dot_exports_are_deterministic():
    tree = tree_of({"a.c": CALLS})
    cg = build_call_graph(tree)
    assert call_graph_to_dot(cg) == call_graph_to_dot(build_call_graph(tree))
    assert call_graph_to_dot(cg).startswith("digraph")
    dot = pdg_to_dot(build_pdg(tree.function("top")), tree)
    assert "->" in dot and dot.count("digraph") == 1
