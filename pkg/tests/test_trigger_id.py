from __future__ import annotations

import pytest

from conftest import analysis_of, corpus_cases, tree_of
from trigloc.dependence import ProgramGraphs
from trigloc.errors import NoTriggerFound, UnsupportedCwe
from trigloc.report import analyze, load_manifest
from trigloc.trigger_id import (
    CLASS1_CWES,
    RULES,
    T_TYPES,
    KeywordConfig,
    RuleContext,
    cwe_allowed_types,
    identify_triggers,
    parse_cwe,
)


def _rule(t, text, var, cwe_src=None):
    src = cwe_src or f"struct s {{ int *buf; }};\nvoid f(struct s *q, char *d, char *p, int n, int i)\n{{\n    {text}\n}}\n"
    tree = tree_of({"a.c": src})
    f = tree.function("f")
    ctx = RuleContext(tree, ProgramGraphs(tree), KeywordConfig())
    return RULES[t](f.body[0], var, "f", ctx)


@pytest.mark.parametrize("case", corpus_cases("triggers"), ids=lambda p: p.name)
def test_trigger_matrix(case):
    a = analysis_of(case)
    expect = a.manifest.extra["expect"]
    assert a.errors == []
    assert [[f.file, f.line] for f in a.findings] == expect["trigger_lines"]
    assert [t for f in a.findings for t in f.t_types] == expect["t_types"]


def test_trigger_matrix_covers_every_type():
    seen = set()
    for case in corpus_cases("triggers"):
        seen |= {t for f in analysis_of(case).findings for t in f.t_types}
    assert seen == set(T_TYPES)


def test_cwe_table():
    assert cwe_allowed_types(125) == {"T-1", "T-2", "T-3"}
    assert cwe_allowed_types("CWE-190") == {"T-1", "T-2", "T-3", "T-4"}
    assert cwe_allowed_types(416) == {"T-12", "T-13"}
    assert cwe_allowed_types(369) == {"T-17", "T-18", "T-19"}
    assert CLASS1_CWES == {772, 401, 835}
    with pytest.raises(UnsupportedCwe):
        cwe_allowed_types(79)


def test_parse_cwe():
    assert parse_cwe("CWE-787") == 787
    assert parse_cwe("cwe-22") == 22
    assert parse_cwe(" 476 ") == 476
    with pytest.raises(UnsupportedCwe):
        parse_cwe("buffer overflow")


def test_memory_api_rule_matches_arguments_only():
    assert _rule("T-1", "memcpy(d, p, n);", "n")
    assert not _rule("T-1", "copy_bytes(d, p, n);", "n")
    assert not _rule("T-1", "memcpy(d, p, 4);", "n")


def test_array_and_pointer_rules():
    assert _rule("T-2", "d[i] = 0;", "i")
    assert not _rule("T-2", "d[0] = i;", "i")
    assert _rule("T-3", "*(p + i) = 0;", "p")
    assert not _rule("T-3", "*(p + i) = 0;", "i")
    assert _rule("T-3", "p++;", "p")
    assert not _rule("T-3", "n = q->buf[0] - 1;", "q")


def test_integer_rule_skips_pointers():
    assert _rule("T-4", "n = n * i;", "i")
    assert not _rule("T-4", "p = p + i;", "p")


def test_null_and_division_rules():
    assert _rule("T-14", "n = q->buf[0];", "q")
    assert _rule("T-17", "n = n / i;", "i")
    assert _rule("T-17", "n = n % i;", "i")
    assert not _rule("T-17", "n = i / 4;", "i")
    assert _rule("T-19", "n = DIV_ROUND_UP(n, i);", "i")


def test_free_rule():
    assert _rule("T-12", "kfree(p);", "p")
    assert not _rule("T-12", "use(p);", "p")


def test_keyword_config_round_trip(tmp_path):
    kw = KeywordConfig(memory_apis=("memcpy", "xcopy"))
    path = tmp_path / "kw.ini"
    path.write_text(kw.to_text(), encoding="utf-8")
    assert KeywordConfig.load(path) == kw


def test_keyword_config_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "kw.ini"
    path.write_text("[free_apis]\nrelease_obj\n", encoding="utf-8")
    kw = KeywordConfig.load(path)
    assert kw.free_apis == ("release_obj",)
    assert kw.memory_apis == KeywordConfig().memory_apis


def test_empty_keyword_list_is_rejected():
    with pytest.raises(ValueError):
        KeywordConfig(assertion_apis=())


def test_custom_keyword_changes_matches(build_case):
    case = build_case("""
void f(char *d, char *s, int n)
{
+    if (n > 8)
+        return;
    xcopy(d, s, n); // TRIGGER
}
""", cwe=125)
    a = analyze(load_manifest(case))
    assert [e["code"] for e in a.to_report()["diagnostics"]["errors"]] == ["NoTriggerFound"]
    b = analyze(load_manifest(case), keywords=KeywordConfig(memory_apis=("xcopy",)))
    # lines are reported in the vulnerable tree
    assert [(f.line, f.t_types) for f in b.findings] == [(3, ("T-1",))]


def test_phases_search_forward_before_preceding(build_case):
    case = build_case("""
int f(int *v, int i, int n)
{
    i = v[i];
+    if (i >= n)
+        return 0;
    return i + 1;
}
""")
    a = analyze(load_manifest(case))
    assert [(f.line, f.phase) for f in a.findings] == [(3, "preceding")]
    assert [p[:2] for p in a.trace.phases] == [("f", "forward"), ("f", "transformed-cv"), ("f", "transformed-cv"), ("f", "preceding")]


def test_no_trigger_found_raises(build_case):
    case = build_case("int f(int i)\n{\n+    if (i)\n+        return 1;\n    return i;\n}\n")
    a = analyze(load_manifest(case))
    ctx = RuleContext(a.vuln_tree, ProgramGraphs(a.vuln_tree), KeywordConfig())
    with pytest.raises(NoTriggerFound):
        identify_triggers(125, a.patch_statements, a.slices, ctx)
