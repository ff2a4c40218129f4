from __future__ import annotations

import pytest

from conftest import one_function, tree_of
from trigloc.cexpr import ParseFailure, VarRef, parse_expression
from trigloc.code_model import find_function_at, parse_source_tree
from trigloc.errors import EmptyTree, SourceIOError, UnknownPath
from trigloc.lexer import is_ignorable, normalize_statement, strip_comments, tokenize

SAMPLE = """\
#include "util.h"
#define LIMIT 16

struct item {
    int len;
    char *data;
};

static int counter;

int process(struct item *it, char *out, int n)
{
    int i, total = 0;
    char buf[LIMIT];

    if (n > LIMIT)
        return -1;
    for (i = 0; i < n; i++) {
        buf[i] = it->data[i];
        total += buf[i];
    }
    memcpy(out, buf, n);
    it->len = total;
    return total;
}
"""


def test_tokenize_keeps_lines_and_drops_comments():
    toks = tokenize(strip_comments("a = 1; // one\n/* two\n */ b = a;"))
    assert [t.text for t in toks] == ["a", "=", "1", ";", "b", "=", "a", ";"]
    assert toks[4].line == 3


def test_strip_comments_preserves_line_count():
    text = "int a; /* x\ny */ int b; // z\n\"// not a comment\";"
    out = strip_comments(text)
    assert out.count("\n") == text.count("\n")
    assert "// not a comment" in out


def test_normalize_and_ignorable():
    assert normalize_statement("  x  =   y ;  // c") == "x = y;"
    assert is_ignorable("   }")
    assert is_ignorable("// only a comment")
    assert not is_ignorable("x++;")


def test_expression_parser_precedence():
    node = parse_expression([t.text for t in tokenize("a + b * c")])
    assert node.op == "+"
    assert node.right.op == "*"


def test_expression_parser_rejects_garbage():
    with pytest.raises(ParseFailure):
        parse_expression(["(", "a", "+"])


def test_function_bounds_and_params():
    tree, f = one_function(SAMPLE, "process")
    assert f.span == (11, 25)
    assert f.param_names == ["it", "out", "n"]
    assert f.symbols["it"].is_struct and f.symbols["it"].is_pointer
    assert f.symbols["buf"].is_array


def test_statement_kinds_and_facts():
    _, f = one_function(SAMPLE, "process")
    by_line = {s.line: s for s in f.body}
    assert by_line[16].kind == "control" and by_line[16].ctrl == "if"
    assert by_line[17].kind == "return"
    assert by_line[19].kind == "assign"
    assert by_line[22].kind == "call" and by_line[22].callee == "memcpy"
    assert by_line[23].defs == {VarRef("it", ("len",))}
    assert "total" in by_line[20].def_bases and "total" in by_line[20].use_bases
    assert by_line[19].parent == by_line[18].id


def test_globals_macros_and_includes():
    tree = tree_of({"a.c": SAMPLE})
    unit = tree.unit("a.c")
    assert tree.macro("LIMIT") == "16"
    assert "util.h" in unit.includes
    assert any("counter" in s.def_bases for s in unit.globals if s.kind == "decl")


def test_opaque_region_spans_only_its_lines():
    text = """\
int ok_before(int a)
{
    return a + 1;
}

BEGIN_HANDLERS(net) {
    HANDLER(open) => [ fast ] :: x;
}

int ok_after(int b)
{
    return b * 2;
}
"""
    tree = tree_of({"a.c": text})
    opaque = [s.line for f in tree.functions() for s in f.body if s.kind == "opaque"]
    assert opaque == [7]
    assert tree.function("ok_before").span == (1, 4)
    assert tree.function("ok_after").span == (10, 13)
    assert [s.kind for s in tree.function("ok_after").body] == ["return"]


def test_unparseable_statement_becomes_opaque():
    _, f = one_function("int f(int a)\n{\n    a = = 2;\n    return a;\n}\n")
    first, second = f.body
    assert first.kind == "opaque" and not first.defs and not first.uses
    assert second.kind == "return"


def test_find_function_at_line():
    tree = tree_of({"a.c": SAMPLE})
    assert find_function_at(tree, "a.c", 20).name == "process"
    assert find_function_at(tree, "a.c", 3) is None


def test_unknown_path_raises():
    tree = tree_of({"a.c": SAMPLE})
    with pytest.raises(UnknownPath):
        tree.unit("missing.c")


def test_parse_source_tree_errors(tmp_path):
    with pytest.raises(SourceIOError):
        parse_source_tree(tmp_path / "nope", "vulnerable")
    (tmp_path / "empty").mkdir()
    with pytest.raises(EmptyTree):
        parse_source_tree(tmp_path / "empty", "vulnerable")


def test_parse_source_tree_reads_nested_c_files(tmp_path):
    (tmp_path / "src" / "sub").mkdir(parents=True)
    (tmp_path / "src" / "sub" / "a.c").write_text("int f(void)\n{\n    return 0;\n}\n")
    (tmp_path / "src" / "notes.txt").write_text("ignored")
    tree = parse_source_tree(tmp_path / "src", "patched")
    assert tree.has_unit("sub/a.c")
    assert tree.version_tag == "patched"


def test_invalid_version_tag(tmp_path):
    with pytest.raises(ValueError):
        tree_of({"a.c": SAMPLE}, tag="old")


def _all_trees():
    from conftest import corpus_cases
    from trigloc.report import load_manifest

    for group in ("triggers", "patches", "figures", "baseline"):
        for path in corpus_cases(group):
            m = load_manifest(path)
            yield m.id, parse_source_tree(m.vuln_root, "vulnerable")
            yield m.id, parse_source_tree(m.patched_root, "patched")


def test_corpus_parses_without_opaque_statements():
    for case, tree in _all_trees():
        assert tree.opaque_count == 0, case


def test_assignment_def_use_soundness_on_corpus():
    checked = 0
    for case, tree in _all_trees():
        for f in tree.functions():
            for s in f.body:
                if s.kind != "assign" or "=" not in s.tokens:
                    continue
                eq = s.tokens.index("=")
                lhs, rhs = s.tokens[:eq], s.tokens[eq + 1:]
                target = next(t for t in lhs if t in f.symbols)
                assert target in s.def_bases, (case, s.text)
                for t in rhs:
                    if t in f.symbols and t not in tree.function_names:
                        assert t in s.use_bases, (case, s.text, t)
                checked += 1
    assert checked > 20
