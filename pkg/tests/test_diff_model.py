from __future__ import annotations

import pytest

from conftest import analysis_of, corpus_cases, tree_of
from trigloc.diff_model import align_new_to_old, parse_diff_text, preprocess_diff
from trigloc.errors import MalformedDiff, UnanchoredHunk
from trigloc.report import analyze, load_manifest

OLD = """\
int f(int a, int b)
{
    int x = a;
    x = x + b;
    return x;
}
"""

NEW = """\
int f(int a, int b)
{
    int x = a;
    if (b > 10)
        return 0;
    x = x + b;
    return x;
}
"""

DIFF = """\
diff --git a/src/f.c b/src/f.c
--- a/src/f.c
+++ b/src/f.c
@@ -2,4 +2,6 @@
 {
     int x = a;
+    if (b > 10)
+        return 0;
     x = x + b;
     return x;
"""


def _trees():
    return tree_of({"src/f.c": OLD}), tree_of({"src/f.c": NEW}, "patched")


def test_parse_diff_paths_and_counts():
    diff = parse_diff_text(DIFF)
    (h,) = diff.hunks
    assert (h.old_path, h.new_path) == ("src/f.c", "src/f.c")
    assert (h.old_start, h.old_len, h.new_start, h.new_len) == (2, 4, 2, 6)
    assert [ln.marker for ln in h.lines] == ["context", "context", "add", "add", "context", "context"]
    assert h.lines[2].new_line == 4 and h.lines[2].old_line is None
    assert h.lines[4].old_line == 4 and h.lines[4].new_line == 6


def test_parse_diff_single_line_ranges():
    text = "--- a/x.c\n+++ b/x.c\n@@ -3 +3 @@\n-a;\n+b;\n"
    (h,) = parse_diff_text(text).hunks
    assert (h.old_len, h.new_len) == (1, 1)


def test_new_and_deleted_files():
    text = "--- /dev/null\n+++ b/new.c\n@@ -0,0 +1,1 @@\n+int x;\n"
    (h,) = parse_diff_text(text).hunks
    assert h.old_path is None and h.new_path == "new.c"


def test_count_mismatch_is_malformed():
    bad = DIFF.replace("@@ -2,4 +2,6 @@", "@@ -2,5 +2,6 @@")
    with pytest.raises(MalformedDiff) as info:
        parse_diff_text(bad)
    assert info.value.line is not None


def test_garbage_inside_hunk_is_malformed():
    with pytest.raises(MalformedDiff):
        parse_diff_text("--- a/x.c\n+++ b/x.c\n@@ -1,2 +1,2 @@\n x\n?y\n")


def test_preprocess_binds_and_types():
    vuln, patched = _trees()
    stmts = preprocess_diff(parse_diff_text(DIFF), vuln, patched)
    assert [(p.action, p.p_type, p.line_patched) for p in stmts] == [("add", "P-9", 4), ("add", "P-11", 5)]
    assert all(p.function == "f" for p in stmts)
    # the insertion point is the vulnerable line that follows the added block
    assert stmts[0].anchor_vuln == 4


def test_unanchored_hunk():
    vuln, patched = _trees()
    shifted = DIFF.replace("@@ -2,4 +2,6 @@", "@@ -3,4 +3,6 @@")
    with pytest.raises(UnanchoredHunk):
        preprocess_diff(parse_diff_text(shifted), vuln, patched)


def test_comment_and_whitespace_only_changes_vanish():
    old = "int f(int a)\n{\n    return a;\n}\n"
    new = "int f(int a)\n{\n    // explain\n    return  a;\n}\n"
    diff = (
        "--- a/a.c\n+++ b/a.c\n@@ -1,4 +1,5 @@\n int f(int a)\n {\n"
        "-    return a;\n+    // explain\n+    return  a;\n }\n"
    )
    stmts = preprocess_diff(parse_diff_text(diff), tree_of({"a.c": old}), tree_of({"a.c": new}, "patched"))
    assert stmts == []


def test_modify_pairs_by_shared_target():
    old = "int f(int a)\n{\n    int n = a;\n    n = a * 2;\n    return n;\n}\n"
    new = "int f(int a)\n{\n    int n = a;\n    n = a * 4;\n    return n;\n}\n"
    diff = (
        "--- a/a.c\n+++ b/a.c\n@@ -3,3 +3,3 @@\n     int n = a;\n"
        "-    n = a * 2;\n+    n = a * 4;\n     return n;\n"
    )
    (ps,) = preprocess_diff(parse_diff_text(diff), tree_of({"a.c": old}), tree_of({"a.c": new}, "patched"))
    assert (ps.action, ps.p_type) == ("modify", "P-2")
    assert ps.statement.text == "n = a * 2;" and ps.new_statement.text == "n = a * 4;"


def test_align_new_to_old():
    diff = parse_diff_text(DIFF)
    assert align_new_to_old(diff, "src/f.c", 3) == 3
    assert align_new_to_old(diff, "src/f.c", 6) == 4
    assert align_new_to_old(diff, "src/f.c", 20) == 18


@pytest.mark.parametrize("case", corpus_cases("patches"), ids=lambda p: p.name)
def test_patch_matrix_types(case):
    a = analysis_of(case)
    want = [tuple(x) for x in a.manifest.extra["expect"]["patch_types"]]
    assert [(p.action, p.p_type) for p in a.patch_statements] == want


def test_patch_matrix_covers_all_types():
    seen = set()
    for case in corpus_cases("patches"):
        seen |= {p.p_type for p in analysis_of(case).patch_statements}
    assert seen == {f"P-{i}" for i in range(1, 12)}


def test_diff_outside_functions_reports_no_patch(build_case):
    case = build_case("""
-static int limit = 4;
+static int limit = 8;

int f(int a)
{
    return a;
}
""")
    a = analyze(load_manifest(case))
    assert [e["code"] for e in a.to_report()["diagnostics"]["errors"]] == ["NoPatchInFunction"]
    assert [p.p_type for p in a.patch_statements] == ["P-6"]
