from __future__ import annotations

from pathlib import Path

import pytest

from fixtures.cases import CORPUS, Case, unified, write_case
from trigloc.code_model import SourceTree, parse_source_tree, parse_unit
from trigloc.critical_vars import identify_critical_variables
from trigloc.dependence import ProgramGraphs
from trigloc.diff_model import parse_diff, parse_diff_text, preprocess_diff
from trigloc.errors import AnalysisError
from trigloc.report import analyze, find_cases, load_manifest

GROUPS = ("triggers", "patches", "figures", "baseline")


def tree_of(files: dict, tag: str = "vulnerable") -> SourceTree:
    """A source tree from in-memory ``path -> text``."""
    units = tuple(parse_unit(p, t) for p, t in sorted(files.items()))
    return SourceTree("/mem", units, tag)


def one_function(text: str, name: str | None = None):
    tree = tree_of({"a.c": text})
    return tree, tree.function(name) if name else next(iter(tree.functions()))


def corpus_cases(group: str) -> list[Path]:
    return find_cases(CORPUS / group)


def case_id(path: Path) -> str:
    return path.name


_ANALYSES: dict = {}


def analysis_of(path: Path):
    """Cached default-configuration analysis of one corpus case."""
    key = str(path)
    if key not in _ANALYSES:
        _ANALYSES[key] = analyze(load_manifest(path))
    return _ANALYSES[key]


@pytest.fixture
def build_case(tmp_path):
    """Write an ad-hoc case from a marker template and return its directory."""

    def make(template: str, cwe: int = 125, path: str = "a.c", **kw) -> Path:
        return write_case(Case(kw.pop("id", "adhoc"), cwe, {path: template}, **kw), tmp_path)

    return make


def patched_pair(template: str, path: str = "a.c"):
    """(patch statements, vulnerable tree, patched tree, diff) from a marker template."""
    old, new = Case("mem", 125, {path: template}).versions()[path]
    diff = parse_diff_text(unified(path, old, new))
    vuln, patched = tree_of({path: old}), tree_of({path: new}, "patched")
    return preprocess_diff(diff, vuln, patched), vuln, patched, diff


def statement_count(tree) -> int:
    return sum(len(f.body) + 1 for f in tree.functions())


def slicing_seeds(max_statements: int = 40):
    """(case id, graphs, root function, seed statement, variable) for every
    critical variable of every corpus case small enough for the oracle."""
    seen = set()
    for group in GROUPS:
        for path in corpus_cases(group):
            m = load_manifest(path)
            if m.id in seen:
                continue
            seen.add(m.id)
            vuln = parse_source_tree(m.vuln_root, "vulnerable")
            patched = parse_source_tree(m.patched_root, "patched")
            if max(statement_count(vuln), statement_count(patched)) > max_statements:
                continue
            graphs = {"vulnerable": ProgramGraphs(vuln), "patched": ProgramGraphs(patched)}
            for ps in preprocess_diff(parse_diff(m.diff_path), vuln, patched):
                if not ps.function:
                    continue
                try:
                    cvs = identify_critical_variables(ps, m.cwe)
                except AnalysisError:
                    continue
                sides = [("patched", ps.statement)] if ps.action == "add" else [("vulnerable", ps.statement)]
                if ps.new_statement is not None:
                    sides.append(("patched", ps.new_statement))
                for tag, seed in sides:
                    g = graphs[tag]
                    root = g.tree.function(ps.function)
                    if root is None or seed.id not in root.by_id:
                        continue
                    for cv in cvs:
                        yield m.id, g, root, seed, cv.name


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
