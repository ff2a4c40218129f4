"""Unified diff parsing, preprocessing and patch-statement typing."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path

from .code_model import SourceTree, Statement, find_function_at
from .errors import MalformedDiff, UnanchoredHunk
from .lexer import is_ignorable, render, strip_comments, tokenize

P_TYPES = tuple(f"P-{i}" for i in range(1, 12))

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


@dataclass(frozen=True)
class DiffLine:
    marker: str  # context | add | del
    text: str
    old_line: int | None = None
    new_line: int | None = None


@dataclass(frozen=True)
class Hunk:
    old_path: str | None
    new_path: str | None
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple = ()

    @property
    def path(self) -> str:
        return self.new_path or self.old_path


@dataclass(frozen=True)
class DiffFile:
    hunks: tuple = ()
    files_touched: tuple = ()


@dataclass(frozen=True)
class PatchStatement:
    id: str
    action: str  # add | delete | modify
    p_type: str
    file: str
    function: str | None
    line_vuln: int | None
    line_patched: int | None
    statement: Statement
    new_statement: Statement | None = None  # patched side of a modify
    anchor_vuln: int | None = None  # vulnerable-tree line an added statement sits before
    group: int = 0

    @property
    def vuln_statement(self) -> Statement | None:
        return self.statement if self.action != "add" else None

    @property
    def patched_statement(self) -> Statement | None:
        if self.action == "add":
            return self.statement
        return self.new_statement

    @property
    def vuln_line(self) -> int | None:
        """Position of this statement in the vulnerable tree."""
        return self.line_vuln if self.line_vuln is not None else self.anchor_vuln


def _strip_path(raw: str) -> str | None:
    path = raw.split("\t")[0].strip()
    if path == "/dev/null":
        return None
    if path[:2] in ("a/", "b/"):
        path = path[2:]
    return path


def parse_diff(path) -> DiffFile:
    return parse_diff_text(Path(path).read_text(encoding="utf-8", errors="replace"))


def parse_diff_text(text: str) -> DiffFile:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    hunks: list[Hunk] = []
    touched: list[tuple] = []
    old_path = new_path = None
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            old_path, new_path = _strip_path(line[4:]), _strip_path(lines[i + 1][4:])
            touched.append((old_path, new_path))
            i += 2
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if not m:
                raise MalformedDiff("bad hunk header", i + 1)
            if not touched:
                raise MalformedDiff("hunk before file header", i + 1)
            o_start, n_start = int(m.group(1)), int(m.group(3))
            o_len = int(m.group(2)) if m.group(2) is not None else 1
            n_len = int(m.group(4)) if m.group(4) is not None else 1
            body: list[DiffLine] = []
            o, n = o_start, n_start
            seen_o = seen_n = 0
            i += 1
            while i < len(lines) and (seen_o < o_len or seen_n < n_len):
                raw = lines[i]
                mark = raw[:1]
                if mark == "\\":
                    i += 1
                    continue
                if mark == " " or raw == "":
                    body.append(DiffLine("context", raw[1:], o, n))
                    o, n, seen_o, seen_n = o + 1, n + 1, seen_o + 1, seen_n + 1
                elif mark == "-":
                    body.append(DiffLine("del", raw[1:], o, None))
                    o, seen_o = o + 1, seen_o + 1
                elif mark == "+":
                    body.append(DiffLine("add", raw[1:], None, n))
                    n, seen_n = n + 1, seen_n + 1
                else:
                    raise MalformedDiff(f"unexpected line in hunk: {raw[:20]!r}", i + 1)
                i += 1
            if seen_o != o_len or seen_n != n_len:
                raise MalformedDiff("hunk shorter than its header counts", i)
            while i < len(lines) and lines[i].startswith("\\"):
                i += 1
            if i < len(lines) and lines[i][:1] in ("+", "-") and not lines[i].startswith(("--- ", "+++ ")):
                raise MalformedDiff("hunk longer than its header counts", i + 1)
            hunks.append(Hunk(old_path, new_path, o_start, o_len, n_start, n_len, tuple(body)))
            continue
        i += 1
    return DiffFile(tuple(hunks), tuple(touched))


# --- preprocessing -------------------------------------------------------------


@dataclass
class _Change:
    side: str  # del | add
    line: int
    text: str  # comment-free text of the physical line
    order: int
    group: int


def _side_texts(hunk: Hunk, side: str) -> dict[int, str]:
    """Comment-stripped text per line of one side, stripping across lines."""
    keep = ("context", side)
    key = "old_line" if side == "del" else "new_line"
    rows = [(getattr(d, key), d.text) for d in hunk.lines if d.marker in keep]
    stripped = strip_comments("\n".join(t for _, t in rows)).split("\n")
    return {ln: s for (ln, _), s in zip(rows, stripped)}


def _check_anchor(hunk: Hunk, tree: SourceTree, side: str) -> bool:
    path = hunk.old_path if side == "del" else hunk.new_path
    if path is None or not tree.has_unit(path):
        return False
    unit = tree.unit(path)
    key = "old_line" if side == "del" else "new_line"
    for d in hunk.lines:
        if d.marker in ("context", side):
            if unit.line_text(getattr(d, key)).rstrip() != d.text.rstrip():
                return False
    return True


def _changes(hunk: Hunk, group_base: int) -> tuple[list[_Change], int]:
    old_text, new_text = _side_texts(hunk, "del"), _side_texts(hunk, "add")
    out: list[_Change] = []
    group = group_base
    prev_context = True
    for order, d in enumerate(hunk.lines):
        if d.marker == "context":
            prev_context = True
            continue
        if prev_context:
            group += 1
            prev_context = False
        text = old_text[d.old_line] if d.marker == "del" else new_text[d.new_line]
        if is_ignorable(text):
            continue
        line = d.old_line if d.marker == "del" else d.new_line
        out.append(_Change(d.marker, line, text, order, group))
    return out, group


def _insertion_line(hunk: Hunk, order: int) -> int:
    """Old-side line number that an added line at ``order`` is inserted before."""
    o = hunk.old_start
    for k, d in enumerate(hunk.lines):
        if k >= order and d.marker != "add":
            return d.old_line
        if d.old_line is not None:
            o = d.old_line + 1
    return o


def _bind(tree: SourceTree, path: str, line: int, text: str, side: str) -> Statement:
    unit = tree.unit(path)
    func = find_function_at(tree, path, line)
    if func is not None:
        hdr = func.header
        if hdr is not None and hdr.line <= line <= hdr.end_line:
            return hdr
        hits = func.statements_at(line)
        if hits:
            # innermost statement covering the line: latest start
            return max(hits, key=lambda s: (s.line, -s.end_line))
    for s in unit.globals:
        if s.line <= line <= s.end_line:
            return s
    toks = tokenize(text, line)
    return Statement(
        id=f"{path}:{line}:{side}", line=line, end_line=line, kind="opaque",
        text=render(toks), file=path, function=func.name if func else None,
        tokens=tuple(t.text for t in toks),
    )


def _signature(stmt: Statement) -> set:
    if stmt.is_header:
        return {("header", stmt.function)}
    sig = set()
    if stmt.kind in ("assign", "decl"):
        sig |= {("def", str(r)) for r in stmt.defs}
    if stmt.callee:
        sig.add(("call", stmt.callee))
    if stmt.kind == "control":
        sig.add(("ctrl", stmt.ctrl))
    if stmt.kind == "return":
        sig.add(("return",))
    return sig


def preprocess_diff(diff: DiffFile, vuln: SourceTree, patched: SourceTree) -> list[PatchStatement]:
    """Normalize the diff into bound, typed patch statements."""
    result: list[PatchStatement] = []
    group_base = 0
    for h_idx, hunk in enumerate(diff.hunks):
        changes, group_base = _changes(hunk, group_base)
        if not changes:
            continue
        has_del = any(c.side == "del" for c in changes)
        has_add = any(c.side == "add" for c in changes)
        old_ok = _check_anchor(hunk, vuln, "del")
        new_ok = _check_anchor(hunk, patched, "add")
        if (has_del and not old_ok) or (has_add and not new_ok) or not (old_ok or new_ok):
            raise UnanchoredHunk(f"hunk {h_idx + 1} ({hunk.path}) does not match the source trees")
        # bind each changed line, one entry per distinct statement
        bound: list[tuple[_Change, Statement]] = []
        seen: set[tuple[str, str]] = set()
        for c in changes:
            tree, path = (vuln, hunk.old_path) if c.side == "del" else (patched, hunk.new_path)
            stmt = _bind(tree, path, c.line, c.text, c.side)
            if (c.side, stmt.id) in seen:
                continue
            seen.add((c.side, stmt.id))
            bound.append((c, stmt))
        groups = sorted({c.group for c, _ in bound})
        for g in groups:
            dels = [(c, s) for c, s in bound if c.group == g and c.side == "del"]
            adds = [(c, s) for c, s in bound if c.group == g and c.side == "add"]
            used_d: set[int] = set()
            used_a: set[int] = set()
            # semantically equivalent (normalization-equal) pairs vanish
            for i, (_, ds) in enumerate(dels):
                for j, (_, as_) in enumerate(adds):
                    if j not in used_a and ds.text == as_.text:
                        used_d.add(i)
                        used_a.add(j)
                        break
            pairs: list[tuple[int, int]] = []
            for i, (dc, ds) in enumerate(dels):
                if i in used_d:
                    continue
                sig = _signature(ds)
                cands = [
                    (abs(ac.order - dc.order), j)
                    for j, (ac, as_) in enumerate(adds)
                    if j not in used_a and sig & _signature(as_)
                ]
                if cands:
                    j = min(cands)[1]
                    used_d.add(i)
                    used_a.add(j)
                    pairs.append((i, j))
            items = []
            for i, j in pairs:
                (dc, ds), (ac, as_) = dels[i], adds[j]
                items.append((dc.order, "modify", ds, as_, dc, ac))
            for i, (dc, ds) in enumerate(dels):
                if i not in used_d:
                    items.append((dc.order, "delete", ds, None, dc, None))
            for j, (ac, as_) in enumerate(adds):
                if j not in used_a:
                    items.append((ac.order, "add", as_, None, None, ac))
            for order, action, stmt, new_stmt, dc, ac in sorted(items, key=lambda x: x[0]):
                tree = patched if action == "add" else vuln
                path = hunk.new_path if action == "add" else hunk.old_path
                func = find_function_at(tree, path, stmt.line)
                ps = PatchStatement(
                    id=f"{action}:{stmt.id}",
                    action=action,
                    p_type="P-11",
                    file=path,
                    function=func.name if func else None,
                    line_vuln=stmt.line if action != "add" else None,
                    line_patched=(new_stmt.line if new_stmt else stmt.line) if action != "delete" else None,
                    statement=stmt,
                    new_statement=new_stmt,
                    anchor_vuln=_insertion_line(hunk, ac.order) if action == "add" else None,
                    group=g,
                )
                result.append(_with_type(ps))
    return result


def _with_type(ps: PatchStatement) -> PatchStatement:
    return replace(ps, p_type=classify_patch_statement(ps))


def classify_patch_statement(ps: PatchStatement) -> str:
    """Table-driven P-type: odd for add/delete, even for modify."""
    stmt = ps.statement
    modify = ps.action == "modify"
    if stmt.is_header or (ps.new_statement is not None and ps.new_statement.is_header):
        base = 7
    elif stmt.kind == "assign":
        base = 1
    elif stmt.kind == "call":
        base = 3
    elif stmt.kind == "decl":
        base = 5
    elif stmt.kind == "control":
        base = 9
    else:
        return "P-11"
    return f"P-{base + 1 if modify else base}"


def align_new_to_old(diff: DiffFile, path: str, line: int) -> int:
    """Vulnerable-tree line corresponding to patched-tree ``line`` of ``path``.

    Lines inside a hunk map through its context lines; added lines map to
    the old line they were inserted before.
    """
    offset = 0
    for hunk in diff.hunks:
        if hunk.new_path != path:
            continue
        if line < hunk.new_start:
            break
        if line < hunk.new_start + hunk.new_len:
            for k, d in enumerate(hunk.lines):
                if d.new_line == line:
                    return d.old_line if d.old_line is not None else _insertion_line(hunk, k)
        offset = (hunk.old_start + hunk.old_len) - (hunk.new_start + hunk.new_len)
    return line + offset
