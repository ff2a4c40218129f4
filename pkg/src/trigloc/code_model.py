"""Statement-level code model for a supported subset of C.

A :class:`SourceTree` is built once per program version and never mutated.
Anything the parser cannot make sense of becomes ``opaque`` statements, one
per physical line, so parsing never aborts on unsupported syntax.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from .cexpr import (
    ArrayAccess,
    BinOp,
    CallSite,
    FactCollector,
    ParseFailure,
    VarRef,
    parse_expression,
)
from .errors import EmptyTree, SourceIOError, UnknownPath
from .lexer import KEYWORDS, TYPE_KEYWORDS, Token, normalize_statement, render, statement_key, strip_comments, tokenize

log = logging.getLogger(__name__)

SOURCE_SUFFIXES = (".c", ".h", ".cpp", ".hpp", ".cc", ".cxx", ".hh")
VERSION_TAGS = ("vulnerable", "patched")
STATEMENT_KINDS = ("assign", "call", "decl", "control", "return", "goto", "label", "macro_use", "opaque")

__all__ = [
    "VarRef", "VarDecl", "Statement", "FunctionDef", "SourceUnit", "SourceTree",
    "parse_source_tree", "parse_unit", "find_function_at", "normalize_statement",
]


@dataclass(frozen=True)
class VarDecl:
    name: str
    type_text: str
    is_pointer: bool = False
    is_array: bool = False
    line: int = 0

    @property
    def is_struct(self) -> bool:
        return bool(re.search(r"\b(struct|union)\b", self.type_text))


@dataclass(frozen=True)
class Statement:
    id: str
    line: int
    kind: str
    defs: frozenset = frozenset()
    uses: frozenset = frozenset()
    callee: str | None = None
    text: str = ""
    end_line: int = 0
    file: str = ""
    function: str | None = None
    ctrl: str | None = None  # if | for | while | dowhile | switch
    cond_uses: frozenset = frozenset()
    calls: tuple = ()
    arrays: tuple = ()
    binops: tuple = ()
    derefs: frozenset = frozenset()
    names: frozenset = frozenset()
    tokens: tuple = ()
    parent: str | None = None
    blocks: tuple = ()  # child statement ids per branch, control statements only
    is_header: bool = False

    @property
    def def_bases(self) -> frozenset[str]:
        return frozenset(r.base for r in self.defs)

    @property
    def use_bases(self) -> frozenset[str]:
        return frozenset(r.base for r in self.uses)

    @property
    def keyword(self) -> str | None:
        return self.tokens[0] if self.tokens else None


@dataclass(frozen=True, eq=False)
class FunctionDef:
    name: str
    params: tuple
    body: tuple
    span: tuple
    file: str = ""
    header: Statement | None = None
    children: tuple = ()  # top-level statement ids in source order
    symbols: dict = field(default_factory=dict)

    @cached_property
    def by_id(self) -> dict[str, Statement]:
        out = {s.id: s for s in self.body}
        if self.header is not None:
            out[self.header.id] = self.header
        return out

    def statement(self, stmt_id: str) -> Statement:
        return self.by_id[stmt_id]

    def statements_at(self, line: int) -> list[Statement]:
        return [s for s in self.body if s.line <= line <= s.end_line]

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]


@dataclass(frozen=True, eq=False)
class SourceUnit:
    path: str
    functions: tuple
    globals: tuple
    includes: tuple = ()
    macros: dict = field(default_factory=dict)  # name -> replacement text
    lines: tuple = ()  # raw physical lines, index 0 is line 1

    def line_text(self, line: int) -> str:
        return self.lines[line - 1] if 0 < line <= len(self.lines) else ""

    @property
    def opaque_count(self) -> int:
        n = sum(1 for s in self.globals if s.kind == "opaque")
        return n + sum(1 for f in self.functions for s in f.body if s.kind == "opaque")

    @property
    def statement_count(self) -> int:
        return len(self.globals) + sum(len(f.body) for f in self.functions)


@dataclass(frozen=True, eq=False)
class SourceTree:
    root: Path
    units: tuple
    version_tag: str

    def __post_init__(self):
        if self.version_tag not in VERSION_TAGS:
            raise ValueError(f"version_tag must be one of {VERSION_TAGS}")
        paths = [u.path for u in self.units]
        if len(paths) != len(set(paths)):
            raise ValueError("duplicate unit paths")

    @cached_property
    def _units(self) -> dict[str, SourceUnit]:
        return {u.path: u for u in self.units}

    @cached_property
    def _functions(self) -> dict[str, FunctionDef]:
        out: dict[str, FunctionDef] = {}
        for unit in self.units:
            for f in unit.functions:
                # first definition wins for duplicate (e.g. static) names
                out.setdefault(f.name, f)
        return out

    @cached_property
    def _statements(self) -> dict[str, tuple[FunctionDef | None, Statement]]:
        out = {}
        for unit in self.units:
            for s in unit.globals:
                out[s.id] = (None, s)
            for f in unit.functions:
                for sid, s in f.by_id.items():
                    out[sid] = (f, s)
        return out

    def unit(self, path: str) -> SourceUnit:
        try:
            return self._units[path]
        except KeyError:
            raise UnknownPath(path) from None

    def has_unit(self, path: str) -> bool:
        return path in self._units

    def functions(self):
        for unit in self.units:
            yield from unit.functions

    def function(self, name: str) -> FunctionDef | None:
        return self._functions.get(name)

    @property
    def function_names(self) -> frozenset[str]:
        return frozenset(self._functions)

    def statement(self, stmt_id: str) -> Statement:
        return self._statements[stmt_id][1]

    def owner(self, stmt_id: str) -> FunctionDef | None:
        return self._statements[stmt_id][0]

    def macro(self, name: str) -> str | None:
        for unit in self.units:
            if name in unit.macros:
                return unit.macros[name]
        return None

    @property
    def opaque_count(self) -> int:
        return sum(u.opaque_count for u in self.units)


# --- front end ---------------------------------------------------------------


def _read_source(path: Path) -> str:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SourceIOError(f"cannot read {path}: {exc}") from exc
    return data.decode("utf-8", errors="replace")


def parse_source_tree(root, version_tag: str) -> SourceTree:
    """Parse every C/C++ source file under ``root``."""
    root = Path(root)
    if not root.is_dir():
        raise SourceIOError(f"{root} is not a readable directory")
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix in SOURCE_SUFFIXES)
    if not files:
        raise EmptyTree(f"no C/C++ sources under {root}")
    units = tuple(parse_unit(p.relative_to(root).as_posix(), _read_source(p)) for p in files)
    return SourceTree(root, units, version_tag)


_DIRECTIVE_RE = re.compile(r"^\s*#\s*(\w+)(.*)$")
_INCLUDE_RE = re.compile(r'^\s*[<"]([^>"]+)[>"]')
_DEFINE_RE = re.compile(r"^\s*([A-Za-z_]\w*)(\([^)]*\))?\s*(.*)$")


def _split_directives(text: str):
    """Blank preprocessor lines out of ``text``; return directives separately."""
    lines = text.split("\n")
    directives = []
    i = 0
    while i < len(lines):
        m = _DIRECTIVE_RE.match(lines[i])
        if not m:
            i += 1
            continue
        start = i
        body = lines[i]
        while body.endswith("\\") and i + 1 < len(lines):
            i += 1
            body = body[:-1] + " " + lines[i]
        m = _DIRECTIVE_RE.match(body)
        directives.append((start + 1, i + 1, m.group(1), m.group(2).strip(), body))
        for k in range(start, i + 1):
            lines[k] = ""
        i += 1
    return "\n".join(lines), directives


class _Ids:
    def __init__(self, path: str):
        self.path = path
        self.per_line: dict[int, int] = {}

    def next(self, line: int, suffix: str | None = None) -> str:
        if suffix is not None:
            return f"{self.path}:{line}:{suffix}"
        n = self.per_line.get(line, 0)
        self.per_line[line] = n + 1
        return f"{self.path}:{line}:{n}"


@dataclass
class _Proto:
    """Mutable statement under construction."""

    id: str
    kind: str
    tokens: list
    line: int
    end_line: int
    ctrl: str | None = None
    parts: list = field(default_factory=list)  # token lists to analyse as expressions
    decl: list | None = None  # declaration token list
    blocks: list = field(default_factory=list)
    parent: str | None = None
    cond: list | None = None


def _matching(toks: list[Token], start: int, open_: str, close: str) -> int:
    depth = 0
    for i in range(start, len(toks)):
        t = toks[i].text
        if t == open_:
            depth += 1
        elif t == close:
            depth -= 1
            if depth == 0:
                return i
    return -1


def _split_top(toks: list, sep: str) -> list[list]:
    parts, cur, depth = [], [], 0
    for t in toks:
        s = str(t)
        if s in "([{":
            depth += 1
        elif s in ")]}":
            depth -= 1
        if s == sep and depth == 0:
            parts.append(cur)
            cur = []
        else:
            cur.append(t)
    parts.append(cur)
    return parts


def _is_decl_start(texts: list[str], known_vars, typenames) -> bool:
    if not texts:
        return False
    first = texts[0]
    if first in TYPE_KEYWORDS and first not in ("sizeof",):
        return True
    if first in KEYWORDS or first in known_vars:
        return False
    if not (first[0].isalpha() or first[0] == "_"):
        return False
    if first in typenames and len(texts) > 1 and texts[1] not in ("(", "=", ".", "->", "["):
        return True
    if len(texts) >= 2 and re.match(r"^[A-Za-z_]\w*$", texts[1]) and texts[1] not in KEYWORDS:
        return True
    if len(texts) >= 3 and texts[1] == "*":
        stars = 1
        while 1 + stars < len(texts) and texts[1 + stars] == "*":
            stars += 1
        k = 1 + stars
        return (
            k + 1 < len(texts)
            and re.match(r"^[A-Za-z_]\w*$", texts[k]) is not None
            and texts[k + 1] in ("=", ";", ",", "[", ")")
        )
    return False


def _parse_declarators(toks: list):
    """Split a declaration into (type_text, [(name, is_ptr, is_array, init_tokens)])."""
    texts = [str(t) for t in toks]
    items = _split_top(toks, ",")
    first = [str(t) for t in items[0]]
    # the type prefix ends right before the first declarator
    eq = first.index("=") if "=" in first else len(first)
    head = first[:eq]
    name_idx = None
    for i in range(len(head) - 1, -1, -1):
        tok = head[i]
        if re.match(r"^[A-Za-z_]\w*$", tok) and tok not in TYPE_KEYWORDS:
            # skip array dims: name [ N ]
            depth = sum(1 for t in head[i + 1:] if t == "[") - sum(1 for t in head[i + 1:] if t == "]")
            if depth == 0 and not any(t == ")" for t in head[i + 1:] if "(" not in head[:i]):
                name_idx = i
                break
    if name_idx is None:
        return " ".join(texts), []
    # function pointer declarator: type ( * name ) ( params )
    k = name_idx
    while k > 0 and head[k - 1] in ("*", "(", "&"):
        k -= 1
    type_text = " ".join(head[:k])
    out = []
    for n, item in enumerate(items):
        it = [str(t) for t in item]
        eq = it.index("=") if "=" in it else len(it)
        decl_part = it[:eq] if n else it[k:eq]
        init = item[eq + 1:] if eq < len(it) else []
        names = [t for t in decl_part if re.match(r"^[A-Za-z_]\w*$", t) and t not in TYPE_KEYWORDS]
        if not names:
            continue
        # for "(*cb)(int)" the first identifier is the name
        paren = "(" in decl_part and decl_part.index("(") < decl_part.index(names[0])
        name = names[0] if paren else names[-1] if "[" not in decl_part else names[0]
        ptr = "*" in decl_part[: decl_part.index(name)] or "*" in type_text.split()
        arr = "[" in decl_part
        out.append((name, ptr, arr, init))
    return type_text, out


class _UnitParser:
    def __init__(self, path: str, text: str):
        self.path = path
        self.raw = text
        self.ids = _Ids(path)
        clean, self.directives = _split_directives(strip_comments(text))
        self.tokens = tokenize(clean)
        self.macros: dict[str, str] = {}
        self.includes: list[str] = []
        self.typenames: set[str] = set()
        self.globals: list[Statement] = []
        self.global_decls: dict[str, VarDecl] = {}
        self.functions: list[FunctionDef] = []
        self._pending_functions = []

    # -- top level --

    def parse(self) -> SourceUnit:
        self._directives()
        self._collect_typenames()
        toks = self.tokens
        i = 0
        while i < len(toks):
            i = self._top_item(i)
        names = frozenset(f[0] for f in self._pending_functions)
        for pending in self._pending_functions:
            self.functions.append(self._finish_function(*pending, function_names=names))
        self.globals.sort(key=lambda s: (s.line, s.id))
        return SourceUnit(
            self.path,
            tuple(self.functions),
            tuple(self.globals),
            tuple(self.includes),
            dict(self.macros),
            tuple(self.raw.split("\n")),
        )

    def _directives(self) -> None:
        for start, end, name, rest, body in self.directives:
            if name == "include":
                m = _INCLUDE_RE.match(rest)
                if m:
                    self.includes.append(m.group(1))
                continue
            if name == "define":
                m = _DEFINE_RE.match(rest)
                if m:
                    self.macros[m.group(1)] = m.group(3)
                toks = tokenize(f"#define {rest}")
                self.globals.append(
                    Statement(
                        id=self.ids.next(start), line=start, end_line=end, kind="macro_use",
                        text=render(toks), file=self.path, tokens=tuple(t.text for t in toks),
                    )
                )

    def _collect_typenames(self) -> None:
        texts = [t.text for t in self.tokens]
        for i, t in enumerate(texts):
            if t == "typedef":
                j = i
                depth = 0
                while j < len(texts) and not (texts[j] == ";" and depth == 0):
                    if texts[j] == "{":
                        depth += 1
                    elif texts[j] == "}":
                        depth -= 1
                    j += 1
                k = j - 1
                while k > i and not re.match(r"^[A-Za-z_]\w*$", texts[k]):
                    k -= 1
                if k > i:
                    self.typenames.add(texts[k])
            elif t in ("struct", "union", "enum") and i + 1 < len(texts):
                self.typenames.add(texts[i + 1])

    def _opaque_lines(self, toks: list[Token], sink: list, function: str | None = None) -> list[str]:
        ids = []
        by_line: dict[int, list[Token]] = {}
        for t in toks:
            by_line.setdefault(t.line, []).append(t)
        for line, line_toks in sorted(by_line.items()):
            sid = self.ids.next(line)
            sink.append(
                Statement(
                    id=sid, line=line, end_line=line, kind="opaque", text=render(line_toks),
                    file=self.path, function=function, tokens=tuple(t.text for t in line_toks),
                )
            )
            ids.append(sid)
        return ids

    def _top_item(self, i: int) -> int:
        toks = self.tokens
        start = i
        depth = 0
        n = len(toks)
        while i < n:
            t = toks[i].text
            if t in ("(", "["):
                depth += 1
            elif t in (")", "]"):
                depth -= 1
            elif t == "}" and depth == 0:
                # stray close brace (e.g. end of extern "C" block)
                if i == start:
                    return i + 1
                break
            elif t == ";" and depth == 0:
                self._global_decl(toks[start:i + 1])
                return i + 1
            elif t == "{" and depth == 0:
                prev = toks[i - 1].text if i > start else None
                item = [x.text for x in toks[start:i]]
                if prev == "=" or any(k in item for k in ("struct", "union", "enum")) and prev != ")":
                    close = _matching(toks, i, "{", "}")
                    if close < 0:
                        self._opaque_lines(toks[start:], self.globals)
                        return n
                    i = close + 1
                    continue
                if item[:1] == ["extern"] and len(item) == 2 and item[1].startswith('"'):
                    return i + 1
                close = _matching(toks, i, "{", "}")
                if close < 0:
                    self._opaque_lines(toks[start:], self.globals)
                    return n
                self._function_or_opaque(toks[start:i], toks[i:close + 1])
                return close + 1
            i += 1
        self._opaque_lines(toks[start:i], self.globals)
        return i

    def _valid_prefix_start(self, head: list[Token]) -> int:
        """Index where a plausible declaration prefix starts inside ``head``.

        Tokens before it (macro invocations without semicolons and similar)
        are not part of the declaration.
        """
        for k in range(len(head) - 1, -1, -1):
            t = head[k].text
            if not (t == "*" or t == "&" or t == "::" or re.match(r"^[A-Za-z_]\w*$", t)):
                return k + 1
        return 0

    def _function_or_opaque(self, head: list[Token], body: list[Token]) -> None:
        texts = [t.text for t in head]
        if not texts or texts[-1] != ")":
            # maybe "type name(args) const" or K&R; unsupported
            self._opaque_lines(head + body, self.globals)
            return
        depth = 0
        open_idx = None
        for k in range(len(texts) - 1, -1, -1):
            if texts[k] == ")":
                depth += 1
            elif texts[k] == "(":
                depth -= 1
                if depth == 0:
                    open_idx = k
                    break
        if open_idx is None or open_idx == 0 or not re.match(r"^[A-Za-z_]\w*$", texts[open_idx - 1]):
            self._opaque_lines(head + body, self.globals)
            return
        name = texts[open_idx - 1]
        if name in KEYWORDS:
            self._opaque_lines(head + body, self.globals)
            return
        prefix = head[: open_idx - 1]
        ok_from = self._valid_prefix_start(prefix)
        if ok_from:
            self._opaque_lines(prefix[:ok_from], self.globals)
            head = head[ok_from:]
            open_idx -= ok_from
        self._pending_functions.append((name, head, open_idx, body))

    def _global_decl(self, toks: list[Token]) -> None:
        texts = [t.text for t in toks]
        body = toks[:-1]
        # garbage before the declaration: "... FOO(x) int y;"
        cut = 0
        depth = 0
        for k, t in enumerate(texts[:-1]):
            if t in ("(", "["):
                depth += 1
            elif t in (")", "]"):
                depth -= 1
                if depth == 0 and k + 1 < len(texts) and re.match(r"^[A-Za-z_]\w*$", texts[k + 1]):
                    if "=" not in texts[:k]:
                        cut = k + 1
            elif t == "=" and depth == 0:
                break
        if cut:
            self._opaque_lines(body[:cut], self.globals)
            body = body[cut:]
            toks = toks[cut:]
        if not body:
            return
        if texts[0] == "typedef" or not _is_decl_start([t.text for t in body], set(), self.typenames):
            if texts[0] not in ("typedef", "struct", "union", "enum"):
                self._opaque_lines(toks, self.globals)
            return
        if "{" in texts:
            # struct/union/enum definition: keep only the declarators after the body
            open_idx = texts.index("{")
            close_idx = _matching(toks, open_idx, "{", "}")
            after = body[close_idx + 1:] if close_idx >= 0 else []
            if not after:
                return
            body = body[:open_idx] + after
        type_text, declarators = _parse_declarators(body)
        defs = set()
        for name, ptr, arr, _init in declarators:
            self.global_decls[name] = VarDecl(name, type_text, ptr, arr, toks[0].line)
            defs.add(VarRef(name, (), ptr))
        self.globals.append(
            Statement(
                id=self.ids.next(toks[0].line), line=toks[0].line, end_line=toks[-1].line,
                kind="decl", defs=frozenset(defs), text=render(toks), file=self.path,
                tokens=tuple(texts),
            )
        )

    # -- functions --

    def _params(self, toks: list[Token]) -> list[VarDecl]:
        inner = toks[1:-1]
        if not inner or [t.text for t in inner] == ["void"]:
            return []
        out = []
        for part in _split_top(inner, ","):
            texts = [t.text for t in part]
            if not texts or texts == ["..."]:
                continue
            type_text, decls = _parse_declarators(part)
            if decls and type_text:
                name, ptr, arr, _ = decls[0]
                out.append(VarDecl(name, type_text, ptr or arr, arr, part[0].line))
        return out

    def _finish_function(self, name, head, open_idx, body, function_names) -> FunctionDef:
        params = self._params(head[open_idx:])
        hdr_line = head[0].line
        header_proto = _Proto(
            id=self.ids.next(hdr_line, "h"), kind="decl", tokens=list(head),
            line=hdr_line, end_line=head[-1].line,
        )
        bp = _BodyParser(self, name)
        children = bp.parse_items(body[1:-1], None)
        symbols = dict(self.global_decls)
        for p in params:
            symbols[p.name] = p
        symbols.update(bp.locals)
        facts_env = (symbols, function_names | frozenset(self.macros))
        header = Statement(
            id=header_proto.id, line=hdr_line, end_line=head[-1].line, kind="decl",
            defs=frozenset(VarRef(p.name, (), p.is_pointer) for p in params),
            text=render(head), file=self.path, function=name,
            tokens=tuple(t.text for t in head), is_header=True,
        )
        stmts = [bp.finish(p, facts_env) for p in bp.protos]
        stmts.sort(key=lambda s: (s.line, int(s.id.rsplit(":", 1)[1])))
        return FunctionDef(
            name=name, params=tuple(params), body=tuple(stmts),
            span=(hdr_line, body[-1].line), file=self.path, header=header,
            children=tuple(children), symbols=symbols,
        )


class _BodyParser:
    """Structural statement parser for one function body."""

    def __init__(self, unit: _UnitParser, function: str):
        self.unit = unit
        self.function = function
        self.protos: list[_Proto] = []
        self.locals: dict[str, VarDecl] = {}

    def new(self, kind, toks, **kw) -> _Proto:
        p = _Proto(
            id=self.unit.ids.next(toks[0].line), kind=kind, tokens=list(toks),
            line=toks[0].line, end_line=toks[-1].line, **kw,
        )
        self.protos.append(p)
        return p

    def opaque(self, toks, parent) -> list[str]:
        sink: list[Statement] = []
        ids = self.unit._opaque_lines(toks, sink, self.function)
        for s in sink:
            p = _Proto(id=s.id, kind="opaque", tokens=[], line=s.line, end_line=s.line, parent=parent)
            p.tokens = [Token("other", t, s.line) for t in s.tokens]
            self.protos.append(p)
        return ids

    def parse_items(self, toks: list[Token], parent: str | None) -> list[str]:
        ids: list[str] = []
        i = 0
        while i < len(toks):
            got, i = self.statement(toks, i, parent)
            ids.extend(got)
        return ids

    def _paren(self, toks, i) -> int:
        if i >= len(toks) or toks[i].text != "(":
            raise ParseFailure("expected (")
        close = _matching(toks, i, "(", ")")
        if close < 0:
            raise ParseFailure("unbalanced (")
        return close

    def statement(self, toks: list[Token], i: int, parent: str | None):
        """Parse one statement at ``i``; return (ids, next index)."""
        t = toks[i].text
        try:
            if t == "{":
                close = _matching(toks, i, "{", "}")
                if close < 0:
                    raise ParseFailure("unbalanced {")
                return self.parse_items(toks[i + 1:close], parent), close + 1
            if t == ";":
                return [], i + 1
            if t in ("if", "while", "switch"):
                close = self._paren(toks, i + 1)
                ctrl = self.new("control", toks[i:close + 1], ctrl=t, parent=parent)
                ctrl.cond = toks[i + 2:close]
                body, j = self.statement(toks, close + 1, ctrl.id) if close + 1 < len(toks) else ([], close + 1)
                blocks = [body]
                if t == "if" and j < len(toks) and toks[j].text == "else":
                    other, j = self.statement(toks, j + 1, ctrl.id)
                    blocks.append(other)
                elif t == "if":
                    blocks.append([])
                ctrl.blocks = blocks
                return [ctrl.id], j
            if t == "for":
                close = self._paren(toks, i + 1)
                ctrl = self.new("control", toks[i:close + 1], ctrl="for", parent=parent)
                parts = _split_top(toks[i + 2:close], ";")
                if len(parts) != 3:
                    raise ParseFailure("bad for header")
                init, cond, step = parts
                if init and _is_decl_start([x.text for x in init], self.locals, self.unit.typenames):
                    ctrl.decl = init
                elif init:
                    ctrl.parts.append(init)
                if step:
                    ctrl.parts.append(step)
                ctrl.cond = cond
                body, j = self.statement(toks, close + 1, ctrl.id)
                ctrl.blocks = [body]
                return [ctrl.id], j
            if t == "do":
                # the statement is anchored at its "while (cond);" line
                placeholder = len(self.protos)
                body, j = self.statement(toks, i + 1, None)
                if j >= len(toks) or toks[j].text != "while":
                    raise ParseFailure("do without while")
                close = self._paren(toks, j + 1)
                end = close + 1 if close + 1 < len(toks) and toks[close + 1].text == ";" else close
                ctrl = self.new("control", toks[j:end + 1], ctrl="dowhile", parent=parent)
                ctrl.cond = toks[j + 2:close]
                ctrl.blocks = [body]
                for p in self.protos[placeholder:]:
                    if p.parent is None and p.id in body:
                        p.parent = ctrl.id
                return [ctrl.id], end + 1
            if t in ("case", "default"):
                k = i
                depth = 0
                while k < len(toks) and not (toks[k].text == ":" and depth == 0):
                    if toks[k].text in "([":
                        depth += 1
                    elif toks[k].text in ")]":
                        depth -= 1
                    k += 1
                p = self.new("label", toks[i:k + 1], parent=parent)
                return [p.id], k + 1
            if (
                re.match(r"^[A-Za-z_]\w*$", t) and t not in KEYWORDS
                and i + 1 < len(toks) and toks[i + 1].text == ":"
            ):
                p = self.new("label", toks[i:i + 2], parent=parent)
                return [p.id], i + 2
        except ParseFailure:
            end = self._skip_to_semicolon(toks, i)
            return self.opaque(toks[i:end], parent), end
        return self.simple(toks, i, parent)

    def _skip_to_semicolon(self, toks, i) -> int:
        depth = 0
        for k in range(i, len(toks)):
            x = toks[k].text
            if x in "({[":
                depth += 1
            elif x in ")}]":
                depth -= 1
            elif x == ";" and depth <= 0:
                return k + 1
        return len(toks)

    def simple(self, toks: list[Token], i: int, parent):
        depth = 0
        k = i
        n = len(toks)
        while k < n:
            x = toks[k].text
            if x in ("(", "["):
                depth += 1
            elif x in (")", "]"):
                depth -= 1
            elif x == "{":
                if depth == 0 and k > i and toks[k - 1].text not in ("=", ",", "{", "return"):
                    # macro-style block header such as FOREACH(x) { ... }
                    ids = self.opaque(toks[i:k], parent)
                    close = _matching(toks, k, "{", "}")
                    if close < 0:
                        return ids + self.opaque(toks[k:], parent), n
                    return ids + self.parse_items(toks[k + 1:close], parent), close + 1
                close = _matching(toks, k, "{", "}")
                if close < 0:
                    return self.opaque(toks[i:], parent), n
                k = close
            elif x == ";" and depth == 0:
                break
            k += 1
        stmt_toks = toks[i:k + 1] if k < n else toks[i:k]
        if k >= n:
            # missing semicolon: unparseable tail
            return self.opaque(stmt_toks, parent), n
        return self.classify(stmt_toks, parent), k + 1

    def classify(self, toks: list[Token], parent) -> list[str]:
        texts = [t.text for t in toks]
        head = texts[0]
        if head == "return":
            p = self.new("return", toks, parent=parent)
            if len(toks) > 2:
                p.parts.append(toks[1:-1])
            return [p.id]
        if head in ("goto", "break", "continue"):
            return [self.new("goto", toks, parent=parent).id]
        body = toks[:-1]
        if _is_decl_start([t.text for t in body], self.locals, self.unit.typenames):
            p = self.new("decl", toks, parent=parent)
            p.decl = body
            type_text, declarators = _parse_declarators(body)
            for name, ptr, arr, _ in declarators:
                self.locals[name] = VarDecl(name, type_text, ptr, arr, toks[0].line)
            return [p.id]
        p = self.new("expr", toks, parent=parent)
        p.parts.append(body)
        return [p.id]

    # -- second pass: facts --

    def finish(self, p: _Proto, env) -> Statement:
        symbols, functions = env
        text = render(p.tokens)
        common = dict(
            id=p.id, line=p.line, end_line=p.end_line, file=self.unit.path,
            function=self.function, tokens=tuple(t.text for t in p.tokens), parent=p.parent,
        )
        if p.kind in ("opaque", "label") or (p.kind == "goto"):
            return Statement(kind=p.kind, text=text, **common)
        fc = FactCollector(symbols, functions)
        typenames = frozenset(self.unit.typenames)
        try:
            cond_uses = frozenset()
            if p.decl is not None:
                _type, declarators = _parse_declarators(p.decl)
                for name, ptr, _arr, init in declarators:
                    fc.facts.defs.add(VarRef(name, (), ptr))
                    if init:
                        fc.use(parse_expression([t.text for t in init], typenames))
            for part in p.parts:
                fc.use(parse_expression([t.text for t in part], typenames))
            if p.cond:
                sub = FactCollector(symbols, functions)
                sub.use(parse_expression([t.text for t in p.cond], typenames))
                fc._merge(sub.facts)
                cond_uses = frozenset(sub.facts.uses)
        except ParseFailure as exc:
            log.debug("opaque statement %s: %s", p.id, exc)
            return Statement(kind="opaque", text=text, **common)
        f = fc.facts
        kind = p.kind
        if kind == "expr":
            kind = "assign" if f.defs else "call" if f.calls else "opaque"
            if kind == "opaque":
                f.defs, f.uses = set(), set()
        callee = f.calls[0].callee if f.calls else None
        if kind == "call":
            callee = _outermost_callee(p.parts[0], f.calls)
        blocks = tuple(tuple(b) for b in p.blocks)
        return Statement(
            kind=kind, text=text, defs=frozenset(f.defs), uses=frozenset(f.uses),
            callee=callee, ctrl=p.ctrl, cond_uses=cond_uses, calls=tuple(f.calls),
            arrays=tuple(f.arrays), binops=tuple(f.binops), derefs=frozenset(f.derefs),
            names=frozenset(f.names), blocks=blocks, **common,
        )


def _outermost_callee(toks: list[Token], calls: list[CallSite]) -> str:
    texts = [t.text for t in toks]
    # skip a leading "(void)" style cast
    if texts[:1] == ["("]:
        close = texts.index(")") if ")" in texts else 0
        texts = texts[close + 1:]
    names = {c.callee for c in calls}
    for k, t in enumerate(texts):
        if t in names and k + 1 < len(texts) and texts[k + 1] == "(":
            return t
    return calls[0].callee


def parse_unit(path: str, text: str) -> SourceUnit:
    return _UnitParser(path, text).parse()


def find_function_at(tree: SourceTree, path: str, line: int) -> FunctionDef | None:
    """The function whose span (inclusive) contains ``line``, else None."""
    unit = tree.unit(path)
    for f in unit.functions:
        if f.span[0] <= line <= f.span[1]:
            return f
    return None


def line_key(unit: SourceUnit, line: int) -> str:
    return statement_key(unit.line_text(line))
