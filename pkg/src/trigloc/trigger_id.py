"""Trigger-statement rules, CWE gating and the three-phase search."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields

from .cexpr import VarRef
from .code_model import FunctionDef, SourceTree, Statement
from .critical_vars import CriticalVariable
from .dependence import ProgramGraphs
from .diff_model import PatchStatement
from .errors import NoTriggerFound, UnsupportedCwe
from .slicer import ProgramSlice, SliceEntry

T_TYPES = tuple(f"T-{i}" for i in range(1, 20))

_CWE_TABLE = {
    119: (1, 2, 3), 125: (1, 2, 3), 787: (1, 2, 3), 120: (1, 2, 3),
    189: (1, 2, 3, 4), 190: (1, 2, 3, 4), 191: (1, 2, 3, 4),
    617: (5,), 22: (6,), 835: (7, 8, 9), 772: (10, 11), 401: (10, 11),
    415: (12,), 416: (12, 13), 476: (14, 15, 16), 369: (17, 18, 19),
}
SUPPORTED_CWES = frozenset(_CWE_TABLE)
CLASS1_CWES = frozenset({772, 401, 835})
DEFAULT_DEPTH = 3

PHASES = ("forward", "transformed-cv", "preceding")


def parse_cwe(cwe) -> int:
    if isinstance(cwe, int):
        return cwe
    m = re.fullmatch(r"(?:CWE-)?(\d+)", str(cwe).strip(), re.IGNORECASE)
    if not m:
        raise UnsupportedCwe(f"not a CWE id: {cwe!r}")
    return int(m.group(1))


def cwe_allowed_types(cwe) -> frozenset[str]:
    n = parse_cwe(cwe)
    if n not in _CWE_TABLE:
        raise UnsupportedCwe(f"CWE-{n} is not supported")
    return frozenset(f"T-{i}" for i in _CWE_TABLE[n])


def _type_num(t: str) -> int:
    return int(t.split("-")[1])


# --- keywords ------------------------------------------------------------------


@dataclass(frozen=True)
class KeywordConfig:
    memory_apis: tuple = ("memcpy", "memmove", "memset", "memcmp", "alloc", "strcpy", "strncpy", "strcat", "sprintf")
    assertion_apis: tuple = ("assert", "BUG")
    path_apis: tuple = ("open", "read", "path_copy", "mkdir")
    free_apis: tuple = ("free", "delete", "destroy", "unregister")
    alloc_apis: tuple = ("alloc",)
    division_macros: tuple = ("DIV_ROUND_UP", "DIV_ROUND_CLOSEST", "do_div", "div_u64")

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"keyword list {f.name} is empty")

    @classmethod
    def load(cls, path) -> "KeywordConfig":
        """Read ``[section]`` lists with one keyword per line; missing sections
        keep their defaults."""
        parser = configparser.ConfigParser(allow_no_value=True, delimiters=("=",))
        parser.optionxform = str
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        values = {}
        for f in fields(cls):
            if parser.has_section(f.name):
                values[f.name] = tuple(k for k in parser.options(f.name) if k.strip())
        return cls(**values)

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            out.append(f"[{f.name}]")
            out.extend(getattr(self, f.name))
            out.append("")
        return "\n".join(out)


def _has_keyword(callee: str, keywords) -> bool:
    return any(k in callee for k in keywords)


# --- rule context --------------------------------------------------------------


@dataclass
class RuleContext:
    tree: SourceTree
    graphs: ProgramGraphs
    keywords: KeywordConfig

    def decl(self, function: str, name: str):
        f = self.tree.function(function)
        if f is not None and name in f.symbols:
            return f.symbols[name]
        return None

    def is_pointer(self, function: str, name: str) -> bool:
        d = self.decl(function, name)
        return bool(d is not None and (d.is_pointer or d.is_array))

    def is_struct(self, function: str, name: str) -> bool:
        d = self.decl(function, name)
        return bool(d is not None and d.is_struct)

    def division_macro(self, name: str) -> bool:
        if name in self.keywords.division_macros:
            return True
        body = self.tree.macro(name)
        return body is not None and bool(re.search(r"[/%]", body))


def _arg_bases(stmt: Statement, keywords) -> set[str]:
    out = set()
    for call in stmt.calls:
        if _has_keyword(call.callee, keywords):
            out |= {r.base for refs in call.args for r in refs}
    return out


def _keyword_call(stmt: Statement, keywords, c: str) -> bool:
    if not any(_has_keyword(call.callee, keywords) for call in stmt.calls):
        return False
    return c in _arg_bases(stmt, keywords) or c in stmt.def_bases


def _pointer_access(stmt: Statement, c: str) -> bool:
    if c in stmt.derefs:
        return True
    for b in stmt.binops:
        if b.op in ("+", "-", "++", "--") and c in b.direct:
            return True
    return False


def _t2(stmt, c, fn, ctx):
    return any(a.array.base == c or c in a.index_vars for a in stmt.arrays)


def _t3(stmt, c, fn, ctx):
    return ctx.is_pointer(fn, c) and _pointer_access(stmt, c)


def _t4(stmt, c, fn, ctx):
    if ctx.is_pointer(fn, c):
        return False
    return any(b.op in ("+", "-", "*", "++", "--") and (c in b.left or c in b.right) for b in stmt.binops)


def _t14(stmt, c, fn, ctx):
    if not ctx.is_struct(fn, c):
        return False
    return any(r.base == c and r.member_path for r in stmt.uses | stmt.defs)


def _t15(stmt, c, fn, ctx):
    return not ctx.is_struct(fn, c) and _keyword_call(stmt, ctx.keywords.memory_apis, c)


def _t16(stmt, c, fn, ctx):
    return any(call.callee_ref is not None and call.callee_ref.base == c for call in stmt.calls)


def _t17(stmt, c, fn, ctx):
    return any(b.op in ("/", "%") and c in b.right for b in stmt.binops)


def _t19(stmt, c, fn, ctx):
    if c not in stmt.use_bases | stmt.def_bases:
        return False
    return any(ctx.division_macro(n) for n in stmt.names)


def _t13(stmt, c, fn, ctx):
    return c in stmt.use_bases


RULES = {
    "T-1": lambda s, c, fn, ctx: _keyword_call(s, ctx.keywords.memory_apis, c),
    "T-2": _t2,
    "T-3": _t3,
    "T-4": _t4,
    "T-5": lambda s, c, fn, ctx: _keyword_call(s, ctx.keywords.assertion_apis, c),
    "T-6": lambda s, c, fn, ctx: _keyword_call(s, ctx.keywords.path_apis, c),
    "T-12": lambda s, c, fn, ctx: _keyword_call(s, ctx.keywords.free_apis, c),
    "T-13": _t13,
    "T-14": _t14,
    "T-15": _t15,
    "T-16": _t16,
    "T-17": _t17,
    "T-18": lambda s, c, fn, ctx: _keyword_call(s, ctx.keywords.alloc_apis, c),
    "T-19": _t19,
}


# --- findings ------------------------------------------------------------------


@dataclass(frozen=True)
class TriggerFinding:
    stmt_id: str
    file: str
    function: str
    line: int
    t_types: tuple
    phase: str
    patch_id: str
    chain: tuple  # ((function, hop), ...) from the patched function
    matched_cv: CriticalVariable | None = None
    via: tuple = ()

    @property
    def functions(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.chain)


@dataclass
class SearchTrace:
    phases: list = field(default_factory=list)  # (function, phase, level or None, found count)


def _matching_types(stmt: Statement, var: str, fn: str, types, ctx: RuleContext) -> list[str]:
    return [t for t in types if t in RULES and RULES[t](stmt, var, fn, ctx)]


def _scan(entries, variables: list[CriticalVariable], types, ctx: RuleContext):
    """First entry matching a rule for some in-scope variable.

    T-13 is only tried when no other rule matches anywhere in ``entries``.
    """
    primary = [t for t in types if t != "T-13"]
    for pass_types in (primary, ["T-13"] if "T-13" in types else []):
        if not pass_types:
            continue
        for e in entries:
            stmt = ctx.tree.statement(e.stmt_id)
            hits: set[str] = set()
            matched = None
            for cv in variables:
                if cv.scope != e.function:
                    continue
                got = _matching_types(stmt, cv.name, e.function, pass_types, ctx)
                if got and matched is None:
                    matched = cv
                hits |= set(got)
            if hits:
                return e, sorted(hits, key=_type_num), matched
    return None


def transform_critical_variables(
    cvs: list[CriticalVariable], slices: list[ProgramSlice], ctx: RuleContext
) -> list[CriticalVariable]:
    """Next-level variables by assignment, parameter binding and return value."""
    tree = ctx.tree
    have = {(cv.scope, cv.name) for cv in cvs}
    out: dict[tuple, CriticalVariable] = {}
    level = max((cv.level for cv in cvs), default=0) + 1

    def emit(name, scope, strategy, sid, parent):
        key = (scope, name)
        if key in have or key in out:
            return
        d = ctx.decl(scope, name)
        out[key] = CriticalVariable(
            VarRef(name, (), bool(d and d.is_pointer)), level, f"{strategy}:{sid}", scope, parent
        )

    entries: list[SliceEntry] = sorted(
        {e.stmt_id + "|" + repr(e.chain): e for s in slices for e in s.entries}.values(),
        key=lambda e: (e.order, e.stmt_id),
    )
    in_slice = {e.stmt_id for e in entries}
    headers = {e.function for e in entries if tree.statement(e.stmt_id).is_header}
    for cv in sorted(cvs, key=lambda v: v.key):
        for e in entries:
            if e.function != cv.scope:
                continue
            stmt = tree.statement(e.stmt_id)
            if cv.name in stmt.use_bases and stmt.kind in ("assign", "decl"):
                for d in sorted(stmt.def_bases - {cv.name}):
                    emit(d, cv.scope, "assign", stmt.id, cv.name)
            for call in stmt.calls:
                g = tree.function(call.callee)
                if g is None or g.name not in headers:
                    continue
                for i, refs in enumerate(call.args):
                    if i < len(g.params) and cv.name in {r.base for r in refs}:
                        emit(g.params[i].name, g.name, "param", stmt.id, cv.name)
        # the patched function returning the variable to its callers
        f = tree.function(cv.scope) if cv.scope else None
        if f is None:
            continue
        returns = any(s.kind == "return" and cv.name in s.use_bases for s in f.body)
        if not returns:
            continue
        for caller, site in ctx.graphs.call_graph.callers(f.name):
            if site not in in_slice:
                continue
            stmt = tree.statement(site)
            for d in sorted(stmt.def_bases):
                emit(d, caller, "return", site, cv.name)
    return sorted(out.values(), key=lambda v: v.key)


def _finding(e: SliceEntry, types, phase, patch_id, cv) -> TriggerFinding:
    return TriggerFinding(
        stmt_id=e.stmt_id, file=e.file, function=e.function, line=e.line,
        t_types=tuple(types), phase=phase, patch_id=patch_id, chain=e.chain,
        matched_cv=cv, via=e.via,
    )


def _merge(findings: list[TriggerFinding]) -> list[TriggerFinding]:
    """One finding per statement; types are unioned, the first record kept otherwise."""
    by_stmt: dict[str, TriggerFinding] = {}
    for f in findings:
        if f.stmt_id in by_stmt:
            old = by_stmt[f.stmt_id]
            types = sorted(set(old.t_types) | set(f.t_types), key=_type_num)
            by_stmt[f.stmt_id] = TriggerFinding(**{**old.__dict__, "t_types": tuple(types)})
        else:
            by_stmt[f.stmt_id] = f
    return sorted(by_stmt.values(), key=lambda f: (f.file, f.line, f.stmt_id))


def _search_function(slices: list[ProgramSlice], types, ctx: RuleContext, depth: int, trace: SearchTrace):
    """The three phases over the slices rooted in one patched function."""
    root = slices[0].root_function
    found: list[TriggerFinding] = []
    # phase 1: level-1 variables at or after the patch
    for sl in slices:
        window = [e for e in sl.entries if e.order >= sl.anchor]
        hit = _scan(window, [sl.seed], types, ctx)
        if hit:
            found.append(_finding(hit[0], hit[1], "forward", sl.patch_id, hit[2]))
    trace.phases.append((root, "forward", 1, len(found)))
    if found:
        return found
    # phase 2: transformed variables, smallest level first
    levels = {id(sl): [[sl.seed]] for sl in slices}
    for level in range(2, depth + 1):
        for sl in slices:
            prev = levels[id(sl)][-1]
            seen = {(c.scope, c.name) for lv in levels[id(sl)] for c in lv}
            nxt = transform_critical_variables(prev, [sl], ctx) if prev else []
            nxt = [v for v in nxt if (v.scope, v.name) not in seen]
            levels[id(sl)].append(nxt)
            window = [e for e in sl.entries if e.order >= sl.anchor]
            hit = _scan(window, nxt, types, ctx) if nxt else None
            if hit:
                found.append(_finding(hit[0], hit[1], "transformed-cv", sl.patch_id, hit[2]))
        trace.phases.append((root, "transformed-cv", level, len(found)))
        if found:
            return found
    # phase 3: statements before the patch, nearest first, every level
    for sl in slices:
        before = sorted((e for e in sl.entries if e.order < sl.anchor), key=lambda e: e.order, reverse=True)
        every = [v for lv in levels[id(sl)] for v in lv]
        hit = _scan(before, every, types, ctx)
        if hit:
            found.append(_finding(hit[0], hit[1], "preceding", sl.patch_id, hit[2]))
    trace.phases.append((root, "preceding", None, len(found)))
    return found


def identify_triggers_class2(
    cwe,
    slices: list[ProgramSlice],
    ctx: RuleContext,
    depth: int = DEFAULT_DEPTH,
    trace: SearchTrace | None = None,
) -> list[TriggerFinding]:
    """Search each patched function's slices separately, so a trigger found
    early for one function does not cut the search short for another."""
    types = sorted(cwe_allowed_types(cwe), key=_type_num)
    trace = trace if trace is not None else SearchTrace()
    groups: dict[str, list[ProgramSlice]] = {}
    for sl in slices:
        groups.setdefault(sl.root_function, []).append(sl)
    found: list[TriggerFinding] = []
    for name in sorted(groups):
        found.extend(_search_function(groups[name], types, ctx, depth, trace))
    if not found:
        raise NoTriggerFound(f"no rule of {', '.join(types)} matched any slice")
    return _merge(found)


def _root_entry(f: FunctionDef, stmt: Statement, order: tuple) -> SliceEntry:
    return SliceEntry(stmt.id, f.name, stmt.file, stmt.line, ((f.name, "root"),), order)


def identify_triggers_class1(
    cwe,
    patch_stmts: list[PatchStatement],
    slices: list[ProgramSlice],
    ctx: RuleContext,
    trace: SearchTrace | None = None,
) -> list[TriggerFinding]:
    n = parse_cwe(cwe)
    trace = trace if trace is not None else SearchTrace()
    tree = ctx.tree
    found: list[TriggerFinding] = []
    by_function: dict[str, list[PatchStatement]] = {}
    for ps in patch_stmts:
        if ps.function and tree.function(ps.function) is not None:
            by_function.setdefault(ps.function, []).append(ps)
    for name in sorted(by_function):
        f = tree.function(name)
        group = by_function[name]
        anchor = min(ps.vuln_line for ps in group if ps.vuln_line is not None)
        pid = min(group, key=lambda p: (p.vuln_line or 0, p.id)).id
        if n in (401, 772):
            rets = [s for s in f.body if s.kind == "return" and s.line >= anchor]
            if rets:
                s = min(rets, key=lambda s: s.line)
                found.append(_finding(_root_entry(f, s, (0, s.line)), ["T-10"], "forward", pid, None))
            elif f.body:
                s = max(f.body, key=lambda s: (s.end_line, s.line))
                found.append(_finding(_root_entry(f, s, (0, s.line)), ["T-11"], "forward", pid, None))
            continue
        # infinite loops: loop conditions, goto, recursion
        pool = {(s.id, ((name, "root"),)): _root_entry(f, s, (0, s.line)) for s in f.body}
        for sl in slices:
            if sl.root_function == name:
                for e in sl.entries:
                    pool.setdefault((e.stmt_id, e.chain), e)
        entries = sorted(pool.values(), key=lambda e: (e.order, e.stmt_id))
        window = [e for e in entries if e.order >= (0, anchor)]
        before = [e for e in reversed(entries) if e.order < (0, anchor)]
        for phase, seq in (("forward", window), ("preceding", before)):
            hit = None
            for e in seq:
                types = _loop_types(tree.statement(e.stmt_id), ctx)
                if types:
                    hit = (e, types)
                    break
            trace.phases.append((name, phase, None, 1 if hit else 0))
            if hit:
                found.append(_finding(hit[0], hit[1], phase, pid, None))
                break
    if not found:
        raise NoTriggerFound(f"no CWE-{n} trigger in the patched functions")
    return _merge(found)


def _loop_types(stmt: Statement, ctx: RuleContext) -> list[str]:
    out = []
    if stmt.kind == "control" and stmt.ctrl in ("for", "while", "dowhile"):
        out.append("T-7")
    if stmt.kind == "goto" and stmt.keyword == "goto":
        out.append("T-8")
    cg = ctx.graphs.call_graph
    for call in stmt.calls:
        if ctx.tree.function(call.callee) is not None and cg.in_cycle(call.callee):
            if stmt.function == call.callee or stmt.function in cg.reachable(call.callee):
                out.append("T-9")
                break
    return out


def identify_triggers(
    cwe,
    patch_stmts: list[PatchStatement],
    slices: list[ProgramSlice],
    ctx: RuleContext,
    depth: int = DEFAULT_DEPTH,
    trace: SearchTrace | None = None,
) -> list[TriggerFinding]:
    n = parse_cwe(cwe)
    cwe_allowed_types(n)
    if n in CLASS1_CWES:
        return identify_triggers_class1(n, patch_stmts, slices, ctx, trace)
    return identify_triggers_class2(n, slices, ctx, depth, trace)
