"""Critical variables derived from patch statements, one rule per P-type."""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass

from .cexpr import VarRef
from .code_model import Statement
from .diff_model import PatchStatement
from .errors import NoCriticalVariables
from .lexer import KEYWORDS, TYPE_KEYWORDS

NUMERIC_CWES = frozenset({189, 190, 191})

_IDENT = re.compile(r"^[A-Za-z_]\w*$")


@dataclass(frozen=True)
class CriticalVariable:
    var: VarRef
    level: int
    origin: str  # patch statement id, or "<strategy>:<statement id>" for level > 1
    scope: str | None
    parent: str | None = None  # name of the variable this one was derived from

    @property
    def name(self) -> str:
        return self.var.base

    @property
    def key(self) -> tuple:
        return (self.level, self.scope or "", self.name, self.origin)


def _bases(refs) -> set[str]:
    return {r.base for r in refs}


def _pointer(stmt: Statement, name: str) -> bool:
    for r in stmt.defs | stmt.uses:
        if r.base == name and not r.member_path:
            return r.is_pointer
    return False


def _call_arg_vars(stmt: Statement) -> set[str]:
    """Argument variables of the statement's principal call."""
    for call in stmt.calls:
        if call.callee == stmt.callee:
            return {r.base for refs in call.args for r in refs}
    return set()


def _changed_names(old: Statement, new: Statement) -> set[str]:
    """Identifiers inside changed token runs of a modified statement.

    A run without any identifier (``len`` -> ``len - 1``) is widened to the
    identifiers right next to it.
    """
    a, b = list(old.tokens), list(new.tokens)
    out: set[str] = set()
    sm = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    for tag, i1, i2, j1, j2 in sm.get_opcodes():
        if tag == "equal":
            continue
        hits = {t for t in a[i1:i2] + b[j1:j2] if _IDENT.match(t)}
        if not hits:
            for seq, lo, hi in ((a, i1, i2), (b, j1, j2)):
                for k in (lo - 1, hi):
                    if 0 <= k < len(seq) and _IDENT.match(seq[k]):
                        hits.add(seq[k])
        out |= hits
    return out


def _modified(old: Statement, new: Statement, old_refs, new_refs) -> set[str]:
    """Variables among the candidate refs whose occurrence changed."""
    changed = _changed_names(old, new)
    out = set()
    for ref in set(old_refs) | set(new_refs):
        if ref.base in changed or any(m in changed for m in ref.member_path):
            out.add(ref.base)
    out |= _bases(old_refs) ^ _bases(new_refs)
    return out


def _param_decls(header: Statement) -> dict[str, tuple]:
    """Parameter name -> declaration tokens, read from a function header."""
    toks = list(header.tokens)
    try:
        start = toks.index("(")
    except ValueError:
        return {}
    out, chunk, depth = {}, [], 0
    for t in toks[start + 1:]:
        if t in "([":
            depth += 1
        elif t in ")]":
            if depth == 0:
                break
            depth -= 1
        if t == "," and depth == 0:
            _add_param(out, chunk)
            chunk = []
        else:
            chunk.append(t)
    _add_param(out, chunk)
    return out


def _add_param(out: dict, chunk: list) -> None:
    names = [t for t in chunk if _IDENT.match(t) and t not in KEYWORDS and t not in TYPE_KEYWORDS]
    if names:
        out[names[-1]] = tuple(chunk)


def _modified_params(old: Statement, new: Statement) -> set[str]:
    a, b = _param_decls(old), _param_decls(new)
    return {n for n in set(a) | set(b) if a.get(n) != b.get(n)}


def _sides(ps: PatchStatement) -> list[Statement]:
    return [s for s in (ps.statement, ps.new_statement) if s is not None]


def critical_names(ps: PatchStatement, cwe: int) -> set[str]:
    """Variable names selected by the P-type rule (before promotion checks)."""
    sides = _sides(ps)
    old, new = ps.statement, ps.new_statement
    t = ps.p_type
    if t in ("P-1", "P-2"):
        if cwe in NUMERIC_CWES:
            return set().union(*(_bases(s.defs | s.uses) for s in sides))
        return set().union(*(_bases(s.defs) for s in sides))
    if t == "P-3":
        return _call_arg_vars(old)
    if t == "P-4":
        old_args = {r for c in old.calls if c.callee == old.callee for refs in c.args for r in refs}
        new_args = {r for c in new.calls if c.callee == new.callee for refs in c.args for r in refs}
        return _modified(old, new, old_args, new_args)
    if t == "P-5":
        return _bases(old.defs)
    if t == "P-6":
        # a changed declaration: its declared names, narrowed to changed ones
        both = _bases(old.defs) | _bases(new.defs)
        changed = _modified(old, new, old.defs | old.uses, new.defs | new.uses)
        return both & changed or both
    if t == "P-7":
        return _bases(old.defs)
    if t == "P-8":
        return _modified_params(old, new)
    if t == "P-9":
        return _bases(old.cond_uses) or _bases(old.uses)
    if t == "P-10":
        return _modified(old, new, old.uses | old.defs, new.uses | new.defs)
    if old.kind == "return":
        if ps.action == "modify" and new is not None and new.kind == "return":
            return _modified(old, new, old.uses, new.uses)
        return _bases(old.uses)
    return set()


def identify_critical_variables(ps: PatchStatement, cwe: int) -> list[CriticalVariable]:
    """Level-1 critical variables of one patch statement (sorted by name)."""
    names = critical_names(ps, cwe)
    if not names:
        raise NoCriticalVariables(f"{ps.p_type} statement at {ps.file}:{ps.statement.line} yields no variables")
    sides = _sides(ps)
    out = []
    for name in sorted(names):
        ptr = any(_pointer(s, name) for s in sides)
        out.append(CriticalVariable(VarRef(name, (), ptr), 1, ps.id, ps.function))
    return out
