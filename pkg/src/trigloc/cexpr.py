"""Pratt parser for C expressions and the def/use facts extracted from them."""

from __future__ import annotations

from dataclasses import dataclass, field

from .lexer import KEYWORDS, TYPE_KEYWORDS


class ParseFailure(Exception):
    pass


# --- AST -------------------------------------------------------------------


@dataclass
class Node:
    pass


@dataclass
class Name(Node):
    name: str


@dataclass
class Lit(Node):
    text: str


@dataclass
class Member(Node):
    obj: Node
    name: str
    arrow: bool


@dataclass
class Index(Node):
    obj: Node
    index: Node


@dataclass
class Call(Node):
    fn: Node
    args: list


@dataclass
class Unary(Node):
    op: str
    operand: Node


@dataclass
class Postfix(Node):
    op: str
    operand: Node


@dataclass
class Binary(Node):
    op: str
    left: Node
    right: Node


@dataclass
class Assign(Node):
    op: str
    target: Node
    value: Node


@dataclass
class Ternary(Node):
    cond: Node
    then: Node
    other: Node


@dataclass
class Cast(Node):
    type_text: str
    operand: Node


@dataclass
class Sizeof(Node):
    operand: Node | None


@dataclass
class InitList(Node):
    items: list


@dataclass
class Comma(Node):
    items: list


_BINARY_BP = {
    "||": 4, "&&": 5, "|": 6, "^": 7, "&": 8, "==": 9, "!=": 9,
    "<": 10, ">": 10, "<=": 10, ">=": 10, "<<": 11, ">>": 11,
    "+": 12, "-": 12, "*": 13, "/": 13, "%": 13,
}
ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}
_PREFIX = {"-", "+", "!", "~", "*", "&", "++", "--"}
_PREFIX_BP = 14


def _looks_like_type(toks: list[str], typenames) -> bool:
    if not toks:
        return False
    if any(not (t == "*" or t == "&" or t[0].isalpha() or t[0] == "_") for t in toks):
        return False
    if any(t in KEYWORDS and t not in TYPE_KEYWORDS for t in toks):
        return False
    first = toks[0]
    if first in TYPE_KEYWORDS:
        return True
    idents = [t for t in toks if t not in ("*", "&")]
    if len(idents) != 1:
        return len(idents) > 1
    return toks[-1] == "*" or first.endswith("_t") or first in typenames


class ExprParser:
    def __init__(self, tokens: list[str], typenames=frozenset()):
        self.toks = tokens
        self.pos = 0
        self.typenames = typenames

    def peek(self, k: int = 0) -> str | None:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ParseFailure(f"expected {expected!r}, got {tok!r}")
        self.pos += 1
        return tok

    def parse_all(self) -> Node:
        node = self.expr(0)
        if self.peek() is not None:
            raise ParseFailure(f"trailing token {self.peek()!r}")
        return node

    def _matching(self, start: int, open_: str, close: str) -> int:
        depth = 0
        for i in range(start, len(self.toks)):
            if self.toks[i] == open_:
                depth += 1
            elif self.toks[i] == close:
                depth -= 1
                if depth == 0:
                    return i
        raise ParseFailure("unbalanced " + open_)

    def expr(self, min_bp: int) -> Node:
        left = self.nud()
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok in ("(", "[", ".", "->") or tok in ("++", "--"):
                left = self.postfix(left)
                continue
            if tok == "," and min_bp <= 1:
                items = [left]
                while self.peek() == ",":
                    self.take()
                    items.append(self.expr(2))
                left = Comma(items)
                continue
            if tok in ASSIGN_OPS and min_bp <= 2:
                self.take()
                left = Assign(tok, left, self.expr(2))
                continue
            if tok == "?" and min_bp <= 3:
                self.take()
                then = self.expr(1)
                self.take(":")
                left = Ternary(left, then, self.expr(3))
                continue
            bp = _BINARY_BP.get(tok)
            if bp is not None and bp >= min_bp and bp > 3:
                self.take()
                left = Binary(tok, left, self.expr(bp + 1))
                continue
            break
        return left

    def postfix(self, left: Node) -> Node:
        tok = self.take()
        if tok == "(":
            args = []
            if self.peek() != ")":
                args.append(self.expr(2))
                while self.peek() == ",":
                    self.take()
                    args.append(self.expr(2))
            self.take(")")
            return Call(left, args)
        if tok == "[":
            idx = self.expr(0)
            self.take("]")
            return Index(left, idx)
        if tok in (".", "->"):
            name = self.take()
            if not (name[0].isalpha() or name[0] == "_"):
                raise ParseFailure("bad member name")
            return Member(left, name, tok == "->")
        return Postfix(tok, left)

    def nud(self) -> Node:
        tok = self.peek()
        if tok is None:
            raise ParseFailure("unexpected end")
        if tok == "(":
            close = self._matching(self.pos, "(", ")")
            inner = self.toks[self.pos + 1:close]
            after = self.toks[close + 1] if close + 1 < len(self.toks) else None
            if (
                _looks_like_type(inner, self.typenames)
                and after is not None
                and after not in (")", "]", ";", ",", "?", ":")
                and (after not in _BINARY_BP or after in _PREFIX)
                and after not in ASSIGN_OPS
            ):
                self.pos = close + 1
                return Cast(" ".join(inner), self.expr(_PREFIX_BP))
            self.take("(")
            node = self.expr(0)
            self.take(")")
            return node
        if tok in _PREFIX:
            self.take()
            return Unary(tok, self.expr(_PREFIX_BP))
        if tok == "sizeof":
            self.take()
            if self.peek() == "(":
                close = self._matching(self.pos, "(", ")")
                inner = self.toks[self.pos + 1:close]
                if _looks_like_type(inner, self.typenames):
                    self.pos = close + 1
                    return Sizeof(None)
            return Sizeof(self.expr(_PREFIX_BP))
        if tok == "{":
            self.take()
            items = []
            while self.peek() != "}":
                if self.peek() in (".", "["):
                    # designator: .field = value / [idx] = value
                    while self.peek() not in ("=", None):
                        self.take()
                    self.take("=")
                items.append(self.expr(2))
                if self.peek() == ",":
                    self.take()
            self.take("}")
            return InitList(items)
        self.take()
        if tok[0].isdigit() or tok[0] in "\"'." or tok[-1] in "\"'":
            while self.peek() is not None and self.peek()[0] == '"' and tok[-1] == '"':
                tok = self.take()  # adjacent string literal concatenation
            return Lit(tok)
        if tok in KEYWORDS and tok not in ("this",):
            raise ParseFailure(f"keyword {tok!r} in expression")
        if not (tok[0].isalpha() or tok[0] in "_$"):
            raise ParseFailure(f"unexpected token {tok!r}")
        return Name(tok)


def parse_expression(tokens: list[str], typenames=frozenset()) -> Node:
    return ExprParser(list(tokens), typenames).parse_all()


# --- facts -----------------------------------------------------------------


@dataclass(frozen=True)
class VarRef:
    """A variable reference: base identifier plus member path.

    Identity (equality, hashing) is base + member path only; the flags record
    how this occurrence accessed the variable.
    """

    base: str
    member_path: tuple[str, ...] = ()
    is_pointer: bool = field(default=False, compare=False)
    is_array_access: bool = field(default=False, compare=False)
    deref: bool = field(default=False, compare=False)

    @property
    def aggregate(self) -> "VarRef":
        return VarRef(self.base, (), self.is_pointer)

    @property
    def weak(self) -> bool:
        """Weak defs write through the variable and do not kill earlier defs."""
        return self.is_array_access or self.deref

    def __str__(self) -> str:
        return ".".join((self.base,) + self.member_path)


@dataclass(frozen=True)
class CallSite:
    callee: str
    args: tuple[tuple[VarRef, ...], ...]
    address_of: tuple[bool, ...]
    callee_ref: VarRef | None = None  # set when the call goes through a variable
    targets: tuple = ()  # per argument: the lvalue passed (``p`` or ``x`` in ``&x``), else None


@dataclass(frozen=True)
class ArrayAccess:
    array: VarRef
    index_vars: frozenset[str]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: frozenset[str]
    right: frozenset[str]
    direct: frozenset[str] = frozenset()  # operands that are a bare variable, e.g. ``p`` in ``p + 1``


CONSTANT_NAMES = frozenset({"NULL", "true", "false", "nullptr", "TRUE", "FALSE"})


def is_constant_name(name: str, declared) -> bool:
    if name in declared:
        return False
    if name in CONSTANT_NAMES:
        return True
    return len(name) > 1 and name.upper() == name and any(c.isalpha() for c in name)


@dataclass
class Facts:
    defs: set = field(default_factory=set)
    uses: set = field(default_factory=set)
    calls: list = field(default_factory=list)
    arrays: list = field(default_factory=list)
    binops: list = field(default_factory=list)
    derefs: set = field(default_factory=set)
    names: set = field(default_factory=set)  # every identifier mentioned, incl. macros


class FactCollector:
    """Walks an expression AST and records defs/uses/calls and operator facts.

    ``symbols`` maps declared variable names to objects exposing
    ``is_pointer``; ``functions`` are names known to be functions (never
    variables); undeclared ALL_CAPS names are treated as constants.
    """

    def __init__(self, symbols: dict, functions=frozenset()):
        self.symbols = symbols
        self.functions = functions
        self.facts = Facts()

    def _is_var(self, name: str) -> bool:
        if name in self.symbols:
            return True
        if name in self.functions:
            return False
        return not is_constant_name(name, self.symbols)

    def _ptr(self, name: str) -> bool:
        decl = self.symbols.get(name)
        return bool(decl is not None and decl.is_pointer)

    def ref_of(self, node: Node) -> VarRef | None:
        """Lvalue-style reference for a postfix chain, or None."""
        if isinstance(node, Name):
            if not self._is_var(node.name):
                return None
            return VarRef(node.name, (), self._ptr(node.name))
        if isinstance(node, Member):
            inner = self.ref_of(node.obj)
            if inner is None or inner.is_array_access or inner.deref:
                return inner
            return VarRef(inner.base, inner.member_path + (node.name,), False)
        if isinstance(node, Index):
            inner = self.ref_of(node.obj)
            if inner is None:
                return None
            return VarRef(inner.base, inner.member_path, inner.is_pointer, True, inner.deref)
        if isinstance(node, Unary) and node.op == "*":
            inner = self.ref_of(node.operand)
            if inner is None:
                return None
            return VarRef(inner.base, inner.member_path, inner.is_pointer, inner.is_array_access, True)
        if isinstance(node, Cast):
            return self.ref_of(node.operand)
        return None

    def bases(self, node: Node) -> frozenset[str]:
        sub = FactCollector(self.symbols, self.functions)
        sub.use(node)
        return frozenset(r.base for r in sub.facts.uses)

    def _add_use(self, ref: VarRef) -> None:
        self.facts.uses.add(ref)
        if ref.member_path:
            self.facts.uses.add(ref.aggregate)

    def _chain_inner(self, node: Node) -> None:
        """Visit sub-expressions of a chain that are not the chain itself."""
        if isinstance(node, Member):
            self._chain_inner(node.obj)
            if self.ref_of(node.obj) is None:
                self.use(node.obj)
        elif isinstance(node, Index):
            self._chain_inner(node.obj)
            if self.ref_of(node.obj) is None:
                self.use(node.obj)
            self.use(node.index)
            ref = self.ref_of(node)
            if ref is not None:
                self.facts.arrays.append(ArrayAccess(ref, self.bases(node.index)))
        elif isinstance(node, Unary) and node.op == "*":
            self._chain_inner(node.operand)
            if self.ref_of(node.operand) is None:
                self.use(node.operand)
            self.facts.derefs |= self.bases(node.operand)
        elif isinstance(node, Cast):
            self._chain_inner(node.operand)

    def define(self, node: Node) -> None:
        ref = self.ref_of(node)
        self._chain_inner(node)
        if ref is not None:
            self.facts.defs.add(ref)
            if ref.member_path or ref.weak:
                self.facts.uses.add(ref.aggregate)
        else:
            self.use(node)

    def use(self, node: Node | None) -> None:
        if node is None:
            return
        f = self.facts
        if isinstance(node, Name):
            f.names.add(node.name)
            if self._is_var(node.name):
                self._add_use(VarRef(node.name, (), self._ptr(node.name)))
        elif isinstance(node, Lit):
            pass
        elif isinstance(node, (Member, Index)) or (isinstance(node, Unary) and node.op == "*"):
            for name in _names(node):
                f.names.add(name)
            ref = self.ref_of(node)
            self._chain_inner(node)
            if ref is not None:
                self._add_use(ref)
        elif isinstance(node, Unary):
            self.use(node.operand)
            if node.op in ("++", "--"):
                self.define(node.operand)
                f.binops.append(BinOp(node.op, self.bases(node.operand), frozenset(), _direct(node.operand)))
        elif isinstance(node, Postfix):
            self.use(node.operand)
            self.define(node.operand)
            f.binops.append(BinOp(node.op, self.bases(node.operand), frozenset(), _direct(node.operand)))
        elif isinstance(node, Binary):
            self.use(node.left)
            self.use(node.right)
            f.binops.append(
                BinOp(node.op, self.bases(node.left), self.bases(node.right), _direct(node.left, node.right))
            )
        elif isinstance(node, Assign):
            if node.op != "=":
                self.use(node.target)
                f.binops.append(
                    BinOp(node.op[:-1], self.bases(node.target), self.bases(node.value), _direct(node.target, node.value))
                )
            self.use(node.value)
            self.define(node.target)
        elif isinstance(node, Ternary):
            self.use(node.cond)
            self.use(node.then)
            self.use(node.other)
        elif isinstance(node, Cast):
            self.use(node.operand)
        elif isinstance(node, Sizeof):
            if node.operand is not None:
                f.names |= _names(node.operand)
        elif isinstance(node, (InitList, Comma)):
            for item in node.items:
                self.use(item)
        elif isinstance(node, Call):
            self.call(node)
        else:  # pragma: no cover - exhaustive over node types
            raise ParseFailure(f"unknown node {node!r}")

    def call(self, node: Call) -> None:
        f = self.facts
        fn = node.fn
        callee_ref = None
        if isinstance(fn, Name):
            callee = fn.name
            f.names.add(callee)
            if fn.name in self.symbols:
                callee_ref = VarRef(fn.name, (), self._ptr(fn.name))
        else:
            ref = self.ref_of(fn)
            callee = fn.name if isinstance(fn, Member) else (ref.base if ref else "<expr>")
            callee_ref = ref
            self._chain_inner(fn)
        if callee_ref is not None:
            self._add_use(callee_ref)
        args, addr, targets = [], [], []
        for arg in node.args:
            sub = FactCollector(self.symbols, self.functions)
            sub.use(arg)
            self._merge(sub.facts)
            inner = _strip_casts(arg)
            is_addr = isinstance(inner, Unary) and inner.op == "&"
            if is_addr:
                target = self.ref_of(_strip_casts(inner.operand))
            elif isinstance(inner, (Name, Member)):
                target = self.ref_of(inner)
            else:
                target = None
            args.append(tuple(sorted(sub.facts.uses, key=_ref_sort_key)))
            addr.append(is_addr)
            targets.append(target)
        f.calls.append(CallSite(callee, tuple(args), tuple(addr), callee_ref, tuple(targets)))

    def _merge(self, other: Facts) -> None:
        f = self.facts
        f.defs |= other.defs
        f.uses |= other.uses
        f.calls.extend(other.calls)
        f.arrays.extend(other.arrays)
        f.binops.extend(other.binops)
        f.derefs |= other.derefs
        f.names |= other.names


def _names(node: Node) -> set[str]:
    out: set[str] = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Name):
            out.add(n.name)
        elif isinstance(n, Member):
            stack.append(n.obj)
        elif isinstance(n, Index):
            stack += [n.obj, n.index]
        elif isinstance(n, (Unary, Postfix)):
            stack.append(n.operand)
        elif isinstance(n, Cast):
            stack.append(n.operand)
        elif isinstance(n, Binary):
            stack += [n.left, n.right]
        elif isinstance(n, Assign):
            stack += [n.target, n.value]
        elif isinstance(n, Ternary):
            stack += [n.cond, n.then, n.other]
        elif isinstance(n, Call):
            stack += [n.fn, *n.args]
        elif isinstance(n, (InitList, Comma)):
            stack += n.items
        elif isinstance(n, Sizeof) and n.operand is not None:
            stack.append(n.operand)
    return out


def _strip_casts(node: Node) -> Node:
    while isinstance(node, Cast):
        node = node.operand
    return node


def _direct(*operands: Node) -> frozenset[str]:
    return frozenset(n.name for n in map(_strip_casts, operands) if isinstance(n, Name))


def _ref_sort_key(ref: VarRef):
    return (ref.base, ref.member_path)
