"""Control flow, reaching definitions, PDGs, the call graph and file closure."""

from __future__ import annotations

import posixpath
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property

from .cexpr import VarRef
from .code_model import FunctionDef, SourceTree, Statement

EXIT = "<exit>"


# --- control flow --------------------------------------------------------------


def build_cfg(f: FunctionDef) -> dict[str, tuple[str, ...]]:
    """Successor map over statement ids; the header is the entry, EXIT the sink."""
    succ: dict[str, list[str]] = defaultdict(list)
    labels: dict[str, str] = {}
    for s in f.body:
        if s.kind == "label" and s.keyword not in ("case", "default"):
            labels[s.keyword] = s.id
    pending_gotos: list[str] = []

    def entry_of(sid: str, nxt: str, brk, cont) -> str:
        s = f.statement(sid)
        if s.kind == "control" and s.ctrl == "dowhile":
            body = wire(list(s.blocks[0]), sid, nxt, sid)
            succ[sid] += [body, nxt]
            return body
        if s.kind == "control" and s.ctrl in ("while", "for"):
            body = wire(list(s.blocks[0]), sid, nxt, sid)
            succ[sid] += [body, nxt]
            return sid
        if s.kind == "control" and s.ctrl == "if":
            then = wire(list(s.blocks[0]), nxt, brk, cont)
            other = wire(list(s.blocks[1]), nxt, brk, cont) if len(s.blocks) > 1 else nxt
            succ[sid] += [then, other]
            return sid
        if s.kind == "control" and s.ctrl == "switch":
            body = list(s.blocks[0])
            wire(body, nxt, nxt, cont)
            cases = [c for c in body if f.statement(c).kind == "label" and f.statement(c).keyword in ("case", "default")]
            succ[sid] += cases
            if not any(f.statement(c).keyword == "default" for c in cases):
                succ[sid].append(nxt)
            return sid
        if s.kind == "return":
            succ[sid].append(EXIT)
        elif s.kind == "goto":
            kw = s.keyword
            if kw == "break" and brk is not None:
                succ[sid].append(brk)
            elif kw == "continue" and cont is not None:
                succ[sid].append(cont)
            elif kw == "goto" and len(s.tokens) > 1 and s.tokens[1] in labels:
                succ[sid].append(labels[s.tokens[1]])
            else:
                succ[sid].append(nxt)
                pending_gotos.append(sid)
        else:
            succ[sid].append(nxt)
        return sid

    def wire(seq: list[str], nxt: str, brk, cont) -> str:
        cur = nxt
        for sid in reversed(seq):
            cur = entry_of(sid, cur, brk, cont)
        return cur

    first = wire(list(f.children), EXIT, None, None)
    succ[f.header.id].append(first)
    # statements not reachable structurally still need a node
    for s in f.body:
        succ.setdefault(s.id, [])
    succ.setdefault(EXIT, [])
    return {k: tuple(dict.fromkeys(v)) for k, v in succ.items()}


def predecessors(succ: dict[str, tuple[str, ...]]) -> dict[str, list[str]]:
    pred: dict[str, list[str]] = {k: [] for k in succ}
    for a, outs in succ.items():
        for b in outs:
            pred.setdefault(b, []).append(a)
    return pred


# --- definitions ---------------------------------------------------------------


@dataclass(frozen=True)
class Def:
    var: VarRef
    weak: bool = False


def pointer_arg_defs(stmt: Statement) -> set[VarRef]:
    """Variables an augmented PDG treats as written by a call: a pointer
    passed by value, or anything passed by address."""
    out = set()
    for call in stmt.calls:
        for target, addr in zip(call.targets, call.address_of):
            if target is None:
                continue
            if addr or (target.is_pointer and not target.member_path):
                out.add(target.aggregate)
    return out


def effective_defs(stmt: Statement, augmented: bool = False) -> list[Def]:
    """Defs with strength; member writes also weakly define the aggregate."""
    out: dict[VarRef, Def] = {}
    for ref in stmt.defs:
        out[ref] = Def(ref, ref.weak)
        if ref.member_path:
            agg = ref.aggregate
            out.setdefault(agg, Def(agg, True))
    if augmented:
        for ref in pointer_arg_defs(stmt):
            out.setdefault(ref, Def(ref, True))
    return sorted(out.values(), key=lambda d: (d.var.base, d.var.member_path))


def _kills(strong: VarRef, other: VarRef) -> bool:
    if other.base != strong.base:
        return False
    n = len(strong.member_path)
    return other.member_path[:n] == strong.member_path


def reaching_definitions(f: FunctionDef, succ, augmented: bool = False):
    """IN sets of (def stmt id, VarRef) per node, computed to fixpoint."""
    pred = predecessors(succ)
    nodes = [f.header.id] + [s.id for s in f.body]
    defs = {f.header.id: [Def(VarRef(p.name, (), p.is_pointer)) for p in f.params]}
    for s in f.body:
        defs[s.id] = effective_defs(s, augmented)
    gen = {n: frozenset((n, d.var) for d in defs[n]) for n in nodes}
    strong = {n: [d.var for d in defs[n] if not d.weak] for n in nodes}
    IN: dict[str, frozenset] = {n: frozenset() for n in nodes}
    OUT: dict[str, frozenset] = {n: gen[n] for n in nodes}
    work = deque(nodes)
    queued = set(nodes)
    while work:
        n = work.popleft()
        queued.discard(n)
        inn = frozenset().union(*(OUT[p] for p in pred.get(n, ()) if p in OUT)) if pred.get(n) else frozenset()
        IN[n] = inn
        kept = frozenset(x for x in inn if not any(_kills(k, x[1]) for k in strong[n]))
        new_out = kept | gen[n]
        if new_out != OUT[n]:
            OUT[n] = new_out
            for m in succ.get(n, ()):
                if m in OUT and m not in queued:
                    work.append(m)
                    queued.add(m)
    return IN


# --- PDG -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pdg:
    function: str
    nodes: tuple
    data_edges: frozenset  # (from id, to id, VarRef)
    ctrl_edges: frozenset  # (from id, to id)
    succ: dict = field(default_factory=dict, repr=False)
    reach_in: dict = field(default_factory=dict, repr=False)
    augmented: bool = False

    def reaching(self, stmt_id: str, var: VarRef) -> set[str]:
        """Ids of definitions of ``var`` reaching the entry of ``stmt_id``."""
        return {d for d, v in self.reach_in.get(stmt_id, ()) if v == var}

    def data_succ(self, stmt_id: str) -> list[tuple[str, VarRef]]:
        return self._data_out.get(stmt_id, [])

    @cached_property
    def _data_out(self):
        out = defaultdict(list)
        for a, b, v in sorted(self.data_edges, key=_edge_key):
            out[a].append((b, v))
        return out

    def ctrl_children(self, stmt_id: str) -> list[str]:
        return sorted(b for a, b in self.ctrl_edges if a == stmt_id)


def _edge_key(e):
    return (e[0], e[1], e[2].base, e[2].member_path)


def build_pdg(f: FunctionDef, augmented: bool = False) -> Pdg:
    """Reaching-definition data edges plus syntactic control edges.

    With ``augmented`` set, pointer and address-of call arguments count as
    weak definitions, so a call that fills a buffer feeds later uses.
    """
    succ = build_cfg(f)
    reach = reaching_definitions(f, succ, augmented)
    data = set()
    for s in f.body:
        for a, var in reach[s.id]:
            if var in s.uses:
                data.add((a, s.id, var))
    ctrl = set()
    for s in f.body:
        if s.kind == "control":
            for block in s.blocks:
                for child in block:
                    ctrl.add((s.id, child))
    nodes = (f.header.id,) + tuple(s.id for s in f.body)
    return Pdg(f.name, nodes, frozenset(data), frozenset(ctrl), succ, reach, augmented)


# --- call graph ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CallGraph:
    nodes: frozenset
    edges: frozenset  # (caller, callee, call-site statement id)
    external: frozenset = frozenset()  # (caller, unresolved callee name)

    def callees(self, name: str) -> list[tuple[str, str]]:
        return sorted((g, sid) for f, g, sid in self.edges if f == name)

    def callers(self, name: str) -> list[tuple[str, str]]:
        return sorted((f, sid) for f, g, sid in self.edges if g == name)

    def reachable(self, name: str) -> set[str]:
        seen, todo = {name}, [name]
        while todo:
            for g, _ in self.callees(todo.pop()):
                if g not in seen:
                    seen.add(g)
                    todo.append(g)
        return seen

    def in_cycle(self, name: str) -> bool:
        """True when ``name`` can reach itself (direct or mutual recursion)."""
        for g, _ in self.callees(name):
            if name in self.reachable(g):
                return True
        return False


def build_call_graph(tree: SourceTree) -> CallGraph:
    defined = tree.function_names
    edges, external = set(), set()
    for f in tree.functions():
        if tree.function(f.name) is not f:
            continue
        for s in f.body:
            for call in s.calls:
                if call.callee in defined and call.callee_ref is None:
                    edges.add((f.name, call.callee, s.id))
                else:
                    external.add((f.name, call.callee))
    return CallGraph(frozenset(defined), frozenset(edges), frozenset(external))


# --- dependency files ----------------------------------------------------------


@dataclass(frozen=True)
class DependencyFiles:
    seed: str
    closure: frozenset


def resolve_include(tree: SourceTree, from_path: str, name: str) -> str | None:
    local = posixpath.normpath(posixpath.join(posixpath.dirname(from_path), name))
    if tree.has_unit(local):
        return local
    if tree.has_unit(name):
        return name
    hits = sorted(u.path for u in tree.units if posixpath.basename(u.path) == posixpath.basename(name))
    return hits[0] if hits else None


def collect_dependency_files(tree: SourceTree, f: FunctionDef, graph: CallGraph | None = None) -> DependencyFiles:
    graph = graph or build_call_graph(tree)
    files = {f.file}
    for g in graph.reachable(f.name):
        gd = tree.function(g)
        if gd is not None:
            files.add(gd.file)
    todo = sorted(files)
    while todo:
        path = todo.pop()
        for inc in tree.unit(path).includes:
            hit = resolve_include(tree, path, inc)
            if hit is not None and hit not in files:
                files.add(hit)
                todo.append(hit)
    return DependencyFiles(f.file, frozenset(files))


# --- shared per-tree bundle ----------------------------------------------------


class ProgramGraphs:
    """Lazily built PDGs and the call graph for one source tree."""

    def __init__(self, tree: SourceTree):
        self.tree = tree
        self.call_graph = build_call_graph(tree)
        self._pdgs: dict[tuple[str, bool], Pdg] = {}

    def pdg(self, name: str, augmented: bool = True) -> Pdg:
        key = (name, augmented)
        if key not in self._pdgs:
            self._pdgs[key] = build_pdg(self.tree.function(name), augmented)
        return self._pdgs[key]

    def function(self, name: str) -> FunctionDef | None:
        return self.tree.function(name)


# --- DOT export ----------------------------------------------------------------


def _node_label(tree: SourceTree, sid: str) -> str:
    s = tree.statement(sid)
    return f"{s.function}:{s.line}"


def pdg_to_dot(pdg: Pdg, tree: SourceTree) -> str:
    lines = [f'digraph "{pdg.function}" {{']
    for n in pdg.nodes:
        lines.append(f'  "{_node_label(tree, n)}";')
    for a, b, v in sorted(pdg.data_edges, key=_edge_key):
        lines.append(f'  "{_node_label(tree, a)}" -> "{_node_label(tree, b)}" [label="{v}"];')
    for a, b in sorted(pdg.ctrl_edges):
        lines.append(f'  "{_node_label(tree, a)}" -> "{_node_label(tree, b)}" [style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def call_graph_to_dot(graph: CallGraph) -> str:
    lines = ["digraph calls {"]
    for n in sorted(graph.nodes):
        lines.append(f'  "{n}";')
    for a, b in sorted({(a, b) for a, b, _ in graph.edges}):
        lines.append(f'  "{a}" -> "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
