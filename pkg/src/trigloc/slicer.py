"""Inter-procedural slicing seeded at critical variables.

A slice is the closure of states ``(statement id, chain)``: the chain lists
the functions the dependence path has entered, starting with the patched
function, each tagged ``root``, ``down`` (called from the previous function)
or ``up`` (a caller resumed after the previous function returned). The
chain length is the layer count and is bounded by ``theta``.
"""

from __future__ import annotations

import os
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .cexpr import VarRef
from .code_model import FunctionDef, SourceTree, Statement
from .critical_vars import CriticalVariable
from .dependence import ProgramGraphs, Pdg, pointer_arg_defs
from .diff_model import DiffFile, PatchStatement, align_new_to_old
from .errors import SeedNotFound

DEFAULT_THETA = 3


@dataclass(frozen=True)
class SliceConfig:
    theta: int = DEFAULT_THETA
    trim_between: bool = True  # drop statements between the definition and the seed
    pointer_args: bool = True  # pointer call arguments act as implicit return values
    after_return: bool = True  # resume slicing in callers of the patched function

    def __post_init__(self):
        if not isinstance(self.theta, int) or self.theta < 1:
            raise ValueError("theta must be a positive integer")

    @classmethod
    def from_env(cls, **overrides) -> "SliceConfig":
        raw = os.environ.get("TRIGLOC_THETA")
        if raw and "theta" not in overrides:
            overrides["theta"] = int(raw)
        return cls(**overrides)


Frame = tuple  # ((function, hop), ...)


@dataclass(frozen=True)
class SliceEntry:
    stmt_id: str
    function: str
    file: str
    line: int
    chain: Frame
    order: tuple
    via: tuple = ()  # provenance edges from the seed, each (kind, from id, to id, var)

    @property
    def layer(self) -> int:
        return len(self.chain)

    @property
    def functions(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.chain)

    @property
    def has_up_hop(self) -> bool:
        return any(h == "up" for _, h in self.chain)


@dataclass(frozen=True, eq=False)
class ProgramSlice:
    seed: CriticalVariable
    patch_id: str
    root_function: str
    anchor: tuple  # order key of the patch position in the vulnerable tree
    entries: tuple  # SliceEntry, sorted by order
    tree_tag: str = "vulnerable"
    sliced_on: str = "vulnerable"

    @property
    def statement_ids(self) -> frozenset[str]:
        return frozenset(e.stmt_id for e in self.entries)

    @property
    def states(self) -> frozenset[tuple[str, Frame]]:
        return frozenset((e.stmt_id, e.chain) for e in self.entries)

    @property
    def max_layer(self) -> int:
        return max((e.layer for e in self.entries), default=0)

    @property
    def functions(self) -> list[str]:
        return sorted({e.function for e in self.entries})

    def dump(self, tree: SourceTree) -> str:
        """One ``layer<k> <function>:<line> <text>`` line per entry."""
        return "\n".join(
            f"layer{e.layer} {e.function}:{e.line} {tree.statement(e.stmt_id).text}" for e in self.entries
        )


# --- closure -------------------------------------------------------------------


@dataclass
class _Closure:
    """Mutable search state for one seed."""

    labels: dict = field(default_factory=lambda: defaultdict(set))  # state -> in-labels
    parent: dict = field(default_factory=dict)  # state -> (kind, parent state, var)
    entries: dict = field(default_factory=lambda: defaultdict(set))  # chain -> {(parent chain, call id)}


def _frame_functions(chain: Frame) -> set[str]:
    return {f for f, _ in chain}


def _only_up(chain: Frame) -> bool:
    return all(h in ("root", "up") for _, h in chain)


def blocked_between(pdg: Pdg, f: FunctionDef, d_nodes: set[str], seed: Statement, label: str) -> set[str]:
    """Statements strictly between the earliest definition and the seed that
    do not lie on a data chain from a definition to the seed."""
    lines = [f.by_id[d].line for d in d_nodes if d != seed.id]
    if not lines:
        return set()
    lo, hi = min(lines), seed.line
    fwd = set(d_nodes)
    todo = list(d_nodes)
    while todo:
        a = todo.pop()
        for b, v in pdg.data_succ(a):
            if (a in d_nodes and v.base != label):
                continue
            if b not in fwd:
                fwd.add(b)
                todo.append(b)
    back = {seed.id}
    todo = [seed.id]
    preds = defaultdict(list)
    for a, b, v in pdg.data_edges:
        if a in d_nodes and v.base != label:
            continue
        preds[b].append(a)
    while todo:
        b = todo.pop()
        for a in preds[b]:
            if a not in back:
                back.add(a)
                todo.append(a)
    on_chain = fwd & back
    return {
        s.id for s in f.body
        if lo < s.line < hi and s.id not in on_chain and s.id not in d_nodes and s.id != seed.id
    }


def seed_definitions(pdg: Pdg, f: FunctionDef, seed: Statement, name: str, pointer_args: bool) -> set[str]:
    """Definitions of ``name`` the backward step stops at."""
    strong_here = any(r.base == name and not r.weak for r in seed.defs)
    uses_here = name in {r.base for r in seed.uses}
    if seed.is_header:
        return {seed.id}
    if strong_here and not uses_here:
        return {seed.id}
    d = {a for a, v in pdg.reach_in.get(seed.id, ()) if v.base == name}
    if any(r.base == name for r in seed.defs):
        d.add(seed.id)
    if pointer_args and name in {r.base for r in pointer_arg_defs(seed)}:
        d.add(seed.id)
    return d


def _callee_params(g: FunctionDef, call, labels: set[str]) -> list[str]:
    out = []
    for i, refs in enumerate(call.args):
        if i >= len(g.params):
            break
        if {r.base for r in refs} & labels:
            out.append(g.params[i].name)
    return out


def compute_states(
    graphs: ProgramGraphs,
    root: FunctionDef,
    seed: Statement,
    name: str,
    cfg: SliceConfig,
) -> tuple[dict, dict, dict]:
    """Closure over (statement, chain) states.

    Returns ``(labels, parent, entries)``: the in-labels per state, the first
    discovery edge per state and, per chain, the call sites that entered it.
    """
    tree = graphs.tree
    pdg0 = graphs.pdg(root.name, cfg.pointer_args)
    d_nodes = seed_definitions(pdg0, root, seed, name, cfg.pointer_args)
    blocked = blocked_between(pdg0, root, d_nodes, seed, name) if cfg.trim_between else set()
    root_chain: Frame = ((root.name, "root"),)
    c = _Closure()
    # states whose outgoing data edges are limited to their own labels
    restricted: dict = {}
    queue: deque = deque()

    def add(state, labels: set[str], via) -> None:
        stmt_id, chain = state
        if chain == root_chain and stmt_id in blocked:
            return
        new = labels - c.labels[state] if state in c.labels else set(labels)
        if state not in c.parent:
            c.parent[state] = via
            c.labels[state] |= labels
            queue.append(state)
        elif new:
            c.labels[state] |= new
            queue.append(state)

    for d in sorted(d_nodes):
        restricted[(d, root_chain)] = {name}
        add((d, root_chain), {name}, ("def", None, name))
    if seed.id not in d_nodes:
        add((seed.id, root_chain), {name}, ("seed", None, name))

    resumed: set[Frame] = set()
    while queue:
        state = queue.popleft()
        stmt_id, chain = state
        func_name = chain[-1][0]
        func = tree.function(func_name)
        pdg = graphs.pdg(func_name, cfg.pointer_args)
        stmt = func.statement(stmt_id)
        labels = c.labels[state]
        allowed = restricted.get(state)
        for b, v in pdg.data_succ(stmt_id):
            if allowed is not None and v.base not in allowed:
                continue
            add((b, chain), {v.base}, ("data", state, v.base))
        # descend into callees through argument bindings
        if len(chain) < cfg.theta:
            on_chain = _frame_functions(chain)
            for call in stmt.calls:
                g = tree.function(call.callee)
                if g is None or call.callee_ref is not None or g.name in on_chain:
                    continue
                params = _callee_params(g, call, labels)
                if not params:
                    continue
                sub = chain + ((g.name, "down"),)
                hdr = (g.header.id, sub)
                restricted.setdefault(hdr, set()).update(params)
                c.entries[sub].add((chain, stmt_id))
                add(hdr, set(params), ("call", state, ",".join(params)))
        # resume in callers once this frame has been entered
        if cfg.after_return and _only_up(chain) and len(chain) < cfg.theta:
            _resume(graphs, c, chain, restricted, add, resumed)
    return c.labels, c.parent, c.entries


def _frame_labels(c: _Closure, chain: Frame) -> set[str]:
    out: set[str] = set()
    for (sid, ch), labels in c.labels.items():
        if ch == chain:
            out |= labels
    return out


def _resume(graphs, c: _Closure, chain: Frame, restricted, add, resumed) -> None:
    tree = graphs.tree
    callee_name = chain[-1][0]
    callee = tree.function(callee_name)
    seen_labels = _frame_labels(c, chain)
    # a later label growth in this frame can add pointer bindings
    key = (chain, frozenset(seen_labels))
    if key in resumed:
        return
    resumed.add(key)
    on_chain = _frame_functions(chain)
    for caller_name, site_id in graphs.call_graph.callers(callee_name):
        if caller_name in on_chain:
            continue
        caller = tree.function(caller_name)
        site = caller.statement(site_id)
        labels = {r.base for r in site.defs if r.base}
        for call in site.calls:
            if call.callee != callee_name:
                continue
            for i, (refs, addr) in enumerate(zip(call.args, call.address_of)):
                if i < len(callee.params) and callee.params[i].name in seen_labels:
                    if addr or callee.params[i].is_pointer or any(r.is_pointer for r in refs):
                        labels |= {r.base for r in refs if not r.member_path}
        sub = chain + ((caller_name, "up"),)
        state = (site_id, sub)
        restricted.setdefault(state, set()).update(labels)
        c.entries[sub].add((chain, site_id))
        add(state, labels, ("return", None, ",".join(sorted(labels))))


# --- ordering, projection, assembly --------------------------------------------


def _prefix_table(entries: dict, tree_line, root_chain: Frame, n_up_of) -> dict:
    """Order prefix per chain: minimum over the call sites that entered it."""
    memo: dict = {root_chain: (0,)}

    def prefix(chain):
        if chain in memo:
            return memo[chain]
        memo[chain] = None  # cycle guard
        best = None
        for parent, site in entries.get(chain, ()):
            line = tree_line(site)
            if line is None:
                continue
            if chain[-1][1] == "up":
                cand = (n_up_of(chain),)
            else:
                base = prefix(parent)
                if base is None:
                    continue
                cand = base + (line,)
            if best is None or cand < best:
                best = cand
        memo[chain] = best
        return best

    for chain in list(entries):
        prefix(chain)
    return memo


def _provenance(parent: dict, state) -> tuple:
    out = []
    seen = set()
    while state is not None and state not in seen:
        seen.add(state)
        kind, prev, var = parent[state]
        out.append((kind, prev[0] if prev else None, state[0], var))
        state = prev
    return tuple(reversed(out))


class Projector:
    """Maps patched-tree statements to their vulnerable-tree counterparts."""

    def __init__(self, diff: DiffFile, vuln: SourceTree, patched: SourceTree):
        self.diff = diff
        self.vuln = vuln
        self.patched = patched
        self._index: dict[tuple[str, str], list[Statement]] = defaultdict(list)
        for f in vuln.functions():
            for s in (f.header, *f.body):
                self._index[(f.name, s.text)].append(s)

    def counterpart(self, stmt: Statement) -> Statement | None:
        cands = self._index.get((stmt.function, stmt.text), [])
        if stmt.is_header:
            cands = [s for s in cands if s.is_header]
        if not cands:
            return None
        want = align_new_to_old(self.diff, stmt.file, stmt.line)
        return min(cands, key=lambda s: (s.file != stmt.file, abs(s.line - want), s.line))


def _occurring(stmt: Statement, tree) -> set[str]:
    names = {r.base for r in stmt.defs | stmt.uses} | set(stmt.names)
    if stmt.is_header:
        f = tree.function(stmt.function)
        if f is not None:
            names |= set(f.param_names)
    return names


def slice_for_variable(
    cv: CriticalVariable,
    ps: PatchStatement,
    vuln_graphs: ProgramGraphs,
    patched_graphs: ProgramGraphs | None = None,
    cfg: SliceConfig | None = None,
    projector: Projector | None = None,
) -> ProgramSlice:
    """Slice for one critical variable of one patch statement.

    Added statements are sliced in the patched tree and the result is
    projected onto the vulnerable tree; deleted and modified ones are
    sliced in the vulnerable tree directly.
    """
    cfg = cfg or SliceConfig()
    on_patched = ps.action == "add"
    seed = ps.statement
    # a variable introduced by a modification only exists on the new side
    if ps.action == "modify" and ps.new_statement is not None and patched_graphs is not None:
        if cv.name not in _occurring(seed, vuln_graphs.tree) and cv.name in _occurring(
            ps.new_statement, patched_graphs.tree
        ):
            on_patched, seed = True, ps.new_statement
    graphs = patched_graphs if on_patched else vuln_graphs
    if graphs is None:
        raise ValueError("patched graphs are required for added statements")
    tree = graphs.tree
    root = tree.function(ps.function) if ps.function else None
    if root is None or seed.id not in root.by_id:
        raise SeedNotFound(f"{cv.name}: patch statement is not inside a function")
    if cv.name not in _occurring(seed, tree):
        raise SeedNotFound(f"{cv.name} does not occur in {seed.text!r}")
    labels, parent, entries = compute_states(graphs, root, seed, cv.name, cfg)
    root_chain = ((root.name, "root"),)

    def n_up(chain):
        return sum(1 for _, h in chain if h == "up")

    if on_patched:
        if projector is None:
            projector = Projector(DiffFile(), vuln_graphs.tree, tree)
        mapped: dict[str, Statement | None] = {}

        def cp(sid):
            if sid not in mapped:
                mapped[sid] = projector.counterpart(tree.statement(sid))
            return mapped[sid]

        def site_line(sid):
            target = cp(sid)
            return target.line if target is not None else None

        anchor_line = ps.anchor_vuln if ps.anchor_vuln is not None else ps.line_vuln or 0
    else:
        def cp(sid):
            return tree.statement(sid)

        def site_line(sid):
            return tree.statement(sid).line

        anchor_line = seed.line
    prefixes = _prefix_table(entries, site_line, root_chain, n_up)
    out = []
    for state in parent:
        sid, chain = state
        target = cp(sid)
        pre = prefixes.get(chain)
        if target is None or pre is None:
            continue
        out.append(
            SliceEntry(
                stmt_id=target.id, function=chain[-1][0], file=target.file, line=target.line,
                chain=chain, order=pre + (target.line,), via=_provenance(parent, state),
            )
        )
    # one entry per projected (statement, chain); keep the earliest order
    best: dict = {}
    for e in out:
        k = (e.stmt_id, e.chain)
        if k not in best or (e.order, e.via) < (best[k].order, best[k].via):
            best[k] = e
    ordered = sorted(best.values(), key=lambda e: (e.order, e.file, e.stmt_id, e.chain))
    return ProgramSlice(
        seed=cv,
        patch_id=ps.id,
        root_function=root.name,
        anchor=(0, anchor_line),
        entries=tuple(ordered),
        sliced_on="patched" if on_patched else "vulnerable",
    )


def slice_control_statement(cv: CriticalVariable, ctrl: Statement, pdg: Pdg, f: FunctionDef) -> set[str]:
    """Single-function slice of a control statement: definitions, forward data
    flow from them, minus the statements between definition and condition."""
    return _intra_slice(cv.name, ctrl, pdg, f)


def slice_through_pointer_arg(cv: CriticalVariable, call: Statement, pdg: Pdg, f: FunctionDef) -> set[str]:
    """Single-function slice of a call passing ``cv``.

    With an augmented PDG a pointer argument is defined by the call, so its
    later uses join the slice; a value argument gets no such edge.
    """
    return _intra_slice(cv.name, call, pdg, f)


def _intra_slice(name: str, seed: Statement, pdg: Pdg, f: FunctionDef) -> set[str]:
    d_nodes = seed_definitions(pdg, f, seed, name, pdg.augmented)
    blocked = blocked_between(pdg, f, d_nodes, seed, name)
    return _intra_forward(pdg, d_nodes, seed.id, name, blocked)


def _intra_forward(pdg: Pdg, d_nodes: set[str], seed_id: str, name: str, blocked: set[str]) -> set[str]:
    out = set(d_nodes) | {seed_id}
    todo = [(d, True) for d in d_nodes] + ([(seed_id, False)] if seed_id not in d_nodes else [])
    seen = set()
    while todo:
        a, restricted = todo.pop()
        if (a, restricted) in seen:
            continue
        seen.add((a, restricted))
        for b, v in pdg.data_succ(a):
            if restricted and v.base != name:
                continue
            if b in blocked:
                continue
            out.add(b)
            todo.append((b, False))
    return out


def slice_after_return(f: FunctionDef, graphs: ProgramGraphs, cfg: SliceConfig | None = None) -> dict[int, set[str]]:
    """Call sites of ``f`` in callers, grouped by layer, up to ``theta``."""
    cfg = cfg or SliceConfig()
    out: dict[int, set[str]] = {}
    frontier = [(f.name, (f.name,))]
    layer = 1
    while frontier and layer < cfg.theta:
        layer += 1
        nxt = []
        for name, chain in frontier:
            for caller, site in graphs.call_graph.callers(name):
                if caller in chain:
                    continue
                out.setdefault(layer, set()).add(site)
                nxt.append((caller, chain + (caller,)))
        frontier = nxt
    return out
