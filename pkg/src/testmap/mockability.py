"""Receiver provenance, field injectability and the non-mockable fixed point.

A method is non-mockable when running it forces a must-mock callee that a
test cannot replace: either it calls such a callee directly on a receiver the
test cannot supply, or it reaches one through static calls or calls on
non-injectable objects. The analysis under-approximates: whenever something
is unknown (dispatch target, injectability), the chain is cut.
"""

from __future__ import annotations

import enum
import heapq
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional

from .classfile import (
    ACC_FINAL,
    CONDITIONAL_BRANCHES,
    INVOKES,
    RETURNS,
    STACK_EFFECTS,
    SWITCHES,
    ClassModel,
    ClassPool,
    FieldModel,
    FieldRef,
    MethodId,
    MethodModel,
    local_index,
    parse_method_descriptor,
    slot_size,
)
from .hierarchy import UNKNOWN as UNKNOWN_TARGET
from .hierarchy import CallGraph, CallSite, Dispatch
from .knowledge import KnowledgeBase, MustMock, Category, classify_callee


class Injectability(str, enum.Enum):
    INJECTABLE = "Injectable"
    NON_INJECTABLE = "NonInjectable"
    UNKNOWN = "Unknown"


# --- provenance ---------------------------------------------------------------

@dataclass(frozen=True)
class Parameter:
    index: int  # 1-based declared parameter position

    def __str__(self) -> str:
        return f"Parameter({self.index})"


@dataclass(frozen=True)
class FieldRead:
    field: FieldRef
    injectability: Injectability = Injectability.UNKNOWN

    def __str__(self) -> str:
        return f"FieldRead({self.field.name}, {self.injectability.value})"


@dataclass(frozen=True)
class NewInstance:
    type: str

    def __str__(self) -> str:
        return f"NewInstance({self.type.replace('/', '.')})"


@dataclass(frozen=True)
class StaticFieldRead:
    field: FieldRef

    def __str__(self) -> str:
        return f"StaticFieldRead({self.field.name})"


@dataclass(frozen=True)
class ReturnOf:
    offset: int
    callee: MethodId

    def __str__(self) -> str:
        return f"ReturnOf({self.callee.short}@{self.offset})"


@dataclass(frozen=True)
class _Singleton:
    label: str

    def __str__(self) -> str:
        return self.label


THIS = _Singleton("ThisReference")
UNKNOWN = _Singleton("Unknown")


@dataclass(frozen=True)
class _Caught:
    """The exception object at a handler entry (internal only)."""

    handler: int


Provenance = Any  # one of the classes above


def public_provenance(p: Provenance) -> Provenance:
    return UNKNOWN if isinstance(p, _Caught) else p


# --- abstract interpretation ----------------------------------------------------

@dataclass
class MethodFacts:
    """Everything the simulation learned about one method body."""

    method: MethodModel
    receivers: dict[int, Provenance] = field(default_factory=dict)
    stores: dict[int, tuple[FieldRef, Provenance, Optional[Provenance]]] = field(default_factory=dict)
    reads: dict[int, tuple[FieldRef, Optional[Provenance]]] = field(default_factory=dict)
    throws: dict[int, Provenance] = field(default_factory=dict)
    reachable: set[int] = field(default_factory=set)  # instruction positions


def _join(a: Provenance, b: Provenance) -> Provenance:
    return a if a == b else UNKNOWN


def _join_state(old: tuple, new: tuple) -> tuple:
    old_locals, old_stack = old
    new_locals, new_stack = new
    locals_ = tuple(_join(x, y) for x, y in zip(old_locals, new_locals))
    if len(old_stack) != len(new_stack):
        stack = (UNKNOWN,) * min(len(old_stack), len(new_stack))
    else:
        stack = tuple(_join(x, y) for x, y in zip(old_stack, new_stack))
    return locals_, stack


def _initial_locals(m: MethodModel) -> list[Provenance]:
    params, _ = parse_method_descriptor(m.descriptor)
    locals_: list[Provenance] = []
    if not m.is_static:
        locals_.append(THIS)
    for i, p in enumerate(params, start=1):
        locals_.append(Parameter(i))
        if slot_size(p) == 2:
            locals_.append(UNKNOWN)
    max_local = len(locals_)
    for ins in m.instructions:
        idx = local_index(ins)
        if idx is None and ins.opcode == "iinc":
            idx = ins.operand[0]
        if idx is not None and idx + 2 > max_local:
            max_local = idx + 2
    locals_.extend([UNKNOWN] * (max_local - len(locals_)))
    return locals_


def simulate(m: MethodModel) -> MethodFacts:
    """Abstract interpretation tracking only where values come from."""
    facts = MethodFacts(m)
    code = m.instructions
    if not code:
        return facts
    n = len(code)
    index = m.index_of

    leaders = {0}
    for i, ins in enumerate(code):
        op = ins.opcode
        if op in CONDITIONAL_BRANCHES or op in ("goto", "goto_w", "jsr", "jsr_w"):
            leaders.add(index[ins.operand])
            leaders.add(i + 1)
        elif op in SWITCHES:
            leaders.add(index[ins.operand.default])
            leaders.update(index[t] for t in ins.operand.targets)
            leaders.add(i + 1)
        elif op in RETURNS or op in ("athrow", "ret"):
            leaders.add(i + 1)
    covering: dict[int, list[int]] = defaultdict(list)
    for entry in m.exception_table:
        h = index[entry.handler]
        leaders.add(h)
        for i in range(index[entry.start], index.get(entry.end, n)):
            covering[i].append(h)

    states: dict[int, tuple] = {0: (tuple(_initial_locals(m)), ())}
    heap = [0]
    queued = {0}

    def merge(target: int, state: tuple) -> None:
        if target >= n:
            return
        old = states.get(target)
        new = state if old is None else _join_state(old, state)
        if new != old:
            states[target] = new
            if target not in queued:
                queued.add(target)
                heapq.heappush(heap, target)

    while heap:
        start = heapq.heappop(heap)
        queued.discard(start)
        locals_list, stack_t = states[start]
        locals_ = list(locals_list)
        stack = list(stack_t)
        i = start
        while True:
            facts.reachable.add(i)
            ins = code[i]
            for h in covering.get(i, ()):
                merge(h, (tuple(locals_), (_Caught(code[h].offset),)))
            flow = _step(ins, locals_, stack, facts)
            op = ins.opcode
            if flow == "stop":
                break
            if op in CONDITIONAL_BRANCHES:
                merge(index[ins.operand], (tuple(locals_), tuple(stack)))
                merge(i + 1, (tuple(locals_), tuple(stack)))
                break
            if op in ("goto", "goto_w"):
                merge(index[ins.operand], (tuple(locals_), tuple(stack)))
                break
            if op in ("jsr", "jsr_w"):
                merge(index[ins.operand], (tuple(locals_), tuple(stack) + (UNKNOWN,)))
                merge(i + 1, (tuple(locals_), tuple(stack)))
                break
            if op in SWITCHES:
                state = (tuple(locals_), tuple(stack))
                for t in sorted({ins.operand.default, *ins.operand.targets}):
                    merge(index[t], state)
                break
            i += 1
            if i >= n:
                break
            if i in leaders:
                merge(i, (tuple(locals_), tuple(stack)))
                break
    return facts


def _pop(stack: list, k: int = 1) -> list:
    if k <= 0:
        return []
    if len(stack) < k:
        stack[:0] = [UNKNOWN] * (k - len(stack))
    out = stack[-k:]
    del stack[-k:]
    return out


_LOCAL_LOADS = frozenset(f"{t}load{s}" for t in "ilfda" for s in ("", "_0", "_1", "_2", "_3"))
_LOCAL_STORES = frozenset(f"{t}store{s}" for t in "ilfda" for s in ("", "_0", "_1", "_2", "_3"))

_DUP_PATTERNS = {
    # opcode: (slots consumed, output as indices into the consumed slots)
    "dup": (1, (0, 0)),
    "dup_x1": (2, (1, 0, 1)),
    "dup_x2": (3, (2, 0, 1, 2)),
    "dup2": (2, (0, 1, 0, 1)),
    "dup2_x1": (3, (1, 2, 0, 1, 2)),
    "dup2_x2": (4, (2, 3, 0, 1, 2, 3)),
    "swap": (2, (1, 0)),
}


def _step(ins, locals_: list, stack: list, facts: MethodFacts) -> Optional[str]:
    op = ins.opcode
    if op in INVOKES:
        callee: MethodId = ins.operand
        params, ret = parse_method_descriptor(callee.descriptor)
        _pop(stack, sum(slot_size(p) for p in params))
        if op != "invokestatic" and op != "invokedynamic":
            facts.receivers[ins.offset] = _pop(stack)[0]
        if ret != "V":
            stack.append(ReturnOf(ins.offset, callee))
            if slot_size(ret) == 2:
                stack.append(UNKNOWN)
        return None
    if op in _LOCAL_LOADS:
        stack.append(locals_[local_index(ins)])
        if op[0] in "ld":
            stack.append(UNKNOWN)
        return None
    if op in _LOCAL_STORES:
        idx = local_index(ins)
        if op[0] in "ld":
            locals_[idx] = _pop(stack, 2)[0]
            locals_[idx + 1] = UNKNOWN
        else:
            locals_[idx] = _pop(stack)[0]
        return None
    if op == "getfield":
        f: FieldRef = ins.operand
        obj = _pop(stack)[0]
        facts.reads[ins.offset] = (f, obj)
        stack.append(FieldRead(f))
        if slot_size(f.descriptor) == 2:
            stack.append(UNKNOWN)
        return None
    if op == "getstatic":
        f = ins.operand
        facts.reads[ins.offset] = (f, None)
        stack.append(StaticFieldRead(f))
        if slot_size(f.descriptor) == 2:
            stack.append(UNKNOWN)
        return None
    if op == "putfield":
        f = ins.operand
        value = _pop(stack, slot_size(f.descriptor))[0]
        obj = _pop(stack)[0]
        facts.stores[ins.offset] = (f, value, obj)
        return None
    if op == "putstatic":
        f = ins.operand
        value = _pop(stack, slot_size(f.descriptor))[0]
        facts.stores[ins.offset] = (f, value, None)
        return None
    if op == "new":
        stack.append(NewInstance(ins.operand))
        return None
    if op == "checkcast":
        return None
    if op in _DUP_PATTERNS:
        k, pattern = _DUP_PATTERNS[op]
        taken = _pop(stack, k)
        stack.extend(taken[j] for j in pattern)
        return None
    if op == "athrow":
        facts.throws[ins.offset] = _pop(stack)[0]
        return "stop"
    if op in RETURNS or op == "ret":
        return "stop"
    if op == "iinc":
        locals_[ins.operand[0]] = UNKNOWN
        return None
    if op == "multianewarray":
        _pop(stack, ins.operand[1])
        stack.append(UNKNOWN)
        return None
    pop, push = STACK_EFFECTS[op]
    _pop(stack, pop or 0)
    stack.extend([UNKNOWN] * (push or 0))
    return None


def simulate_receivers(m: MethodModel, injectability: Optional[Callable[[FieldRef], Injectability]] = None
                       ) -> dict[int, Provenance]:
    """Receiver provenance of every instance call site in ``m``, keyed by offset."""
    facts = simulate(m)
    return _finalize(facts.receivers, injectability)


def _finalize(receivers: Mapping[int, Provenance], injectability) -> dict[int, Provenance]:
    out = {}
    for off, prov in receivers.items():
        prov = public_provenance(prov)
        if injectability is not None and isinstance(prov, FieldRead):
            prov = FieldRead(prov.field, injectability(prov.field))
        out[off] = prov
    return out


# --- field injectability -------------------------------------------------------

def _test_visible(access: int, visibility: str) -> bool:
    if access & 0x0001:
        return True
    if visibility == "public":
        return False
    return not access & 0x0002


class ProgramFacts:
    """Simulation results for every method of a pool, plus derived field facts."""

    def __init__(self, pool: ClassPool, visibility: str = "package", threads: int = 1,
                 overrides: Optional[Mapping[tuple[str, str], Injectability]] = None):
        self.pool = pool
        self.visibility = visibility
        self.overrides = dict(overrides or {})
        methods = [m for _, m in pool.methods() if m.instructions]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(simulate, methods))
        else:
            results = [simulate(m) for m in methods]
        self.facts: dict[MethodId, MethodFacts] = {m.id: f for m, f in zip(methods, results)}
        self._stores: dict[tuple[str, str], list[tuple[ClassModel, MethodModel, Provenance]]] = defaultdict(list)
        for cls, m in pool.methods():
            f = self.facts.get(m.id)
            if f is None:
                continue
            for _, (ref, value, _obj) in sorted(f.stores.items()):
                decl = self.declaring_class(ref)
                if decl is not None:
                    self._stores[(decl.internal_name, ref.name)].append((cls, m, value))
        self._cache: dict[tuple[str, str], Injectability] = {}

    def declaring_class(self, ref: FieldRef) -> Optional[ClassModel]:
        cur = self.pool.get(ref.owner)
        while cur is not None:
            if cur.field(ref.name) is not None:
                return cur
            cur = self.pool.get(cur.super_name) if cur.super_name else None
        return None

    def field_model(self, ref: FieldRef) -> tuple[Optional[ClassModel], Optional[FieldModel]]:
        decl = self.declaring_class(ref)
        return (decl, decl.field(ref.name)) if decl else (None, None)

    def injectability(self, ref: FieldRef) -> Injectability:
        decl = self.declaring_class(ref)
        if decl is None:
            return Injectability.UNKNOWN
        key = (decl.internal_name, ref.name)
        if key in self.overrides:
            return self.overrides[key]
        hit = self._cache.get(key)
        if hit is None:
            hit = self._compute(decl, decl.field(ref.name))
            self._cache[key] = hit
        return hit

    def _compute(self, owner: ClassModel, fld: FieldModel) -> Injectability:
        if not fld.is_final and _test_visible(fld.access_flags, self.visibility):
            return Injectability.INJECTABLE
        stores = self._stores.get((owner.internal_name, fld.name), [])
        for cls, m, value in stores:
            if isinstance(value, Parameter) and _test_visible(m.access_flags, self.visibility):
                return Injectability.INJECTABLE
        if stores and all(isinstance(v, (NewInstance, StaticFieldRead)) for _, _, v in stores):
            return Injectability.NON_INJECTABLE
        return Injectability.UNKNOWN

    def receivers(self, m: MethodModel) -> dict[int, Provenance]:
        f = self.facts.get(m.id)
        if f is None:
            return {}
        return _finalize(f.receivers, self.injectability)

    def receiver_injectability(self, prov: Provenance) -> Injectability:
        if isinstance(prov, Parameter):
            return Injectability.INJECTABLE
        if isinstance(prov, FieldRead):
            return prov.injectability if prov.injectability is not Injectability.UNKNOWN \
                else self.injectability(prov.field)
        if isinstance(prov, StaticFieldRead):
            return self.injectability(prov.field)
        if isinstance(prov, NewInstance) or prov is THIS:
            return Injectability.NON_INJECTABLE
        return Injectability.UNKNOWN


def field_injectability(owner: ClassModel, fld: FieldModel, pool: ClassPool, *,
                        facts: Optional[ProgramFacts] = None, visibility: str = "package") -> Injectability:
    """Whether a test can supply the object held in ``owner.fld``."""
    facts = facts or ProgramFacts(pool, visibility)
    return facts.injectability(FieldRef(owner.internal_name, fld.name, fld.descriptor))


def receiver_injectability(prov: Provenance) -> Injectability:
    """Injectability of a receiver from its provenance alone (field payloads as recorded)."""
    if isinstance(prov, Parameter):
        return Injectability.INJECTABLE
    if isinstance(prov, FieldRead):
        return prov.injectability
    if isinstance(prov, NewInstance) or prov is THIS:
        return Injectability.NON_INJECTABLE
    return Injectability.UNKNOWN


# --- non-mockable fixed point ---------------------------------------------------

@dataclass(frozen=True)
class Mockable:
    def __str__(self) -> str:
        return "Mockable"


MOCKABLE = Mockable()


@dataclass(frozen=True)
class NonMockable:
    category: Category
    rank: int  # 0 for must-mock callees, else 1 + rank of ``via``
    witness: Optional[CallSite] = None
    via: Optional[MethodId] = None

    def __str__(self) -> str:
        return f"NonMockable({self.category.value})"


class NotApplicable(Exception):
    pass


class MockabilityResult(Mapping):
    """Verdict per method id; ids never marked are Mockable."""

    def __init__(self, verdicts: dict[MethodId, NonMockable], graph: CallGraph, kb: KnowledgeBase,
                 facts: Optional[ProgramFacts] = None):
        self._verdicts = verdicts
        self.graph = graph
        self.kb = kb
        self.facts = facts

    def __getitem__(self, key: MethodId):
        return self._verdicts.get(key, MOCKABLE)

    def __iter__(self) -> Iterator[MethodId]:
        return iter(sorted(self.graph.nodes | set(self._verdicts)))

    def __len__(self) -> int:
        return len(self.graph.nodes | set(self._verdicts))

    def nonmockable(self) -> dict[MethodId, NonMockable]:
        return dict(sorted(self._verdicts.items()))


def _is_final_target(t: MethodId, pool: ClassPool) -> bool:
    cls = pool.get(t.owner)
    if cls is None:
        return False
    m = cls.method(t.name, t.descriptor)
    return bool(cls.is_final or (m is not None and m.access_flags & ACC_FINAL))


def effective_targets(site: CallSite, kb: KnowledgeBase) -> frozenset:
    """A must-mock declared callee is the target whatever CHA says."""
    if site.kind is not Dispatch.DYNAMIC and isinstance(classify_callee(site.declared, kb), MustMock):
        return frozenset([site.declared])
    return site.targets


def propagates(site: CallSite, kb: KnowledgeBase, pool: ClassPool,
               injectability: Callable[[Provenance], Injectability] = receiver_injectability) -> bool:
    """Whether a non-mockable callee at ``site`` makes its caller non-mockable."""
    targets = effective_targets(site, kb)
    if UNKNOWN_TARGET in targets or not targets:
        return False
    if site.kind is Dispatch.STATIC:
        return not kb.mock_static_methods
    if site.kind is Dispatch.DYNAMIC:
        return False
    if injectability(site.receiver) is Injectability.NON_INJECTABLE:
        return True
    if not kb.mock_final_classes and all(_is_final_target(t, pool) for t in targets):
        return True
    return False


def compute_nonmockable(g: CallGraph, kb: KnowledgeBase, facts: Optional[ProgramFacts] = None
                        ) -> MockabilityResult:
    """Least fixed point of the non-mockable rules, computed level by level.

    Level 0 holds the must-mock callees. A caller joins level k+1 when one of
    its propagating sites has all targets marked and the last of them was
    marked at level k. Levels make the result independent of scheduling and
    give every verdict a shortest witness.
    """
    inj = facts.receiver_injectability if facts is not None else receiver_injectability
    verdicts: dict[MethodId, NonMockable] = {}
    nodes = set(g.nodes)
    for site in g.sites():
        nodes.update(t for t in effective_targets(site, kb) if t is not UNKNOWN_TARGET)
    for node in sorted(nodes):
        c = classify_callee(node, kb)
        if isinstance(c, MustMock):
            verdicts[node] = NonMockable(c.category, 0)

    pending: dict[int, int] = {}
    site_targets: dict[int, frozenset] = {}
    waiting: dict[MethodId, list[int]] = defaultdict(list)
    sites: list[CallSite] = []
    for site in g.sites():
        if site.caller in verdicts or not propagates(site, kb, g.pool, inj):
            continue
        sid = len(sites)
        sites.append(site)
        targets = effective_targets(site, kb)
        site_targets[sid] = targets
        pending[sid] = len(targets)
        for t in targets:
            waiting[t].append(sid)

    frontier = sorted(verdicts)
    level = 0
    while frontier:
        ready: dict[MethodId, list[int]] = defaultdict(list)
        for marked in frontier:
            for sid in waiting.get(marked, ()):
                pending[sid] -= 1
                if pending[sid] == 0:
                    ready[sites[sid].caller].append(sid)
        level += 1
        next_frontier = []
        for caller in sorted(ready):
            if caller in verdicts:
                continue
            sid = min(ready[caller], key=lambda s: sites[s].offset)
            site = sites[sid]
            via = min(site_targets[sid], key=lambda t: (verdicts[t].rank, t))
            verdicts[caller] = NonMockable(verdicts[via].category, level, site, via)
            next_frontier.append(caller)
        frontier = next_frontier
    return MockabilityResult(verdicts, g, kb, facts)


# --- traces ---------------------------------------------------------------------

@dataclass(frozen=True)
class TraceHop:
    method: MethodId
    line: Optional[int]  # source line of the call to the next hop
    offset: Optional[int]
    receiver: Optional[str] = None


@dataclass(frozen=True)
class Trace:
    method: MethodId
    category: Category
    hops: tuple[TraceHop, ...]
    non_injectable_fields: tuple[FieldRef, ...] = ()

    @property
    def chain(self) -> list[MethodId]:
        return [h.method for h in self.hops]

    def summary(self) -> str:
        return " -> ".join(h.method.short for h in self.hops)


def explain_trace(m: MethodId, verdicts: Mapping) -> Trace:
    """Witness chain from ``m`` down to a must-mock callee."""
    v = verdicts.get(m, MOCKABLE) if not isinstance(verdicts, MockabilityResult) else verdicts[m]
    if not isinstance(v, NonMockable):
        raise NotApplicable(f"{m} is mockable")
    facts = getattr(verdicts, "facts", None)
    hops = []
    fields: list[FieldRef] = []
    cur = m
    seen = set()
    while True:
        if cur in seen:  # pragma: no cover - ranks strictly decrease
            raise RuntimeError(f"witness cycle at {cur}")
        seen.add(cur)
        cv = verdicts[cur]
        site = cv.witness
        receiver = None
        if site is not None and site.receiver is not None:
            receiver = str(site.receiver)
            if isinstance(site.receiver, FieldRead) and facts is not None \
                    and facts.injectability(site.receiver.field) is Injectability.NON_INJECTABLE:
                fields.append(site.receiver.field)
        hops.append(TraceHop(cur, site.line if site else None, site.offset if site else None, receiver))
        if facts is not None and cur in facts.facts:
            for _, (ref, obj) in sorted(facts.facts[cur].reads.items()):
                if obj is THIS and facts.injectability(ref) is Injectability.NON_INJECTABLE:
                    fields.append(ref)
        if cv.via is None:
            break
        cur = cv.via
    unique = tuple(dict.fromkeys(fields))
    return Trace(m, v.category, tuple(hops), unique)
