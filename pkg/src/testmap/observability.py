"""What a unit test could assert on after calling a method.

A method's own observation points are its return value, exceptions that
escape it, writes to fields a test can read back, and calls on injectable
(mockable) dependencies that a test can verify. A method with none of these,
and whose helper calls on ``this`` or static helpers have none either, is
non-observable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

from .classfile import ClassPool, FieldRef, MethodId, MethodModel, parse_method_descriptor
from .hierarchy import UNKNOWN as UNKNOWN_TARGET
from .hierarchy import CallGraph, Dispatch
from .knowledge import SINK, KnowledgeBase, classify_callee
from .metrics import TrivialKind, detect_trivial
from .mockability import THIS, Injectability, NewInstance, ProgramFacts, _Caught


@dataclass(frozen=True)
class ReturnValue:
    def __str__(self) -> str:
        return "ReturnValue"


RETURN_VALUE = ReturnValue()


@dataclass(frozen=True)
class EscapingException:
    type: str

    def __str__(self) -> str:
        return f"EscapingException({self.type.replace('/', '.')})"


@dataclass(frozen=True)
class ReadableFieldWrite:
    field: FieldRef

    def __str__(self) -> str:
        return f"ReadableFieldWrite({self.field})"


@dataclass(frozen=True)
class MockableDependencyCall:
    offset: int
    callee: MethodId

    def __str__(self) -> str:
        return f"MockableDependencyCall({self.callee.short}@{self.offset})"


ObservationPoint = Union[ReturnValue, EscapingException, ReadableFieldWrite, MockableDependencyCall]
THROWABLE = "java/lang/Throwable"


class ObservabilityContext:
    """Shared, read-only inputs for the per-method effect computation."""

    def __init__(self, pool: ClassPool, graph: CallGraph, kb: KnowledgeBase, facts: ProgramFacts):
        self.pool = pool
        self.graph = graph
        self.kb = kb
        self.facts = facts
        self._readable: dict[tuple[str, str], bool] = {}
        self._getters: Optional[set[tuple[str, str]]] = None
        self._observed: Optional[set[tuple[str, str]]] = None

    def _visible(self, access: int) -> bool:
        if access & 0x0001:
            return True
        return self.kb.test_visibility == "package" and not access & 0x0002

    def _index_readers(self) -> None:
        getters: set[tuple[str, str]] = set()
        observed: set[tuple[str, str]] = set()
        for cls, m in self.pool.methods():
            if not m.instructions or not self._visible(m.access_flags):
                continue
            if detect_trivial(m).kind is TrivialKind.GETTER:
                ref = next(ins.operand for ins in m.instructions if ins.opcode == "getfield")
                getters.add((cls.internal_name, ref.name))
            _, ret = parse_method_descriptor(m.descriptor)
            facts = self.facts.facts.get(m.id)
            if ret == "V" or facts is None:
                continue
            # observer methods: a non-void accessible method reading the field
            for ref, obj in facts.reads.values():
                decl = self.facts.declaring_class(ref)
                if decl is not None and (obj is THIS or obj is None):
                    observed.add((decl.internal_name, ref.name))
        self._getters, self._observed = getters, observed

    def readable(self, ref: FieldRef) -> bool:
        """Whether a test can read the field back after the call."""
        decl, fld = self.facts.field_model(ref)
        if decl is None or fld is None:
            return True  # declared outside the pool: assume it can be read
        key = (decl.internal_name, fld.name)
        hit = self._readable.get(key)
        if hit is not None:
            return hit
        if self._getters is None:
            self._index_readers()
        result = self._visible(fld.access_flags) or key in self._getters or key in self._observed
        self._readable[key] = result
        return result

    def handler_matches(self, catch_type: Optional[str], thrown: Optional[str]) -> bool:
        """True only if the handler certainly catches the thrown value."""
        if catch_type is None or catch_type == THROWABLE:
            return True
        if thrown is None:
            return False
        return thrown == catch_type or (thrown in self.pool and self.graph.hierarchy.is_subtype(thrown, catch_type))


def _thrown_type(m: MethodModel, prov) -> Optional[str]:
    if isinstance(prov, NewInstance):
        return prov.type
    if isinstance(prov, _Caught):
        for entry in m.exception_table:
            if entry.handler == prov.handler:
                return entry.catch_type or THROWABLE
    return None


def observable_effects(m: MethodModel, ctx: ObservabilityContext) -> set:
    """Own observation points of ``m`` (helpers are handled by compute_nonobservable)."""
    effects: set = set()
    _, ret = parse_method_descriptor(m.descriptor)
    if ret != "V":
        effects.add(RETURN_VALUE)
    for exc in m.declared_exceptions:
        effects.add(EscapingException(exc))
    facts = ctx.facts.facts.get(m.id)
    if facts is None:
        return effects
    for off, prov in sorted(facts.throws.items()):
        thrown = _thrown_type(m, prov)
        caught = False
        for entry in m.exception_table:
            if entry.start <= off < entry.end:
                if ctx.handler_matches(entry.catch_type, thrown):
                    caught = True
                break  # the first covering entry decides (or is uncertain)
        if not caught:
            effects.add(EscapingException(thrown or THROWABLE))
    for off, (ref, _value, obj) in sorted(facts.stores.items()):
        if isinstance(obj, NewInstance):
            continue
        if ctx.readable(ref):
            effects.add(ReadableFieldWrite(ref))
    for site in ctx.graph.edges.get(m.id, ()):
        if site.kind in (Dispatch.STATIC, Dispatch.DYNAMIC) or site.receiver is None:
            continue
        if site.declared.name == "<init>":
            continue
        if classify_callee(site.declared, ctx.kb) is SINK:
            continue
        if ctx.facts.receiver_injectability(site.receiver) is not Injectability.NON_INJECTABLE:
            effects.add(MockableDependencyCall(site.offset, site.declared))
    return effects


def compute_all_effects(ctx: ObservabilityContext) -> dict[MethodId, set]:
    return {m.id: observable_effects(m, ctx) for _, m in ctx.pool.methods() if m.instructions}


def _helper_sites(graph: CallGraph, mid: MethodId, kb: KnowledgeBase) -> Iterable:
    for site in graph.edges.get(mid, ()):
        if classify_callee(site.declared, kb) is SINK:
            continue
        # a this-receiver <init> is the superclass constructor running on this object
        if site.kind is Dispatch.STATIC or site.receiver is THIS:
            yield site


def compute_nonobservable(pool: ClassPool, effects: Mapping[MethodId, set],
                          ctx: Optional[ObservabilityContext] = None) -> set[MethodId]:
    """Methods with nothing a test could assert on.

    With a context, side effects of helper calls (on ``this`` or static, into
    parsed code) count for the caller; a helper call whose target cannot be
    resolved keeps the caller out of the set.
    """
    empty = {mid for mid, eff in effects.items() if not eff}
    if ctx is None:
        return empty
    side = {mid for mid, eff in effects.items() if any(not isinstance(e, ReturnValue) for e in eff)}
    uncertain: set[MethodId] = set()
    helpers: dict[MethodId, list[MethodId]] = {}
    for mid in effects:
        targets: list[MethodId] = []
        for site in _helper_sites(ctx.graph, mid, ctx.kb):
            for t in site.targets:
                if t is UNKNOWN_TARGET:
                    if site.kind is not Dispatch.STATIC:
                        uncertain.add(mid)
                elif t in effects:
                    targets.append(t)
        helpers[mid] = targets
    changed = True
    while changed:
        changed = False
        for mid in sorted(effects):
            if mid not in side and any(t in side for t in helpers[mid]):
                side.add(mid)
                changed = True
    return {mid for mid in empty if mid not in side and mid not in uncertain}
