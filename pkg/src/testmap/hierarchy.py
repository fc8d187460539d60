"""Type hierarchy and class-hierarchy-analysis (CHA) call graph."""

from __future__ import annotations

import enum
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Union

from .classfile import (
    ACC_ABSTRACT,
    ACC_INTERFACE,
    ClassPool,
    Instruction,
    MethodId,
    MethodModel,
)

ROOT = "java/lang/Object"


class CyclicHierarchy(Exception):
    pass


class _UnknownTarget:
    """Marker for a dispatch target the analysis cannot pin down."""

    _instance: Optional["_UnknownTarget"] = None

    def __new__(cls) -> "_UnknownTarget":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Unknown"

    def __reduce__(self):
        return (_UnknownTarget, ())


UNKNOWN = _UnknownTarget()
Target = Union[MethodId, _UnknownTarget]


class Dispatch(str, enum.Enum):
    STATIC = "static"
    SPECIAL = "special"
    VIRTUAL = "virtual"
    INTERFACE = "interface"
    DYNAMIC = "dynamic"


_KIND_OF = {
    "invokestatic": Dispatch.STATIC,
    "invokespecial": Dispatch.SPECIAL,
    "invokevirtual": Dispatch.VIRTUAL,
    "invokeinterface": Dispatch.INTERFACE,
    "invokedynamic": Dispatch.DYNAMIC,
}


@dataclass
class TypeHierarchy:
    superclass: dict[str, Optional[str]] = field(default_factory=dict)
    interfaces: dict[str, tuple[str, ...]] = field(default_factory=dict)
    concrete: dict[str, bool] = field(default_factory=dict)
    is_interface: dict[str, bool] = field(default_factory=dict)
    phantoms: set[str] = field(default_factory=set)
    subtypes: dict[str, list[str]] = field(default_factory=dict)
    pool: Optional[ClassPool] = None

    def __post_init__(self) -> None:
        self._cone_cache: dict[str, tuple[str, ...]] = {}
        self._lookup_cache: dict[tuple[str, str, str], Target] = {}

    def __hash__(self) -> int:  # identity hash so instances can key caches
        return id(self)

    def is_parsed(self, name: str) -> bool:
        return name in self.superclass

    def edges(self) -> set[tuple[str, str, str]]:
        """All (child, parent, kind) edges, kind being "extends" or "implements"."""
        out = set()
        for child, parent in self.superclass.items():
            if parent is not None:
                out.add((child, parent, "extends"))
        for child, ifaces in self.interfaces.items():
            for parent in ifaces:
                out.add((child, parent, "implements"))
        return out

    def supertypes(self, name: str) -> Iterator[str]:
        """Every supertype of ``name`` (excluding itself), breadth first."""
        seen = {name}
        queue = [name]
        while queue:
            cur = queue.pop(0)
            parents = []
            sup = self.superclass.get(cur)
            if sup:
                parents.append(sup)
            parents.extend(self.interfaces.get(cur, ()))
            for p in parents:
                if p not in seen:
                    seen.add(p)
                    queue.append(p)
                    yield p

    def is_subtype(self, sub: str, sup: str) -> bool:
        return sub == sup or any(t == sup for t in self.supertypes(sub))

    def cone(self, name: str) -> tuple[str, ...]:
        """``name`` plus all parsed transitive subtypes, sorted."""
        cached = self._cone_cache.get(name)
        if cached is not None:
            return cached
        seen = {name}
        stack = [name]
        while stack:
            cur = stack.pop()
            for child in self.subtypes.get(cur, ()):
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        result = tuple(sorted(seen))
        self._cone_cache[name] = result
        return result

    def _defines(self, cls_name: str, name: str, desc: str) -> Optional[MethodModel]:
        cls = self.pool.get(cls_name) if self.pool else None
        return cls.method(name, desc) if cls else None

    def lookup(self, cls_name: str, name: str, desc: str) -> Target:
        """Resolve a method by walking up the superclass chain from ``cls_name``.

        Returns the first definition found. If the walk reaches a phantom type,
        the phantom's method id is returned (phantoms are assumed to define
        what they are asked for). If the chain ends without a definition,
        superinterface default methods are searched, then UNKNOWN.
        """
        key = (cls_name, name, desc)
        hit = self._lookup_cache.get(key)
        if hit is not None:
            return hit
        result: Target = UNKNOWN
        cur: Optional[str] = cls_name
        while cur is not None:
            if cur not in self.superclass:
                result = MethodId(cur, name, desc)
                break
            m = self._defines(cur, name, desc)
            if m is not None:
                result = m.id
                break
            cur = self.superclass.get(cur)
        else:
            result = self._default_method(cls_name, name, desc)
        self._lookup_cache[key] = result
        return result

    def _default_method(self, cls_name: str, name: str, desc: str) -> Target:
        found = []
        for sup in self.supertypes(cls_name):
            if not self.is_interface.get(sup, False):
                continue
            m = self._defines(sup, name, desc)
            if m is not None and not m.is_abstract and not m.is_static:
                found.append(m.id)
        return sorted(found)[0] if len(found) == 1 else UNKNOWN


def build_hierarchy(pool: ClassPool) -> TypeHierarchy:
    """Collect superclass/interface edges; unparsed supertypes become phantoms."""
    h = TypeHierarchy(pool=pool)
    subtypes: dict[str, list[str]] = defaultdict(list)
    for cls in pool:
        name = cls.internal_name
        h.superclass[name] = cls.super_name
        h.interfaces[name] = tuple(cls.interfaces)
        h.is_interface[name] = cls.is_interface
        h.concrete[name] = not (cls.access_flags & (ACC_ABSTRACT | ACC_INTERFACE))
        if cls.super_name is not None:
            subtypes[cls.super_name].append(name)
        for iface in cls.interfaces:
            subtypes[iface].append(name)
    for cls in pool:
        for parent in [cls.super_name, *cls.interfaces]:
            if parent is not None and parent not in pool:
                h.phantoms.add(parent)
    for phantom in h.phantoms:
        h.concrete[phantom] = True
    h.subtypes = {k: sorted(v) for k, v in subtypes.items()}
    _check_acyclic(h)
    return h


def _check_acyclic(h: TypeHierarchy) -> None:
    done: set[str] = set()
    for start in h.superclass:
        path: list[str] = []
        on_path: set[str] = set()
        cur: Optional[str] = start
        while cur is not None and cur in h.superclass and cur not in done:
            if cur in on_path:
                cycle = path[path.index(cur):] + [cur]
                raise CyclicHierarchy(" -> ".join(c.replace("/", ".") for c in cycle))
            on_path.add(cur)
            path.append(cur)
            cur = h.superclass[cur]
        done.update(path)


@dataclass(frozen=True)
class CallSite:
    caller: MethodId
    offset: int
    kind: Dispatch
    declared: MethodId
    receiver: Any  # Provenance, None for static and dynamic sites
    targets: frozenset
    line: Optional[int] = None

    @property
    def has_unknown(self) -> bool:
        return UNKNOWN in self.targets

    def sorted_targets(self) -> list[MethodId]:
        return sorted(t for t in self.targets if t is not UNKNOWN)


def resolve(kind: Dispatch, declared: MethodId, h: TypeHierarchy) -> frozenset:
    """CHA resolution of one call instruction."""
    if kind is Dispatch.DYNAMIC:
        return frozenset([UNKNOWN])
    if kind in (Dispatch.STATIC, Dispatch.SPECIAL):
        return frozenset([h.lookup(declared.owner, declared.name, declared.descriptor)])
    owner = declared.owner
    if not h.is_parsed(owner):
        return frozenset([UNKNOWN])
    targets: set = set()
    for cls_name in h.cone(owner):
        if not h.concrete.get(cls_name, False):
            continue
        t = h.lookup(cls_name, declared.name, declared.descriptor)
        if t is UNKNOWN:
            targets.add(UNKNOWN)
        elif not h.is_parsed(t.owner):
            # inherited from a phantom: its definition is invisible to us
            targets.add(UNKNOWN)
        else:
            targets.add(t)
    if not targets:
        targets.add(UNKNOWN)
    return frozenset(targets)


def resolve_call(site: CallSite, h: TypeHierarchy) -> frozenset:
    return resolve(site.kind, site.declared, h)


@dataclass
class CallGraph:
    nodes: set[MethodId]
    edges: dict[MethodId, list[CallSite]]
    hierarchy: TypeHierarchy
    pool: ClassPool

    def sites(self) -> Iterator[CallSite]:
        for caller in sorted(self.edges):
            yield from self.edges[caller]

    def callers_of(self) -> dict[MethodId, list[CallSite]]:
        """Reverse index from target to the call sites that may reach it."""
        rev: dict[MethodId, list[CallSite]] = defaultdict(list)
        for site in self.sites():
            for t in site.targets:
                if t is not UNKNOWN:
                    rev[t].append(site)
        return rev


ReceiverFn = Callable[[MethodModel], dict[int, Any]]


def _sites_for(m: MethodModel, h: TypeHierarchy, receivers: ReceiverFn) -> list[CallSite]:
    invokes = [ins for ins in m.instructions if ins.opcode in _KIND_OF]
    if not invokes:
        return []
    provenance = receivers(m)
    out = []
    for ins in invokes:
        kind = _KIND_OF[ins.opcode]
        declared: MethodId = ins.operand
        out.append(CallSite(
            caller=m.id,
            offset=ins.offset,
            kind=kind,
            declared=declared,
            receiver=provenance.get(ins.offset),
            targets=resolve(kind, declared, h),
            line=m.line_at(ins.offset),
        ))
    return out


def build_call_graph(pool: ClassPool, h: TypeHierarchy, receivers: Optional[ReceiverFn] = None,
                     threads: int = 1) -> CallGraph:
    """One CallSite per invocation instruction, ordered by caller then offset."""
    if receivers is None:
        from .mockability import simulate_receivers

        receivers = simulate_receivers
    methods = [m for _, m in pool.methods() if m.instructions]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            site_lists = list(ex.map(lambda m: _sites_for(m, h, receivers), methods))
    else:
        site_lists = [_sites_for(m, h, receivers) for m in methods]
    nodes: set[MethodId] = {m.id for _, m in pool.methods()}
    edges: dict[MethodId, list[CallSite]] = {}
    for m, sites in zip(methods, site_lists):
        if sites:
            edges[m.id] = sites
        for s in sites:
            nodes.update(t for t in s.targets if t is not UNKNOWN)
            if s.kind is not Dispatch.DYNAMIC:
                nodes.add(s.declared)
    return CallGraph(nodes=nodes, edges=dict(sorted(edges.items())), hierarchy=h, pool=pool)


def invocation_count(pool: ClassPool) -> int:
    return sum(1 for _, m in pool.methods() for ins in m.instructions if ins.opcode in _KIND_OF)


def is_invoke(ins: Instruction) -> bool:
    return ins.opcode in _KIND_OF
