"""End-to-end analysis: inputs to classified methods and a report."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__
from .classfile import ClassPool, MethodId, Role, load_inputs, method_loc
from .classify import Classification, Kind, build_report, classify_method, module_of
from .hierarchy import CallGraph, TypeHierarchy, build_call_graph, build_hierarchy
from .knowledge import KnowledgeBase, default_knowledge_base
from .metrics import cyclomatic_complexity, detect_trivial
from .mockability import (
    Injectability,
    MockabilityResult,
    NonMockable,
    ProgramFacts,
    compute_nonmockable,
    explain_trace,
)
from .observability import ObservabilityContext, compute_all_effects, compute_nonobservable

logger = logging.getLogger(__name__)


@dataclass
class Analysis:
    pool: ClassPool
    hierarchy: TypeHierarchy
    facts: ProgramFacts
    graph: CallGraph
    mockability: MockabilityResult
    effects: dict[MethodId, set]
    non_observable: set[MethodId]
    classifications: dict[MethodId, Classification]
    records: list[dict]
    report: dict


def analyze_pool(pool: ClassPool, kb: Optional[KnowledgeBase] = None, *, threads: int = 1,
                 inputs: Optional[list[dict]] = None,
                 injectability_overrides: Optional[Mapping[tuple[str, str], Injectability]] = None) -> Analysis:
    kb = kb or default_knowledge_base()
    hierarchy = build_hierarchy(pool)
    facts = ProgramFacts(pool, kb.test_visibility, threads, injectability_overrides)
    graph = build_call_graph(pool, hierarchy, facts.receivers, threads)
    mock = compute_nonmockable(graph, kb, facts)
    ctx = ObservabilityContext(pool, graph, kb, facts)
    effects = compute_all_effects(ctx)
    non_observable = compute_nonobservable(pool, effects, ctx)

    classifications: dict[MethodId, Classification] = {}
    records = []
    for cls in pool:
        if cls.role is not Role.APPLICATION:
            continue
        module = module_of(cls)
        for m in cls.methods:
            trivial = detect_trivial(m) if m.instructions else None
            verdict = mock[m.id]
            c = classify_method(m, trivial, verdict, m.id in non_observable)
            classifications[m.id] = c
            records.append(_record(cls, m, c, module, mock, effects.get(m.id)))
    report = build_report(
        records,
        tool_version=__version__,
        inputs=inputs or [],
        kb_fingerprint=kb.fingerprint(),
        config={"mock_final_classes": kb.mock_final_classes, "mock_static_methods": kb.mock_static_methods,
                "test_visibility": kb.test_visibility},
        diagnostics=[{"kind": d.kind, "location": d.location, "message": d.message} for d in pool.diagnostics],
    )
    return Analysis(pool, hierarchy, facts, graph, mock, effects, non_observable, classifications,
                    report["methods"], report)


def _record(cls, m, c: Classification, module: str, mock: MockabilityResult, effects: Optional[set]) -> dict:
    first_line = min((line for _, line in m.line_table), default=None) if m.line_table else None
    record = {
        "id": str(m.id),
        "class": cls.internal_name.replace("/", "."),
        "package": cls.package,
        "module": module,
        "name": m.id.name,
        "descriptor": m.id.descriptor,
        "source_file": cls.source_file,
        "line": first_line,
        "classification": c.kind.value,
        "detail": c.detail,
        "reasons": list(c.reasons),
        "bucket": c.bucket,
        "loc": method_loc(m),
        "complexity": cyclomatic_complexity(m) if m.instructions else None,
        "observations": sorted(str(e) for e in effects) if effects is not None and c.kind is not Kind.EXCLUDED
        else [],
        "trace": None,
    }
    verdict = mock[m.id]
    if isinstance(verdict, NonMockable) and c.kind is not Kind.EXCLUDED:
        trace = explain_trace(m.id, mock)
        record["trace"] = {
            "category": trace.category.value,
            "chain": [{"method": str(h.method), "line": h.line, "receiver": h.receiver} for h in trace.hops],
            "non_injectable_fields": [str(f) for f in trace.non_injectable_fields],
        }
    return record


def analyze(app: Sequence[str | Path], deps: Sequence[str | Path] = (), kb: Optional[KnowledgeBase] = None, *,
            threads: int = 1) -> Analysis:
    """Load application and dependency inputs and run every analysis."""
    paths = [*app, *deps]
    roles = [Role.APPLICATION] * len(app) + [Role.DEPENDENCY] * len(deps)
    pool = load_inputs(paths, roles, threads=threads)
    inputs = [{"path": str(p), "role": r.value} for p, r in zip(paths, roles)]
    return analyze_pool(pool, kb, threads=threads, inputs=inputs)
