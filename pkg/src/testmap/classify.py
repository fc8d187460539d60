"""Per-method classification, LOC segmentation, and report diffing."""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Any, Iterable, Mapping, Optional, Union

from .classfile import ClassModel, MethodModel
from .knowledge import Category
from .metrics import TrivialityVerdict, exclusion_reason
from .mockability import NonMockable

SCHEMA_VERSION = 1
OBSERVABILITY = "Observability"
# Canonical order of not-testable reasons: categories first, then observability.
REASON_ORDER = [c.value for c in Category] + [OBSERVABILITY]
BUCKETS = ("not_testable", "trivial", "testable")  # console order
SCOPES = ("repo", "module", "package")


class Kind(str, enum.Enum):
    EXCLUDED = "Excluded"
    TRIVIAL = "Trivial"
    TESTABLE = "Testable"
    NOT_TESTABLE = "NotTestable"


@dataclass(frozen=True)
class Classification:
    kind: Kind
    detail: Optional[str] = None  # exclusion reason or trivial kind
    reasons: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if (self.kind is Kind.NOT_TESTABLE) != bool(self.reasons):
            raise ValueError("reasons must be non-empty exactly for NotTestable")

    @property
    def bucket(self) -> Optional[str]:
        return {Kind.TRIVIAL: "trivial", Kind.TESTABLE: "testable", Kind.NOT_TESTABLE: "not_testable"}.get(self.kind)

    def __str__(self) -> str:
        if self.kind is Kind.NOT_TESTABLE:
            return f"NotTestable({', '.join(self.reasons)})"
        if self.detail:
            return f"{self.kind.value}({self.detail})"
        return self.kind.value


TESTABLE = Classification(Kind.TESTABLE)


def sort_reasons(reasons: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(reasons), key=REASON_ORDER.index))


def classify_method(m: MethodModel, trivial: Optional[TrivialityVerdict], verdict: Any,
                    non_observable: bool) -> Classification:
    """Excluded, then Trivial, then NotTestable (any reason), else Testable."""
    excluded = exclusion_reason(m)
    if excluded:
        return Classification(Kind.EXCLUDED, excluded)
    if trivial is not None and trivial.is_trivial:
        return Classification(Kind.TRIVIAL, trivial.kind.value)
    reasons = []
    if isinstance(verdict, NonMockable):
        reasons.append(verdict.category.value)
    if non_observable:
        reasons.append(OBSERVABILITY)
    if reasons:
        return Classification(Kind.NOT_TESTABLE, reasons=sort_reasons(reasons))
    return TESTABLE


def module_of(cls: ClassModel) -> str:
    """Module heuristic: the archive a class came from, else the first
    directory under the input root that is not part of the package path."""
    origin = cls.origin
    if origin is None:
        return "(unknown)"
    if origin.archive:
        return PurePosixPath(origin.archive).name
    entry = PurePosixPath(origin.entry)
    package_depth = cls.internal_name.count("/")
    prefix = entry.parts[: max(len(entry.parts) - 1 - package_depth, 0)]
    if prefix:
        return prefix[0]
    return PurePosixPath(origin.input.replace("\\", "/")).name or origin.input


def scope_of(record: Mapping[str, Any], scope: str) -> str:
    if scope == "repo":
        return "repository"
    if scope == "module":
        return record["module"]
    if scope == "package":
        return record["package"] or "(default)"
    raise ValueError(f"unknown scope {scope!r}")


# --- segmentation ---------------------------------------------------------------

def largest_remainder(values: Mapping[str, int], total: int, order: Iterable[str], decimals: int = 1
                      ) -> dict[str, float]:
    """Percentages that sum to exactly 100 at the given precision."""
    order = list(order)
    if total <= 0:
        return {k: 0.0 for k in order}
    unit = 10 ** decimals
    scale = 100 * unit
    floors = {}
    remainders = []
    for pos, k in enumerate(order):
        exact = values.get(k, 0) * scale
        q, r = divmod(exact, total)
        floors[k] = q
        remainders.append((-r, pos, k))
    missing = scale - sum(floors.values())
    for _, _, k in sorted(remainders)[:missing]:
        floors[k] += 1
    return {k: floors[k] / unit for k in order}


@dataclass
class Segmentation:
    scope: str  # repo | module | package
    scope_id: str
    loc_total: int
    loc: dict[str, int]
    percent: dict[str, float]
    reasons_loc: dict[str, int]  # not_testable LOC per reason (a method may count under several)
    methods: int

    def to_json(self) -> dict:
        return {
            "scope": self.scope,
            "id": self.scope_id,
            "loc_total": self.loc_total,
            "methods": self.methods,
            "buckets": {b: {"loc": self.loc[b], "percent": self.percent[b]} for b in BUCKETS},
            "not_testable_reasons": dict(sorted(self.reasons_loc.items(), key=lambda kv: REASON_ORDER.index(kv[0]))),
        }


def aggregate_segmentation(records: Iterable[Mapping[str, Any]], scope: str = "repo") -> list[Segmentation]:
    """LOC per bucket for each scope; Excluded methods are left out."""
    groups: dict[str, list[Mapping[str, Any]]] = defaultdict(list)
    for r in records:
        if r["classification"] == Kind.EXCLUDED.value:
            continue
        groups[scope_of(r, scope)].append(r)
    out = []
    for sid in sorted(groups):
        loc = {b: 0 for b in BUCKETS}
        reasons: dict[str, int] = defaultdict(int)
        for r in groups[sid]:
            loc[r["bucket"]] += r["loc"]
            for reason in r["reasons"]:
                reasons[reason] += r["loc"]
        total = sum(loc.values())
        out.append(Segmentation(scope, sid, total, loc, largest_remainder(loc, total, BUCKETS), dict(reasons),
                                len(groups[sid])))
    return out


# --- report -----------------------------------------------------------------------

class SchemaMismatch(Exception):
    pass


def build_report(records: list[dict], *, tool_version: str, inputs: list[dict], kb_fingerprint: str,
                 config: Mapping[str, Any], diagnostics: list[dict]) -> dict:
    records = sorted(records, key=lambda r: r["id"])
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "testmap", "version": tool_version},
        "inputs": inputs,
        "kb_fingerprint": kb_fingerprint,
        "config": dict(config),
        "methods": records,
        "segmentation": {s: [seg.to_json() for seg in aggregate_segmentation(records, s)] for s in SCOPES},
        "diagnostics": diagnostics,
    }


def dump_report(report: Mapping[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_report(source: Union[str, bytes, Mapping[str, Any]]) -> dict:
    report = json.loads(source) if isinstance(source, (str, bytes)) else dict(source)
    version = report.get("schema_version") if isinstance(report, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported report schema version {version!r} (expected {SCHEMA_VERSION})")
    return report


# --- diff ---------------------------------------------------------------------------

def _bucket_delta(before: Optional[Mapping], after: Optional[Mapping]) -> dict:
    out = {}
    for b in BUCKETS:
        lb = before["buckets"][b]["loc"] if before else 0
        la = after["buckets"][b]["loc"] if after else 0
        pb = before["buckets"][b]["percent"] if before else 0.0
        pa = after["buckets"][b]["percent"] if after else 0.0
        out[b] = {"loc_before": lb, "loc_after": la, "loc_delta": la - lb,
                  "percent_before": pb, "percent_after": pa, "percent_delta": round(pa - pb, 1)}
    return out


def _label(record: Mapping[str, Any]) -> str:
    if record["classification"] == Kind.NOT_TESTABLE.value:
        return f"NotTestable({', '.join(record['reasons'])})"
    return record["classification"]


def diff_reports(before: Mapping[str, Any], after: Mapping[str, Any]) -> dict:
    """Per-scope bucket deltas and per-method transitions (matched by method id)."""
    before = load_report(before)
    after = load_report(after)
    scopes = {}
    for scope in SCOPES:
        b_seg = {s["id"]: s for s in before["segmentation"][scope]}
        a_seg = {s["id"]: s for s in after["segmentation"][scope]}
        scopes[scope] = [{"id": sid, "buckets": _bucket_delta(b_seg.get(sid), a_seg.get(sid))}
                         for sid in sorted(set(b_seg) | set(a_seg))]
    b_methods = {m["id"]: m for m in before["methods"]}
    a_methods = {m["id"]: m for m in after["methods"]}
    transitions = []
    unchanged = 0
    for mid in sorted(set(b_methods) & set(a_methods)):
        lb, la = _label(b_methods[mid]), _label(a_methods[mid])
        if lb != la:
            transitions.append({"id": mid, "before": lb, "after": la})
        else:
            unchanged += 1
    return {
        "schema_version": SCHEMA_VERSION,
        "scopes": scopes,
        "transitions": transitions,
        "unchanged": unchanged,
        "removed": [{"id": mid, "classification": _label(b_methods[mid])}
                    for mid in sorted(set(b_methods) - set(a_methods))],
        "added": [{"id": mid, "classification": _label(a_methods[mid])}
                  for mid in sorted(set(a_methods) - set(b_methods))],
    }
