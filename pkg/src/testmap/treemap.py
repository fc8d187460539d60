"""Squarified treemaps of a report, rendered as SVG, plus coverage ingestion."""

from __future__ import annotations

import colorsys
import enum
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence, Union
from xml.sax.saxutils import escape

from .classfile import MethodId
from .classify import OBSERVABILITY, REASON_ORDER, Kind, scope_of
from .knowledge import Category


class DegenerateCanvas(ValueError):
    pass


class MalformedCoverage(ValueError):
    pass


class Mode(str, enum.Enum):
    TESTABILITY = "testability"
    COMPLEXITY = "complexity"
    COVERAGE = "coverage"


# --- tree -----------------------------------------------------------------------

@dataclass
class MapNode:
    name: str
    weight: float = 0.0
    children: list["MapNode"] = field(default_factory=list)
    payload: Optional[Mapping[str, Any]] = None  # report record, leaves only

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def total(self) -> float:
        if self.is_leaf:
            return self.weight
        return sum(c.total() for c in self.children)


def build_tree(records: Iterable[Mapping[str, Any]], scope: str = "module") -> MapNode:
    """scope -> class -> method; Excluded methods are not drawn. Weight = max(LOC, 1)."""
    root = MapNode("root")
    groups: dict[str, dict[str, list]] = {}
    for r in records:
        if r["classification"] == Kind.EXCLUDED.value:
            continue
        sid = scope_of(r, scope)
        groups.setdefault(sid, {}).setdefault(r["class"], []).append(r)
    for sid in sorted(groups):
        group = MapNode(sid)
        for cls in sorted(groups[sid]):
            cnode = MapNode(cls)
            for r in sorted(groups[sid][cls], key=lambda r: r["id"]):
                cnode.children.append(MapNode(r["id"], float(max(r["loc"], 1)), payload=r))
            group.children.append(cnode)
        root.children.append(group)
    if scope == "repo" and len(root.children) == 1:
        root.children = root.children[0].children
    for node in _walk(root):
        node.weight = node.total()
    return root


def _walk(node: MapNode) -> Iterable[MapNode]:
    yield node
    for c in node.children:
        yield from _walk(c)


# --- layout -------------------------------------------------------------------------

@dataclass(frozen=True)
class LayoutBox:
    node_id: str
    x: float
    y: float
    w: float
    h: float
    depth: int
    leaf: bool = False

    @property
    def area(self) -> float:
        return self.w * self.h


def _worst(row: Sequence[float], side: float) -> float:
    s = sum(row)
    if s <= 0 or side <= 0:
        return float("inf")
    hi, lo = max(row), min(row)
    return max(side * side * hi / (s * s), (s * s) / (side * side * lo))


def squarify(areas: Sequence[float], x: float, y: float, w: float, h: float
             ) -> list[tuple[float, float, float, float]]:
    """Place ``areas`` (already scaled to sum to w*h, sorted descending) in the rectangle."""
    rects: list[tuple[float, float, float, float]] = []
    i = 0
    n = len(areas)
    while i < n:
        side = min(w, h)
        row = [areas[i]]
        i += 1
        while i < n and _worst(row + [areas[i]], side) <= _worst(row, side):
            row.append(areas[i])
            i += 1
        s = sum(row)
        last_row = i >= n
        if w >= h:
            # a column at the left edge, stacked top to bottom
            col_w = w if last_row else (s / h if h > 0 else 0.0)
            cy = y
            for k, a in enumerate(row):
                rh = (y + h - cy) if k == len(row) - 1 else (a / col_w if col_w > 0 else 0.0)
                rects.append((x, cy, col_w, rh))
                cy += rh
            x, w = x + col_w, w - col_w
        else:
            row_h = h if last_row else (s / w if w > 0 else 0.0)
            cx = x
            for k, a in enumerate(row):
                rw = (x + w - cx) if k == len(row) - 1 else (a / row_h if row_h > 0 else 0.0)
                rects.append((cx, y, rw, row_h))
                cx += rw
            y, h = y + row_h, h - row_h
    return rects


def squarify_layout(tree: MapNode, canvas: tuple[float, float, float, float]) -> list[LayoutBox]:
    """Boxes for every node below the root, parents before children."""
    x, y, w, h = canvas
    if not (w > 0 and h > 0):
        raise DegenerateCanvas(f"canvas {w}x{h} has no area")
    boxes: list[LayoutBox] = []

    def place(node: MapNode, bx: float, by: float, bw: float, bh: float, depth: int) -> None:
        kids = sorted(node.children, key=lambda c: (-c.weight, c.name))
        kids = [k for k in kids if k.weight > 0]
        if not kids:
            return
        total = sum(k.weight for k in kids)
        scale = bw * bh / total
        rects = squarify([k.weight * scale for k in kids], bx, by, bw, bh)
        for kid, (kx, ky, kw, kh) in zip(kids, rects):
            boxes.append(LayoutBox(kid.name, kx, ky, kw, kh, depth, kid.is_leaf))
            place(kid, kx, ky, kw, kh, depth + 1)

    place(tree, x, y, w, h, 1)
    return boxes


# --- paint ----------------------------------------------------------------------------

TESTABLE_COLOR = "#1a9850"
TRIVIAL_COLOR = "#fee08b"
UNKNOWN_COLOR = "#bdbdbd"
# One red-family shade per reason; hues stay within about 30 degrees of red and
# lightness varies so neighbouring reasons stay distinguishable without hue.
REASON_COLORS: dict[str, str] = {
    Category.FILE_SYSTEM.value: "#67000d",
    Category.NETWORK.value: "#a50f15",
    Category.TIME.value: "#d7301f",
    Category.RANDOM.value: "#ef6548",
    Category.THREADING.value: "#fc9272",
    Category.PROCESS_ENV.value: "#980043",
    Category.CONSOLE.value: "#e34a6f",
    Category.OTHER_NON_DETERMINISM.value: "#cb181d",
    OBSERVABILITY: "#fdbb84",
}
_RAMP = [(0.0, (0x1A, 0x98, 0x50)), (0.5, (0xFF, 0xFF, 0xBF)), (1.0, (0xD7, 0x30, 0x27))]
DEFAULT_MAX_COMPLEXITY = 15


def _hex(rgb: Sequence[float]) -> str:
    return "#" + "".join(f"{max(0, min(255, round(c))):02x}" for c in rgb)


def ramp(t: float) -> str:
    """Green (0) through yellow (0.5) to red (1)."""
    t = max(0.0, min(1.0, t))
    for (t0, c0), (t1, c1) in zip(_RAMP, _RAMP[1:]):
        if t <= t1:
            f = (t - t0) / (t1 - t0)
            return _hex([a + (b - a) * f for a, b in zip(c0, c1)])
    return _hex(_RAMP[-1][1])  # pragma: no cover


def paint(key: Any, mode: Union[Mode, str], max_complexity: int = DEFAULT_MAX_COMPLEXITY) -> str:
    """Fill color for a leaf.

    Testability keys are (classification, reasons) pairs, complexity keys are
    integers, coverage keys are ratios in [0, 1] or None for unknown.
    """
    mode = Mode(mode)
    if mode is Mode.TESTABILITY:
        kind, reasons = key
        kind = Kind(kind)
        if kind is Kind.TESTABLE:
            return TESTABLE_COLOR
        if kind is Kind.TRIVIAL:
            return TRIVIAL_COLOR
        if kind is Kind.NOT_TESTABLE and reasons:
            first = sorted(reasons, key=REASON_ORDER.index)[0]
            return REASON_COLORS[first]
        return UNKNOWN_COLOR
    if mode is Mode.COMPLEXITY:
        if key is None:
            return UNKNOWN_COLOR
        top = max(max_complexity, 2)
        return ramp((min(max(int(key), 1), top) - 1) / (top - 1))
    if key is None:
        return UNKNOWN_COLOR
    return ramp(1.0 - float(key))


def hue_degrees(color: str) -> float:
    r, g, b = (int(color[i:i + 2], 16) / 255 for i in (1, 3, 5))
    return colorsys.rgb_to_hls(r, g, b)[0] * 360


def leaf_key(record: Mapping[str, Any], mode: Union[Mode, str], coverage: Optional[Mapping[str, float]] = None):
    mode = Mode(mode)
    if mode is Mode.TESTABILITY:
        return record["classification"], tuple(record["reasons"])
    if mode is Mode.COMPLEXITY:
        return record["complexity"]
    return (coverage or {}).get(record["id"])


# --- SVG --------------------------------------------------------------------------------

def _fmt(v: float) -> str:
    text = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def legend_entries(mode: Union[Mode, str], max_complexity: int = DEFAULT_MAX_COMPLEXITY) -> list[tuple[str, str]]:
    mode = Mode(mode)
    if mode is Mode.TESTABILITY:
        items = [("Testable", TESTABLE_COLOR), ("Trivial", TRIVIAL_COLOR)]
        items += [(f"Not testable: {r}", REASON_COLORS[r]) for r in REASON_ORDER]
        return items
    if mode is Mode.COMPLEXITY:
        steps = sorted({1, max(1, max_complexity // 3), max(1, 2 * max_complexity // 3), max_complexity})
        return [(f"complexity {s}" + ("+" if s == max_complexity else ""), paint(s, mode, max_complexity))
                for s in steps]
    return [(f"{int(r * 100)}% lines covered", paint(r, mode)) for r in (1.0, 0.75, 0.5, 0.25, 0.0)] + [
        ("no coverage data", UNKNOWN_COLOR)]


def _tooltip(record: Mapping[str, Any], mode: Mode, key: Any) -> str:
    parts = [record["id"], record["classification"]]
    if record.get("reasons"):
        parts.append("reasons: " + ", ".join(record["reasons"]))
    if mode is Mode.COMPLEXITY:
        parts.append(f"complexity {key}")
    elif mode is Mode.COVERAGE:
        parts.append("coverage unknown" if key is None else f"coverage {key * 100:.1f}%")
    parts.append(f"{record['loc']} LOC")
    return " | ".join(parts)


def render_svg(layout: Sequence[LayoutBox], paints: Mapping[str, str], legend: bool = True, *,
               records: Optional[Mapping[str, Mapping[str, Any]]] = None, mode: Union[Mode, str] = Mode.TESTABILITY,
               keys: Optional[Mapping[str, Any]] = None, width: float = 1200, height: float = 800,
               title: str = "", max_complexity: int = DEFAULT_MAX_COMPLEXITY) -> bytes:
    """Standalone SVG 1.1 document; identical inputs give identical bytes."""
    mode = Mode(mode)
    entries = legend_entries(mode, max_complexity) if legend else []
    legend_h = (20 + 18 * len(entries)) if entries else 0
    total_h = height + legend_h
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(width)}" height="{_fmt(total_h)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(total_h)}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect class="background" x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" fill="#ffffff"/>')
    groups = []
    for box in layout:
        if box.leaf:
            fill = paints.get(box.node_id, UNKNOWN_COLOR)
            record = (records or {}).get(box.node_id)
            tip = _tooltip(record, mode, (keys or {}).get(box.node_id)) if record else box.node_id
            out.append(
                f'<rect class="leaf" x="{_fmt(box.x)}" y="{_fmt(box.y)}" width="{_fmt(box.w)}" '
                f'height="{_fmt(box.h)}" fill="{fill}" stroke="#ffffff" stroke-width="0.5">'
                f"<title>{escape(tip)}</title></rect>"
            )
        else:
            groups.append(box)
    for box in groups:
        width_px = max(0.5, 3.0 - box.depth)
        out.append(
            f'<rect class="group" x="{_fmt(box.x)}" y="{_fmt(box.y)}" width="{_fmt(box.w)}" '
            f'height="{_fmt(box.h)}" fill="none" stroke="#333333" stroke-width="{_fmt(width_px)}">'
            f"<title>{escape(box.node_id)}</title></rect>"
        )
    if entries:
        out.append(f'<g class="legend" transform="translate(10,{_fmt(height + 10)})">')
        for i, (label, color) in enumerate(entries):
            y = 18 * i
            out.append(f'<rect x="0" y="{y}" width="12" height="12" fill="{color}" stroke="#333333" '
                       f'stroke-width="0.5"/>')
            out.append(f'<text x="18" y="{y + 10}" font-family="sans-serif" font-size="11">{escape(label)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


def render_map(records: Sequence[Mapping[str, Any]], mode: Union[Mode, str], *, scope: str = "module",
               coverage: Optional[Mapping[str, float]] = None, width: float = 1200, height: float = 800,
               legend: bool = True, max_complexity: int = DEFAULT_MAX_COMPLEXITY) -> bytes:
    """Report records to an SVG map in one call."""
    mode = Mode(mode)
    tree = build_tree(records, scope)
    layout = squarify_layout(tree, (0, 0, width, height)) if tree.children else []
    by_id = {r["id"]: r for r in records}
    keys = {rid: leaf_key(r, mode, coverage) for rid, r in by_id.items()}
    paints = {rid: paint(k, mode, max_complexity) for rid, k in keys.items()}
    return render_svg(layout, paints, legend, records=by_id, mode=mode, keys=keys, width=width, height=height,
                      title=f"{mode.value} map", max_complexity=max_complexity)


# --- coverage ---------------------------------------------------------------------------

def ingest_coverage(xml: Union[str, bytes]) -> dict[str, float]:
    """Covered-line ratio per method id from a JaCoCo-style XML report.

    Methods without a LINE counter, or with zero lines, are left out (unknown).
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedCoverage(f"coverage XML does not parse: {exc}") from exc
    if root.tag != "report":
        raise MalformedCoverage(f"expected a <report> root element, found <{root.tag}>")
    ratios: dict[str, float] = {}
    for cls in root.iter("class"):
        owner = cls.get("name")
        if not owner:
            raise MalformedCoverage("<class> without a name attribute")
        for method in cls.findall("method"):
            name, desc = method.get("name"), method.get("desc")
            if not name or not desc:
                raise MalformedCoverage(f"<method> in {owner} without name/desc")
            for counter in method.findall("counter"):
                if counter.get("type") != "LINE":
                    continue
                try:
                    missed = int(counter.get("missed", ""))
                    covered = int(counter.get("covered", ""))
                except ValueError as exc:
                    raise MalformedCoverage(f"bad LINE counter on {owner}.{name}{desc}") from exc
                if missed < 0 or covered < 0:
                    raise MalformedCoverage(f"negative LINE counter on {owner}.{name}{desc}")
                if covered + missed > 0:
                    ratios[str(MethodId(owner, name, desc))] = covered / (covered + missed)
    return ratios
