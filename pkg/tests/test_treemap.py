import colorsys
import random
import xml.etree.ElementTree as ET

import pytest

from testmap.classify import REASON_ORDER
from testmap.knowledge import Category
from testmap.treemap import (
    REASON_COLORS,
    TESTABLE_COLOR,
    TRIVIAL_COLOR,
    UNKNOWN_COLOR,
    DegenerateCanvas,
    MalformedCoverage,
    MapNode,
    Mode,
    build_tree,
    hue_degrees,
    ingest_coverage,
    paint,
    ramp,
    render_map,
    render_svg,
    squarify_layout,
)

SVG = "{http://www.w3.org/2000/svg}"
CANVAS = (0.0, 0.0, 1200.0, 800.0)


def _leaves(weights):
    return MapNode("root", children=[MapNode(f"n{i}", float(w)) for i, w in enumerate(weights)])


def _finish(node):
    if node.children:
        node.weight = sum(_finish(c) for c in node.children)
    return node.weight


def _random_tree(rng):
    budget = [rng.randint(1, 200)]
    counter = [0]

    def make(depth):
        counter[0] += 1
        name = f"n{counter[0]}"
        if depth == 3 or budget[0] <= 1 or rng.random() < 0.4:
            budget[0] -= 1
            return MapNode(name, rng.choice([1.0, float(rng.randint(1, 500)), rng.uniform(0.5, 50.0)]))
        kids = [make(depth + 1) for _ in range(rng.randint(1, max(1, min(12, budget[0]))))]
        return MapNode(name, children=kids)

    root = MapNode("root", children=[make(1) for _ in range(rng.randint(1, 6))])
    _finish(root)
    return root


def _index(tree):
    parent, nodes = {}, {}

    def walk(n):
        nodes[n.name] = n
        for c in n.children:
            parent[c.name] = n.name
            walk(c)
    walk(tree)
    return parent, nodes


def _overlap(a, b):
    w = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    h = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    return max(w, 0) * max(h, 0)


def test_layout_properties_on_1000_random_trees():
    rng = random.Random(2024)
    for trial in range(1000):
        tree = _random_tree(rng)
        boxes = squarify_layout(tree, CANVAS)
        by_id = {b.node_id: b for b in boxes}
        parent, nodes = _index(tree)
        total = tree.weight
        canvas_area = CANVAS[2] * CANVAS[3]
        assert len(boxes) == len(nodes) - 1
        for b in boxes:
            if b.leaf:
                expected = nodes[b.node_id].weight / total * canvas_area
                assert abs(b.area - expected) <= 0.005 * expected, trial
        siblings = {}
        for name, p in parent.items():
            siblings.setdefault(p, []).append(by_id[name])
        for p, kids in siblings.items():
            px, py, pw, ph = CANVAS if p == "root" else (by_id[p].x, by_id[p].y, by_id[p].w, by_id[p].h)
            # exact tiling: areas add up and every child stays inside its parent
            assert abs(sum(k.area for k in kids) - pw * ph) <= 1e-9 * pw * ph
            for k in kids:
                assert k.x >= px - 1e-9 and k.y >= py - 1e-9
                assert k.x + k.w <= px + pw + 1e-6 and k.y + k.h <= py + ph + 1e-6
            for i, a in enumerate(kids):
                for b in kids[i + 1:]:
                    assert _overlap(a, b) <= 1e-6 * canvas_area, trial


def test_single_leaf_fills_canvas():
    (box,) = squarify_layout(_leaves([5]), (0, 0, 3, 2))
    assert (box.x, box.y, box.w, box.h) == (0, 0, 3, 2)


def test_two_equal_leaves_make_squares():
    boxes = squarify_layout(_leaves([1, 1]), (0, 0, 2, 1))
    assert sorted((b.x, b.y, b.w, b.h) for b in boxes) == [(0, 0, 1, 1), (1, 0, 1, 1)]


def test_classic_weights_areas_and_aspect():
    weights = [6, 6, 4, 3, 2, 2, 1]
    boxes = squarify_layout(_leaves(weights), (0, 0, 6, 4))
    areas = {b.node_id: b.area for b in boxes}
    for i, w in enumerate(weights):
        assert abs(areas[f"n{i}"] - w) <= 0.005 * w
    assert max(max(b.w / b.h, b.h / b.w) for b in boxes) <= 3


def test_degenerate_canvas():
    with pytest.raises(DegenerateCanvas):
        squarify_layout(_leaves([1]), (0, 0, 0, 10))


def test_ties_broken_by_name():
    boxes = squarify_layout(_leaves([2, 2, 2]), (0, 0, 3, 1))
    assert [b.node_id for b in boxes] == ["n0", "n1", "n2"]


# --- paint -------------------------------------------------------------------------

def _family_hue(color):
    r, g, b = (int(color[i:i + 2], 16) / 255 for i in (1, 3, 5))
    return colorsys.rgb_to_hls(r, g, b)[0] * 360


def test_testability_palette_families():
    assert paint(("Trivial", ()), Mode.TESTABILITY) == TRIVIAL_COLOR
    assert 40 <= _family_hue(TRIVIAL_COLOR) <= 65  # yellow
    assert 90 <= _family_hue(TESTABLE_COLOR) <= 150  # green
    for reason in REASON_ORDER:
        hue = hue_degrees(paint(("NotTestable", (reason,)), Mode.TESTABILITY))
        assert hue >= 330 or hue <= 30, reason  # red family


def test_reasons_have_distinct_shades():
    colors = [paint(("NotTestable", (r,)), Mode.TESTABILITY) for r in REASON_ORDER]
    assert len(set(colors)) == len(colors)
    assert paint(("NotTestable", ("Time",)), "testability") != paint(("NotTestable", ("Network",)), "testability")


def test_multiple_reasons_use_first_in_canonical_order():
    assert paint(("NotTestable", ("Observability", "Network")), Mode.TESTABILITY) == REASON_COLORS["Network"]


def test_complexity_ramp_endpoints():
    assert paint(1, Mode.COMPLEXITY) == ramp(0.0) == TESTABLE_COLOR
    assert paint(15, Mode.COMPLEXITY) == paint(99, Mode.COMPLEXITY) == ramp(1.0)


def test_coverage_paint():
    assert paint(None, Mode.COVERAGE) == UNKNOWN_COLOR
    assert paint(1.0, Mode.COVERAGE) == ramp(0.0)


def test_every_category_has_a_color():
    assert set(REASON_COLORS) == {c.value for c in Category} | {"Observability"}


# --- SVG ---------------------------------------------------------------------------

def _rects(svg, cls):
    root = ET.fromstring(svg)
    return [r for r in root.iter(f"{SVG}rect") if r.get("class") == cls]


def test_fixture_map_one_rect_per_method(corpus_analysis):
    records = corpus_analysis.records
    svg = render_map(records, Mode.TESTABILITY)
    leaves = _rects(svg, "leaf")
    counted = [r for r in records if r["classification"] != "Excluded"]
    assert len(leaves) == len(counted)
    by_title = {r.find(f"{SVG}title").text.split(" | ")[0]: r.get("fill") for r in leaves}
    for r in counted:
        expected = paint((r["classification"], tuple(r["reasons"])), Mode.TESTABILITY)
        assert by_title[r["id"]] == expected


def test_tooltip_contents(corpus_analysis):
    svg = render_map(corpus_analysis.records, Mode.TESTABILITY).decode()
    assert "fig9.App.send(Lfig9/Message;)V | NotTestable | reasons: Network, Observability | 4 LOC" in svg


@pytest.mark.parametrize("mode", list(Mode))
def test_rendering_is_byte_deterministic(corpus_analysis, mode):
    a = render_map(corpus_analysis.records, mode, coverage={})
    b = render_map([dict(r) for r in corpus_analysis.records], mode, coverage={})
    assert a == b
    ET.fromstring(a)


def test_empty_tree_background_and_legend():
    svg = render_svg([], {}, True)
    root = ET.fromstring(svg)
    assert _rects(svg, "background") and not _rects(svg, "leaf") and not _rects(svg, "group")
    assert any(g.get("class") == "legend" for g in root.iter(f"{SVG}g"))


def test_no_legend():
    svg = render_svg([], {}, False)
    assert b'class="legend"' not in svg


def test_special_characters_escaped():
    rec = {"id": "a.B.<init>()V", "class": "a.B", "classification": "Testable", "reasons": [], "loc": 1,
           "module": "m", "package": "a", "complexity": 1, "bucket": "testable"}
    svg = render_map([rec], Mode.TESTABILITY)
    ET.fromstring(svg)
    assert b"&lt;init&gt;" in svg


def test_build_tree_skips_excluded_and_clamps(corpus_analysis):
    tree = build_tree(corpus_analysis.records, "package")
    leaves = [l for g in tree.children for c in g.children for l in c.children]
    assert all(l.weight >= 1 for l in leaves)
    assert len(leaves) == sum(1 for r in corpus_analysis.records if r["classification"] != "Excluded")


# --- coverage ----------------------------------------------------------------------

SAMPLE = """<?xml version="1.0" encoding="UTF-8"?>
<report name="sample">
  <package name="p">
    <class name="p/A" sourcefilename="A.java">
      <method name="a" desc="()V" line="3">
        <counter type="INSTRUCTION" missed="1" covered="9"/>
        <counter type="LINE" missed="5" covered="5"/>
      </method>
      <method name="b" desc="(I)I" line="7">
        <counter type="LINE" missed="1" covered="3"/>
      </method>
      <method name="c" desc="()Ljava/lang/String;" line="9">
        <counter type="LINE" missed="3" covered="0"/>
      </method>
    </class>
  </package>
</report>
"""


def test_coverage_sample_document():
    assert ingest_coverage(SAMPLE) == {"p.A.a()V": 0.5, "p.A.b(I)I": 0.75, "p.A.c()Ljava/lang/String;": 0.0}


def test_empty_coverage_report():
    assert ingest_coverage("<report name='x'/>") == {}


@pytest.mark.parametrize("doc", ["<report", "<coverage/>",
                                 "<report><class name='a/B'><method name='m'/></class></report>",
                                 "<report><class name='a/B'><method name='m' desc='()V'>"
                                 "<counter type='LINE' missed='x' covered='1'/></method></class></report>"])
def test_malformed_coverage(doc):
    with pytest.raises(MalformedCoverage):
        ingest_coverage(doc)


def test_coverage_map_colors(corpus_analysis):
    rid = "metrics.Sample.abs(I)I"
    svg = render_map(corpus_analysis.records, Mode.COVERAGE, coverage={rid: 1.0}).decode()
    leaves = _rects(svg.encode(), "leaf")
    colors = {r.find(f"{SVG}title").text.split(" | ")[0]: r.get("fill") for r in leaves}
    assert colors[rid] == ramp(0.0)
    assert colors["metrics.Sample.max3(III)I"] == UNKNOWN_COLOR
