"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line; conftest prints them in the
terminal summary so a plain ``pytest -v`` run shows the whole table.
"""

import contextlib
import json
import random
import time

import oracles
import pytest
from conftest import CORPUS, GUAVA, REFACTOR_AFTER, REFACTOR_BEFORE
from test_metrics import HAND_LABELS
from test_treemap import CANVAS, _index, _overlap, _random_tree

from testmap.classfile import load_inputs, parse_class
from testmap.classify import BUCKETS, SCOPES, load_report
from testmap.cli import run
from testmap.knowledge import Category, Entry, MethodPattern, MustMock, default_knowledge_base
from testmap.metrics import cyclomatic_complexity, detect_trivial
from testmap.mockability import FieldRead, Injectability, compute_nonmockable
from testmap.pipeline import analyze, analyze_pool
from testmap.treemap import Mode, paint, render_map, squarify_layout

RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        RESULTS[number] = f"criterion {number}: FAIL - {title}: {type(exc).__name__}: {exc}".splitlines()[0]
        raise
    RESULTS[number] = f"criterion {number}: PASS - {title}" + (f" ({'; '.join(notes)})" if notes else "")


def _by_id(records):
    return {r["id"]: r for r in records}


# 1 -------------------------------------------------------------------------------------

def test_criterion_1_figure_fixtures():
    with criterion(1, "figure fixtures give the expected verdicts") as notes:
        start = time.perf_counter()
        a = analyze([CORPUS])
        elapsed = time.perf_counter() - start
        rec = _by_id(a.records)

        def verdict(mid):
            r = rec[mid]
            return r["classification"], tuple(r["reasons"])

        assert verdict("fig6.Product.addExpiryDate()V") == ("NotTestable", ("Time",))
        assert verdict("fig6.Product.isExpired()Z") == ("NotTestable", ("Time",))
        assert verdict("fig7.Product.addExpiryDate()V") == ("Testable", ())
        assert verdict("fig7.Product.isExpired()Z") == ("Testable", ())

        send9 = rec["fig9.App.send(Lfig9/Message;)V"]
        assert verdict(send9["id"]) == ("NotTestable", ("Network", "Observability"))
        assert "fig9.App.client" in send9["trace"]["non_injectable_fields"]

        send10 = rec["fig10.App.send(Lfig10/Message;)V"]
        assert verdict(send10["id"]) == ("Testable", ())
        assert any(o.startswith("MockableDependencyCall(") for o in send10["observations"])

        mail = rec["mail.MailService.testConnection()V"]
        assert mail["trace"]["category"] == "FileSystem"
        assert len(mail["trace"]["chain"]) >= 3
        assert elapsed < 2.0, f"{elapsed:.2f}s"
        notes.append(f"{elapsed:.2f}s, mail chain {len(mail['trace']['chain'])} hops")


# 2 -------------------------------------------------------------------------------------

def _world(pool, overrides=None):
    a = analyze_pool(pool, injectability_overrides=overrides)
    return a.graph, a.facts, set(a.mockability.nonmockable())


def _random_must_mock(rng, names):
    owner, name = rng.choice(names)
    owner = rng.choice([owner, owner.rsplit(".", 1)[0] + ".*", "*"])
    name = rng.choice([name, "*"])
    return Entry(MethodPattern(owner, name), MustMock(rng.choice(list(Category))))


def _kb_monotone(graph, facts, base, runs, seed):
    kb = default_knowledge_base()
    names = sorted({(s.declared.owner.replace("/", "."), s.declared.name) for s in graph.sites()})
    rng = random.Random(seed)
    for _ in range(runs):
        extra = [_random_must_mock(rng, names) for _ in range(rng.randint(1, 3))]
        extended = set(compute_nonmockable(graph, kb.appended(*extra), facts).nonmockable())
        assert base <= extended, extra


def _cut_candidates(graph, nonmockable):
    """Non-injectable receiver fields at call sites of NonMockable callers."""
    keys = set()
    for site in graph.sites():
        recv = site.receiver
        if site.caller in nonmockable and isinstance(recv, FieldRead) \
                and recv.injectability is Injectability.NON_INJECTABLE:
            keys.add((recv.field.owner, recv.field.name))
    return sorted(keys)


def _cut_law(pool, base, keys):
    shrank = 0
    for key in keys:
        _, _, cut = _world(pool, {key: Injectability.INJECTABLE})
        assert cut <= base, key
        shrank += cut < base
    return shrank


def test_criterion_2_under_approximation(corpus_pool):
    with criterion(2, "kb monotonicity and injectability cut law") as notes:
        graph, facts, base = _world(corpus_pool)
        _kb_monotone(graph, facts, base, 200, seed=7)
        fields = sorted({(c.internal_name, f.name) for c in corpus_pool for f in c.fields
                         if f.descriptor[0] in "L["})
        shrank = _cut_law(corpus_pool, base, fields)
        assert shrank > 0
        notes.append(f"200 kb extensions, {len(fields)} fields cut, {shrank} cuts removed verdicts")


# 3 -------------------------------------------------------------------------------------

def test_criterion_3_thread_determinism(tmp_path):
    with criterion(3, "10 analyze runs give byte-identical report.json") as notes:
        outputs = []
        for i in range(10):
            threads = (1, 4, 8)[i % 3]
            out = tmp_path / f"run{i}"
            assert run(["analyze", "--app", str(CORPUS), "--out", str(out), "--threads", str(threads)]) == 0
            outputs.append((out / "report.json").read_bytes())
        assert len(set(outputs)) == 1
        notes.append(f"{len(outputs[0])} bytes each")


# 4 -------------------------------------------------------------------------------------

def test_criterion_4_triviality_and_complexity(corpus_pool):
    with criterion(4, "triviality table and CFG complexity oracle") as notes:
        methods = {str(m.id): m for _, m in corpus_pool.methods()}
        assert len(HAND_LABELS) >= 20
        wrong = {mid: (kind, detect_trivial(methods[mid]).kind) for mid, kind in HAND_LABELS.items()
                 if detect_trivial(methods[mid]).kind != kind}
        assert wrong == {}
        compared = 0
        for path in oracles.class_files(CORPUS):
            model = parse_class(path.read_bytes())
            for name, desc in oracles.all_methods(path):
                assert cyclomatic_complexity(model.method(name, desc)) == oracles.cfg_complexity(path, name, desc), \
                    (path.name, name, desc)
                compared += 1
        notes.append(f"{len(HAND_LABELS)} labeled methods, {compared} complexities")


# 5 -------------------------------------------------------------------------------------

def _check_conservation(report):
    checked = 0
    for scope in SCOPES:
        counted = [r for r in report["methods"] if r["classification"] != "Excluded"]
        segs = report["segmentation"][scope]
        assert sum(s["loc_total"] for s in segs) == sum(r["loc"] for r in counted)
        for seg in segs:
            assert sum(seg["buckets"][b]["loc"] for b in BUCKETS) == seg["loc_total"]
            if seg["loc_total"]:
                assert round(sum(seg["buckets"][b]["percent"] for b in BUCKETS), 1) == 100.0, seg
            checked += 1
    return checked


def test_criterion_5_segmentation_conservation(corpus_analysis):
    with criterion(5, "bucket LOC conservation and percentages sum to 100") as notes:
        notes.append(f"{_check_conservation(corpus_analysis.report)} scopes")


# 6 -------------------------------------------------------------------------------------

def test_criterion_6_diff_direction(tmp_path):
    with criterion(6, "refactor diff raises testable LOC and lists transitions") as notes:
        for name, src in (("before", REFACTOR_BEFORE), ("after", REFACTOR_AFTER)):
            assert run(["analyze", "--app", str(src), "--out", str(tmp_path / name)]) == 0
        out = tmp_path / "diff.json"
        assert run(["diff", str(tmp_path / "before" / "report.json"), str(tmp_path / "after" / "report.json"),
                    "--out", str(out)]) == 0
        d = json.loads(out.read_text())
        (repo,) = d["scopes"]["repo"]
        delta = repo["buckets"]["testable"]["loc_delta"]
        assert delta > 0
        moved = {t["id"]: (t["before"], t["after"]) for t in d["transitions"]}
        assert moved == {
            "shop.OrderService.archive(Ljava/lang/String;)V": ("NotTestable(FileSystem)", "Testable"),
            "shop.OrderService.placeOrder(Ljava/lang/String;II)Ljava/lang/String;": ("NotTestable(Random)",
                                                                                     "Testable"),
        }
        notes.append(f"testable +{delta} LOC, {len(moved)} transitions")


# 7 -------------------------------------------------------------------------------------

def _layout_ok(tree):
    boxes = squarify_layout(tree, CANVAS)
    by_id = {b.node_id: b for b in boxes}
    parent, nodes = _index(tree)
    canvas_area = CANVAS[2] * CANVAS[3]
    for b in boxes:
        if b.leaf:
            expected = nodes[b.node_id].weight / tree.weight * canvas_area
            assert abs(b.area - expected) <= 0.005 * expected
    siblings: dict[str, list] = {}
    for name, p in parent.items():
        siblings.setdefault(p, []).append(by_id[name])
    for p, kids in siblings.items():
        pw, ph = (CANVAS[2], CANVAS[3]) if p == "root" else (by_id[p].w, by_id[p].h)
        assert abs(sum(k.area for k in kids) - pw * ph) <= 1e-9 * pw * ph
        for i, a in enumerate(kids):
            for b in kids[i + 1:]:
                assert _overlap(a, b) <= 1e-6 * canvas_area


def test_criterion_7_treemap(corpus_analysis):
    import xml.etree.ElementTree as ET

    with criterion(7, "treemap layout, determinism and fixture colors") as notes:
        rng = random.Random(77)
        for _ in range(1000):
            _layout_ok(_random_tree(rng))
        records = corpus_analysis.records
        for mode in Mode:
            assert render_map(records, mode, coverage={}) == render_map(records, mode, coverage={})
        svg = render_map(records, Mode.TESTABILITY)
        ns = "{http://www.w3.org/2000/svg}"
        leaves = [r for r in ET.fromstring(svg).iter(f"{ns}rect") if r.get("class") == "leaf"]
        counted = [r for r in records if r["classification"] != "Excluded"]
        assert len(leaves) == len(counted)
        fills = {r.find(f"{ns}title").text.split(" | ")[0]: r.get("fill") for r in leaves}
        for r in counted:
            assert fills[r["id"]] == paint((r["classification"], tuple(r["reasons"])), Mode.TESTABILITY)
        notes.append(f"1000 random trees, {len(leaves)} fixture rects")


# 8 -------------------------------------------------------------------------------------

REQUIRED_RECORD_KEYS = {"id", "class", "package", "module", "classification", "reasons", "bucket", "loc",
                        "complexity", "observations", "trace"}


@pytest.mark.slow
def test_criterion_8_guava_scale(tmp_path):
    with criterion(8, "guava end to end") as notes:
        start = time.perf_counter()
        assert run(["analyze", "--app", str(GUAVA), "--out", str(tmp_path / "a"), "--threads", "4"]) == 0
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"{elapsed:.1f}s"

        raw = (tmp_path / "a" / "report.json").read_bytes()
        report = load_report(raw)
        classes = {r["class"] for r in report["methods"]}
        assert len(classes) >= 1000
        ids = [r["id"] for r in report["methods"]]
        assert ids == sorted(set(ids))
        for r in report["methods"]:
            assert REQUIRED_RECORD_KEYS <= r.keys(), r["id"]
            if r["classification"] == "NotTestable":
                assert r["reasons"]

        # invariant 3: thread count does not change the bytes
        assert run(["analyze", "--app", str(GUAVA), "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
        assert (tmp_path / "b" / "report.json").read_bytes() == raw

        # invariant 5: conservation in every scope
        scopes = _check_conservation(report)

        # invariant 2: a sample of kb extensions and field cuts
        pool = load_inputs([GUAVA])
        graph, facts, base = _world(pool)
        _kb_monotone(graph, facts, base, 10, seed=8)
        keys = _cut_candidates(graph, base)
        sample = random.Random(8).sample(keys, min(3, len(keys)))
        _cut_law(pool, base, sample)
        notes.append(f"{len(classes)} classes in {elapsed:.1f}s, {scopes} scopes, {len(sample)} cuts")
