import json
import re

import pytest
from conftest import CORPUS, REFACTOR_AFTER, REFACTOR_BEFORE

from testmap.classify import BUCKETS
from testmap.cli import run


@pytest.fixture(scope="module")
def corpus_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert run(["analyze", "--app", str(CORPUS), "--out", str(out)]) == 0
    return out / "report.json"


def test_analyze_writes_report_and_summary(tmp_path, capsys):
    assert run(["analyze", "--app", str(CORPUS), "--out", str(tmp_path), "--scope", "package"]) == 0
    text = capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    header = text.splitlines()[0]
    assert header.split() == ["scope", "LOC", "not-testable", "trivial", "testable"]
    for seg in report["segmentation"]["package"]:
        row = next(line for line in text.splitlines() if line.startswith(seg["id"] + " "))
        shown = [float(p) for p in re.findall(r"([\d.]+)%", row)]
        assert shown == [seg["buckets"][b]["percent"] for b in BUCKETS]


def test_missing_path_exit_2(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    assert run(["analyze", "--app", str(missing), "--out", str(tmp_path)]) == 2
    assert "nowhere" in capsys.readouterr().err


def test_no_app_exit_2(tmp_path):
    assert run(["analyze", "--out", str(tmp_path)]) == 2


def test_bad_kb_exit_2(tmp_path, capsys):
    kb = tmp_path / "kb.toml"
    kb.write_text('[[entry]]\nowner = "a"\nname = "b"\nclassification = "must-mock"\ncategory = "Quantum"\n')
    assert run(["analyze", "--app", str(CORPUS), "--kb", str(kb), "--out", str(tmp_path)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_kb_from_environment(tmp_path, monkeypatch):
    kb = tmp_path / "kb.toml"
    kb.write_text('[[entry]]\nowner = "java.time.*"\nname = "now"\nclassification = "neutral"\n')
    monkeypatch.setenv("TESTMAP_KB", str(kb))
    assert run(["analyze", "--app", str(CORPUS / "fig6"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    methods = {m["id"]: m for m in report["methods"]}
    assert methods["fig6.Product.isExpired()Z"]["classification"] == "Testable"


def test_internal_error_exit_1(monkeypatch, tmp_path):
    import testmap.pipeline

    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(testmap.pipeline, "analyze", boom)
    assert run(["analyze", "--app", str(CORPUS), "--out", str(tmp_path)]) == 1


def test_map_modes(corpus_report, tmp_path):
    assert run(["map", "--report", str(corpus_report), "--mode", "testability", "--mode", "complexity",
                "--out", str(tmp_path)]) == 0
    assert (tmp_path / "testability.svg").exists() and (tmp_path / "complexity.svg").exists()
    first = (tmp_path / "testability.svg").read_bytes()
    assert run(["map", "--report", str(corpus_report), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "testability.svg").read_bytes() == first


def test_map_coverage_requires_xml(corpus_report, tmp_path):
    assert run(["map", "--report", str(corpus_report), "--mode", "coverage", "--out", str(tmp_path)]) == 2


def test_map_coverage(corpus_report, tmp_path):
    cov = tmp_path / "jacoco.xml"
    cov.write_text('<report name="r"><package name="metrics"><class name="metrics/Sample">'
                   '<method name="abs" desc="(I)I"><counter type="LINE" missed="1" covered="1"/></method>'
                   '</class></package></report>')
    assert run(["map", "--report", str(corpus_report), "--mode", "coverage", "--coverage", str(cov),
                "--out", str(tmp_path)]) == 0
    assert "coverage 50.0%" in (tmp_path / "coverage.svg").read_text()


def test_map_malformed_coverage(corpus_report, tmp_path):
    cov = tmp_path / "bad.xml"
    cov.write_text("<report")
    assert run(["map", "--report", str(corpus_report), "--mode", "coverage", "--coverage", str(cov)]) == 2


def test_map_missing_report(tmp_path):
    assert run(["map", "--report", str(tmp_path / "none.json")]) == 2


def test_explain_mail_trace(corpus_report, capsys):
    assert run(["explain", "mail.MailService.testConnection", "--report", str(corpus_report)]) == 0
    out = capsys.readouterr().out
    assert "NotTestable (FileSystem)" in out
    hops = re.findall(r"^\s+at (\S+)", out, re.M)
    assert [h.split("(")[0] for h in hops] == ["mail.MailService.testConnection", "mail.MailService.getMailSender",
                                               "mail.MailService.loadProperties", "java.nio.file.Files.newInputStream"]
    assert "line 19" in out and "line 25" in out and "line 32" in out
    assert "non-injectable field: mail.MailService.javaMailSender" in out


def test_explain_from_app(capsys):
    assert run(["explain", "fig9.App.send(Lfig9/Message;)V", "--app", str(CORPUS)]) == 0
    out = capsys.readouterr().out
    assert "Network, Observability" in out
    assert "fig9.App.client" in out


def test_explain_testable(corpus_report, capsys):
    assert run(["explain", "fig10.App.send", "--report", str(corpus_report)]) == 0
    assert "no issues" in capsys.readouterr().out


def test_explain_unknown_method(corpus_report):
    assert run(["explain", "no.Such.method", "--report", str(corpus_report)]) == 2


def test_diff_identical(corpus_report, tmp_path, capsys):
    out = tmp_path / "d.json"
    assert run(["diff", str(corpus_report), str(corpus_report), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["transitions"] == []
    assert all(row["buckets"][b]["loc_delta"] == 0 for rows in d["scopes"].values() for row in rows
               for b in BUCKETS)


def test_diff_refactor(tmp_path, capsys):
    for name, src in (("before", REFACTOR_BEFORE), ("after", REFACTOR_AFTER)):
        assert run(["analyze", "--app", str(src), "--out", str(tmp_path / name)]) == 0
    capsys.readouterr()
    assert run(["diff", str(tmp_path / "before" / "report.json"), str(tmp_path / "after" / "report.json"),
                "--out", str(tmp_path / "diff.json")]) == 0
    out = capsys.readouterr().out
    assert re.search(r"testable: .* \(\+\d+ LOC\)", out)
    assert "shop.OrderService.archive(Ljava/lang/String;)V: NotTestable(FileSystem) -> Testable" in out


def test_diff_schema_mismatch(corpus_report, tmp_path):
    other = tmp_path / "v2.json"
    data = json.loads(corpus_report.read_text())
    data["schema_version"] = 2
    other.write_text(json.dumps(data))
    assert run(["diff", str(corpus_report), str(other), "--out", str(tmp_path / "d.json")]) == 2


def test_version(capsys):
    assert run(["--version"]) == 0
    assert "0.1.0" in capsys.readouterr().out
