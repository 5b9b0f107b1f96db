from __future__ import annotations

import json
import subprocess
import sys

import pytest

from structriage.cli import main, read_run
from structriage.doc_model import loads_tree
from structriage.eval.report import EvalReport


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_ingest_html(capsys, fixtures):
    code, out, err = run(capsys, "ingest", fixtures / "report.html", "--format", "html")
    assert code == 0
    tree = loads_tree(out)
    assert [c.title for c in tree.children] == ["Overview", "Outlook"]
    assert err.startswith("3 sections, 1 table, 0 figures, 5 paragraphs, 2 pages")


def test_ingest_interchange_to_file(capsys, fixtures, tmp_path, minidoc_tree):
    out_path = tmp_path / "tree.json"
    code, out, _ = run(capsys, "ingest", fixtures / "minidoc.interchange.json", "--out", out_path)
    assert code == 0 and "3 sections, 1 table, 1 figure" in out
    assert loads_tree(out_path.read_text()) == minidoc_tree


def test_ingest_missing_file(capsys, tmp_path):
    missing = tmp_path / "nope.json"
    code, _, err = run(capsys, "ingest", missing)
    assert code == 1 and str(missing) in err


def test_ingest_pdf_needs_service(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("STRUCTRIAGE_EXTRACT_URL", raising=False)
    pdf = tmp_path / "a.pdf"
    pdf.write_bytes(b"%PDF")
    code, _, err = run(capsys, "ingest", pdf, "--format", "pdf")
    assert code == 2
    assert "unsupported format; use an extraction service (--extract-endpoint)" in err


def test_ingest_pdf_unreachable_service(capsys, tmp_path):
    pdf = tmp_path / "a.pdf"
    pdf.write_bytes(b"%PDF")
    code, _, err = run(capsys, "ingest", pdf, "--extract-endpoint", "http://127.0.0.1:9/extract")
    assert code == 3 and "extraction service" in err


def test_ask_scripted_is_deterministic(capsys, fixtures):
    argv = ["ask", fixtures / "minidoc.json", "--question", "Which region led?",
            "--provider", f"scripted:{fixtures / 'demo' / 'ask_script.json'}"]
    first = run(capsys, *argv)
    second = run(capsys, *argv)
    assert first == second
    assert first[0] == 0 and first[1] == "North had the highest revenue at 2.1 million dollars.\n"


def test_ask_trace(capsys, fixtures):
    code, out, _ = run(capsys, "ask", fixtures / "minidoc.json", "--question", "q", "--trace",
                       "--provider", f"scripted:{fixtures / 'demo' / 'ask_script.json'}")
    record = json.loads(out)
    assert code == 0 and record["trace"][0]["function"] == "fetch_table"
    assert record["retrieved_tokens"] == record["trace"][0]["token_count"] > 0


def test_ask_unknown_strategy(capsys, fixtures):
    with pytest.raises(SystemExit) as exc:
        main(["ask", str(fixtures / "minidoc.json"), "--question", "q", "--strategy", "oracle"])
    assert exc.value.code == 2


def test_ask_without_provider_is_usage_error(capsys, fixtures, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        main(["ask", str(fixtures / "minidoc.json"), "--question", "q"])
    assert exc.value.code == 2


def _script(tmp_path, entries):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(entries))
    return f"scripted:{path}"


def test_ask_exit_codes(capsys, fixtures, tmp_path):
    loop = _script(tmp_path, [{"function_call": {"name": "fetch_pages", "arguments": {"pages": [1]}}}] * 3)
    code, _, err = run(capsys, "ask", fixtures / "minidoc.json", "--question", "q", "--provider", loop,
                       "--max-turns", "3")
    assert code == 5 and "warning" in err
    bad = _script(tmp_path, [{"function_call": {"name": "retrieve", "arguments": "{oops"}}] * 2)
    code, _, _ = run(capsys, "ask", fixtures / "minidoc.json", "--question", "q", "--provider", bad)
    assert code == 4


def test_config_file_and_env(capsys, fixtures, tmp_path, monkeypatch):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"provider": _script(tmp_path, [{"answer": "from config"}]), "budget": 12}))
    code, out, _ = run(capsys, "ask", fixtures / "minidoc.json", "--question", "revenue", "--strategy",
                       "page", "--config", config, "--trace")
    record = json.loads(out)
    assert code == 0 and record["answer"] == "from config"
    assert record["trace"][0]["arguments"]["budget"] == 12
    assert record["retrieved_tokens"] <= 12


def test_eval_then_report(capsys, fixtures, tmp_path):
    demo = fixtures / "demo"
    run_path = tmp_path / "run.jsonl"
    code, _, err = run(capsys, "eval", demo / "corpus", demo / "questions.jsonl", "--out", run_path,
                       "--provider", f"scripted:{demo / 'script.json'}", "--workers", "2")
    assert code == 0 and "12 records" in err
    lines = run_path.read_text().splitlines()
    assert len(lines) == 4 * 3
    records = read_run(run_path)

    out = tmp_path / "report.json"
    code, summary, _ = run(capsys, "report", run_path, "--out", out,
                           "--annotations", demo / "annotations.csv", "--dataset", demo / "questions.jsonl")
    assert code == 0 and "pdftriage" in summary
    report = EvalReport.from_json(out.read_text())
    for s in ("pdftriage", "page", "chunk"):
        tokens = [r.retrieved_tokens for r in records if r.strategy.value == s]
        assert report.mean_retrieved_tokens[s] == sum(tokens) / len(tokens)
    assert EvalReport.from_csv((tmp_path / "report.csv").read_text()) == report
    figures = tmp_path / "report_figures"
    assert (figures / "retrieved_tokens.png").exists() and (figures / "preferences.png").exists()


def test_report_corrupt_line(capsys, fixtures, tmp_path):
    good = json.dumps({"question": "q", "strategy": "page", "answer": "a"})
    run_path = tmp_path / "run.jsonl"
    run_path.write_text(good + "\n" + good + "\n{broken\n")
    code, _, err = run(capsys, "report", run_path, "--out", tmp_path / "r.json", "--no-figures")
    assert code == 1
    assert str(run_path) in err and "line 3" in err


def test_console_script_entry_point():
    result = subprocess.run([sys.executable, "-m", "structriage.cli", "--version"],
                            capture_output=True, text=True, check=True)
    assert result.stdout.startswith("structriage ")
