"""Command-line entry point: ``structriage ingest|ask|eval|report``.

Settings resolve as command-line flag, then environment variable, then the
JSON file given with ``--config``, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .doc_model import NodeKind, build_index, dumps_tree
from .errors import (
    EvalError,
    NetworkError,
    ProtocolError,
    ProviderError,
    SchemaError,
    ScoreParseError,
    ServiceError,
    StructriageError,
)
from .eval.dataset import load_dataset
from .eval.report import aggregate_report, format_summary, load_annotations
from .eval.runner import gpt_score, load_corpus, load_document, run_eval
from .ingest import EXTRACT_URL_ENV, fetch_extraction, interchange_to_tree, parse_html_lite, parse_interchange
from .llm import DEFAULT_MODEL, LLM_KEY_ENV, RemoteChatProvider, load_script
from .orchestrator import QARecord, SessionConfig, Status, Strategy, answer
from .retrieval import DEFAULT_BUDGET, HashingEmbedder, RemoteEmbedder

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NETWORK = 3
EXIT_PROTOCOL = 4
EXIT_TURN_LIMIT = 5

EMBED_KEY_ENV = "STRUCTRIAGE_EMBED_KEY"

log = logging.getLogger("structriage")


class UsageError(Exception):
    pass


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {word}s"


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _setting(args, name: str, env: str | None = None, default: Any = None) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    if env and os.environ.get(env):
        return os.environ[env]
    return args.config_values.get(name, default)


def _session_config(args) -> SessionConfig:
    budget = int(_setting(args, "budget", default=DEFAULT_BUDGET))
    try:
        return SessionConfig(
            max_turns=int(_setting(args, "max_turns", default=8)),
            retrieve_budget=budget,
            baseline_context_budget=budget,
            model_id=_setting(args, "model", default=DEFAULT_MODEL),
            table_body=not bool(_setting(args, "caption_only", default=False)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _provider(args, flag: str = "provider"):
    spec = _setting(args, flag)
    if spec and spec.startswith("scripted:"):
        path = spec.split(":", 1)[1]
        try:
            return load_script(path)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load script {path}: {exc}") from None
    if spec not in (None, "remote"):
        raise UsageError(f"unknown provider {spec!r}; use 'remote' or 'scripted:<path>'")
    endpoint = _setting(args, "llm_endpoint")
    if not endpoint:
        raise UsageError("no model provider: pass --llm-endpoint or --provider scripted:<path>")
    return RemoteChatProvider(
        endpoint=endpoint,
        api_key=os.environ.get(LLM_KEY_ENV) or args.config_values.get("llm_key"),
        model=_setting(args, "model", default=DEFAULT_MODEL),
    )


def _embedder(args):
    endpoint = _setting(args, "embed_endpoint")
    if endpoint:
        return RemoteEmbedder(endpoint, os.environ.get(EMBED_KEY_ENV) or args.config_values.get("embed_key"))
    return HashingEmbedder()


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


# --- ingest ---------------------------------------------------------------

def _infer_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in {".html", ".htm"}:
        return "html"
    if suffix == ".pdf":
        return "pdf"
    return "interchange"


def cmd_ingest(args) -> int:
    path = Path(args.input)
    fmt = args.format or _infer_format(path)
    endpoint = _setting(args, "extract_endpoint", EXTRACT_URL_ENV)
    if fmt == "pdf" and not endpoint:
        print("error: unsupported format; use an extraction service (--extract-endpoint)", file=sys.stderr)
        return EXIT_USAGE
    try:
        raw = path.read_bytes()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        if fmt == "pdf":
            root = interchange_to_tree(fetch_extraction(endpoint, raw))
        elif fmt == "html":
            root = parse_html_lite(raw.decode("utf-8"))
        else:
            root = parse_interchange(raw)
        index = build_index(root)
    except (NetworkError, ServiceError) as exc:
        print(f"error: extraction service: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (StructriageError, UnicodeDecodeError) as exc:
        print(f"error: {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _write(args.out, dumps_tree(root))
    paragraphs = sum(1 for n in root.walk() if n.kind is NodeKind.PARAGRAPH)
    summary = ", ".join([
        _plural(len(index.by_section), "section"),
        _plural(len(index.tables), "table"),
        _plural(len(index.figures), "figure"),
        _plural(paragraphs, "paragraph"),
        _plural(index.page_count, "page"),
    ])
    print(summary, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


# --- ask ------------------------------------------------------------------

def _ask_once(args, index, question, provider, config, embedder) -> int:
    bind = getattr(provider, "for_session", None)
    session_provider = bind(args.strategy, None) if bind else provider
    try:
        record = answer(args.strategy, index, question, session_provider, config, embedder)
    except ProtocolError as exc:
        print(f"error: protocol: {exc}", file=sys.stderr)
        if args.trace and exc.record is not None:
            print(exc.record.to_json())
        return EXIT_PROTOCOL
    except NetworkError as exc:
        print(f"error: network: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except ProviderError as exc:
        print(f"error: provider: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except StructriageError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.trace:
        print(record.to_json())
    else:
        print(record.answer)
    if record.status is Status.TURN_LIMIT:
        print(f"warning: {record.error}", file=sys.stderr)
        return EXIT_TURN_LIMIT
    return EXIT_OK


def cmd_ask(args) -> int:
    if not args.question and not args.repl:
        raise UsageError("ask needs --question (or --repl)")
    config = _session_config(args)
    provider = _provider(args)
    embedder = _embedder(args)
    try:
        index = load_document(args.doc)
    except OSError as exc:
        print(f"error: cannot read {args.doc}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (StructriageError, ValueError) as exc:
        print(f"error: {args.doc}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if not args.repl:
        return _ask_once(args, index, args.question, provider, config, embedder)
    code = EXIT_OK
    for line in sys.stdin:
        if line.strip():
            code = _ask_once(args, index, line.strip(), provider, config, embedder) or code
    return code


# --- eval -----------------------------------------------------------------

def cmd_eval(args) -> int:
    try:
        strategies = [Strategy(s.strip()) for s in args.strategies.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = _session_config(args)
    provider = _provider(args)
    workers = int(_setting(args, "workers", default=1))
    try:
        corpus = load_corpus(args.corpus)
        dataset = load_dataset(args.dataset)
        records = run_eval(corpus, dataset, strategies, provider, config, _embedder(args), workers=workers)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (EvalError, StructriageError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.score_provider:
        scorer = _provider(args, "score_provider")
        for r in records:
            if not r.answer.strip():
                continue
            bound = scorer.for_session("score", r.question_id) if hasattr(scorer, "for_session") else scorer
            try:
                r.gpt_score = gpt_score(r, bound)
            except ScoreParseError as exc:
                log.warning("unscorable answer for %s/%s: %s", r.question_id, r.strategy.value, exc)
    _write(args.out, "".join(r.to_json() + "\n" for r in records))
    failed = sum(1 for r in records if r.status is not Status.OK)
    print(f"{len(records)} records ({len(dataset)} questions x {len(strategies)} strategies), "
          f"{failed} flagged", file=sys.stderr)
    return EXIT_OK


# --- report ---------------------------------------------------------------

def read_run(path: str | Path) -> list[QARecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(QARecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(n, "<record>", str(exc), source=str(path)) from None
    return records


def cmd_report(args) -> int:
    from .eval.plotting import write_figures  # matplotlib is slow to import

    try:
        records = read_run(args.run)
        annotations = load_annotations(args.annotations) if args.annotations else None
        questions = load_dataset(args.dataset) if args.dataset else None
    except SchemaError as exc:
        print(f"error: {exc.source}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if not records:
        print(f"error: {args.run}: no records", file=sys.stderr)
        return EXIT_FAILURE
    report = aggregate_report(records, annotations=annotations, questions=questions)
    out = Path(args.out)
    _write(str(out), report.to_json())
    _write(str(out.with_suffix(".csv")), report.to_csv())
    if not args.no_figures:
        fig_dir = Path(args.figures) if args.figures else out.with_name(out.stem + "_figures")
        for p in write_figures(report, fig_dir):
            log.info("wrote %s", p)
    sys.stdout.write(format_summary(report))
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--llm-endpoint", dest="llm_endpoint", help="base URL of a chat-completions API")
    p.add_argument("--embed-endpoint", dest="embed_endpoint", help="base URL of an embeddings API")
    p.add_argument("--model", help=f"model id (default {DEFAULT_MODEL})")
    p.add_argument("--provider", help="'remote' or 'scripted:<path>'")
    p.add_argument("--budget", type=int, help=f"retrieval token budget (default {DEFAULT_BUDGET})")
    p.add_argument("--max-turns", dest="max_turns", type=int, help="turn limit for triage sessions")
    p.add_argument("--caption-only", dest="caption_only", action="store_const", const=True,
                   help="fetch_table returns the caption without the table body")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structriage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a document into a canonical structure tree")
    p.add_argument("input")
    p.add_argument("--format", help="interchange | html | pdf (pdf needs --extract-endpoint)")
    p.add_argument("--out", help="tree JSON path (default stdout)")
    p.add_argument("--extract-endpoint", dest="extract_endpoint")
    p.add_argument("--config")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="answer one question about a document")
    p.add_argument("doc", help="tree JSON, interchange JSON or HTML file")
    p.add_argument("--question")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default="pdftriage")
    p.add_argument("--trace", action="store_true", help="print the full QA record as JSON")
    p.add_argument("--repl", action="store_true", help="read questions from stdin, one per line")
    _common(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="run strategies over a question dataset")
    p.add_argument("corpus", help="directory of documents named <document_id>.json/.html")
    p.add_argument("dataset", help="questions JSONL")
    p.add_argument("--strategies", default="pdftriage,page,chunk")
    p.add_argument("--out", required=True, help="run JSONL path")
    p.add_argument("--workers", type=int)
    p.add_argument("--score-provider", dest="score_provider",
                   help="also score answers 1-5 with this provider ('remote' or 'scripted:<path>')")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate a run into report JSON, CSV and figures")
    p.add_argument("run", help="run JSONL from 'eval'")
    p.add_argument("--annotations", help="human annotation CSV")
    p.add_argument("--dataset", help="questions JSONL (for difficulty and categories)")
    p.add_argument("--out", required=True, help="report JSON path; CSV is written next to it")
    p.add_argument("--figures", help="figure directory (default <out>_figures)")
    p.add_argument("--no-figures", dest="no_figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.config_values = _load_config(getattr(args, "config", None))
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
