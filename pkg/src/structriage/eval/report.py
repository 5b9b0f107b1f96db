"""Aggregate QA records, scores and human annotations into an evaluation report."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from ..errors import SchemaError, StatisticsError
from ..orchestrator import QARecord, Strategy
from .dataset import Category, QuestionItem, difficulty_histogram
from .stats import cohens_kappa, pearson

DIMENSIONS = ("accuracy", "informativeness", "readability", "clarity", "overall")
ANNOTATION_COLUMNS = ("question_id", "strategy", "rank", *DIMENSIONS, "annotator_id")


@dataclass(frozen=True)
class AnswerScore:
    accuracy: float
    informativeness: float
    readability: float
    clarity: float
    overall: float
    scorer_id: str

    def __post_init__(self):
        for dim in DIMENSIONS:
            value = getattr(self, dim)
            if not 1.0 <= value <= 5.0:
                raise ValueError(f"{dim}={value} outside 1-5")


@dataclass(frozen=True)
class Annotation:
    """One annotator's judgement of one strategy's answer to one question."""

    question_id: str
    strategy: Strategy
    rank: int
    score: AnswerScore

    @property
    def annotator_id(self) -> str:
        return self.score.scorer_id


def parse_annotations(text: str) -> list[Annotation]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in ANNOTATION_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(1, missing[0], "column missing from annotations header")
    out = []
    for line, row in enumerate(reader, start=2):
        try:
            strategy = Strategy(row["strategy"].strip())
        except ValueError:
            raise SchemaError(line, "strategy", f"unknown strategy {row['strategy']!r}") from None
        try:
            rank = int(row["rank"])
            values = {d: float(row[d]) for d in DIMENSIONS}
            score = AnswerScore(**values, scorer_id=row["annotator_id"].strip())
        except (TypeError, ValueError) as exc:
            raise SchemaError(line, "scores", str(exc)) from None
        if rank < 1:
            raise SchemaError(line, "rank", "rank must be >= 1")
        out.append(Annotation(row["question_id"].strip(), strategy, rank, score))
    return out


def load_annotations(path: str | Path) -> list[Annotation]:
    try:
        return parse_annotations(Path(path).read_text(encoding="utf-8"))
    except SchemaError as exc:
        exc.source = str(path)
        raise


def dump_annotations(annotations: Iterable[Annotation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ANNOTATION_COLUMNS)
    for a in annotations:
        writer.writerow([a.question_id, a.strategy.value, a.rank,
                         *(_num(getattr(a.score, d)) for d in DIMENSIONS), a.annotator_id])
    return buf.getvalue()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


# --- report ---------------------------------------------------------------

@dataclass
class EvalReport:
    strategies: list[str]
    record_count: int
    status_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    mean_retrieved_tokens: dict[str, float] = field(default_factory=dict)
    mean_metadata_tokens: float | None = None
    mean_scores: dict[str, dict[str, float]] = field(default_factory=dict)
    category_scores: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    preference: dict[str, float] = field(default_factory=dict)
    category_preference: dict[str, dict[str, float]] = field(default_factory=dict)
    difficulty_histogram: dict[str, int] = field(default_factory=dict)
    mean_gpt_score: dict[str, float] = field(default_factory=dict)
    annotator_kappa: float | None = None
    gpt_human_kappa: float | None = None
    correlations: dict[str, float | None] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EvalReport:
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        """Long format: one row per leaf value, path split across key columns."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "key1", "key2", "key3", "value"])
        for path, value in _flatten(self.to_dict()):
            padded = list(path) + [""] * (4 - len(path))
            writer.writerow([*padded, json.dumps(value)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> EvalReport:
        root: dict[str, Any] = {}
        for row in csv.DictReader(io.StringIO(text)):
            path = [row[k] for k in ("metric", "key1", "key2", "key3") if row[k] != ""]
            node = root
            for key in path[:-1]:
                node = node.setdefault(key, {})
            node[path[-1]] = json.loads(row["value"])
        return cls.from_dict(root)


def _flatten(d: Mapping[str, Any], prefix: tuple[str, ...] = ()):
    for key, value in d.items():
        path = prefix + (key,)
        if isinstance(value, Mapping) and value and len(path) < 4:
            yield from _flatten(value, path)
        else:
            yield path, value


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _label(x: float) -> int:
    """Nearest integer rating, halves rounded up (``round`` would send 2.5 down, 3.5 up)."""
    return math.floor(x + 0.5)


def _safe(fn, *args) -> float | None:
    try:
        return fn(*args)
    except StatisticsError:
        return None


def _means_by(rows: Iterable[tuple[Any, AnswerScore]]) -> dict[Any, dict[str, float]]:
    acc: dict[Any, list[AnswerScore]] = defaultdict(list)
    for key, score in rows:
        acc[key].append(score)
    return {k: {d: _mean([getattr(s, d) for s in v]) for d in DIMENSIONS} for k, v in acc.items()}


def preference_fractions(annotations: Iterable[Annotation]) -> dict[str, float]:
    """Share of (question, annotator) rankings in which each strategy came first.

    A tie for first splits that ranking's credit evenly.
    """
    firsts: dict[tuple[str, str], list[Strategy]] = defaultdict(list)
    groups = set()
    for a in annotations:
        groups.add((a.question_id, a.annotator_id))
        if a.rank == 1:
            firsts[(a.question_id, a.annotator_id)].append(a.strategy)
    credit: dict[str, float] = defaultdict(float)
    counted = 0
    for group in sorted(groups):
        winners = firsts.get(group)
        if not winners:
            continue
        counted += 1
        for s in winners:
            credit[s.value] += 1.0 / len(winners)
    if not counted:
        return {}
    return {s: c / counted for s, c in sorted(credit.items())}


def mean_pairwise_kappa(annotations: Sequence[Annotation], dimension: str = "overall") -> float | None:
    """Average Cohen's kappa over annotator pairs, on the items both rated."""
    by_annotator: dict[str, dict[tuple[str, str], float]] = defaultdict(dict)
    for a in annotations:
        by_annotator[a.annotator_id][(a.question_id, a.strategy.value)] = getattr(a.score, dimension)
    kappas = []
    for x, y in combinations(sorted(by_annotator), 2):
        shared = sorted(by_annotator[x].keys() & by_annotator[y].keys())
        if not shared:
            continue
        k = _safe(cohens_kappa, [_label(by_annotator[x][i]) for i in shared],
                  [_label(by_annotator[y][i]) for i in shared])
        if k is not None:
            kappas.append(k)
    return _mean(kappas) if kappas else None


def aggregate_report(
    records: Sequence[QARecord],
    scores: Mapping[tuple[str, str], float] | None = None,
    annotations: Sequence[Annotation] | None = None,
    questions: Sequence[QuestionItem] | None = None,
) -> EvalReport:
    """Summaries over a run.

    ``scores`` maps (question_id, strategy) to an automated 1-5 score and
    defaults to the ``gpt_score`` stored on each record.
    """
    if not records:
        raise ValueError("no records to aggregate")
    annotations = list(annotations or [])
    order = {s.value: i for i, s in enumerate(Strategy)}
    strategies = sorted({r.strategy.value for r in records}, key=order.get)

    status_counts: dict[str, dict[str, int]] = {s: {} for s in strategies}
    tokens: dict[str, list[int]] = defaultdict(list)
    for r in records:
        counts = status_counts[r.strategy.value]
        counts[r.status.value] = counts.get(r.status.value, 0) + 1
        tokens[r.strategy.value].append(r.retrieved_tokens)
    mean_tokens = {s: sum(tokens[s]) / len(tokens[s]) for s in strategies}
    meta = [r.metadata_tokens for r in records if r.metadata_tokens is not None]

    if scores is None:
        scores = {(r.question_id, r.strategy.value): r.gpt_score
                  for r in records if r.gpt_score is not None}
    gpt_by_strategy: dict[str, list[float]] = defaultdict(list)
    for (_, s), v in sorted(scores.items()):
        gpt_by_strategy[s].append(v)

    category_of: dict[str, str] = {}
    for r in records:
        if r.question_id is not None and r.category is not None:
            category_of[r.question_id] = r.category
    for q in questions or []:
        category_of[q.id] = q.category.value

    mean_scores = _means_by((a.strategy.value, a.score) for a in annotations)
    cat_means = _means_by(((category_of[a.question_id], a.strategy.value), a.score)
                          for a in annotations if a.question_id in category_of)
    category_scores: dict[str, dict[str, dict[str, float]]] = {}
    for c in Category:
        per = {s: cat_means[(c.value, s)] for s in strategies if (c.value, s) in cat_means}
        if per:
            category_scores[c.value] = per

    category_preference = {}
    for c in Category:
        subset = [a for a in annotations if category_of.get(a.question_id) == c.value]
        prefs = preference_fractions(subset)
        if prefs:
            category_preference[c.value] = prefs

    if questions:
        difficulty = difficulty_histogram(questions)
    else:
        seen: dict[str, str | None] = {}
        for r in records:
            if r.question_id is not None:
                seen[r.question_id] = r.difficulty
        difficulty = {}
        for d in ("easy", "medium", "hard", "unsure"):
            difficulty[d] = sum(1 for v in seen.values() if v == d)

    # human overall per (question, strategy), averaged over annotators
    human_overall = {k: v["overall"] for k, v in
                     _means_by(((a.question_id, a.strategy.value), a.score) for a in annotations).items()}
    triage = [r for r in records if r.strategy is Strategy.PDFTRIAGE
              and (r.question_id, Strategy.PDFTRIAGE.value) in human_overall]
    quality = [human_overall[(r.question_id, Strategy.PDFTRIAGE.value)] for r in triage]
    correlations: dict[str, float | None] = {
        "overall_vs_page_count": None,
        "overall_vs_retrieved_tokens": None,
        "gpt_vs_human_overall": None,
    }
    if len(triage) >= 2:
        if all(r.page_count is not None for r in triage):
            correlations["overall_vs_page_count"] = _safe(pearson, quality, [r.page_count for r in triage])
        correlations["overall_vs_retrieved_tokens"] = _safe(
            pearson, quality, [r.retrieved_tokens for r in triage])
    shared = sorted(scores.keys() & human_overall.keys())
    gpt_kappa = None
    if len(shared) >= 2:
        gpt = [scores[k] for k in shared]
        human = [human_overall[k] for k in shared]
        correlations["gpt_vs_human_overall"] = _safe(pearson, gpt, human)
        gpt_kappa = _safe(cohens_kappa, [_label(x) for x in gpt], [_label(x) for x in human])

    return EvalReport(
        strategies=strategies,
        record_count=len(records),
        status_counts=status_counts,
        mean_retrieved_tokens=mean_tokens,
        mean_metadata_tokens=(sum(meta) / len(meta)) if meta else None,
        mean_scores={s: mean_scores[s] for s in strategies if s in mean_scores},
        category_scores=category_scores,
        preference=preference_fractions(annotations),
        category_preference=category_preference,
        difficulty_histogram=difficulty,
        mean_gpt_score={s: _mean(v) for s, v in gpt_by_strategy.items()},
        annotator_kappa=mean_pairwise_kappa(annotations) if annotations else None,
        gpt_human_kappa=gpt_kappa,
        correlations=correlations,
    )


def format_summary(report: EvalReport) -> str:
    """Plain-text tables printed by the ``report`` command."""
    lines = [f"records: {report.record_count}", "", "strategy\tmean_retrieved_tokens\tpreferred_first"]
    for s in report.strategies:
        pref = report.preference.get(s)
        pref_txt = f"{pref:.1%}" if pref is not None else "-"
        lines.append(f"{s}\t{report.mean_retrieved_tokens[s]:.1f}\t{pref_txt}")
    if report.mean_metadata_tokens is not None:
        lines.append(f"mean metadata tokens: {report.mean_metadata_tokens:.1f}")
    if report.mean_scores:
        lines += ["", "strategy\t" + "\t".join(DIMENSIONS)]
        for s, dims in report.mean_scores.items():
            lines.append(s + "\t" + "\t".join(f"{dims[d]:.2f}" for d in DIMENSIONS))
    if report.annotator_kappa is not None:
        lines.append(f"mean pairwise kappa (overall): {report.annotator_kappa:.3f}")
    for name, value in report.correlations.items():
        if value is not None:
            lines.append(f"pearson {name}: {value:.3f}")
    return "\n".join(lines) + "\n"
