"""Question taxonomy, difficulty labels and the JSONL dataset loader."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from ..errors import SchemaError


class Category(str, enum.Enum):
    FIGURE_QUESTIONS = "figure_questions"
    TEXT_QUESTIONS = "text_questions"
    TABLE_REASONING = "table_reasoning"
    STRUCTURE_QUESTIONS = "structure_questions"
    SUMMARIZATION = "summarization"
    EXTRACTION = "extraction"
    REWRITE = "rewrite"
    OUTSIDE_QUESTIONS = "outside_questions"
    CROSS_PAGE_TASKS = "cross_page_tasks"
    CLASSIFICATION = "classification"
    TRICK_QUESTION = "trick_question"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value: str) -> Category:
        """Accepts ``table_reasoning``, ``TableReasoning`` or ``Table Reasoning``."""
        key = _norm(value)
        for c in cls:
            if key in (_norm(c.value), _norm(c.label)):
                return c
        raise ValueError(f"unknown category {value!r}")


_LABELS = {
    Category.FIGURE_QUESTIONS: "Figure Questions",
    Category.TEXT_QUESTIONS: "Text Questions",
    Category.TABLE_REASONING: "Table Reasoning",
    Category.STRUCTURE_QUESTIONS: "Structure Questions",
    Category.SUMMARIZATION: "Summarization",
    Category.EXTRACTION: "Extraction",
    Category.REWRITE: "Rewrite",
    Category.OUTSIDE_QUESTIONS: "Outside Questions",
    Category.CROSS_PAGE_TASKS: "Cross-page Tasks",
    Category.CLASSIFICATION: "Classification",
    Category.TRICK_QUESTION: "Trick Question",
}

# The ten categories of the original collection task; Trick Question was added in annotation.
CORE_CATEGORIES = tuple(c for c in Category if c is not Category.TRICK_QUESTION)


class Difficulty(str, enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    UNSURE = "unsure"


def _norm(s: str) -> str:
    return re.sub(r"[^a-z0-9]", "", s.lower())


@dataclass(frozen=True)
class QuestionItem:
    id: str
    document_id: str
    text: str
    category: Category
    difficulty: Difficulty | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "document_id": self.document_id, "text": self.text,
                "category": self.category.value,
                "difficulty": self.difficulty.value if self.difficulty else None}


def _item(obj: Any, line: int) -> QuestionItem:
    if not isinstance(obj, dict):
        raise SchemaError(line, "<record>", "expected a JSON object")
    for key in ("id", "document_id", "text", "category"):
        if key not in obj:
            raise SchemaError(line, key, "missing")
        if not isinstance(obj[key], (str, int)) or isinstance(obj[key], bool):
            raise SchemaError(line, key, "must be a string")
    if not str(obj["text"]).strip():
        raise SchemaError(line, "text", "empty question")
    try:
        category = Category.parse(str(obj["category"]))
    except ValueError as exc:
        raise SchemaError(line, "category", str(exc)) from None
    difficulty = None
    if obj.get("difficulty") is not None:
        try:
            difficulty = Difficulty(str(obj["difficulty"]).strip().lower().strip('"'))
        except ValueError:
            raise SchemaError(line, "difficulty", f"unknown difficulty {obj['difficulty']!r}") from None
    return QuestionItem(str(obj["id"]), str(obj["document_id"]), str(obj["text"]), category, difficulty)


def parse_dataset(lines: Iterable[str]) -> list[QuestionItem]:
    items = []
    seen = set()
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(n, "<json>", str(exc)) from None
        item = _item(obj, n)
        if item.id in seen:
            raise SchemaError(n, "id", f"duplicate question id {item.id!r}")
        seen.add(item.id)
        items.append(item)
    return items


def load_dataset(path: str | Path) -> list[QuestionItem]:
    with open(path, encoding="utf-8") as fh:
        try:
            return parse_dataset(fh)
        except SchemaError as exc:
            exc.source = str(path)
            raise


def difficulty_histogram(items: Iterable[QuestionItem]) -> dict[str, int]:
    counts = Counter(i.difficulty.value for i in items if i.difficulty is not None)
    return {d.value: counts.get(d.value, 0) for d in Difficulty}


def category_histogram(items: Iterable[QuestionItem]) -> dict[str, int]:
    counts = Counter(i.category.value for i in items)
    return {c.value: counts.get(c.value, 0) for c in Category}
