from .dataset import (
    CORE_CATEGORIES,
    Category,
    Difficulty,
    QuestionItem,
    difficulty_histogram,
    load_dataset,
    parse_dataset,
)
from .report import (
    Annotation,
    AnswerScore,
    EvalReport,
    aggregate_report,
    load_annotations,
    mean_pairwise_kappa,
    parse_annotations,
    preference_fractions,
)
from .runner import gpt_score, load_corpus, load_document, run_eval
from .stats import cohens_kappa, flesch_reading_ease, pearson

__all__ = [
    "CORE_CATEGORIES", "Category", "Difficulty", "QuestionItem", "difficulty_histogram",
    "load_dataset", "parse_dataset", "Annotation", "AnswerScore", "EvalReport",
    "aggregate_report", "load_annotations", "mean_pairwise_kappa", "parse_annotations",
    "preference_fractions", "gpt_score", "load_corpus", "load_document", "run_eval",
    "cohens_kappa", "flesch_reading_ease", "pearson",
]
