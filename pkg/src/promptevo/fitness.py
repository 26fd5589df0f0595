"""Dataset-level fitness: bind a prompt to a score through a model gateway."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Optional, Protocol, Sequence

from promptevo.metrics import (
    CodeBleuWeights,
    EmptyDataset,
    accuracy,
    codebleu,
    smoothed_bleu4,
    weighted_ngram_bleu,
)
from promptevo.prompt import MASK_MARKER, Label, Prompt, project_label, render


class LabelScorer(Protocol):
    def score_label_words(self, text: str, label_words: Sequence[str]) -> dict[str, float]: ...


class Generator(Protocol):
    def generate(self, text: str, max_new_tokens: Optional[int] = None) -> str: ...


@dataclass(frozen=True)
class ClassificationExample:
    code: str
    label: Label

    def __post_init__(self):
        if not self.code:
            raise ValueError("example code is empty")
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True)
class GenerationExample:
    code: str
    reference: str

    def __post_init__(self):
        if not self.code or not self.reference:
            raise ValueError("generation example needs non-empty code and reference")


def load_jsonl(path, kind: str) -> list:
    """Read a line-delimited dataset; ``kind`` is "classification" or "generation"."""
    cls = ClassificationExample if kind == "classification" else GenerationExample
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if cls is ClassificationExample:
                    out.append(cls(rec["code"], rec["label"]))
                else:
                    out.append(cls(rec["code"], rec["reference"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad record ({exc})") from exc
    if not out:
        raise EmptyDataset(f"{path}: no records")
    return out


def load_wordlist(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def _annotate(exc: Exception, index: int) -> None:
    exc.example_index = index
    if hasattr(exc, "add_note"):
        exc.add_note(f"while scoring example {index}")


def classification_fitness(
    prompt: Prompt, dataset: Sequence[ClassificationExample], gateway: LabelScorer
) -> float:
    verbalizer = prompt.verbalizer
    if verbalizer is None:
        raise ValueError("classification fitness needs a prompt with a verbalizer")
    label_words = list(verbalizer.words)
    predictions = []
    for i, ex in enumerate(dataset):
        text = render(prompt.template, ex.code, MASK_MARKER)
        try:
            scores = gateway.score_label_words(text, label_words)
        except Exception as exc:
            _annotate(exc, i)
            raise
        predictions.append(project_label(scores, verbalizer))
    return accuracy(predictions, [ex.label for ex in dataset])


def generation_fitness(
    prompt: Prompt,
    dataset: Sequence[GenerationExample],
    gateway: Generator,
    metric: str = "bleu",
    keywords: Collection[str] = (),
    keyword_weight: float = 5.0,
    weights: CodeBleuWeights = CodeBleuWeights(),
) -> float:
    """Mean per-example BLEU-4 (or CodeBLEU without syntax/dataflow terms)."""
    if prompt.verbalizer is not None:
        raise ValueError("generation prompts carry no verbalizer")
    if metric not in ("bleu", "codebleu"):
        raise ValueError(f"unknown generation metric {metric!r}")
    if not dataset:
        raise EmptyDataset("generation fitness of an empty dataset")
    total = 0.0
    for i, ex in enumerate(dataset):
        text = render(prompt.template, ex.code, MASK_MARKER)
        try:
            out = gateway.generate(text)
        except Exception as exc:
            _annotate(exc, i)
            raise
        bleu = smoothed_bleu4(out, ex.reference).score
        if metric == "bleu":
            total += bleu
        else:
            bw = weighted_ngram_bleu(out, ex.reference, keywords, keyword_weight)
            total += codebleu(bleu, bw, None, None, weights)
    return total / len(dataset)


class DatasetEvaluator:
    """Callable evaluator: prompt -> fitness on a fixed dataset."""

    def __init__(self, dataset, gateway, metric: str = "accuracy", keywords=(), keyword_weight=5.0):
        self.dataset = dataset
        self.gateway = gateway
        self.metric = metric
        self.keywords = tuple(keywords)
        self.keyword_weight = keyword_weight

    def __call__(self, prompt: Prompt) -> float:
        if self.metric == "accuracy":
            return classification_fitness(prompt, self.dataset, self.gateway)
        return generation_fitness(
            prompt, self.dataset, self.gateway, self.metric, self.keywords, self.keyword_weight
        )
