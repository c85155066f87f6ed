"""Answer parsing and the prompt metric: F1 for classification, accuracy for math."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .data import Example
from .gateway import Gateway, GatewayError
from .model import Prompt


@dataclass(frozen=True)
class TaskSpec:
    """What the scorer needs to know about the task."""

    task_type: str  # classification | math
    label_set: tuple[str, ...] = ()
    positive_label: str = ""
    temperature: float = 0.0


@dataclass(frozen=True)
class Prediction:
    example_id: int
    raw_output: str
    parsed_label: str | None
    correct: bool

    def __post_init__(self) -> None:
        if self.parsed_label is None and self.correct:
            raise ValueError("an unparseable output cannot be correct")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def parse_label(raw: str, label_set: Sequence[str]) -> str | None:
    """Earliest case-insensitive whole-token label occurrence in ``raw``.

    Ties at the same position go to label_set order. Labels must begin and end
    with word characters for the token boundaries to apply.
    """
    if not label_set:
        raise ValueError("label_set is empty")
    best: tuple[int, str] | None = None
    for label in label_set:
        match = re.search(rf"\b{re.escape(label)}\b", raw, re.IGNORECASE)
        if match and (best is None or match.start() < best[0]):
            best = (match.start(), label)
    return best[1] if best else None


_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?")


def canonical_number(token: str) -> str:
    """Strip commas/whitespace and a trailing ``.0`` tail from a number token."""
    cleaned = re.sub(r"[\s,]", "", token)
    return re.sub(r"\.0+$", "", cleaned)


def parse_math_answer(raw: str) -> str | None:
    """Answer after a final ``####`` marker, else the last number token in ``raw``."""
    if "####" in raw:
        tail = raw.rsplit("####", 1)[1]
        match = _NUMBER_RE.search(tail)
        return canonical_number(match.group(0)) if match else None
    matches = _NUMBER_RE.findall(raw)
    return canonical_number(matches[-1]) if matches else None


def f1(cc: ConfusionCounts) -> float:
    """Positive-class F1; zero true positives yield 0.0 by convention."""
    if cc.tp == 0:
        return 0.0
    return 2 * cc.tp / (2 * cc.tp + cc.fp + cc.fn)


def confusion_counts(
    golds: Sequence[str], parsed: Sequence[str | None], positive_label: str
) -> ConfusionCounts:
    """Tally binary confusion counts; unparsed predictions count as negative."""
    if len(golds) != len(parsed):
        raise ValueError("golds and parsed have different lengths")
    positive = positive_label.lower()
    tp = fp = fn = tn = 0
    for gold, pred in zip(golds, parsed):
        gold_pos = gold.lower() == positive
        pred_pos = pred is not None and pred.lower() == positive
        if gold_pos and pred_pos:
            tp += 1
        elif gold_pos:
            fn += 1
        elif pred_pos:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def evaluate_prompt(
    prompt: Prompt,
    examples: Sequence[Example],
    gateway: Gateway,
    task: TaskSpec,
) -> tuple[float, list[Prediction]]:
    """Score a prompt over examples with one task_eval call per example.

    The rendered input is the prompt text and the example input joined by a
    single newline (zero-shot, no exemplars). Returns the score and the
    per-example predictions ordered by example id.
    """
    if not examples:
        raise ValueError("examples is empty")
    predictions: list[Prediction] = []
    for ex in examples:
        try:
            resp = gateway.call(
                "task_eval",
                f"{prompt.text}\n{ex.input_text}",
                temperature=task.temperature,
            )
        except GatewayError as exc:
            raise type(exc)(f"example id {ex.id}: {exc}") from exc
        if task.task_type == "math":
            parsed = parse_math_answer(resp.text)
            correct = parsed is not None and parsed == canonical_number(ex.label)
        else:
            parsed = parse_label(resp.text, task.label_set)
            correct = parsed is not None and parsed.lower() == ex.label.lower()
        predictions.append(
            Prediction(
                example_id=ex.id, raw_output=resp.text, parsed_label=parsed, correct=correct
            )
        )
    predictions.sort(key=lambda p: p.example_id)
    if task.task_type == "math":
        score = sum(p.correct for p in predictions) / len(predictions)
    else:
        ordered = sorted(examples, key=lambda e: e.id)
        cc = confusion_counts(
            [ex.label for ex in ordered],
            [p.parsed_label for p in predictions],
            task.positive_label,
        )
        score = f1(cc)
    return score, predictions
