"""The beam-search orchestrator: evaluate, expand, select, record, report.

Each round evaluates the current beam on a fresh minibatch, expands every
parent into candidate children, prunes back to the beam width with the UCB
bandit, records the momentum pool, and scores the best survivor on the held
out test split. One metric event is emitted per round (plus a round-0 event
for the seed), powering the score-versus-round/time/calls reports and the
convergence detector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from . import artifact, bandit, momentum
from .data import DatasetSplit, Example, sample_by_correctness, sample_minibatch
from .gateway import Gateway, GatewayError
from .gradients import GradientEngine, TemplateSet
from .model import (
    Beam,
    Gradient,
    GradientHistory,
    Prompt,
    PromptStore,
    RunConfig,
    derived_rng,
    to_record,
    validate_config,
)
from .scoring import TaskSpec, evaluate_prompt

logger = logging.getLogger(__name__)


class RunIncompleteError(GatewayError):
    """The run aborted mid-flight; a partial artifact was flagged incomplete."""

    def __init__(self, message: str, artifact_dir: str):
        super().__init__(message)
        self.artifact_dir = artifact_dir


@dataclass(frozen=True)
class MetricEvent:
    """One telemetry row; counters are cumulative and nondecreasing.

    ``best_train_score`` is None only on the round-0 event, where no training
    measurement has happened yet.
    """

    round: int
    elapsed_s: float
    optimize_calls: int
    eval_calls: int
    best_train_score: float | None
    best_test_score: float
    best_prompt_id: int


@dataclass(frozen=True)
class ConvergenceReport:
    target_score: float | None
    reached: bool
    convergence_time_s: float | None = None
    convergence_calls: int | None = None
    convergence_steps: int | None = None


@dataclass(frozen=True)
class Expansion:
    children: tuple[Prompt, ...]
    gradients: tuple[Gradient, ...]
    shortfall: bool


@dataclass
class RunResult:
    best: Prompt
    events: list[MetricEvent]
    report: ConvergenceReport
    artifact_dir: str
    beams: list[Beam]
    history: GradientHistory
    store: PromptStore
    arm_tables: list[tuple[bandit.ArmState, ...]]


def expected_calls_per_round(cfg: RunConfig, round_index: int) -> int:
    """Closed-form optimize-call count for one round (positive-gradient path).

    parents * minibatch evaluation + parents * (1 generator call + c editor
    calls) + bandit pulls, assuming no shortfalls. Parents number 1 in round 1
    and the beam width afterwards.
    """
    parents = 1 if round_index <= 1 else cfg.beam_width
    evaluation = parents * cfg.minibatch_size
    # Zero-expansion limit: no candidates means no generator call either.
    expansion = parents * (1 + cfg.candidates_per_parent) if cfg.candidates_per_parent else 0
    pulls = cfg.bandit.time_steps * cfg.bandit.sample_size
    return evaluation + expansion + pulls


def detect_convergence(events: Sequence[MetricEvent], target_score: float) -> ConvergenceReport:
    """First event whose test score reaches the target fixes time/calls/steps."""
    if not events:
        raise ValueError("events is empty")
    for event in sorted(events, key=lambda e: e.round):
        if event.best_test_score >= target_score:
            return ConvergenceReport(
                target_score=target_score,
                reached=True,
                convergence_time_s=event.elapsed_s,
                convergence_calls=event.optimize_calls + event.eval_calls,
                convergence_steps=event.round,
            )
    return ConvergenceReport(target_score=target_score, reached=False)


def _polarity_plan(cfg: RunConfig) -> list[tuple[str, int]]:
    """How many gradients to request per polarity for the configured mode."""
    g = cfg.num_gradients
    if cfg.baseline_mode or cfg.gradient_mode == "negative_only":
        return [("negative", g)]
    if cfg.gradient_mode == "both":
        positive = math.ceil(g / 2)
        return [("positive", positive), ("negative", g - positive)] if g > 1 else [("positive", 1)]
    return [("positive", g)]


def expand_parent(
    engine: GradientEngine,
    parent: Prompt,
    round_index: int,
    minibatch: Sequence[Example],
    correctness: dict[int, bool],
    history_binding: str,
    cfg: RunConfig,
) -> Expansion:
    """Produce a parent's candidate children for this round.

    Positive-gradient path: sample correct examples, generate gradients, apply
    each with its share of editor calls. Baseline adds paraphrases on top of
    negative gradients. An empty correctness sample skips that polarity and
    the parent simply carries through.
    """
    children: list[Prompt] = []
    gradients: list[Gradient] = []
    shortfall = False
    ordinal = 1
    for polarity, count in _polarity_plan(cfg):
        if count < 1:
            continue
        want = "correct" if polarity == "positive" else "incorrect"
        sample = sample_by_correctness(
            minibatch,
            correctness,
            cfg.num_correct_examples,
            want,
            seed=f"{cfg.rng_seed}|parent{parent.id}",
            round_index=round_index,
        )
        shortfall = shortfall or sample.shortfall
        if not sample.examples:
            continue
        polarity_gradients = engine.generate_gradients(
            parent, sample, history_binding, round_index, polarity=polarity, count=count
        )
        feedback = "\n".join(g.text for g in polarity_gradients)
        for gradient in polarity_gradients:
            children.extend(
                engine.apply_gradient(
                    parent,
                    gradient,
                    sample,
                    history_binding,
                    round_index,
                    feedback_text=feedback,
                    ordinal_start=ordinal,
                )
            )
            ordinal += engine.edits_per_gradient
        gradients.extend(polarity_gradients)
    if cfg.baseline_mode and cfg.paraphrases_per_parent > 0:
        children.extend(
            engine.paraphrase_expand(parent, cfg.paraphrases_per_parent, round_index)
        )
    return Expansion(children=tuple(children), gradients=tuple(gradients), shortfall=shortfall)


def _cumulative_pool(
    history: GradientHistory, store: PromptStore, upto_round: int
) -> list[Gradient]:
    seen: set[int] = set()
    pool: list[Gradient] = []
    for round_index in sorted(history.pools):
        if round_index > upto_round:
            continue
        for gradient_id in history.pools[round_index]:
            if gradient_id not in seen:
                pool.append(store.gradients[gradient_id])
                seen.add(gradient_id)
    return pool


def run(
    seed_prompt: Prompt,
    split: DatasetSplit,
    cfg: RunConfig,
    gateway: Gateway,
    out_dir: str | Path,
    *,
    templates: TemplateSet | None = None,
    method_name: str | None = None,
    config_context: dict | None = None,
) -> RunResult:
    """Execute a full optimization run and write its artifact directory.

    Returns the best prompt of the final beam (argmax train metric on a fresh
    minibatch, ties to the lowest id), the per-round metric events, and the
    convergence report. An unrecoverable gateway failure writes a partial
    artifact flagged incomplete and raises :class:`RunIncompleteError`.
    """
    validate_config(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    store = PromptStore()
    seed = store.adopt(seed_prompt)
    task = TaskSpec(
        task_type=split.task_type,
        label_set=split.label_set,
        positive_label=split.positive_label,
        temperature=cfg.temperature,
    )
    engine = GradientEngine(
        cfg=cfg, gateway=gateway, store=store, templates=templates, task_label=split.task_type
    )
    history = GradientHistory()
    beams: list[Beam] = [Beam(round=0, prompts=(seed.id,))]
    arm_tables: list[tuple[bandit.ArmState, ...]] = []
    events: list[MetricEvent] = []
    test_predictions: list[dict] = []

    def eval_on_test(prompt: Prompt) -> float:
        with gateway.count_as_eval():
            score, predictions = evaluate_prompt(prompt, split.test, gateway, task)
        store.set_test_score(prompt.id, score)
        if cfg.emit_predictions:
            for p in predictions:
                test_predictions.append({"prompt_id": prompt.id, **asdict(p)})
        return score

    def emit_event(round_index: int, train_best: float | None, test_best: float, best_id: int):
        events.append(
            MetricEvent(
                round=round_index,
                elapsed_s=gateway.elapsed_seconds(),
                optimize_calls=gateway.optimize_calls(),
                eval_calls=gateway.eval_calls(),
                best_train_score=train_best,
                best_test_score=test_best,
                best_prompt_id=best_id,
            )
        )

    status = "incomplete"
    best: Prompt | None = None
    try:
        seed_test = eval_on_test(seed)
        emit_event(0, None, seed_test, seed.id)

        for step in range(cfg.search_depth):
            round_index = step + 1
            minibatch = sample_minibatch(split, cfg.minibatch_size, cfg.rng_seed, round_index)
            parents = [store.prompts[pid] for pid in beams[-1].prompts]

            candidates: list[Prompt] = []
            round_gradients: list[Gradient] = []
            parent_scores: dict[int, float] = {}
            history_binding = momentum.history_text(
                history,
                round_index,
                store.gradients,
                enabled=cfg.momentum_enabled,
                mode=cfg.history_mode,
            )
            for parent in parents:
                score, predictions = evaluate_prompt(parent, minibatch, gateway, task)
                parent = store.set_train_score(parent.id, score)
                parent_scores[parent.id] = score
                correctness = {p.example_id: p.correct for p in predictions}
                expansion = expand_parent(
                    engine,
                    parent,
                    round_index,
                    minibatch,
                    correctness,
                    history_binding,
                    cfg,
                )
                candidates.extend(expansion.children)
                round_gradients.extend(expansion.gradients)
                if cfg.include_parents:
                    candidates.append(parent)
            if not candidates:
                logger.warning("round %d produced no candidates; carrying the beam", round_index)
                candidates = parents

            selection = bandit.select(
                candidates,
                split.train,
                cfg.bandit,
                cfg.beam_width,
                rng=derived_rng(cfg.rng_seed, "bandit", round_index),
                evaluate=lambda p, batch: evaluate_prompt(p, batch, gateway, task)[0],
            )
            beam = Beam(round=round_index, prompts=tuple(p.id for p in selection.selected))
            beams.append(beam)
            arm_tables.append(selection.arms)

            pool = momentum.record_round(beam, round_gradients, store.prompts)
            history.pools[round_index] = tuple(g.id for g in pool)
            sample_source = (
                _cumulative_pool(history, store, round_index)
                if cfg.history_mode == "cumulative"
                else pool
            )
            sampled = momentum.sample_history_gradient(sample_source, cfg.rng_seed, round_index)
            if sampled is not None:
                history.sampled[round_index] = sampled.id

            if cfg.full_beam_test_eval:
                scored = [(eval_on_test(store.prompts[pid]), pid) for pid in beam.prompts]
                test_best, best_id = max(scored, key=lambda pair: (pair[0], -pair[1]))
            else:
                top = store.prompts[beam.prompts[0]]
                test_best, best_id = eval_on_test(top), top.id
            emit_event(round_index, max(parent_scores.values()), test_best, best_id)

        # Final answer: argmax train metric over the last beam on a fresh
        # minibatch, with ties broken toward the lowest prompt id.
        final_batch = sample_minibatch(split, cfg.minibatch_size, cfg.rng_seed, cfg.search_depth + 1)
        final_scores: list[tuple[float, int]] = []
        for prompt_id in beams[-1].prompts:
            score, _ = evaluate_prompt(store.prompts[prompt_id], final_batch, gateway, task)
            store.set_train_score(prompt_id, score)
            final_scores.append((score, prompt_id))
        best_id = min(final_scores, key=lambda pair: (-pair[0], pair[1]))[1]
        best = store.prompts[best_id]
        if best.test_score is None:
            eval_on_test(best)
            best = store.prompts[best_id]
        status = "complete"
    except GatewayError as exc:
        _write_artifact(
            out, cfg, events, beams, history, store, arm_tables,
            report=None, gateway=gateway, status="incomplete",
            method_name=method_name, best=None, predictions=test_predictions,
            config_context=config_context,
        )
        raise RunIncompleteError(f"run aborted: {exc}", artifact_dir=str(out)) from exc

    if cfg.convergence_target is not None:
        report = detect_convergence(events, cfg.convergence_target)
    else:
        report = ConvergenceReport(target_score=None, reached=False)

    _write_artifact(
        out, cfg, events, beams, history, store, arm_tables,
        report=report, gateway=gateway, status=status,
        method_name=method_name, best=best, predictions=test_predictions,
        config_context=config_context,
    )
    return RunResult(
        best=best,
        events=events,
        report=report,
        artifact_dir=str(out),
        beams=beams,
        history=history,
        store=store,
        arm_tables=arm_tables,
    )


# Fixed decision notes echoed into every run's metadata.
_RUN_NOTES = [
    "one minibatch per round, shared by all parents",
    "parents compete with their children for selection (include_parents switch)",
    "editor calls append a distinct 'Variant j of k' ordinal line for diversity at temperature 0",
    "negative-mode templates mirror the positive ones (correct->wrong, strengths->weaknesses)",
    "'both' gradient mode splits gradient count evenly across polarities, positives first",
    "per-round test evaluation scores the bandit's top survivor unless full_beam_test_eval is set",
]


def _write_artifact(
    out: Path,
    cfg: RunConfig,
    events: list[MetricEvent],
    beams: list[Beam],
    history: GradientHistory,
    store: PromptStore,
    arm_tables: list,
    *,
    report: ConvergenceReport | None,
    gateway: Gateway,
    status: str,
    method_name: str | None,
    best: Prompt | None,
    predictions: list[dict],
    config_context: dict | None = None,
) -> None:
    artifact.write_json(out / artifact.CONFIG_FILE, {**asdict(cfg), **(config_context or {})})
    artifact.write_json(
        out / artifact.META_FILE,
        {
            "method": method_name or ("protegi" if cfg.baseline_mode else "mapo"),
            "status": status,
            "gradient_mode": cfg.gradient_mode,
            "momentum_enabled": cfg.momentum_enabled,
            "bandit": asdict(cfg.bandit),
            "notes": _RUN_NOTES,
        },
    )
    artifact.write_jsonl(out / artifact.EVENTS_FILE, [asdict(e) for e in events])
    artifact.write_jsonl(out / "beams.jsonl", [to_record(b) for b in beams])
    artifact.write_jsonl(
        out / "prompts.jsonl",
        [to_record(store.prompts[pid]) for pid in sorted(store.prompts)],
    )
    artifact.write_jsonl(
        out / "gradients.jsonl",
        [to_record(store.gradients[gid]) for gid in sorted(store.gradients)],
    )
    artifact.write_json(
        out / "history.json",
        {
            "pools": {str(r): list(ids) for r, ids in sorted(history.pools.items())},
            "sampled": {str(r): gid for r, gid in sorted(history.sampled.items())},
        },
    )
    artifact.write_jsonl(
        out / "bandit.jsonl",
        [
            {
                "round": round_index,
                "arms": [
                    {"prompt_id": a.prompt_id, "N": a.N, "Q": a.Q}
                    for a in sorted(table, key=lambda a: a.prompt_id)
                ],
            }
            for round_index, table in enumerate(arm_tables, start=1)
        ],
    )
    if report is not None:
        artifact.write_json(out / artifact.CONVERGENCE_FILE, asdict(report))
    if best is not None:
        artifact.write_json(
            out / artifact.RESULT_FILE,
            {
                "best_prompt_id": best.id,
                "text": best.text,
                "train_score": best.train_score,
                "test_score": best.test_score,
            },
        )
    if predictions:
        artifact.write_jsonl(out / "predictions.jsonl", predictions)
    gateway.transcript.save(out / "transcript.jsonl")
