"""Shared domain vocabulary: prompts, gradients, beams, history, run configuration.

All value types are frozen dataclasses; state evolves only by constructing
successor objects (see :class:`PromptStore`). Every core type serializes to a
self-describing one-line text record via :func:`to_record` / :func:`from_record`.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, replace

GRADIENT_MODES = ("positive_only", "negative_only", "both")
HISTORY_MODES = ("last", "concat", "cumulative")
BANDIT_UPDATE_RULES = ("accumulate", "mean")
POLARITIES = ("positive", "negative")

START_DELIM = "<START>"
END_DELIM = "<END>"


class ConfigError(ValueError):
    """A run configuration field violates its contract."""


class EmptyPromptError(ValueError):
    """Prompt text is empty after trimming."""


@dataclass(frozen=True)
class Prompt:
    """One candidate prompt with lineage and cached scores.

    ``round`` is the beam-search round at which the prompt was created; only
    the seed prompt (round 0) has no parent.
    """

    id: int
    text: str
    round: int
    parent_id: int | None = None
    gradient_id: int | None = None
    train_score: float | None = None
    test_score: float | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise EmptyPromptError("prompt text is empty after trimming")
        if (self.round == 0) != (self.parent_id is None):
            raise ValueError("round 0 iff parent_id absent")
        if self.gradient_id is not None and self.parent_id is None:
            raise ValueError("gradient_id requires a parent_id")


@dataclass(frozen=True)
class Gradient:
    """One natural-language reason extracted from a completion.

    Attributed to the prompt it appraised and the round it was generated in.
    """

    id: int
    text: str
    source_prompt_id: int
    round: int
    polarity: str = "positive"

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("gradient text is empty")
        if START_DELIM in self.text or END_DELIM in self.text:
            raise ValueError("gradient text contains a wrap delimiter")
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")


@dataclass(frozen=True)
class Beam:
    """Ordered prompt ids retained after one selection round (best first)."""

    round: int
    prompts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.prompts)) != len(self.prompts):
            raise ValueError("duplicate prompt ids within a beam")


@dataclass
class GradientHistory:
    """Round-indexed pools of positive gradients kept by surviving prompts.

    ``pools[i]`` holds the gradients used to create round-``i`` survivors;
    ``sampled[i]`` is the single member drawn from that round's pool.
    """

    pools: dict[int, tuple[int, ...]] = field(default_factory=dict)
    sampled: dict[int, int] = field(default_factory=dict)

    def check(self) -> None:
        for round_index, gradient_id in self.sampled.items():
            if gradient_id not in self.pools.get(round_index, ()):
                raise ValueError(f"sampled[{round_index}] is not in its pool")


@dataclass(frozen=True)
class BanditConfig:
    """Selection-loop knobs: time steps, per-pull sample size, exploration weight.

    ``update_rule`` picks between the sample-weighted accumulation update
    (``accumulate``, the default: N grows by the sample size and Q by r/N) and
    a textbook pull-count running mean (``mean``).
    """

    time_steps: int = 25
    sample_size: int = 32
    exploration: float = 1.0
    update_rule: str = "accumulate"


@dataclass(frozen=True)
class RunConfig:
    """Full hyperparameter set for one optimization run."""

    beam_width: int = 4
    search_depth: int = 6
    minibatch_size: int = 64
    candidates_per_parent: int = 8
    num_gradients: int = 2
    num_correct_examples: int = 3
    temperature: float = 0.0
    test_set_size: int = 200
    gradient_mode: str = "positive_only"
    momentum_enabled: bool = True
    baseline_mode: bool = False
    bandit: BanditConfig = field(default_factory=BanditConfig)
    rng_seed: int = 0
    # Documented switches beyond the headline parameters.
    history_mode: str = "last"
    include_parents: bool = True
    full_beam_test_eval: bool = False
    paraphrases_per_parent: int = 2
    convergence_target: float | None = None
    emit_predictions: bool = False


def validate_config(cfg: RunConfig) -> RunConfig:
    """Return ``cfg`` unchanged, or raise :class:`ConfigError` naming the bad field."""
    positive_fields = (
        "beam_width",
        "search_depth",
        "minibatch_size",
        "candidates_per_parent",
        "num_gradients",
        "num_correct_examples",
        "test_set_size",
    )
    for name in positive_fields:
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be a positive integer")
    if cfg.temperature < 0:
        raise ConfigError("temperature must be >= 0")
    if cfg.paraphrases_per_parent < 0:
        raise ConfigError("paraphrases_per_parent must be >= 0")
    if cfg.candidates_per_parent % cfg.num_gradients != 0:
        raise ConfigError(
            "candidates_per_parent must be divisible by num_gradients "
            f"({cfg.candidates_per_parent} % {cfg.num_gradients} != 0)"
        )
    if cfg.gradient_mode not in GRADIENT_MODES:
        raise ConfigError(f"gradient_mode must be one of {GRADIENT_MODES}")
    if cfg.history_mode not in HISTORY_MODES:
        raise ConfigError(f"history_mode must be one of {HISTORY_MODES}")
    if cfg.bandit.time_steps < 1:
        raise ConfigError("bandit.time_steps must be a positive integer")
    if cfg.bandit.sample_size < 1:
        raise ConfigError("bandit.sample_size must be a positive integer")
    if cfg.bandit.exploration < 0:
        raise ConfigError("bandit.exploration must be >= 0")
    if cfg.bandit.update_rule not in BANDIT_UPDATE_RULES:
        raise ConfigError(f"bandit.update_rule must be one of {BANDIT_UPDATE_RULES}")
    return cfg


def new_seed_prompt(text: str) -> Prompt:
    """Build the round-0 seed prompt (id 0, no parent, no scores)."""
    trimmed = text.strip()
    if not trimmed:
        raise EmptyPromptError("seed prompt text is empty after trimming")
    return Prompt(id=0, text=trimmed, round=0)


class PromptStore:
    """Creation-ordered registry handing out deterministic sequence ids.

    Ids are plain counters assigned in creation order, so a run under a fixed
    seed reproduces the exact same id assignment.
    """

    def __init__(self) -> None:
        self.prompts: dict[int, Prompt] = {}
        self.gradients: dict[int, Gradient] = {}
        self._next_prompt_id = 0
        self._next_gradient_id = 0

    def adopt(self, prompt: Prompt) -> Prompt:
        if prompt.id in self.prompts:
            raise ValueError(f"prompt id {prompt.id} already registered")
        self.prompts[prompt.id] = prompt
        self._next_prompt_id = max(self._next_prompt_id, prompt.id + 1)
        return prompt

    def new_prompt(
        self,
        text: str,
        round: int,
        parent_id: int | None = None,
        gradient_id: int | None = None,
    ) -> Prompt:
        prompt = Prompt(
            id=self._next_prompt_id,
            text=text,
            round=round,
            parent_id=parent_id,
            gradient_id=gradient_id,
        )
        self.prompts[prompt.id] = prompt
        self._next_prompt_id += 1
        return prompt

    def new_gradient(
        self, text: str, source_prompt_id: int, round: int, polarity: str
    ) -> Gradient:
        gradient = Gradient(
            id=self._next_gradient_id,
            text=text,
            source_prompt_id=source_prompt_id,
            round=round,
            polarity=polarity,
        )
        self.gradients[gradient.id] = gradient
        self._next_gradient_id += 1
        return gradient

    def set_train_score(self, prompt_id: int, score: float) -> Prompt:
        updated = replace(self.prompts[prompt_id], train_score=score)
        self.prompts[prompt_id] = updated
        return updated

    def set_test_score(self, prompt_id: int, score: float) -> Prompt:
        updated = replace(self.prompts[prompt_id], test_score=score)
        self.prompts[prompt_id] = updated
        return updated


def derived_rng(seed: int | str, *stream: object) -> random.Random:
    """Independent RNG stream keyed by (seed, *stream).

    String seeding hashes through SHA-512 inside ``random.Random``, so streams
    are stable across processes and platforms.
    """
    return random.Random("|".join(str(part) for part in (seed, *stream)))


_RECORD_TYPES = {
    "prompt": Prompt,
    "gradient": Gradient,
    "beam": Beam,
    "gradient_history": GradientHistory,
    "bandit_config": BanditConfig,
    "run_config": RunConfig,
}
_TYPE_NAMES = {cls: name for name, cls in _RECORD_TYPES.items()}


def to_record(obj: object) -> str:
    """Serialize a core type to one self-describing JSON line."""
    name = _TYPE_NAMES.get(type(obj))
    if name is None:
        raise TypeError(f"{type(obj).__name__} has no record form")
    payload = {"type": name, **asdict(obj)}  # type: ignore[call-overload]
    return json.dumps(payload, sort_keys=True)


def from_record(line: str) -> object:
    """Inverse of :func:`to_record`."""
    payload = json.loads(line)
    kind = payload.pop("type", None)
    cls = _RECORD_TYPES.get(kind)
    if cls is None:
        raise ValueError(f"unknown record type {kind!r}")
    if cls is Beam:
        payload["prompts"] = tuple(payload["prompts"])
    elif cls is GradientHistory:
        payload["pools"] = {int(k): tuple(v) for k, v in payload["pools"].items()}
        payload["sampled"] = {int(k): v for k, v in payload["sampled"].items()}
    elif cls is RunConfig:
        payload["bandit"] = BanditConfig(**payload["bandit"])
    return cls(**payload)
