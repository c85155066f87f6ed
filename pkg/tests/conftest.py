from __future__ import annotations

import pytest

from promptopt import (
    Example,
    Gateway,
    HeuristicScript,
    RunConfig,
    BanditConfig,
    ScriptedBackend,
    make_split,
    new_seed_prompt,
)

SEED_TEXT = "Is this statement true? Answer Yes or No."


def toy_examples(n: int = 120) -> list[Example]:
    return [
        Example(i, f"sample statement number {i} about an everyday event", "Yes" if i % 2 == 0 else "No")
        for i in range(n)
    ]


def small_config(**overrides) -> RunConfig:
    base = dict(
        beam_width=2,
        search_depth=2,
        minibatch_size=8,
        candidates_per_parent=4,
        num_gradients=2,
        num_correct_examples=2,
        test_set_size=20,
        bandit=BanditConfig(time_steps=8, sample_size=4),
        rng_seed=7,
    )
    base.update(overrides)
    return RunConfig(**base)


def scripted_gateway(examples, label_set, seed: int = 7, **script_kwargs) -> Gateway:
    responder = HeuristicScript(examples, label_set, seed=seed, **script_kwargs)
    return Gateway(ScriptedBackend(responder))


@pytest.fixture
def examples():
    return toy_examples()


@pytest.fixture
def split(examples):
    return make_split(examples, 20, 7, task_type="classification", positive_label="Yes")


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture
def gateway(examples, split):
    return scripted_gateway(examples, split.label_set)


@pytest.fixture
def seed_prompt():
    return new_seed_prompt(SEED_TEXT)
