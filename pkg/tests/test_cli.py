from __future__ import annotations

import json
from pathlib import Path

import pytest

from promptopt.cli import (
    EXIT_CONFIG,
    EXIT_DATASET,
    EXIT_INCOMPLETE,
    EXIT_OK,
    main,
    read_config_file,
)
from promptopt.model import ConfigError

DATA = Path(__file__).parent / "data" / "demo.tsv"

CONFIG_BODY = f"""
[run]
seed_prompt = Decide whether the statement happened. Answer Yes or No.
beam_width = 2
search_depth = 2
minibatch_size = 8
candidates_per_parent = 4
num_gradients = 2
num_correct_examples = 2
test_set_size = 16
rng_seed = 11

[bandit]
time_steps = 8
sample_size = 4

[dataset]
path = {DATA}
format = tsv
task_type = classification
positive_label = Yes
"""


@pytest.fixture
def config_file(tmp_path) -> Path:
    file = tmp_path / "run.ini"
    file.write_text(CONFIG_BODY, encoding="utf-8")
    return file


def test_read_config_file_sections(config_file) -> None:
    run_overrides, bandit_overrides, dataset, gateway_section, extra = read_config_file(config_file)
    assert run_overrides["beam_width"] == 2
    assert bandit_overrides == {"time_steps": 8, "sample_size": 4}
    assert dataset.positive_label == "Yes"
    assert extra["seed_prompt"].startswith("Decide whether")
    assert gateway_section == {}


def test_read_config_file_rejects_unknown_key(tmp_path) -> None:
    file = tmp_path / "bad.ini"
    file.write_text("[run]\nbeem_width = 4\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="beem_width"):
        read_config_file(file)


def test_optimize_happy_path(config_file, tmp_path, capsys) -> None:
    out = tmp_path / "artifact"
    code = main(
        ["optimize", "--config", str(config_file), "--backend", "scripted", "--out", str(out)]
    )
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "best prompt" in printed
    assert (out / "events.jsonl").exists()
    config_echo = json.loads((out / "config.json").read_text())
    assert config_echo["beam_width"] == 2
    assert config_echo["rng_seed"] == 11


def test_optimize_mode_protegi_presets(config_file, tmp_path) -> None:
    out = tmp_path / "baseline"
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--mode",
            "protegi",
            "--backend",
            "scripted",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    config_echo = json.loads((out / "config.json").read_text())
    assert config_echo["baseline_mode"] is True
    assert config_echo["momentum_enabled"] is False
    assert config_echo["gradient_mode"] == "negative_only"
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["method"] == "protegi"


def test_optimize_gradient_mode_flag_overrides(config_file, tmp_path) -> None:
    out = tmp_path / "both"
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--mode",
            "mapo",
            "--gradient-mode",
            "both",
            "--backend",
            "scripted",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    config_echo = json.loads((out / "config.json").read_text())
    assert config_echo["gradient_mode"] == "both"
    polarities = {
        json.loads(line)["polarity"] for line in (out / "gradients.jsonl").read_text().splitlines()
    }
    assert polarities == {"positive", "negative"}


def test_optimize_momentum_flag(config_file, tmp_path) -> None:
    out = tmp_path / "nomom"
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--momentum",
            "off",
            "--backend",
            "scripted",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    assert json.loads((out / "config.json").read_text())["momentum_enabled"] is False


def test_optimize_missing_config_is_config_error(tmp_path) -> None:
    assert main(["optimize", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


def test_optimize_bad_dataset_path_is_dataset_error(tmp_path) -> None:
    file = tmp_path / "run.ini"
    file.write_text(
        CONFIG_BODY.replace(str(DATA), str(tmp_path / "missing.tsv")), encoding="utf-8"
    )
    assert main(["optimize", "--config", str(file)]) == EXIT_DATASET


def test_optimize_replay_requires_transcript(config_file) -> None:
    assert main(["optimize", "--config", str(config_file), "--backend", "replay"]) == EXIT_CONFIG


def test_optimize_replay_with_wrong_transcript_is_incomplete(config_file, tmp_path) -> None:
    out1 = tmp_path / "rec"
    assert (
        main(
            ["optimize", "--config", str(config_file), "--backend", "scripted", "--out", str(out1)]
        )
        == EXIT_OK
    )
    # Replaying under a different seed issues requests the transcript lacks.
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--backend",
            "replay",
            "--transcript",
            str(out1 / "transcript.jsonl"),
            "--seed",
            "99",
            "--out",
            str(tmp_path / "rep"),
        ]
    )
    assert code == EXIT_INCOMPLETE
    meta = json.loads((tmp_path / "rep" / "run_meta.json").read_text())
    assert meta["status"] == "incomplete"


def test_evaluate_counts_one_call_per_test_example(config_file, tmp_path, capsys) -> None:
    prompt_file = tmp_path / "prompt.txt"
    prompt_file.write_text("Answer Yes or No.", encoding="utf-8")
    code = main(
        [
            "evaluate",
            "--prompt-file",
            str(prompt_file),
            "--config",
            str(config_file),
            "--backend",
            "scripted",
        ]
    )
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "eval_calls=16" in printed  # test_set_size from the config
    assert "test_score=" in printed


def test_evaluate_empty_prompt_file_is_config_error(config_file, tmp_path) -> None:
    prompt_file = tmp_path / "empty.txt"
    prompt_file.write_text("   ", encoding="utf-8")
    code = main(
        ["evaluate", "--prompt-file", str(prompt_file), "--config", str(config_file)]
    )
    assert code == EXIT_CONFIG


def test_report_emits_three_curves_and_comparison(config_file, tmp_path) -> None:
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out, mode in ((out1, "mapo"), (out2, "protegi")):
        assert (
            main(
                [
                    "optimize",
                    "--config",
                    str(config_file),
                    "--mode",
                    mode,
                    "--backend",
                    "scripted",
                    "--out",
                    str(out),
                ]
            )
            == EXIT_OK
        )
    report_dir = tmp_path / "report"
    assert main(["report", str(out1), str(out2), "--out", str(report_dir)]) == EXIT_OK
    for stem in ("a", "b"):
        for curve in ("score_vs_round", "score_vs_time", "score_vs_calls"):
            assert (report_dir / f"{stem}_{curve}.csv").exists()
    rows = (report_dir / "a_score_vs_round.csv").read_text().splitlines()
    assert rows[0] == "round,best_test_score"
    assert len(rows) == 1 + 2 + 1  # header + round 0 + search_depth rounds
    comparison = (report_dir / "comparison.csv").read_text().splitlines()
    assert comparison[0] == "round,mapo,protegi"
    assert len(comparison) == 1 + 3


def test_report_empty_artifact_dir_errors(tmp_path) -> None:
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == EXIT_CONFIG


def test_optimize_live_backend_requires_endpoint_config(config_file) -> None:
    assert main(["optimize", "--config", str(config_file), "--backend", "live"]) == EXIT_CONFIG


def test_optimize_templates_flag_overrides_generator(config_file, tmp_path) -> None:
    template_dir = tmp_path / "templates"
    template_dir.mkdir()
    (template_dir / "tau.txt").write_text(
        "CUSTOM GENERATOR for {task_type}\n"
        'My current prompt is:\n"{prompt}"\n\n'
        "{correct_string}\n{positive_gradient_history}\n"
        "give {num_gradients} reasons why\n"
        "Wrap each reason with <START> and <END>\n",
        encoding="utf-8",
    )
    out = tmp_path / "custom"
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--backend",
            "scripted",
            "--templates",
            str(template_dir),
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    transcript_lines = (out / "transcript.jsonl").read_text().splitlines()
    generator_rows = [
        json.loads(line) for line in transcript_lines if json.loads(line)["role_tag"] == "gradient_gen"
    ]
    assert generator_rows
    assert all(r["rendered_prompt"].startswith("CUSTOM GENERATOR") for r in generator_rows)


def test_optimize_config_echo_names_dataset_and_seed_prompt(config_file, tmp_path) -> None:
    out = tmp_path / "echo"
    assert (
        main(
            ["optimize", "--config", str(config_file), "--backend", "scripted", "--out", str(out)]
        )
        == EXIT_OK
    )
    config_echo = json.loads((out / "config.json").read_text())
    assert config_echo["dataset"]["path"].endswith("demo.tsv")
    assert config_echo["dataset"]["positive_label"] == "Yes"
    assert config_echo["seed_prompt"].startswith("Decide whether")


def test_read_config_file_strips_inline_comments(tmp_path) -> None:
    file = tmp_path / "commented.ini"
    file.write_text(
        "[run]\n"
        "beam_width = 4              ; prompts kept per round\n"
        "search_depth = 6            # beam search rounds\n",
        encoding="utf-8",
    )
    run_overrides, _, _, _, _ = read_config_file(file)
    assert run_overrides == {"beam_width": 4, "search_depth": 6}


def test_optimize_missing_template_dir_is_config_error(config_file, tmp_path) -> None:
    code = main(
        [
            "optimize",
            "--config",
            str(config_file),
            "--backend",
            "scripted",
            "--templates",
            str(tmp_path / "nowhere"),
        ]
    )
    assert code == EXIT_CONFIG


def test_math_task_through_cli(tmp_path, capsys) -> None:
    data = tmp_path / "sums.jsonl"
    data.write_text(
        "\n".join(
            json.dumps({"question": f"add {i} and {i}", "answer": str(2 * i)})
            for i in range(40)
        )
        + "\n",
        encoding="utf-8",
    )
    config = tmp_path / "math.ini"
    config.write_text(
        "[run]\n"
        "seed_prompt = Work it out. End with #### <number>.\n"
        "beam_width = 2\n"
        "search_depth = 1\n"
        "minibatch_size = 8\n"
        "candidates_per_parent = 4\n"
        "num_correct_examples = 2\n"
        "test_set_size = 10\n"
        "rng_seed = 3\n"
        "[bandit]\n"
        "time_steps = 6\n"
        "sample_size = 4\n"
        "[dataset]\n"
        f"path = {data}\n"
        "format = jsonl\n"
        "task_type = math\n",
        encoding="utf-8",
    )
    out = tmp_path / "math_run"
    assert (
        main(["optimize", "--config", str(config), "--backend", "scripted", "--out", str(out)])
        == EXIT_OK
    )
    printed = capsys.readouterr().out
    assert "test_score=" in printed
    config_echo = json.loads((out / "config.json").read_text())
    assert config_echo["dataset"]["task_type"] == "math"


def test_protegi_preset_defaults_gradient_count_when_file_silent(tmp_path) -> None:
    file = tmp_path / "run.ini"
    file.write_text(
        CONFIG_BODY.replace("num_gradients = 2\n", ""), encoding="utf-8"
    )
    out = tmp_path / "p4"
    code = main(
        ["optimize", "--config", str(file), "--mode", "protegi", "--backend", "scripted",
         "--out", str(out)]
    )
    assert code == EXIT_OK
    assert json.loads((out / "config.json").read_text())["num_gradients"] == 4
