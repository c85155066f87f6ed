"""Command-line front door: optimize, evaluate, and report.

Configuration is a flat INI file with [run], [bandit], [dataset], and
[gateway] sections; CLI flags override file values, and the environment
supplies only the API key (PROMPTOPT_API_KEY or OPENAI_API_KEY).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import artifact
from .data import DatasetError, DatasetSpec, load, make_split
from .gateway import (
    Gateway,
    GatewayError,
    LiveBackend,
    LiveConfig,
    ReplayBackend,
    ScriptedBackend,
    Transcript,
)
from .gradients import TemplateSet
from .model import BanditConfig, ConfigError, EmptyPromptError, RunConfig, new_seed_prompt, validate_config
from .scoring import TaskSpec, evaluate_prompt
from .scripted import HeuristicScript
from .search import RunIncompleteError, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3
EXIT_GATEWAY = 4
EXIT_INCOMPLETE = 5

_MODE_PRESETS = {
    "mapo": {"gradient_mode": "positive_only", "momentum_enabled": True, "baseline_mode": False},
    "protegi": {"gradient_mode": "negative_only", "momentum_enabled": False, "baseline_mode": True},
}
# The baseline method generates more gradients per parent, all negative.
_PROTEGI_NUM_GRADIENTS = 4

_BOOL_FIELDS = {
    "momentum_enabled",
    "baseline_mode",
    "include_parents",
    "full_beam_test_eval",
    "emit_predictions",
}
_FLOAT_FIELDS = {"temperature", "convergence_target", "exploration"}
_STR_FIELDS = {"gradient_mode", "history_mode", "update_rule"}


def _coerce(name: str, raw: str):
    if name in _BOOL_FIELDS:
        lowered = raw.strip().lower()
        if lowered not in ("true", "false", "on", "off", "1", "0", "yes", "no"):
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
        return lowered in ("true", "on", "1", "yes")
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name in _STR_FIELDS:
        return raw.strip()
    return int(raw)


def read_config_file(path: str | Path):
    """Parse the INI config into (run overrides, bandit overrides, dataset, gateway)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    parser.read(file)

    run_fields = {f.name for f in fields(RunConfig)} - {"bandit"}
    run_overrides: dict = {}
    extra: dict = {}
    for key, raw in parser.items("run") if parser.has_section("run") else []:
        if key in ("seed_prompt", "seed_prompt_file"):
            extra[key] = raw
        elif key in run_fields:
            try:
                run_overrides[key] = _coerce(key, raw)
            except ValueError as exc:
                raise ConfigError(f"[run] {key}: {exc}") from exc
        else:
            raise ConfigError(f"[run] unknown key {key!r}")

    bandit_fields = {f.name for f in fields(BanditConfig)}
    bandit_overrides: dict = {}
    for key, raw in parser.items("bandit") if parser.has_section("bandit") else []:
        if key not in bandit_fields:
            raise ConfigError(f"[bandit] unknown key {key!r}")
        try:
            bandit_overrides[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"[bandit] {key}: {exc}") from exc

    dataset = None
    if parser.has_section("dataset"):
        section = dict(parser.items("dataset"))
        try:
            dataset = DatasetSpec(
                path=section["path"],
                format=section.get("format", "tsv"),
                task_type=section.get("task_type", "classification"),
                positive_label=section.get("positive_label", ""),
                label_set=tuple(
                    s.strip() for s in section.get("label_set", "").split(",") if s.strip()
                ),
            )
        except KeyError as exc:
            raise ConfigError(f"[dataset] missing key {exc}") from exc

    gateway_section = dict(parser.items("gateway")) if parser.has_section("gateway") else {}
    return run_overrides, bandit_overrides, dataset, gateway_section, extra


def build_run_config(args, run_overrides: dict, bandit_overrides: dict) -> RunConfig:
    cfg = RunConfig(bandit=BanditConfig(**bandit_overrides))
    cfg = replace(cfg, **run_overrides)
    if getattr(args, "mode", None):
        preset = dict(_MODE_PRESETS[args.mode])
        if args.mode == "protegi" and "num_gradients" not in run_overrides:
            preset["num_gradients"] = _PROTEGI_NUM_GRADIENTS
        cfg = replace(cfg, **preset)
    if getattr(args, "gradient_mode", None):
        cfg = replace(cfg, gradient_mode=args.gradient_mode)
    if getattr(args, "momentum", None):
        cfg = replace(cfg, momentum_enabled=args.momentum == "on")
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    if getattr(args, "target", None) is not None:
        cfg = replace(cfg, convergence_target=args.target)
    if getattr(args, "verbose_predictions", False):
        cfg = replace(cfg, emit_predictions=True)
    return validate_config(cfg)


def _load_split(dataset: DatasetSpec | None, cfg: RunConfig):
    if dataset is None:
        raise ConfigError("config file has no [dataset] section")
    examples = load(dataset.path, dataset.format, dataset.task_type)
    label_set = dataset.label_set or None
    return examples, make_split(
        examples,
        cfg.test_set_size,
        cfg.rng_seed,
        task_type=dataset.task_type,
        positive_label=dataset.positive_label,
        label_set=label_set,
    )


def build_gateway(args, gateway_section: dict, cfg: RunConfig, examples, split) -> Gateway:
    backend_name = getattr(args, "backend", None) or gateway_section.get("backend", "scripted")
    if backend_name == "scripted":
        responder = HeuristicScript(
            examples, split.label_set, seed=cfg.rng_seed, task_type=split.task_type
        )
        return Gateway(ScriptedBackend(responder))
    if backend_name == "replay":
        transcript_path = getattr(args, "transcript", None) or gateway_section.get("transcript")
        if not transcript_path:
            raise ConfigError("replay backend needs --transcript PATH")
        if not Path(transcript_path).exists():
            raise ConfigError(f"transcript not found: {transcript_path}")
        return Gateway(ReplayBackend(Transcript.load(transcript_path)))
    if backend_name == "live":
        base_url = gateway_section.get("base_url")
        model = gateway_section.get("model")
        if not base_url or not model:
            raise ConfigError("[gateway] base_url and model are required for the live backend")
        api_key = os.environ.get("PROMPTOPT_API_KEY") or os.environ.get("OPENAI_API_KEY", "")
        config = LiveConfig(
            base_url=base_url,
            model=model,
            api_key=api_key,
            timeout_s=float(gateway_section.get("timeout_s", 60.0)),
        )
        return Gateway(LiveBackend(config))
    raise ConfigError(f"unknown backend {backend_name!r}")


def _seed_prompt_text(extra: dict) -> str:
    if "seed_prompt_file" in extra:
        path = Path(extra["seed_prompt_file"])
        if not path.exists():
            raise ConfigError(f"seed prompt file not found: {path}")
        return path.read_text(encoding="utf-8")
    if "seed_prompt" in extra:
        return extra["seed_prompt"]
    raise ConfigError("config needs [run] seed_prompt or seed_prompt_file")


def cmd_optimize(args) -> int:
    run_overrides, bandit_overrides, dataset, gateway_section, extra = read_config_file(args.config)
    cfg = build_run_config(args, run_overrides, bandit_overrides)
    examples, split = _load_split(dataset, cfg)
    seed = new_seed_prompt(_seed_prompt_text(extra))
    gateway = build_gateway(args, gateway_section, cfg, examples, split)
    templates = None
    if args.templates:
        if not Path(args.templates).is_dir():
            raise ConfigError(f"template directory not found: {args.templates}")
        templates = TemplateSet.from_dir(args.templates)
    method = args.mode or ("protegi" if cfg.baseline_mode else "mapo")
    out_dir = args.out or f"runs/{method}-seed{cfg.rng_seed}"

    result = run(
        seed,
        split,
        cfg,
        gateway,
        out_dir,
        templates=templates,
        method_name=method,
        # Echoed into config.json so a replay invocation can be rebuilt
        # from the artifact alone (backend choice deliberately excluded).
        config_context={
            "dataset": {
                "path": dataset.path,
                "format": dataset.format,
                "task_type": dataset.task_type,
                "positive_label": dataset.positive_label,
                "label_set": list(split.label_set),
            },
            "seed_prompt": seed.text,
        },
    )
    print(f"artifact: {result.artifact_dir}")
    print(f"best prompt (id {result.best.id}):")
    print(result.best.text)
    print(
        f"train_score={result.best.train_score:.4f} "
        f"test_score={result.best.test_score:.4f} "
        f"optimize_calls={gateway.optimize_calls()} eval_calls={gateway.eval_calls()}"
    )
    report = result.report
    if report.target_score is None:
        print("convergence: no target configured")
    elif report.reached:
        print(
            f"convergence: reached {report.target_score} at step {report.convergence_steps} "
            f"({report.convergence_time_s:.2f}s, {report.convergence_calls} calls)"
        )
    else:
        print(f"convergence: target {report.target_score} not reached")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run_overrides, bandit_overrides, dataset, gateway_section, _ = read_config_file(args.config)
    cfg = build_run_config(args, run_overrides, bandit_overrides)
    prompt_path = Path(args.prompt_file)
    if not prompt_path.exists():
        raise ConfigError(f"prompt file not found: {prompt_path}")
    prompt = new_seed_prompt(prompt_path.read_text(encoding="utf-8"))
    examples, split = _load_split(dataset, cfg)
    gateway = build_gateway(args, gateway_section, cfg, examples, split)
    task = TaskSpec(
        task_type=split.task_type,
        label_set=split.label_set,
        positive_label=split.positive_label,
        temperature=cfg.temperature,
    )
    with gateway.count_as_eval():
        score, _ = evaluate_prompt(prompt, split.test, gateway, task)
    print(f"test_score={score:.4f} eval_calls={gateway.eval_calls()}")
    return EXIT_OK


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_report(args) -> int:
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    curves: dict[str, dict[int, float]] = {}
    for raw_dir in args.artifacts:
        directory = Path(raw_dir)
        events = artifact.read_events(directory)
        if not events:
            raise ConfigError(f"no events found in artifact dir {directory}")
        meta = artifact.read_meta(directory)
        if meta.get("status") != "complete":
            print(f"warning: artifact {directory} is incomplete", file=sys.stderr)
        events.sort(key=lambda e: e["round"])
        stem = directory.name
        _write_csv(
            out_dir / f"{stem}_score_vs_round.csv",
            ["round", "best_test_score"],
            [[e["round"], e["best_test_score"]] for e in events],
        )
        _write_csv(
            out_dir / f"{stem}_score_vs_time.csv",
            ["elapsed_s", "best_test_score"],
            [[e["elapsed_s"], e["best_test_score"]] for e in events],
        )
        _write_csv(
            out_dir / f"{stem}_score_vs_calls.csv",
            ["optimize_calls", "eval_calls", "total_calls", "best_test_score"],
            [
                [
                    e["optimize_calls"],
                    e["eval_calls"],
                    e["optimize_calls"] + e["eval_calls"],
                    e["best_test_score"],
                ]
                for e in events
            ],
        )
        method = meta.get("method", stem)
        if method in curves:
            method = f"{method}_{stem}"
        curves[method] = {e["round"]: e["best_test_score"] for e in events}

    methods = list(curves)
    rounds = sorted({r for curve in curves.values() for r in curve})
    _write_csv(
        out_dir / "comparison.csv",
        ["round", *methods],
        [[r, *[curves[m].get(r, "") for m in methods]] for r in rounds],
    )
    print(f"wrote report CSVs to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptopt",
        description="Prompt optimization by beam search over LLM-edited candidates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    optimize = sub.add_parser("optimize", help="run the optimizer")
    optimize.add_argument("--config", required=True, help="INI config file")
    optimize.add_argument("--mode", choices=("mapo", "protegi"))
    optimize.add_argument(
        "--gradient-mode", dest="gradient_mode", choices=("positive_only", "negative_only", "both")
    )
    optimize.add_argument("--momentum", choices=("on", "off"))
    optimize.add_argument("--backend", choices=("live", "replay", "scripted"))
    optimize.add_argument("--transcript", help="transcript path for the replay backend")
    optimize.add_argument("--seed", type=int)
    optimize.add_argument("--target", type=float, help="convergence target score")
    optimize.add_argument("--templates", help="directory of template override files")
    optimize.add_argument("--verbose-predictions", action="store_true")
    optimize.add_argument("--out", help="artifact directory")
    optimize.set_defaults(func=cmd_optimize)

    evaluate = sub.add_parser("evaluate", help="score a fixed prompt on the test split")
    evaluate.add_argument("--prompt-file", required=True)
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--backend", choices=("live", "replay", "scripted"))
    evaluate.add_argument("--transcript")
    evaluate.add_argument("--seed", type=int)
    evaluate.set_defaults(func=cmd_evaluate)

    report = sub.add_parser("report", help="emit plot-ready CSVs from run artifacts")
    report.add_argument("artifacts", nargs="+", help="artifact directories")
    report.add_argument("--out", help="output directory for CSV files")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EmptyPromptError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except RunIncompleteError as exc:
        print(f"incomplete run: {exc} (partial artifact: {exc.artifact_dir})", file=sys.stderr)
        return EXIT_INCOMPLETE
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY


if __name__ == "__main__":
    sys.exit(main())
