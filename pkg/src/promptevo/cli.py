"""Command-line front end.

Subcommands::

    promptevo run    --config run.toml [--seed N] [--out DIR] [--parallelism N] [--generations N] [--metric M]
    promptevo resume --checkpoint DIR/checkpoint.json [--generations N] [--config run.toml] [--out DIR]
    promptevo eval   --config run.toml --prompt "The <code> code is <mask>" [--verbalizer "positive:a;negative:b"]
    promptevo report HISTORY.csv [--out DIR]

Exit codes: 0 ok, 1 config/input error, 2 evaluation or gateway failure,
3 I/O failure. Errors go to stderr as one ``error[<kind>]: <message>`` line.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from promptevo.config import ConfigError, RunConfig, load_config, parse_config
from promptevo.engine import (
    Checkpoint,
    CorruptCheckpoint,
    EngineError,
    EvaluationFailed,
    RunHistory,
    VersionMismatch,
    evolve,
    load_checkpoint,
    resume,
    save_checkpoint,
)
from promptevo.gateway import GatewayError
from promptevo.operators import TaskKind
from promptevo.prompt import (
    CODE_MARKER,
    MASK_MARKER,
    Prompt,
    PromptError,
    check_prompt,
    parse_template,
    parse_verbalizer,
    render,
)

log = logging.getLogger("promptevo")

EXIT_OK, EXIT_CONFIG, EXIT_EVAL, EXIT_IO = 0, 1, 2, 3
BEST_FILE, HISTORY_FILE, CHECKPOINT_FILE, REPORT_FILE = "best_prompt.txt", "history.csv", "checkpoint.json", "report.tsv"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _format_prompt(p: Prompt) -> str:
    lines = [render(p.template, CODE_MARKER, MASK_MARKER)]
    if p.verbalizer is not None:
        lines.append(str(p.verbalizer))
    return "\n".join(lines) + "\n"


def _overrides(args) -> dict:
    return {
        "seed": getattr(args, "seed", None),
        "out": getattr(args, "out", None),
        "parallelism": getattr(args, "parallelism", None),
        "generations": getattr(args, "generations", None),
        "metric": getattr(args, "metric", None),
    }


def _build_evaluator(cfg: RunConfig):
    try:
        return cfg.build_evaluator()
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc)) from exc


def _emit(out_dir: Path, best, history: RunHistory) -> None:
    _write_atomic(out_dir / BEST_FILE, _format_prompt(best.prompt))
    _write_atomic(out_dir / HISTORY_FILE, history.to_csv())
    print(f"best_prompt: {str(best.prompt)}")
    print(f"fitness: {best.fitness!r}")
    print(f"output_dir: {out_dir}")


def _sink(out_dir: Path):
    def write(state: Checkpoint) -> None:
        _write_atomic(out_dir / CHECKPOINT_FILE, save_checkpoint(state))

    return write


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    cfg.check_runnable()
    evaluator = _build_evaluator(cfg)
    pool = cfg.build_pool()
    meta = {
        "config_dir": str(Path(args.config).resolve().parent),
        "config": cfg.source,
        "output_dir": str(cfg.output_dir),
        "metric": cfg.metric,
    }
    best, history = evolve(cfg.evolution, evaluator, pool, cfg.user_prompts, _sink(cfg.output_dir), meta)
    _emit(cfg.output_dir, best, history)
    return EXIT_OK


def cmd_resume(args) -> int:
    path = Path(args.checkpoint)
    try:
        state = load_checkpoint(path.read_bytes())
    except FileNotFoundError as exc:
        raise CliError(EXIT_CONFIG, "checkpoint", f"checkpoint not found: {path}") from exc
    meta = state.metadata
    if args.config:
        cfg = load_config(args.config, {"metric": args.metric})
    else:
        if "config" not in meta:
            raise CliError(EXIT_CONFIG, "config", "checkpoint has no embedded config; pass --config")
        cfg = parse_config(meta["config"], Path(meta["config_dir"]), {"metric": meta.get("metric")})
    if cfg.task is not state.config.operators.task_kind:
        raise CliError(EXIT_CONFIG, "config", "config task kind does not match the checkpoint")
    out_dir = Path(args.out).resolve() if args.out else Path(meta.get("output_dir", path.resolve().parent))
    evaluator = _build_evaluator(cfg)
    best, history = resume(state, evaluator, args.generations or 0, _sink(out_dir))
    if not args.generations:
        _write_atomic(out_dir / CHECKPOINT_FILE, save_checkpoint(state))
    _emit(out_dir, best, history)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, {"metric": args.metric})
    try:
        template = parse_template(args.prompt)
        verbal = parse_verbalizer(args.verbalizer) if args.verbalizer else None
        prompt = Prompt(template, verbal)
        check_prompt(prompt, None, cfg.task is TaskKind.CLASSIFICATION)
    except PromptError as exc:
        raise CliError(EXIT_CONFIG, "prompt", str(exc)) from exc
    evaluator = _build_evaluator(cfg)
    try:
        value = evaluator(prompt)
    except GatewayError as exc:
        raise CliError(EXIT_EVAL, "gateway", str(exc)) from exc
    metric = "synthetic" if cfg.synthetic is not None else cfg.metric
    print(f"{metric}: {value!r}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.history)
    try:
        text = path.read_text(encoding="utf-8")
        history = RunHistory.from_csv(text)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, "history", f"cannot read history {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "history", f"{path}: {exc}") from exc
    if not history.records:
        raise CliError(EXIT_CONFIG, "history", f"{path}: history is empty")

    rows = [(r.generation, r.best_fitness, r.mean_fitness, r.evaluations) for r in history.records]
    table = ["generation\tbest\tmean\tevaluations"] + [f"{g}\t{b!r}\t{m!r}\t{e}" for g, b, m, e in rows]
    print("\n".join(table))
    top = max(history.records, key=lambda r: r.best_fitness)
    print(f"best_prompt: {top.best_prompt}")
    print(f"fitness: {top.best_fitness!r}")
    if args.out:
        _write_atomic(Path(args.out) / REPORT_FILE, "\n".join(table) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="promptevo", description="Genetic search over discrete code-model prompts.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-generation progress")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evolve prompts from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--parallelism", type=int)
    run.add_argument("--generations", type=int)
    run.add_argument("--metric", choices=["accuracy", "bleu", "codebleu"])
    run.set_defaults(func=cmd_run)

    res = sub.add_parser("resume", help="continue a checkpointed run")
    res.add_argument("--checkpoint", required=True)
    res.add_argument("--generations", type=int, default=0, help="extra generations to run")
    res.add_argument("--config", help="rebuild the evaluator from this file instead of the embedded config")
    res.add_argument("--out")
    res.add_argument("--metric", choices=["accuracy", "bleu", "codebleu"])
    res.set_defaults(func=cmd_resume)

    ev = sub.add_parser("eval", help="score a single prompt")
    ev.add_argument("--config", required=True)
    ev.add_argument("--prompt", required=True)
    ev.add_argument("--verbalizer")
    ev.add_argument("--metric", choices=["accuracy", "bleu", "codebleu"])
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="summarize a history export")
    rep.add_argument("history")
    rep.add_argument("--out", help="also write report.tsv into this directory")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        code, kind, msg = exc.code, exc.kind, str(exc)
    except (ConfigError, PromptError) as exc:
        code, kind, msg = EXIT_CONFIG, "config", str(exc)
    except (VersionMismatch, CorruptCheckpoint) as exc:
        code, kind, msg = EXIT_CONFIG, "checkpoint", str(exc)
    except (EvaluationFailed, GatewayError) as exc:
        code, kind, msg = EXIT_EVAL, "evaluation", str(exc)
    except EngineError as exc:
        code, kind, msg = EXIT_CONFIG, "config", str(exc)
    except OSError as exc:
        code, kind, msg = EXIT_IO, "io", f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": ")
    print(f"error[{kind}]: {' '.join(msg.split())}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
