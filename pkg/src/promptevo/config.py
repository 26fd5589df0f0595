"""Run configuration files (TOML).

Schema::

    [task]
    kind = "classification"          # or "generation"
    metric = "accuracy"              # accuracy | bleu | codebleu

    [evolution]                      # all optional; defaults shown
    population_size = 20
    max_generations = 20
    init_mode = "random"             # random | user | hybrid
    seed = 0
    parallelism = 1
    max_label_words = 3

    [operators]                      # all optional; defaults shown
    crossover_prob = 0.9
    mutation_prob = 0.4
    max_prompt_length = 5
    max_retries = 8

    [gateway]                        # exactly one of [gateway] / [synthetic]
    base_url = "http://localhost:8000"
    timeout = 30.0
    max_attempts = 3
    backoff = 0.5
    token_env = "PROMPTEVO_TOKEN"
    max_new_tokens = 128

    [synthetic]
    target = "Summarize the <code> <mask>"
    verbalizer = "positive:Buggy;negative:Good"   # classification only

    [data]
    dataset = "data/devign.jsonl"    # required with [gateway]
    template_pool = "pools/template.txt"
    verbalizer_pool = "pools/verbalizer.txt"       # default: bundled list
    keywords = "pools/java_keywords.txt"           # codebleu only
    keyword_weight = 5.0
    user_prompts = ["The <code> code is <mask>"]
    # or: [[data.user_prompts]] template = "..." verbalizer = "positive:..;negative:.."

    output_dir = "runs/quickstart"

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from promptevo.engine import EvolutionConfig
from promptevo.fitness import DatasetEvaluator, load_jsonl, load_wordlist
from promptevo.gateway import GatewayConfig, HttpGateway, SyntheticEvaluator, SyntheticOracleSpec
from promptevo.operators import OperatorConfig, TaskKind, WordPool
from promptevo.prompt import Prompt, PromptError, parse_template, parse_verbalizer

METRICS = {"accuracy", "bleu", "codebleu"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: TaskKind
    metric: str
    evolution: EvolutionConfig
    output_dir: Path
    gateway: Optional[GatewayConfig] = None
    synthetic: Optional[SyntheticOracleSpec] = None
    dataset: Optional[Path] = None
    template_pool: Optional[Path] = None
    verbalizer_pool: Optional[Path] = None
    keywords: Optional[Path] = None
    keyword_weight: float = 5.0
    user_prompts: list = field(default_factory=list)
    source: dict = field(default_factory=dict)

    def check_runnable(self) -> None:
        """Raise ConfigError if the init mode lacks its word or prompt source."""
        mode = self.evolution.init_mode.value
        if mode in ("random", "hybrid") and self.template_pool is None:
            raise ConfigError(f"init_mode {mode!r} needs data.template_pool")
        if mode in ("user", "hybrid") and not self.user_prompts:
            raise ConfigError(f"init_mode {mode!r} needs data.user_prompts")

    def build_pool(self) -> Optional[WordPool]:
        if self.template_pool is None:
            return None
        lines = self.template_pool.read_text(encoding="utf-8").splitlines()
        verbal = load_wordlist(self.verbalizer_pool) if self.verbalizer_pool else default_verbalizer_pool()
        return WordPool.from_lines(lines, verbal)

    def build_evaluator(self):
        if self.synthetic is not None:
            return SyntheticEvaluator(self.synthetic)
        data = load_jsonl(self.dataset, self.task.value)
        keywords = load_wordlist(self.keywords) if self.keywords else ()
        return DatasetEvaluator(data, HttpGateway(self.gateway), self.metric, keywords, self.keyword_weight)


def default_verbalizer_pool() -> list[str]:
    text = resources.files("promptevo").joinpath("data/verbalizer_pool.txt").read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _path(base: Path, value, what: str, must_exist=True) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    if not p.is_absolute():
        p = (base / p).resolve()
    if must_exist and not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _user_prompt(entry, task: TaskKind, cap: int) -> Prompt:
    if isinstance(entry, str):
        template, verbal = entry, None
    elif isinstance(entry, dict):
        template, verbal = entry.get("template"), entry.get("verbalizer")
    else:
        raise ConfigError(f"bad user prompt entry {entry!r}")
    try:
        t = parse_template(template, max_prompt_length=cap)
        v = parse_verbalizer(verbal) if verbal else None
    except PromptError as exc:
        raise ConfigError(f"user prompt {template!r}: {exc}") from exc
    if task is TaskKind.CLASSIFICATION and v is None:
        raise ConfigError(f"user prompt {template!r} needs a verbalizer for classification")
    if task is TaskKind.GENERATION and v is not None:
        raise ConfigError(f"user prompt {template!r}: generation prompts take no verbalizer")
    return Prompt(t, v)


def parse_config(doc: dict, base: Path, overrides: Optional[dict] = None) -> RunConfig:
    """Validate a config mapping. ``overrides`` beat file values, which beat defaults."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    try:
        task_doc = doc.get("task", {})
        task = TaskKind(task_doc.get("kind", "classification"))
        default_metric = "accuracy" if task is TaskKind.CLASSIFICATION else "bleu"
        metric = overrides.get("metric", task_doc.get("metric", default_metric))
        if metric not in METRICS:
            raise ConfigError(f"unknown metric {metric!r}")
        if (metric == "accuracy") != (task is TaskKind.CLASSIFICATION):
            raise ConfigError(f"metric {metric!r} does not fit a {task.value} task")

        ops = OperatorConfig(task_kind=task, **doc.get("operators", {}))
        evo_doc = dict(doc.get("evolution", {}))
        for key, name in (("seed", "seed"), ("parallelism", "parallelism"), ("generations", "max_generations")):
            if key in overrides:
                evo_doc[name] = overrides[key]
        evolution = EvolutionConfig(operators=ops, **evo_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    has_gw, has_syn = "gateway" in doc, "synthetic" in doc
    if has_gw == has_syn:
        raise ConfigError("config needs exactly one of [gateway] or [synthetic]")

    data = doc.get("data", {})
    cfg = RunConfig(
        task=task,
        metric=metric,
        evolution=evolution,
        output_dir=_path(base, overrides.get("out", doc.get("output_dir", "runs")), "output_dir", False),
        template_pool=_path(base, data.get("template_pool"), "template pool"),
        verbalizer_pool=_path(base, data.get("verbalizer_pool"), "verbalizer pool"),
        keywords=_path(base, data.get("keywords"), "keyword list"),
        keyword_weight=float(data.get("keyword_weight", 5.0)),
        source=doc,
    )
    if has_gw:
        try:
            cfg.gateway = GatewayConfig(**doc["gateway"])
        except TypeError as exc:
            raise ConfigError(f"[gateway]: {exc}") from exc
        if "dataset" not in data:
            raise ConfigError("[gateway] runs need data.dataset")
        cfg.dataset = _path(base, data["dataset"], "dataset")
    else:
        syn = doc["synthetic"]
        try:
            target = parse_template(syn["target"])
            verbal = parse_verbalizer(syn["verbalizer"]) if syn.get("verbalizer") else None
            cfg.synthetic = SyntheticOracleSpec(target, verbal)
        except (KeyError, PromptError, ValueError) as exc:
            raise ConfigError(f"[synthetic]: {exc}") from exc

    cap = evolution.operators.max_prompt_length
    cfg.user_prompts = [_user_prompt(e, task, cap) for e in data.get("user_prompts", [])]
    return cfg


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, path.resolve().parent, overrides)


def with_generations(cfg: RunConfig, n: int) -> RunConfig:
    return replace(cfg, evolution=replace(cfg.evolution, max_generations=n))
