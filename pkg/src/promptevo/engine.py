"""Generational loop: initialize, evaluate with memoization, vary, select, checkpoint."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

from promptevo.operators import (
    EmptyPool,
    Individual,
    OperatorConfig,
    TaskKind,
    UnevaluatedIndividual,
    WordPool,
    crossover,
    mutate,
    select_parents,
)
from promptevo.prompt import (
    ALL_ORDERS,
    Prompt,
    PromptTemplate,
    SegmentId,
    Verbalizer,
    canonical_key,
    check_prompt,
)

log = logging.getLogger(__name__)

Evaluator = Callable[[Prompt], float]
CheckpointSink = Callable[["Checkpoint"], None]

CHECKPOINT_FORMAT = "promptevo-checkpoint"
CHECKPOINT_VERSION = 1


class EngineError(RuntimeError):
    pass


class NoUserPrompts(EngineError):
    pass


class InfeasibleVerbalizer(EngineError):
    pass


class EvaluationFailed(EngineError):
    def __init__(self, key: str, cause: BaseException):
        super().__init__(f"evaluation failed for prompt {key}: {cause}")
        self.key = key
        self.cause = cause


class CorruptCheckpoint(EngineError):
    pass


class VersionMismatch(EngineError):
    pass


class InitMode(str, enum.Enum):
    RANDOM = "random"
    USER = "user"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 20
    max_generations: int = 20
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    init_mode: InitMode = InitMode.RANDOM
    seed: int = 0
    parallelism: int = 1
    max_label_words: int = 3

    def __post_init__(self):
        object.__setattr__(self, "init_mode", InitMode(self.init_mode))
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")
        if self.parallelism < 1 or self.max_label_words < 1:
            raise ValueError("parallelism and max_label_words must be >= 1")


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0

    def best(self) -> Individual:
        return _best(self.individuals)


def _best(individuals: Sequence[Individual]) -> Individual:
    # first of the maximal ones, so ties resolve by position
    best = individuals[0]
    for ind in individuals[1:]:
        if ind.fitness > best.fitness:
            best = ind
    return best


class FitnessCache:
    """canonical key -> fitness; a key is written once per run."""

    def __init__(self, entries: Optional[dict] = None):
        self._data: dict[str, float] = dict(entries or {})
        self.calls = 0
        self.hits = 0

    def __contains__(self, key):
        return key in self._data

    def __len__(self):
        return len(self._data)

    def get(self, key):
        return self._data.get(key)

    def put(self, key: str, value: float):
        old = self._data.get(key)
        if old is not None and old != value:
            raise EngineError(f"cache key {key} rewritten with a different fitness")
        self._data[key] = value

    def items(self):
        return self._data.items()


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_key: str
    best_prompt: str
    evaluations: int
    cache_hits: int


HISTORY_FIELDS = [f for f in GenerationRecord.__dataclass_fields__]


@dataclass
class RunHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for r in self.records:
            row = asdict(r)
            row["best_fitness"] = repr(r.best_fitness)
            row["mean_fitness"] = repr(r.mean_fitness)
            writer.writerow([row[k] for k in HISTORY_FIELDS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunHistory":
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or list(reader.fieldnames) != HISTORY_FIELDS:
            raise ValueError("not a history export: header mismatch")
        records = []
        for row in reader:
            records.append(
                GenerationRecord(
                    generation=int(row["generation"]),
                    best_fitness=float(row["best_fitness"]),
                    mean_fitness=float(row["mean_fitness"]),
                    best_key=row["best_key"],
                    best_prompt=row["best_prompt"],
                    evaluations=int(row["evaluations"]),
                    cache_hits=int(row["cache_hits"]),
                )
            )
        return cls(records)


# -- initialization ----------------------------------------------------------


def _random_verbalizer(vocab: list[str], max_words: int, rng: random.Random) -> Verbalizer:
    k_pos = rng.randint(1, min(max_words, len(vocab) - 1))
    k_neg = rng.randint(1, min(max_words, len(vocab) - k_pos))
    picked = rng.sample(vocab, k_pos + k_neg)
    return Verbalizer(tuple(picked[:k_pos]), tuple(picked[k_pos:]))


def random_prompt(cfg: EvolutionConfig, pool: WordPool, rng: random.Random) -> Prompt:
    words = pool.flat_words
    n = rng.randint(0, cfg.operators.max_prompt_length)
    drawn = [rng.choice(words) for _ in range(n)]
    split = rng.randint(0, n)
    order = rng.choice(ALL_ORDERS)
    template = PromptTemplate(tuple(drawn[:split]), tuple(drawn[split:]), order)
    verbalizer = None
    if cfg.operators.task_kind is TaskKind.CLASSIFICATION:
        vocab = list(dict.fromkeys(pool.verbalizer_entries))
        verbalizer = _random_verbalizer(vocab, cfg.max_label_words, rng)
    return Prompt(template, verbalizer)


def initialize_population(
    cfg: EvolutionConfig,
    pool: Optional[WordPool],
    user_prompts: Optional[Sequence[Prompt]],
    rng: random.Random,
) -> Population:
    mode = cfg.init_mode
    ops = cfg.operators
    needs_random = mode in (InitMode.RANDOM, InitMode.HYBRID)
    if needs_random:
        if pool is None or not pool.flat_words:
            raise EmptyPool(f"{mode.value} initialization needs a template word pool")
        if ops.task_kind is TaskKind.CLASSIFICATION and len(set(pool.verbalizer_entries)) < 2:
            raise InfeasibleVerbalizer("need at least 2 distinct verbalizer words in the pool")
    users = list(user_prompts or [])
    if mode in (InitMode.USER, InitMode.HYBRID) and not users:
        raise NoUserPrompts(f"{mode.value} initialization needs at least one user prompt")
    for p in users:
        check_prompt(p, ops.max_prompt_length, ops.task_kind is TaskKind.CLASSIFICATION)

    n = cfg.population_size
    if mode is InitMode.USER:
        prompts = [users[i % len(users)] for i in range(n)]
    elif mode is InitMode.HYBRID:
        prompts = users[:n] + [random_prompt(cfg, pool, rng) for _ in range(n - len(users[:n]))]
    else:
        prompts = [random_prompt(cfg, pool, rng) for _ in range(n)]
    return Population([Individual(p) for p in prompts], generation=0)


def pool_from_prompts(prompts: Sequence[Prompt]) -> WordPool:
    """Word pool built from user prompts, for runs that supply no pool of their own."""
    entries = [p.template.words for p in prompts if len(p.template)]
    verbal = [w for p in prompts if p.verbalizer is not None for w in p.verbalizer.words]
    if not entries:
        raise EmptyPool("user prompts hold no template words to build a pool from")
    return WordPool(tuple(dict.fromkeys(entries)), tuple(dict.fromkeys(verbal)))


# -- evaluation and selection ------------------------------------------------


def evaluate_population(
    pop: Population, evaluator: Evaluator, cache: FitnessCache, cfg: EvolutionConfig
) -> Population:
    """Fill in every fitness, calling ``evaluator`` once per uncached distinct prompt."""
    keys = [canonical_key(ind.prompt) for ind in pop.individuals]
    todo: dict[str, Prompt] = {}
    for key, ind in zip(keys, pop.individuals):
        if key in cache or key in todo:
            cache.hits += 1
        else:
            todo[key] = ind.prompt

    def run(item):
        key, prompt = item
        try:
            value = float(evaluator(prompt))
        except Exception as exc:
            raise EvaluationFailed(key, exc) from exc
        if not math.isfinite(value) or value < 0:
            raise EvaluationFailed(key, ValueError(f"fitness {value} is not finite and >= 0"))
        return key, value

    items = list(todo.items())
    if cfg.parallelism == 1 or len(items) <= 1:
        results = [run(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as ex:
            results = list(ex.map(run, items))
    for key, value in results:
        cache.put(key, value)
        cache.calls += 1

    individuals = [Individual(ind.prompt, cache.get(k)) for k, ind in zip(keys, pop.individuals)]
    return Population(individuals, pop.generation)


def environmental_selection(
    parents: Population, offspring: Population, cfg: EvolutionConfig
) -> Population:
    """Elitist truncation of parents + offspring, preferring distinct prompts.

    Ranking is by fitness, then parents before offspring, then index. Duplicate
    prompts are admitted only once every distinct prompt has been taken.
    """
    pool = []
    for src, group in ((0, parents.individuals), (1, offspring.individuals)):
        for i, ind in enumerate(group):
            if ind.fitness is None:
                raise UnevaluatedIndividual("environmental selection over unevaluated individual")
            pool.append(((-ind.fitness, src, i), ind))
    pool.sort(key=lambda t: t[0])

    chosen, spare, seen = [], [], set()
    for _, ind in pool:
        key = canonical_key(ind.prompt)
        if key in seen:
            spare.append(ind)
        else:
            seen.add(key)
            chosen.append(ind)
    survivors = (chosen + spare)[: cfg.population_size]
    return Population([Individual(i.prompt, i.fitness) for i in survivors], parents.generation + 1)


def make_offspring(
    pop: Population, pool: WordPool, cfg: EvolutionConfig, rng: random.Random
) -> tuple[Population, WordPool]:
    children: list[Prompt] = []
    while len(children) < cfg.population_size:
        a, b = select_parents(pop.individuals, rng)
        c1, c2 = crossover(a.prompt, b.prompt, cfg.operators, rng)
        c1, pool = mutate(c1, pool, cfg.operators, rng)
        c2, pool = mutate(c2, pool, cfg.operators, rng)
        children.extend((c1, c2))
    children = children[: cfg.population_size]
    return Population([Individual(c) for c in children], pop.generation), pool


# -- checkpoints -------------------------------------------------------------


@dataclass
class Checkpoint:
    config: EvolutionConfig
    population: Population
    pool: WordPool
    cache: dict
    rng_state: tuple
    generation: int
    history: RunHistory
    evaluations: int = 0
    cache_hits: int = 0
    metadata: dict = field(default_factory=dict)


def _prompt_to_doc(p: Prompt) -> dict:
    doc = {
        "str1": list(p.template.str1),
        "str2": list(p.template.str2),
        "order": [s.value for s in p.template.order],
    }
    if p.verbalizer is not None:
        doc["positive"] = list(p.verbalizer.positive)
        doc["negative"] = list(p.verbalizer.negative)
    return doc


def _prompt_from_doc(doc: dict) -> Prompt:
    t = PromptTemplate(tuple(doc["str1"]), tuple(doc["str2"]), tuple(SegmentId(s) for s in doc["order"]))
    v = None
    if "positive" in doc:
        v = Verbalizer(tuple(doc["positive"]), tuple(doc["negative"]))
    return Prompt(t, v)


def _config_to_doc(cfg: EvolutionConfig) -> dict:
    doc = asdict(cfg)
    doc["init_mode"] = cfg.init_mode.value
    doc["operators"]["task_kind"] = cfg.operators.task_kind.value
    return doc


def _config_from_doc(doc: dict) -> EvolutionConfig:
    doc = dict(doc)
    doc["operators"] = OperatorConfig(**doc["operators"])
    return EvolutionConfig(**doc)


def save_checkpoint(state: Checkpoint) -> bytes:
    version, internal, gauss = state.rng_state
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "generation": state.generation,
        "config": _config_to_doc(state.config),
        "population": [
            {"prompt": _prompt_to_doc(ind.prompt), "fitness": ind.fitness}
            for ind in state.population.individuals
        ],
        "pool": {
            "template_entries": [list(e) for e in state.pool.template_entries],
            "verbalizer_entries": list(state.pool.verbalizer_entries),
        },
        "cache": dict(state.cache),
        "rng_state": [version, list(internal), gauss],
        "history": [asdict(r) for r in state.history.records],
        "counters": {"evaluations": state.evaluations, "cache_hits": state.cache_hits},
        "metadata": state.metadata,
    }
    return json.dumps(doc, indent=1, ensure_ascii=False).encode("utf-8")


def load_checkpoint(data: bytes) -> Checkpoint:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise CorruptCheckpoint(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint("not a promptevo checkpoint")
    version = doc.get("version")
    if not isinstance(version, int):
        raise CorruptCheckpoint("checkpoint has no integer version")
    if version > CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {version} is newer than supported version {CHECKPOINT_VERSION}"
        )
    try:
        rv, internal, gauss = doc["rng_state"]
        generation = int(doc["generation"])
        return Checkpoint(
            config=_config_from_doc(doc["config"]),
            population=Population(
                [
                    Individual(_prompt_from_doc(e["prompt"]), e["fitness"])
                    for e in doc["population"]
                ],
                generation,
            ),
            pool=WordPool(
                tuple(tuple(e) for e in doc["pool"]["template_entries"]),
                tuple(doc["pool"]["verbalizer_entries"]),
            ),
            cache={str(k): float(v) for k, v in doc["cache"].items()},
            rng_state=(rv, tuple(internal), gauss),
            generation=generation,
            history=RunHistory([GenerationRecord(**r) for r in doc["history"]]),
            evaluations=int(doc["counters"]["evaluations"]),
            cache_hits=int(doc["counters"]["cache_hits"]),
            metadata=dict(doc.get("metadata") or {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"checkpoint is missing or has malformed fields: {exc}") from exc


# -- main loop ---------------------------------------------------------------


def _record(pop: Population, cache: FitnessCache) -> GenerationRecord:
    best = pop.best()
    return GenerationRecord(
        generation=pop.generation,
        best_fitness=best.fitness,
        mean_fitness=statistics.fmean(i.fitness for i in pop.individuals),
        best_key=canonical_key(best.prompt),
        best_prompt=str(best.prompt),
        evaluations=cache.calls,
        cache_hits=cache.hits,
    )


def _run(state: Checkpoint, evaluator: Evaluator, checkpoint_sink: Optional[CheckpointSink]):
    cfg = state.config
    rng = random.Random()
    rng.setstate(state.rng_state)
    cache = FitnessCache(state.cache)
    cache.calls, cache.hits = state.evaluations, state.cache_hits
    pop, pool, history = state.population, state.pool, state.history

    def snapshot():
        return Checkpoint(
            cfg, pop, pool, dict(cache.items()), rng.getstate(), pop.generation, history,
            cache.calls, cache.hits, state.metadata,
        )

    if not history.records:
        pop = evaluate_population(pop, evaluator, cache, cfg)
        history.records.append(_record(pop, cache))
        if checkpoint_sink:
            checkpoint_sink(snapshot())

    while pop.generation < cfg.max_generations:
        pop = evaluate_population(pop, evaluator, cache, cfg)
        offspring, pool = make_offspring(pop, pool, cfg, rng)
        offspring = evaluate_population(offspring, evaluator, cache, cfg)
        pop = environmental_selection(pop, offspring, cfg)
        rec = _record(pop, cache)
        if history.records and rec.best_fitness < history.records[-1].best_fitness:
            raise EngineError("best fitness decreased; selection is not elitist")
        history.records.append(rec)
        log.info(
            "gen %d best=%.4f mean=%.4f evals=%d",
            rec.generation, rec.best_fitness, rec.mean_fitness, rec.evaluations,
        )
        if checkpoint_sink:
            checkpoint_sink(snapshot())

    return pop.best(), history, snapshot()


def evolve(
    cfg: EvolutionConfig,
    evaluator: Evaluator,
    pool: Optional[WordPool],
    user_prompts: Optional[Sequence[Prompt]] = None,
    checkpoint_sink: Optional[CheckpointSink] = None,
    metadata: Optional[dict] = None,
):
    """Run the genetic search and return ``(best individual, history)``."""
    rng = random.Random(cfg.seed)
    pop = initialize_population(cfg, pool, user_prompts, rng)
    if pool is None:
        pool = pool_from_prompts(user_prompts)
    state = Checkpoint(cfg, pop, pool, {}, rng.getstate(), 0, RunHistory(), metadata=metadata or {})
    best, history, _ = _run(state, evaluator, checkpoint_sink)
    return best, history


def resume(
    checkpoint: Checkpoint,
    evaluator: Evaluator,
    extra_generations: int,
    checkpoint_sink: Optional[CheckpointSink] = None,
):
    """Continue a checkpointed run for ``extra_generations`` more generations."""
    if extra_generations < 0:
        raise ValueError("extra_generations must be >= 0")
    cfg = replace(checkpoint.config, max_generations=checkpoint.generation + extra_generations)
    state = replace(checkpoint, config=cfg, history=RunHistory(list(checkpoint.history.records)))
    best, history, _ = _run(state, evaluator, checkpoint_sink)
    return best, history
