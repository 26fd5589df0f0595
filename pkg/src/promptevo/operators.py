"""Parent selection, crossover and mutation over encoded prompts.

All operators are pure: they take an explicit ``random.Random`` and return new
values. Mutation Type 1 grows the word pool, so ``mutate`` returns the
(possibly new) pool alongside the offspring.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from promptevo.prompt import (
    ALL_ORDERS,
    Prompt,
    PromptError,
    Verbalizer,
)


class TaskKind(str, enum.Enum):
    CLASSIFICATION = "classification"
    GENERATION = "generation"


class OperatorError(ValueError):
    pass


class UnevaluatedIndividual(OperatorError):
    pass


class PopulationTooSmall(OperatorError):
    pass


class EmptyTemplate(OperatorError):
    pass


class EmptyPool(OperatorError):
    pass


class NoVerbalizer(OperatorError):
    pass


@dataclass(frozen=True)
class OperatorConfig:
    crossover_prob: float = 0.9
    mutation_prob: float = 0.4
    max_prompt_length: int = 5
    task_kind: TaskKind = TaskKind.CLASSIFICATION
    max_retries: int = 8

    def __post_init__(self):
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.max_prompt_length < 1:
            raise ValueError("max_prompt_length must be >= 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    @property
    def crossover_types(self) -> tuple[int, ...]:
        return (1, 2, 3) if self.task_kind is TaskKind.CLASSIFICATION else (1, 3)

    @property
    def mutation_types(self) -> tuple[int, ...]:
        return (1, 2, 3, 4, 5) if self.task_kind is TaskKind.CLASSIFICATION else (1, 2, 3)


@dataclass(frozen=True)
class WordPool:
    """Candidate material for templates and verbalizers.

    ``template_entries`` are word groups; a group inserted by mutation goes in
    contiguously. Pools are values: growth returns a new pool.
    """

    template_entries: tuple[tuple[str, ...], ...]
    verbalizer_entries: tuple[str, ...] = ()

    def __post_init__(self):
        entries = tuple(tuple(e) for e in self.template_entries)
        if not entries:
            raise EmptyPool("word pool needs at least one template entry")
        for e in entries:
            if not e or any(not w or any(c.isspace() for c in w) for w in e):
                raise PromptError(f"bad pool entry {e!r}")
        object.__setattr__(self, "template_entries", entries)
        object.__setattr__(self, "verbalizer_entries", tuple(self.verbalizer_entries))

    @classmethod
    def from_lines(cls, template_lines: Sequence[str], verbalizer_lines: Sequence[str] = ()):
        entries = [tuple(line.split()) for line in template_lines if line.strip()]
        words = [line.strip() for line in verbalizer_lines if line.strip()]
        return cls(tuple(entries), tuple(words))

    def with_entry(self, entry: Sequence[str]) -> "WordPool":
        return WordPool(self.template_entries + (tuple(entry),), self.verbalizer_entries)

    @property
    def flat_words(self) -> list[str]:
        return [w for e in self.template_entries for w in e]


@dataclass
class Individual:
    prompt: Prompt
    fitness: Optional[float] = None


def select_parents(population: Sequence[Individual], rng: random.Random):
    """Two independent binary tournaments; ties are settled by a coin flip."""
    if len(population) < 2:
        raise PopulationTooSmall("parent selection needs at least two individuals")
    if any(ind.fitness is None for ind in population):
        raise UnevaluatedIndividual("parent selection over unevaluated individuals")

    def tournament():
        i, j = rng.sample(range(len(population)), 2)
        a, b = population[i], population[j]
        if a.fitness > b.fitness:
            return a
        if b.fitness > a.fitness:
            return b
        return a if rng.random() < 0.5 else b

    return tournament(), tournament()


# -- crossover ---------------------------------------------------------------


def crossover_type1(p1: Prompt, p2: Prompt, rng: random.Random, max_prompt_length=None):
    """Swap Str1 (or Str2) between the two templates.

    When a cap is given and the chosen swap would overflow it, the other
    segment is tried; if both overflow the parents come back unchanged.
    """
    first = rng.choice(("str1", "str2"))
    second = "str2" if first == "str1" else "str1"
    for seg in (first, second):
        t1 = p1.template.replace(**{seg: getattr(p2.template, seg)})
        t2 = p2.template.replace(**{seg: getattr(p1.template, seg)})
        if max_prompt_length is None or max(len(t1), len(t2)) <= max_prompt_length:
            return Prompt(t1, p1.verbalizer), Prompt(t2, p2.verbalizer)
    return p1, p2


def crossover_type2(p1: Prompt, p2: Prompt, rng: random.Random):
    """Swap the Positive (or Negative) word list between the two verbalizers."""
    v1, v2 = p1.verbalizer, p2.verbalizer
    if v1 is None or v2 is None:
        raise NoVerbalizer("verbalizer crossover needs both parents to carry a verbalizer")
    if rng.random() < 0.5:
        pairs = ((v2.positive, v1.negative), (v1.positive, v2.negative))
    else:
        pairs = ((v1.positive, v2.negative), (v2.positive, v1.negative))
    try:
        n1, n2 = Verbalizer(*pairs[0]), Verbalizer(*pairs[1])
    except PromptError:
        # swapped class collides with the kept one
        return p1, p2
    return Prompt(p1.template, n1), Prompt(p2.template, n2)


def crossover_type3(p1: Prompt, p2: Prompt):
    return Prompt(p2.template, p1.verbalizer), Prompt(p1.template, p2.verbalizer)


def crossover(p1: Prompt, p2: Prompt, cfg: OperatorConfig, rng: random.Random):
    if rng.random() >= cfg.crossover_prob:
        return p1, p2
    kind = rng.choice(cfg.crossover_types)
    if kind == 1:
        return crossover_type1(p1, p2, rng, cfg.max_prompt_length)
    if kind == 2:
        return crossover_type2(p1, p2, rng)
    return crossover_type3(p1, p2)


# -- mutation ----------------------------------------------------------------


def mutation_type1(p: Prompt, pool: WordPool, rng: random.Random):
    """Remove a random subset of words from Str1, Str2 or both.

    The removed words, Str1's first and each in original order, become one new
    pool entry.
    """
    t = p.template
    options = []
    if t.str1:
        options.append(("str1",))
    if t.str2:
        options.append(("str2",))
    if t.str1 and t.str2:
        options.append(("str1", "str2"))
    if not options:
        raise EmptyTemplate("template has no words to remove")
    targets = rng.choice(options)

    removed: list[str] = []
    changes = {}
    for seg in targets:
        words = getattr(t, seg)
        k = rng.randint(1, len(words))
        drop = set(rng.sample(range(len(words)), k))
        removed.extend(w for i, w in enumerate(words) if i in drop)
        changes[seg] = tuple(w for i, w in enumerate(words) if i not in drop)
    return Prompt(t.replace(**changes), p.verbalizer), pool.with_entry(removed)


def mutation_type2(
    p: Prompt, pool: WordPool, rng: random.Random, max_prompt_length=None, max_retries: int = 8
):
    """Insert one pool entry, as a contiguous block, into Str1 or Str2."""
    if not pool.template_entries:
        raise EmptyPool("no template entries to insert")
    t = p.template
    for _ in range(max_retries):
        entry = rng.choice(pool.template_entries)
        seg = rng.choice(("str1", "str2"))
        words = getattr(t, seg)
        pos = rng.randint(0, len(words))
        if max_prompt_length is not None and len(t) + len(entry) > max_prompt_length:
            continue
        new = words[:pos] + entry + words[pos:]
        return Prompt(t.replace(**{seg: new}), p.verbalizer)
    return p


def mutation_type3(p: Prompt, rng: random.Random):
    """Replace the segment order with a different, uniformly drawn permutation."""
    others = [o for o in ALL_ORDERS if o != p.template.order]
    return Prompt(p.template.replace(order=rng.choice(others)), p.verbalizer)


def mutation_type4(p: Prompt, rng: random.Random):
    v = p.verbalizer
    if v is None:
        raise NoVerbalizer("label-word removal needs a verbalizer")
    classes = [c for c in ("positive", "negative") if len(getattr(v, c)) >= 2]
    if not classes:
        return p
    cls = rng.choice(classes)
    words = list(getattr(v, cls))
    del words[rng.randrange(len(words))]
    kept = {"positive": v.positive, "negative": v.negative, cls: tuple(words)}
    return Prompt(p.template, Verbalizer(**kept))


def mutation_type5(p: Prompt, pool: WordPool, rng: random.Random, max_retries: int = 8):
    v = p.verbalizer
    if v is None:
        raise NoVerbalizer("label-word insertion needs a verbalizer")
    if not pool.verbalizer_entries:
        raise EmptyPool("no verbalizer words in pool")
    for _ in range(max_retries):
        word = rng.choice(pool.verbalizer_entries)
        cls = rng.choice(("positive", "negative"))
        if word in v.positive or word in v.negative:
            continue
        kept = {"positive": v.positive, "negative": v.negative}
        kept[cls] = kept[cls] + (word,)
        return Prompt(p.template, Verbalizer(**kept))
    return p


def _applicable(kind: int, p: Prompt, pool: WordPool, cfg: OperatorConfig) -> bool:
    t, v = p.template, p.verbalizer
    if kind == 1:
        return len(t) > 0
    if kind == 2:
        return any(len(t) + len(e) <= cfg.max_prompt_length for e in pool.template_entries)
    if kind == 3:
        return True
    if kind == 4:
        return v is not None and (len(v.positive) >= 2 or len(v.negative) >= 2)
    return v is not None and any(
        w not in v.positive and w not in v.negative for w in pool.verbalizer_entries
    )


def mutate(p: Prompt, pool: WordPool, cfg: OperatorConfig, rng: random.Random):
    """Apply one mutation type with probability ``cfg.mutation_prob``.

    Returns ``(prompt, pool)``; the pool only changes under Type 1.
    """
    if rng.random() >= cfg.mutation_prob:
        return p, pool
    for _ in range(cfg.max_retries):
        kind = rng.choice(cfg.mutation_types)
        if not _applicable(kind, p, pool, cfg):
            continue
        if kind == 1:
            return mutation_type1(p, pool, rng)
        if kind == 2:
            return mutation_type2(p, pool, rng, cfg.max_prompt_length, cfg.max_retries), pool
        if kind == 3:
            return mutation_type3(p, rng), pool
        if kind == 4:
            return mutation_type4(p, rng), pool
        return mutation_type5(p, pool, rng, cfg.max_retries), pool
    return p, pool
