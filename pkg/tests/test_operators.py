import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from promptevo import operators as ops
from promptevo.operators import (
    EmptyTemplate,
    Individual,
    NoVerbalizer,
    PopulationTooSmall,
    TaskKind,
    UnevaluatedIndividual,
    WordPool,
    crossover,
    crossover_type1,
    crossover_type2,
    crossover_type3,
    mutate,
    mutation_type1,
    mutation_type2,
    mutation_type3,
    mutation_type4,
    mutation_type5,
    select_parents,
)
from promptevo.prompt import (
    ALL_ORDERS,
    CANONICAL_ORDER,
    Prompt,
    PromptTemplate,
    SegmentId,
    Verbalizer,
    parse_template,
    render,
)
from strategies import config, default_pool, prompts

S1, S2, C, M = SegmentId.STR1, SegmentId.STR2, SegmentId.CODE_SLOT, SegmentId.MASK_SLOT


def raw(p: Prompt) -> str:
    return render(p.template, "<code>", "<mask>")


@pytest.fixture
def indi():
    p1 = Prompt(parse_template("This <code> is <mask>"), Verbalizer(("Buggy",), ("Good",)))
    p2 = Prompt(parse_template("The code <code> works <mask>"), Verbalizer(("Defective", "Bad"), ("Great",)))
    return p1, p2


# -- selection ---------------------------------------------------------------


def _pop(fits):
    return [Individual(Prompt(PromptTemplate((w,))), f) for w, f in zip("abcdefgh", fits)]


def test_select_parents_dominant():
    pop = _pop([0.9, 0.1])
    for seed in range(50):
        a, b = select_parents(pop, random.Random(seed))
        assert a is pop[0] and b is pop[0]


def test_select_parents_seeded_regression():
    a, b = select_parents(_pop([0.1, 0.5, 0.3, 0.5, 0.2]), random.Random(7))
    assert (a.prompt.template.str1, b.prompt.template.str1) == (("b",), ("d",))


def test_select_parents_uniform_when_tied():
    pop = _pop([0.5] * 5)
    rng = random.Random(0)
    counts = Counter()
    for _ in range(10_000):
        a, b = select_parents(pop, rng)
        counts[a.prompt.template.str1] += 1
        counts[b.prompt.template.str1] += 1
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_select_parents_errors():
    with pytest.raises(PopulationTooSmall):
        select_parents(_pop([1.0]), random.Random(0))
    with pytest.raises(UnevaluatedIndividual):
        select_parents([Individual(Prompt()), Individual(Prompt(), 1.0)], random.Random(0))


# -- crossover ---------------------------------------------------------------


def test_crossover_type1_worked_example(indi):
    a, b = crossover_type1(*indi, random.Random(1))
    assert (raw(a), raw(b)) == ("The code <code> is <mask>", "This <code> works <mask>")
    assert (a.verbalizer, b.verbalizer) == (indi[0].verbalizer, indi[1].verbalizer)


def test_crossover_type1_str2(indi):
    a, b = crossover_type1(*indi, random.Random(0))
    assert (raw(a), raw(b)) == ("This <code> works <mask>", "The code <code> is <mask>")


def test_crossover_type1_identical(indi):
    assert crossover_type1(indi[0], indi[0], random.Random(3)) == (indi[0], indi[0])


def test_crossover_type1_respects_cap():
    p1 = Prompt(PromptTemplate(("a", "b", "c", "d"), ("e",)))
    p2 = Prompt(PromptTemplate(("f",), ("g", "h", "i", "j")))
    for seed in range(20):
        a, b = crossover_type1(p1, p2, random.Random(seed), max_prompt_length=5)
        assert (a, b) == (p1, p2)


def test_crossover_type2_worked_example(indi):
    a, b = crossover_type2(*indi, random.Random(1))
    assert a.verbalizer == Verbalizer(("Defective", "Bad"), ("Good",))
    assert b.verbalizer == Verbalizer(("Buggy",), ("Great",))
    assert (a.template, b.template) == (indi[0].template, indi[1].template)


def test_crossover_type2_negative(indi):
    a, b = crossover_type2(*indi, random.Random(0))
    assert a.verbalizer == Verbalizer(("Buggy",), ("Great",))
    assert b.verbalizer == Verbalizer(("Defective", "Bad"), ("Good",))


def test_crossover_type2_collision_undone():
    p1 = Prompt(PromptTemplate(), Verbalizer(("x",), ("y",)))
    p2 = Prompt(PromptTemplate(), Verbalizer(("y",), ("x",)))
    for seed in range(10):
        assert crossover_type2(p1, p2, random.Random(seed)) == (p1, p2)


def test_crossover_type2_needs_verbalizer(indi):
    with pytest.raises(NoVerbalizer):
        crossover_type2(indi[0], Prompt(indi[1].template), random.Random(0))


def test_crossover_type3_worked_example(indi):
    a, b = crossover_type3(*indi)
    assert (raw(a), raw(b)) == ("The code <code> works <mask>", "This <code> is <mask>")
    assert (a.verbalizer, b.verbalizer) == (indi[0].verbalizer, indi[1].verbalizer)
    assert crossover_type3(*crossover_type3(*indi)) == indi
    assert crossover_type3(indi[0], indi[0]) == (indi[0], indi[0])


def test_crossover_prob_zero_returns_parents(indi):
    cfg = config(crossover_prob=0.0)
    assert crossover(*indi, cfg, random.Random(0)) == indi


# -- mutation ----------------------------------------------------------------


class ScriptedRng:
    """Stand-in rng whose choice/randint/sample follow a script, for direct construction."""

    def __init__(self, script):
        self.script = list(script)

    def choice(self, seq):
        return self.script.pop(0)

    def randint(self, a, b):
        return self.script.pop(0)

    def sample(self, population, k):
        return self.script.pop(0)


def test_mutation_type1_single_word():
    p = Prompt(PromptTemplate(("This",), ("is",)))
    q, pool = mutation_type1(p, default_pool(), ScriptedRng([("str1",), 1, [0]]))
    assert q.template == PromptTemplate((), ("is",))
    assert pool.template_entries[-1] == ("This",)


def test_mutation_type1_order_preserved():
    p = Prompt(PromptTemplate(("Generate", "comments", "for")))
    q, pool = mutation_type1(p, default_pool(), ScriptedRng([("str1",), 2, [2, 0]]))
    assert q.template.str1 == ("comments",)
    assert pool.template_entries[-1] == ("Generate", "for")


def test_mutation_type1_both_full():
    p = Prompt(PromptTemplate(("a", "b"), ("c",)))
    before = default_pool()
    q, pool = mutation_type1(p, before, ScriptedRng([("str1", "str2"), 2, [0, 1], 1, [0]]))
    assert len(q.template) == 0
    assert pool.template_entries == before.template_entries + (("a", "b", "c"),)


def test_mutation_type1_empty():
    with pytest.raises(EmptyTemplate):
        mutation_type1(Prompt(), default_pool(), random.Random(0))


def test_mutation_type2():
    pool = WordPool((("Summarize",),))
    q = mutation_type2(Prompt(), pool, random.Random(0), 5)
    assert q.template.words == ("Summarize",)
    p = Prompt(PromptTemplate(("This",)))
    pool2 = WordPool((("Generate", "for"),))
    q = mutation_type2(p, pool2, ScriptedRng([("Generate", "for"), "str1", 0]), 5)
    assert q.template.str1 == ("Generate", "for", "This")
    full = Prompt(PromptTemplate(("a", "b", "c"), ("d", "e")))
    assert mutation_type2(full, pool, random.Random(0), 5) == full


def test_mutation_type3_worked_example(indi):
    q = mutation_type3(indi[0], random.Random(31))
    assert raw(q) == "This is <code> <mask>"
    assert q.template.order == (S1, S2, C, M)
    assert (q.template.str1, q.template.str2) == (("This",), ("is",))


def test_mutation_type3_uniform_and_different():
    p = Prompt(PromptTemplate(("x",), ("y",)))
    rng = random.Random(0)
    counts = Counter()
    for _ in range(10_000):
        q = mutation_type3(p, rng)
        assert q.template.order != CANONICAL_ORDER
        counts[q.template.order] += 1
    assert len(counts) == 23 == len(ALL_ORDERS) - 1
    assert chisquare(list(counts.values())).pvalue > 0.01


def test_mutation_type4():
    p = Prompt(PromptTemplate(), Verbalizer(("Defective", "Bad"), ("Good",)))
    outcomes = {mutation_type4(p, random.Random(s)).verbalizer for s in range(40)}
    assert outcomes == {Verbalizer(("Defective",), ("Good",)), Verbalizer(("Bad",), ("Good",))}
    lone = Prompt(PromptTemplate(), Verbalizer(("Buggy",), ("Good",)))
    assert mutation_type4(lone, random.Random(0)) == lone
    with pytest.raises(NoVerbalizer):
        mutation_type4(Prompt(), random.Random(0))


def test_mutation_type5():
    p = Prompt(PromptTemplate(), Verbalizer(("Buggy",), ("Good",)))
    pool = WordPool((("x",),), ("Defective",))
    q = mutation_type5(p, pool, ScriptedRng(["Defective", "positive"]))
    assert q.verbalizer == Verbalizer(("Buggy", "Defective"), ("Good",))
    clash = WordPool((("x",),), ("Good",))
    assert mutation_type5(p, clash, random.Random(0)) == p


@pytest.mark.parametrize("task", list(TaskKind))
def test_mutation_type_frequencies_uniform(task, monkeypatch):
    calls = Counter()
    for k in range(1, 6):
        name = f"mutation_type{k}"
        real = getattr(ops, name)

        def wrapper(*a, _k=k, _real=real, **kw):
            calls[_k] += 1
            return _real(*a, **kw)

        monkeypatch.setattr(ops, name, wrapper)
    cfg = config(task, mutation_prob=1.0)
    p = Prompt(PromptTemplate(("a",), ("b",)), Verbalizer(("Buggy", "Bad"), ("Good",)) if task is TaskKind.CLASSIFICATION else None)
    rng, pool = random.Random(0), default_pool()
    for _ in range(10_000):
        mutate(p, pool, cfg, rng)
    assert set(calls) == set(cfg.mutation_types)
    assert chisquare([calls[k] for k in cfg.mutation_types]).pvalue > 0.01


# -- properties --------------------------------------------------------------


def assert_valid(p: Prompt, cfg):
    t = p.template
    assert sorted(s.value for s in t.order) == sorted(s.value for s in SegmentId)
    assert len(t) <= cfg.max_prompt_length
    if cfg.task_kind is TaskKind.CLASSIFICATION:
        v = p.verbalizer
        assert v.positive and v.negative
        assert not set(v.positive) & set(v.negative)
    else:
        assert p.verbalizer is None


@settings(max_examples=200)
@given(st.sampled_from(list(TaskKind)), st.data(), st.integers(0, 2**32))
def test_operator_closure(task, data, seed):
    cfg = config(task)
    a = data.draw(prompts(task))
    b = data.draw(prompts(task))
    rng, pool = random.Random(seed), default_pool()
    for _ in range(10):
        a, b = crossover(a, b, cfg, rng)
        a, pool = mutate(a, pool, cfg, rng)
        b, pool = mutate(b, pool, cfg, rng)
        assert_valid(a, cfg)
        assert_valid(b, cfg)


@given(st.data(), st.integers(0, 2**32))
def test_crossover_conservation(data, seed):
    cfg = config(crossover_prob=1.0)
    a, b = data.draw(prompts()), data.draw(prompts())
    c, d = crossover(a, b, cfg, random.Random(seed))
    assert Counter(a.template.words + b.template.words) == Counter(c.template.words + d.template.words)
    assert Counter(a.verbalizer.words + b.verbalizer.words) == Counter(c.verbalizer.words + d.verbalizer.words)


@given(prompts(), st.integers(0, 2**32))
def test_mutation_type1_conservation(p, seed):
    if not len(p.template):
        return
    q, pool = mutation_type1(p, default_pool(), random.Random(seed))
    assert Counter(p.template.words) == Counter(q.template.words) + Counter(pool.template_entries[-1])
    assert len(pool.template_entries) == len(default_pool().template_entries) + 1


@given(prompts(), prompts(), st.integers(0, 2**32))
def test_determinism(a, b, seed):
    cfg = config(crossover_prob=1.0, mutation_prob=1.0)
    pool = default_pool()

    def run():
        rng = random.Random(seed)
        x, y = crossover(a, b, cfg, rng)
        return x, y, mutate(x, pool, cfg, rng)

    assert run() == run()
