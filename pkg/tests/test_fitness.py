import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from promptevo.fitness import (
    ClassificationExample,
    DatasetEvaluator,
    GenerationExample,
    classification_fitness,
    generation_fitness,
    load_jsonl,
)
from promptevo.gateway import RemoteError
from promptevo.metrics import codebleu, smoothed_bleu4, weighted_ngram_bleu
from promptevo.prompt import Prompt, Verbalizer, parse_template

VERB = Verbalizer(("Defective", "Bad"), ("Perfect",))
PROMPT = Prompt(parse_template("The <code> code is <mask>"), VERB)


class ScriptedScorer:
    def __init__(self, responses):
        self.responses = list(responses)
        self.texts = []

    def score_label_words(self, text, label_words):
        self.texts.append(text)
        return self.responses.pop(0)


class Echo:
    def __init__(self, outputs=None):
        self.outputs = outputs

    def generate(self, text, max_new_tokens=None):
        return self.outputs.pop(0) if self.outputs is not None else text


def test_positive_scorer_all_positive():
    data = [ClassificationExample(f"int f{i}();", "positive") for i in range(5)]
    gw = ScriptedScorer([{"Defective": 0.9, "Bad": 0.8, "Perfect": 0.1}] * 5)
    assert classification_fitness(PROMPT, data, gw) == 1.0
    assert gw.texts[0] == "The int f0(); code is <mask>"


def test_constant_scorer_predicts_negative():
    labels = ["positive", "negative", "negative", "positive", "negative"]
    data = [ClassificationExample("x", y) for y in labels]
    gw = ScriptedScorer([{"Defective": 0.3, "Bad": 0.3, "Perfect": 0.3}] * 5)
    assert classification_fitness(PROMPT, data, gw) == 3 / 5


def test_scripted_trace():
    data = [
        ClassificationExample("a", "positive"),
        ClassificationExample("b", "negative"),
        ClassificationExample("c", "positive"),
        ClassificationExample("d", "negative"),
    ]
    gw = ScriptedScorer(
        [
            {"Defective": 0.6, "Bad": 0.2, "Perfect": 0.3},  # pos 0.4 > 0.3 -> positive (right)
            {"Defective": 0.1, "Bad": 0.1, "Perfect": 0.5},  # negative (right)
            {"Defective": 0.5, "Bad": 0.1, "Perfect": 0.3},  # pos 0.3 == 0.3 -> negative (wrong)
            {"Defective": 0.0, "Bad": 0.2, "Perfect": 0.2},  # negative (right)
        ]
    )
    assert classification_fitness(PROMPT, data, gw) == 0.75


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=8),
       st.sampled_from([0.5, 2.0, 16.0]))
def test_classification_scale_invariant(rows, k):
    data = [ClassificationExample("x", "positive" if i % 2 else "negative") for i in range(len(rows))]
    raw = [{"Defective": a, "Bad": b, "Perfect": c} for a, b, c in rows]
    scaled = [{w: v * k for w, v in r.items()} for r in raw]
    assert classification_fitness(PROMPT, data, ScriptedScorer(raw)) == classification_fitness(
        PROMPT, data, ScriptedScorer(scaled)
    )


def test_gateway_error_carries_index():
    class Failing:
        calls = 0

        def score_label_words(self, text, words):
            self.calls += 1
            if self.calls == 3:
                raise RemoteError("boom")
            return {w: 1.0 for w in words}

    data = [ClassificationExample("x", "positive")] * 4
    with pytest.raises(RemoteError) as info:
        classification_fitness(PROMPT, data, Failing())
    assert info.value.example_index == 2


def test_generation_echo_and_empty():
    prompt = Prompt(parse_template("<code> <mask>"))
    data = [GenerationExample("x", "x <mask>"), GenerationExample("def f ( )", "def f ( ) <mask>")]
    assert generation_fitness(prompt, data, Echo()) == 1.0
    assert generation_fitness(prompt, data, Echo(["", ""])) == 0.0


def test_generation_scripted_mean():
    prompt = Prompt(parse_template("Summarize <code> <mask>"))
    refs = ["returns the sum of a list", "opens a file", "sorts items in place"]
    outs = ["returns the sum", "opens a file", "sorts the items in place quickly"]
    data = [GenerationExample("c", r) for r in refs]
    per = [smoothed_bleu4(o, r).score for o, r in zip(outs, refs)]
    assert generation_fitness(prompt, data, Echo(list(outs))) == pytest.approx(sum(per) / 3, abs=1e-15)
    kws = {"sum", "file"}
    cb = [codebleu(smoothed_bleu4(o, r).score, weighted_ngram_bleu(o, r, kws, 5.0)) for o, r in zip(outs, refs)]
    got = generation_fitness(prompt, data, Echo(list(outs)), "codebleu", kws, 5.0)
    assert got == pytest.approx(sum(cb) / 3, abs=1e-15)


def test_generation_rejects_verbalizer():
    with pytest.raises(ValueError):
        generation_fitness(PROMPT, [GenerationExample("a", "b")], Echo())


def test_load_jsonl(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join(json.dumps({"code": c, "label": y}) for c, y in [("a", "positive"), ("b", "negative")]))
    data = load_jsonl(p, "classification")
    assert [d.label.value for d in data] == ["positive", "negative"]
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"code": "a"}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        load_jsonl(bad, "classification")


def test_dataset_evaluator_dispatch():
    data = [GenerationExample("x", "x <mask>")]
    ev = DatasetEvaluator(data, Echo(), metric="bleu")
    assert ev(Prompt(parse_template("<code> <mask>"))) == 1.0
