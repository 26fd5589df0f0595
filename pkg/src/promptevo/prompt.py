"""Prompt data types and the (str1, str2, order) encoding.

A discrete prompt template such as ``"This <code> is <mask>"`` is split at the
code marker into the words before it (``str1``) and the words after it
(``str2``). Together with the relative order of the four segments this gives a
fixed-shape genome regardless of how many words the template holds.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

CODE_MARKER = "<code>"
MASK_MARKER = "<mask>"


class PromptError(ValueError):
    """Base class for invalid prompt input."""


class MissingMarker(PromptError):
    pass


class SplitSegment(PromptError):
    pass


class OverLength(PromptError):
    pass


class MissingScore(KeyError):
    pass


class SegmentId(enum.Enum):
    STR1 = "STR1"
    STR2 = "STR2"
    CODE_SLOT = "CODE"
    MASK_SLOT = "MASK"


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


CANONICAL_ORDER = (SegmentId.STR1, SegmentId.CODE_SLOT, SegmentId.STR2, SegmentId.MASK_SLOT)
ALL_ORDERS: tuple[tuple[SegmentId, ...], ...] = tuple(itertools.permutations(SegmentId))


def _check_word(word) -> None:
    if not isinstance(word, str) or not word or any(ch.isspace() for ch in word):
        raise PromptError(f"invalid word {word!r}: words are non-empty and contain no whitespace")


@dataclass(frozen=True)
class PromptTemplate:
    str1: tuple[str, ...] = ()
    str2: tuple[str, ...] = ()
    order: tuple[SegmentId, ...] = CANONICAL_ORDER

    def __post_init__(self):
        object.__setattr__(self, "str1", tuple(self.str1))
        object.__setattr__(self, "str2", tuple(self.str2))
        object.__setattr__(self, "order", tuple(SegmentId(s) for s in self.order))
        if sorted(s.value for s in self.order) != sorted(s.value for s in SegmentId):
            raise PromptError(f"order must be a permutation of all segments, got {self.order}")
        for w in self.str1 + self.str2:
            _check_word(w)

    @property
    def words(self) -> tuple[str, ...]:
        return self.str1 + self.str2

    def __len__(self) -> int:
        return len(self.str1) + len(self.str2)

    def replace(self, **changes) -> "PromptTemplate":
        fields = {"str1": self.str1, "str2": self.str2, "order": self.order}
        fields.update(changes)
        return PromptTemplate(**fields)


@dataclass(frozen=True, eq=False)
class Verbalizer:
    """Label words for the two classes.

    Equality and hashing ignore word order within a class, because projection
    averages over the class and is therefore order-blind.
    """

    positive: tuple[str, ...]
    negative: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        if not self.positive or not self.negative:
            raise PromptError("verbalizer classes must be non-empty")
        for w in self.positive + self.negative:
            _check_word(w)
        if len(set(self.positive)) != len(self.positive) or len(set(self.negative)) != len(
            self.negative
        ):
            raise PromptError("verbalizer class contains a repeated word")
        shared = set(self.positive) & set(self.negative)
        if shared:
            raise PromptError(f"verbalizer classes overlap on {sorted(shared)}")

    @property
    def words(self) -> tuple[str, ...]:
        return self.positive + self.negative

    def __eq__(self, other):
        if not isinstance(other, Verbalizer):
            return NotImplemented
        return set(self.positive) == set(other.positive) and set(self.negative) == set(
            other.negative
        )

    def __hash__(self):
        return hash((frozenset(self.positive), frozenset(self.negative)))

    def __str__(self):
        return f"positive:{','.join(self.positive)};negative:{','.join(self.negative)}"


@dataclass(frozen=True)
class Prompt:
    template: PromptTemplate = field(default_factory=PromptTemplate)
    verbalizer: Optional[Verbalizer] = None

    def __str__(self):
        text = render(self.template, CODE_MARKER, MASK_MARKER)
        if self.verbalizer is None:
            return text
        return f"{text} || {self.verbalizer}"


def parse_verbalizer(spec: str) -> Verbalizer:
    """Parse the inline ``positive:w1,w2;negative:w3`` syntax."""
    classes: dict[str, list[str]] = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        name, sep, words = part.partition(":")
        name = name.strip().lower()
        if not sep or name not in ("positive", "negative"):
            raise PromptError(f"bad verbalizer clause {part!r}; expected positive:... or negative:...")
        classes[name] = [w.strip() for w in words.split(",") if w.strip()]
    if set(classes) != {"positive", "negative"}:
        raise PromptError("verbalizer needs both a positive and a negative clause")
    return Verbalizer(classes["positive"], classes["negative"])


def parse_template(
    raw: str,
    code_marker: str = CODE_MARKER,
    mask_marker: str = MASK_MARKER,
    max_prompt_length: Optional[int] = None,
) -> PromptTemplate:
    """Encode a raw template string as ``(str1, str2, order)``.

    Markers may touch adjacent punctuation (``"<mask>."``); they are split out
    before whitespace tokenization.

    Raises:
        MissingMarker: a marker does not occur exactly once.
        SplitSegment: the mask marker interrupts the words on one side of the
            code marker.
        OverLength: the template holds more than ``max_prompt_length`` words.
    """
    for marker in (code_marker, mask_marker):
        n = raw.count(marker)
        if n != 1:
            raise MissingMarker(f"expected exactly one {marker!r} in template, found {n}")
    tokens = raw.replace(code_marker, f" {code_marker} ").replace(mask_marker, f" {mask_marker} ")
    tokens = tokens.split()
    ci = tokens.index(code_marker)
    mi = tokens.index(mask_marker)

    before = [t for t in tokens[:ci] if t != mask_marker]
    after = [t for t in tokens[ci + 1 :] if t != mask_marker]
    S1, S2, C, M = SegmentId.STR1, SegmentId.STR2, SegmentId.CODE_SLOT, SegmentId.MASK_SLOT

    if mi > ci:
        inner, outer = tokens[ci + 1 : mi], tokens[mi + 1 :]
        if inner and outer:
            raise SplitSegment(f"{mask_marker!r} splits the words after {code_marker!r}")
        order = (S1, C, M, S2) if outer else CANONICAL_ORDER
    else:
        outer, inner = tokens[:mi], tokens[mi + 1 : ci]
        if inner and outer:
            raise SplitSegment(f"{mask_marker!r} splits the words before {code_marker!r}")
        order = (S1, M, C, S2) if outer else (M, S1, C, S2)

    template = PromptTemplate(tuple(before), tuple(after), order)
    if max_prompt_length is not None and len(template) > max_prompt_length:
        raise OverLength(f"template has {len(template)} words, cap is {max_prompt_length}")
    return template


def render(template: PromptTemplate, code_text: str, mask_marker: str = MASK_MARKER) -> str:
    parts = []
    for seg in template.order:
        if seg is SegmentId.STR1:
            parts.extend(template.str1)
        elif seg is SegmentId.STR2:
            parts.extend(template.str2)
        elif seg is SegmentId.CODE_SLOT:
            parts.append(code_text)
        else:
            parts.append(mask_marker)
    return " ".join(p for p in parts if p)


def canonical_key(prompt: Prompt) -> str:
    """Deterministic, injective identity string for caching and deduplication."""
    t = prompt.template
    doc = {
        "order": [s.value for s in t.order],
        "str1": list(t.str1),
        "str2": list(t.str2),
    }
    if prompt.verbalizer is not None:
        doc["positive"] = sorted(prompt.verbalizer.positive)
        doc["negative"] = sorted(prompt.verbalizer.negative)
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def project_label(scores: Mapping[str, float], verbalizer: Verbalizer) -> Label:
    """Map per-word mask scores to a class by comparing class-mean scores.

    An exact tie goes to the negative class.
    """
    missing = [w for w in verbalizer.words if w not in scores]
    if missing:
        raise MissingScore(f"no score for verbalizer words {missing}")
    pos = sum(scores[w] for w in verbalizer.positive) / len(verbalizer.positive)
    neg = sum(scores[w] for w in verbalizer.negative) / len(verbalizer.negative)
    return Label.POSITIVE if pos > neg else Label.NEGATIVE


def check_prompt(prompt: Prompt, max_prompt_length: Optional[int], needs_verbalizer: Optional[bool] = None):
    """Raise PromptError if ``prompt`` breaks a constraint the types cannot check alone."""
    if max_prompt_length is not None and len(prompt.template) > max_prompt_length:
        raise OverLength(f"template has {len(prompt.template)} words, cap is {max_prompt_length}")
    if needs_verbalizer is True and prompt.verbalizer is None:
        raise PromptError("classification prompt has no verbalizer")
    if needs_verbalizer is False and prompt.verbalizer is not None:
        raise PromptError("generation prompt carries a verbalizer")
