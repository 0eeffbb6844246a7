"""Compose sub-prompts into a task-level prompt schema and render instances.

Composition walks the shared predicate order, concatenates each predicate's
template, and keeps only the final occurrence of each entity placeholder so
that back-to-back sub-prompts mention each entity once.  The instance text
placeholder is emitted exactly once, at the front.  Mask position ``j`` draws
its candidate vocabulary from the phrases the rules actually use at conjunct
``j``, in first-seen order over rules, which keeps candidate indices stable
across recompiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .data import Instance
from .errors import CompileError, RenderError, SpecError
from .rules import (
    OBJECT,
    SUBJECT,
    Role,
    Rule,
    TaskSpec,
    TemplateElement,
    phrases_by_position,
    validate,
)

SCHEMA_FORMAT = "ptr-schema/1"


@dataclass(frozen=True)
class PromptSchema:
    """Compiled task prompt: element layout, per-mask vocabularies, and the
    class-to-phrase-tuple mapping (as indices into each mask vocabulary)."""

    elements: tuple[TemplateElement, ...]
    n_masks: int
    mask_vocabs: tuple[tuple[str, ...], ...]
    verbalizer: Mapping[str, tuple[int, ...]]
    classes: tuple[str, ...]
    learnable_count: int
    reversed_classes: tuple[str, ...] = ()

    @cached_property
    def template_string(self) -> str:
        return " ".join(el.token() for el in self.elements)

    def phrase_tuple(self, cls: str) -> tuple[str, ...]:
        return tuple(
            self.mask_vocabs[j][idx] for j, idx in enumerate(self.verbalizer[cls])
        )

    def verbalizer_table(self) -> list[tuple[str, tuple[str, ...]]]:
        """Rows of (class, phrase tuple) in class order."""
        return [(cls, self.phrase_tuple(cls)) for cls in self.classes]


@dataclass(frozen=True)
class RenderedInput:
    """An instance fused with the prompt layout, ready for the encoder."""

    tokens: tuple[str, ...]
    mask_positions: tuple[int, ...]
    learnable_positions: tuple[int, ...]
    entity_spans: tuple[tuple[Role, int, int], ...]

    def text(self) -> str:
        return " ".join(self.tokens)


def compile_spec(spec: TaskSpec) -> PromptSchema:
    """Build the :class:`PromptSchema` for a validated spec.

    Deterministic; refuses to compile when :func:`ptr.rules.validate` finds
    errors.
    """
    report = validate(spec)
    if not report.ok:
        raise CompileError(
            "spec fails validation:\n" + "\n".join(f.message for f in report.errors)
        )

    order = spec.composition_order
    raw: list[TemplateElement] = []
    for name in order:
        raw.extend(spec.predicate_map[name].template)

    last_entity: dict[Role, int] = {}
    for i, el in enumerate(raw):
        if el.kind == "entity":
            last_entity[el.role] = i  # type: ignore[index]
    elements: list[TemplateElement] = [TemplateElement.text()]
    for i, el in enumerate(raw):
        if el.kind == "entity" and last_entity[el.role] != i:  # type: ignore[index]
            continue
        elements.append(el)

    reversed_classes = tuple(r.class_label for r in spec.rules if r.reversed)
    if reversed_classes and len(reversed_classes) == len(spec.rules):
        # a uniformly reversed task reads object-first throughout
        elements = [
            TemplateElement.entity(OBJECT if el.role == SUBJECT else SUBJECT)
            if el.kind == "entity"
            else el
            for el in elements
        ]

    vocabs = tuple(tuple(v) for v in phrases_by_position(spec))
    verbalizer: dict[str, tuple[int, ...]] = {}
    for rule in spec.rules:
        verbalizer[rule.class_label] = tuple(
            vocabs[j].index(phrase) for j, (_, phrase) in enumerate(rule.conjuncts)
        )
    if len(set(verbalizer.values())) != len(verbalizer):
        raise CompileError("verbalizer tuples are not pairwise distinct across classes")

    learnable = sorted({el.index for el in elements if el.kind == "learnable"})
    n_masks = sum(1 for el in elements if el.kind == "mask")
    if n_masks != len(order):
        raise CompileError(
            f"compiled template has {n_masks} mask slots for {len(order)} conjuncts"
        )

    return PromptSchema(
        elements=tuple(elements),
        n_masks=n_masks,
        mask_vocabs=vocabs,
        verbalizer=verbalizer,
        classes=spec.classes,
        learnable_count=len(learnable),
        reversed_classes=reversed_classes,
    )


def render(schema: PromptSchema, instance: Instance) -> RenderedInput:
    """Replace placeholders with instance tokens; masks and learnable slots
    stay as reserved tokens.  Deterministic."""
    if not instance.tokens:
        raise RenderError(f"instance {instance.id!r}: empty input")
    n = len(instance.tokens)
    for name, (lo, hi) in (("subj", instance.subj_span), ("obj", instance.obj_span)):
        if not (0 <= lo < hi <= n):
            raise RenderError(
                f"instance {instance.id!r}: {name} span [{lo}, {hi}) out of bounds"
            )
    a, b = sorted([instance.subj_span, instance.obj_span])
    if a[1] > b[0]:
        raise RenderError(f"instance {instance.id!r}: entity spans overlap")

    tokens: list[str] = []
    mask_positions: list[int] = []
    learnable_positions: list[int] = []
    entity_spans: list[tuple[Role, int, int]] = []
    for el in schema.elements:
        if el.kind == "text":
            tokens.extend(instance.tokens)
        elif el.kind == "entity":
            surface = instance.subj_tokens if el.role == SUBJECT else instance.obj_tokens
            entity_spans.append((el.role, len(tokens), len(tokens) + len(surface)))
            tokens.extend(surface)
        elif el.kind == "mask":
            mask_positions.append(len(tokens))
            tokens.append("[MASK]")
        elif el.kind == "learnable":
            learnable_positions.append(len(tokens))
            tokens.append(f"[L{el.index}]")
        else:
            tokens.append(el.word)  # type: ignore[arg-type]

    return RenderedInput(
        tokens=tuple(tokens),
        mask_positions=tuple(mask_positions),
        learnable_positions=tuple(learnable_positions),
        entity_spans=tuple(entity_spans),
    )


def reverse_relations(spec: TaskSpec, subset: Iterable[str]) -> TaskSpec:
    """Swap subject/object role bindings for the rules of ``subset`` classes.

    Reversal toggles the rule's marker, so applying the same subset twice is
    the identity.  Mask vocabularies and the verbalizer are untouched; only
    the direction in which a reversed class reads the two entities changes.
    """
    wanted = list(dict.fromkeys(subset))
    unknown = [c for c in wanted if c not in spec.classes]
    if unknown:
        raise SpecError(f"cannot reverse unknown class {unknown[0]!r}")
    for cls in wanted:
        rule = spec.rule_map[cls]
        if not any(spec.predicate_map[name].arity == 2 for name, _ in rule.conjuncts):
            raise SpecError(f"class {cls!r} has no binary conjunct to reverse")
    flip = set(wanted)
    new_rules = tuple(
        Rule(r.class_label, r.conjuncts, not r.reversed) if r.class_label in flip else r
        for r in spec.rules
    )
    return TaskSpec(spec.predicates, spec.classes, new_rules, spec.positions)


# ---------------------------------------------------------------------------
# schema document (canonical JSON)
# ---------------------------------------------------------------------------


def _element_to_doc(el: TemplateElement) -> dict:
    doc: dict = {"kind": el.kind}
    if el.kind == "literal":
        doc["word"] = el.word
    elif el.kind == "entity":
        doc["role"] = el.role
    elif el.kind == "learnable":
        doc["index"] = el.index
    return doc


def _element_from_doc(doc: dict) -> TemplateElement:
    kind = doc["kind"]
    if kind == "literal":
        return TemplateElement.literal(doc["word"])
    if kind == "entity":
        return TemplateElement.entity(doc["role"])
    if kind == "learnable":
        return TemplateElement.learnable(int(doc["index"]))
    if kind == "mask":
        return TemplateElement.mask()
    if kind == "text":
        return TemplateElement.text()
    raise CompileError(f"unknown element kind {kind!r} in schema document")


def schema_to_doc(schema: PromptSchema) -> dict:
    """Schema as a JSON-ready dict with documented, stable field order."""
    return {
        "format": SCHEMA_FORMAT,
        "template": schema.template_string,
        "elements": [_element_to_doc(el) for el in schema.elements],
        "n_masks": schema.n_masks,
        "mask_vocabs": [list(v) for v in schema.mask_vocabs],
        "classes": list(schema.classes),
        "verbalizer": {cls: list(schema.verbalizer[cls]) for cls in schema.classes},
        "learnable_count": schema.learnable_count,
        "reversed_classes": list(schema.reversed_classes),
    }


def schema_from_doc(doc: dict) -> PromptSchema:
    if doc.get("format") != SCHEMA_FORMAT:
        raise CompileError(f"unsupported schema format {doc.get('format')!r}")
    return PromptSchema(
        elements=tuple(_element_from_doc(d) for d in doc["elements"]),
        n_masks=int(doc["n_masks"]),
        mask_vocabs=tuple(tuple(v) for v in doc["mask_vocabs"]),
        verbalizer={cls: tuple(ix) for cls, ix in doc["verbalizer"].items()},
        classes=tuple(doc["classes"]),
        learnable_count=int(doc["learnable_count"]),
        reversed_classes=tuple(doc.get("reversed_classes", ())),
    )


def write_schema(schema: PromptSchema, path: str | Path) -> None:
    payload = json.dumps(schema_to_doc(schema), indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(payload, encoding="utf-8", newline="\n")


def read_schema(path: str | Path) -> PromptSchema:
    return schema_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
