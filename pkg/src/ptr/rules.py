"""Rule language for declaring conditional functions and class rules.

A task spec declares predicates (each with a one-mask sub-prompt template and
a set of candidate label phrases), a class inventory, and one conjunction
rule per class picking a phrase from each predicate.  The concrete syntax is
line-oriented and diff-friendly:

    # a predicate: one template, one candidate phrase set
    predicate f_subj {
      template: the [MASK] <subj>;
      labels: "person", "organization";
    }

    classes { born_in, founded }

    rule born_in = f_subj("person") & f_rel("was born in") & f_obj("city");

Template tokens, whitespace separated: ``<subj>`` / ``<obj>`` entity
placeholders, ``[MASK]`` the predicate's single mask slot, ``[L0]``,
``[L1]``, ... learnable tokens, and bare words as literals.  ``<text>`` is
reserved for the compiled task prompt and may not appear inside a predicate
template.  Label phrases are double-quoted strings (``\\"`` and ``\\\\``
escapes); a phrase may span several surface words and is treated as one
atomic label unit.  ``#`` starts a comment running to end of line.

A rule may be marked reversed (``rule x = reversed f_a(..) & ..;``), meaning
its subject/object role bindings are swapped; see
:func:`ptr.compiler.reverse_relations`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal

from .errors import SpecError

Role = Literal["subject", "object"]
ElementKind = Literal["text", "entity", "mask", "learnable", "literal"]

SUBJECT: Role = "subject"
OBJECT: Role = "object"

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_:/.+-]*")
_LEARNABLE_RE = re.compile(r"\[L(\d+)\]\Z")


@dataclass(frozen=True)
class TemplateElement:
    """One token of a sub-prompt or compiled prompt template."""

    kind: ElementKind
    word: str | None = None
    role: Role | None = None
    index: int | None = None

    @staticmethod
    def literal(word: str) -> "TemplateElement":
        return TemplateElement("literal", word=word)

    @staticmethod
    def entity(role: Role) -> "TemplateElement":
        return TemplateElement("entity", role=role)

    @staticmethod
    def mask() -> "TemplateElement":
        return TemplateElement("mask")

    @staticmethod
    def learnable(index: int) -> "TemplateElement":
        return TemplateElement("learnable", index=index)

    @staticmethod
    def text() -> "TemplateElement":
        return TemplateElement("text")

    def token(self) -> str:
        """Canonical surface form, also used by the printer."""
        if self.kind == "literal":
            return self.word  # type: ignore[return-value]
        if self.kind == "entity":
            return "<subj>" if self.role == SUBJECT else "<obj>"
        if self.kind == "mask":
            return "[MASK]"
        if self.kind == "learnable":
            return f"[L{self.index}]"
        return "<text>"


@dataclass(frozen=True)
class Predicate:
    """A conditional function: template with one mask plus its label phrases."""

    name: str
    template: tuple[TemplateElement, ...]
    label_words: tuple[str, ...]

    @property
    def slots(self) -> tuple[Role, ...]:
        """Entity roles referenced by the template, in first-occurrence order."""
        seen: list[Role] = []
        for el in self.template:
            if el.kind == "entity" and el.role not in seen:
                seen.append(el.role)  # type: ignore[arg-type]
        return tuple(seen)

    @property
    def arity(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class Rule:
    """Conjunction rule for one class: an ordered phrase choice per predicate.

    ``reversed`` swaps the subject/object role bindings of every conjunct,
    annotating that the class reads object-first.
    """

    class_label: str
    conjuncts: tuple[tuple[str, str], ...]  # (predicate name, chosen phrase)
    reversed: bool = False


@dataclass(frozen=True)
class TaskSpec:
    """A parsed task: predicates, class inventory, one rule per class.

    ``positions`` maps ("predicate"|"rule", name) to the (line, col) where the
    construct starts; it is diagnostic metadata and excluded from equality.
    """

    predicates: tuple[Predicate, ...]
    classes: tuple[str, ...]
    rules: tuple[Rule, ...]
    positions: dict | None = field(default=None, compare=False, repr=False)

    @cached_property
    def predicate_map(self) -> dict[str, Predicate]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def rule_map(self) -> dict[str, Rule]:
        return {r.class_label: r for r in self.rules}

    @property
    def composition_order(self) -> tuple[str, ...]:
        """Predicate order shared by all rules (the first rule's order)."""
        if not self.rules:
            return ()
        return tuple(name for name, _ in self.rules[0].conjuncts)

    def location_of(self, kind: str, name: str) -> tuple[int, int] | None:
        if not self.positions:
            return None
        return self.positions.get((kind, name))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class _Scanner:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0

    def _line_col(self, pos: int) -> tuple[int, int]:
        line = self.src.count("\n", 0, pos) + 1
        last_nl = self.src.rfind("\n", 0, pos)
        return line, pos - last_nl

    def error(self, message: str, pos: int | None = None) -> SpecError:
        line, col = self._line_col(self.pos if pos is None else pos)
        return SpecError(message, line, col)

    def skip_space(self) -> None:
        while self.pos < len(self.src):
            ch = self.src[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "#":
                nl = self.src.find("\n", self.pos)
                self.pos = len(self.src) if nl < 0 else nl + 1
            else:
                return

    def at_end(self) -> bool:
        self.skip_space()
        return self.pos >= len(self.src)

    def expect(self, token: str) -> None:
        self.skip_space()
        if not self.src.startswith(token, self.pos):
            raise self.error(f"expected {token!r}")
        self.pos += len(token)

    def try_token(self, token: str) -> bool:
        self.skip_space()
        if self.src.startswith(token, self.pos):
            nxt = self.pos + len(token)
            # keywords must not glue onto identifier characters
            if token[-1].isalnum() and nxt < len(self.src) and _IDENT_RE.match(self.src[nxt]):
                return False
            self.pos = nxt
            return True
        return False

    def ident(self, what: str) -> str:
        self.skip_space()
        m = _IDENT_RE.match(self.src, self.pos)
        if not m:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m.group()

    def quoted(self) -> str:
        self.skip_space()
        if self.pos >= len(self.src) or self.src[self.pos] != '"':
            raise self.error("expected a quoted phrase")
        start = self.pos
        self.pos += 1
        out: list[str] = []
        while self.pos < len(self.src):
            ch = self.src[self.pos]
            if ch == "\\":
                if self.pos + 1 >= len(self.src):
                    break
                esc = self.src[self.pos + 1]
                if esc not in '\\"':
                    raise self.error(f"unknown escape \\{esc}", self.pos)
                out.append(esc)
                self.pos += 2
            elif ch == '"':
                self.pos += 1
                return "".join(out)
            elif ch == "\n":
                break
            else:
                out.append(ch)
                self.pos += 1
        raise self.error("unterminated phrase", start)

    def raw_until_semicolon(self) -> tuple[str, int]:
        self.skip_space()
        start = self.pos
        end = self.src.find(";", self.pos)
        if end < 0:
            raise self.error("expected ';'")
        self.pos = end + 1
        return self.src[start:end], start


def _parse_template(raw: str, scanner: _Scanner, start: int) -> tuple[TemplateElement, ...]:
    elements: list[TemplateElement] = []
    offset = 0
    for chunk in raw.split():
        at = start + raw.index(chunk, offset)
        offset = raw.index(chunk, offset) + len(chunk)
        if chunk == "<subj>":
            elements.append(TemplateElement.entity(SUBJECT))
        elif chunk == "<obj>":
            elements.append(TemplateElement.entity(OBJECT))
        elif chunk == "[MASK]":
            elements.append(TemplateElement.mask())
        elif chunk == "<text>":
            raise scanner.error(
                "input placeholder <text> is not allowed inside a predicate "
                "template; the compiler emits it once at the front",
                at,
            )
        elif m := _LEARNABLE_RE.match(chunk):
            elements.append(TemplateElement.learnable(int(m.group(1))))
        elif chunk.startswith("<") or chunk.startswith("["):
            raise scanner.error(f"unknown template token {chunk!r}", at)
        else:
            elements.append(TemplateElement.literal(chunk))
    if not elements:
        raise scanner.error("empty template", start)
    return tuple(elements)


def _check_predicate(pred: Predicate, scanner: _Scanner, at: int) -> None:
    masks = sum(1 for el in pred.template if el.kind == "mask")
    if masks != 1:
        raise scanner.error(
            f"predicate {pred.name!r} must contain exactly one [MASK] (found {masks})", at
        )
    if pred.arity not in (1, 2):
        raise scanner.error(
            f"predicate {pred.name!r} must reference one or two entity roles "
            f"(found {pred.arity})",
            at,
        )
    if not pred.label_words:
        raise scanner.error(f"predicate {pred.name!r} declares no label phrases", at)
    seen: set[str] = set()
    for phrase in pred.label_words:
        if phrase in seen:
            raise scanner.error(
                f"duplicate label phrase {phrase!r} in predicate {pred.name!r}", at
            )
        seen.add(phrase)
        if not phrase.strip():
            raise scanner.error(f"blank label phrase in predicate {pred.name!r}", at)


def parse_task_spec(source: str) -> TaskSpec:
    """Parse rule-language text into a :class:`TaskSpec`.

    Deterministic; raises :class:`~ptr.errors.SpecError` with a (line, col)
    location on any malformed input, and never anything else.
    """
    sc = _Scanner(source)
    predicates: list[Predicate] = []
    pred_names: set[str] = set()
    classes: list[str] = []
    rules: dict[str, tuple[Rule, int]] = {}
    positions: dict = {}
    saw_classes = False

    while not sc.at_end():
        sc.skip_space()
        at = sc.pos
        if sc.try_token("predicate"):
            name = sc.ident("predicate name")
            if name in pred_names:
                raise sc.error(f"duplicate predicate {name!r}", at)
            sc.expect("{")
            template: tuple[TemplateElement, ...] | None = None
            labels: tuple[str, ...] | None = None
            while not sc.try_token("}"):
                if sc.try_token("template"):
                    if template is not None:
                        raise sc.error(f"predicate {name!r} has two templates", at)
                    sc.expect(":")
                    raw, raw_at = sc.raw_until_semicolon()
                    template = _parse_template(raw, sc, raw_at)
                elif sc.try_token("labels"):
                    if labels is not None:
                        raise sc.error(f"predicate {name!r} has two label lists", at)
                    sc.expect(":")
                    phrases = [sc.quoted()]
                    while sc.try_token(","):
                        phrases.append(sc.quoted())
                    sc.expect(";")
                    labels = tuple(phrases)
                else:
                    raise sc.error("expected 'template', 'labels', or '}'")
            if template is None:
                raise sc.error(f"predicate {name!r} lacks a template", at)
            if labels is None:
                raise sc.error(f"predicate {name!r} lacks labels", at)
            pred = Predicate(name, template, labels)
            _check_predicate(pred, sc, at)
            predicates.append(pred)
            pred_names.add(name)
            positions[("predicate", name)] = sc._line_col(at)
        elif sc.try_token("classes"):
            if saw_classes:
                raise sc.error("duplicate classes section", at)
            saw_classes = True
            sc.expect("{")
            classes.append(sc.ident("class name"))
            while sc.try_token(","):
                classes.append(sc.ident("class name"))
            sc.expect("}")
            dupes = {c for c in classes if classes.count(c) > 1}
            if dupes:
                raise sc.error(f"duplicate class {sorted(dupes)[0]!r}", at)
        elif sc.try_token("rule"):
            label = sc.ident("class name")
            if label in rules:
                raise sc.error(f"duplicate rule for class {label!r}", at)
            sc.expect("=")
            is_reversed = sc.try_token("reversed")
            conjuncts: list[tuple[str, str]] = []
            while True:
                pred_name = sc.ident("predicate name")
                sc.expect("(")
                phrase = sc.quoted()
                sc.expect(")")
                conjuncts.append((pred_name, phrase))
                if not sc.try_token("&"):
                    break
            sc.expect(";")
            rules[label] = (Rule(label, tuple(conjuncts), is_reversed), at)
            positions[("rule", label)] = sc._line_col(at)
        else:
            raise sc.error("expected 'predicate', 'classes', or 'rule'")

    if not predicates:
        raise SpecError("spec declares no predicates")
    if not classes:
        raise SpecError("spec declares no classes")

    pred_map = {p.name: p for p in predicates}
    for label, (rule, at) in rules.items():
        if label not in classes:
            raise sc.error(f"rule for undeclared class {label!r}", at)
        for pred_name, phrase in rule.conjuncts:
            if pred_name not in pred_map:
                raise sc.error(
                    f"rule {label!r} references undeclared predicate {pred_name!r}", at
                )
            if phrase not in pred_map[pred_name].label_words:
                raise sc.error(
                    f"rule {label!r} picks phrase {phrase!r} that is not a label "
                    f"of predicate {pred_name!r}",
                    at,
                )
    for cls in classes:
        if cls not in rules:
            raise SpecError(f"class without rule: {cls!r}")

    ordered_rules = tuple(rules[cls][0] for cls in classes)
    return TaskSpec(tuple(predicates), tuple(classes), ordered_rules, positions)


# ---------------------------------------------------------------------------
# canonical printer
# ---------------------------------------------------------------------------


def _quote(phrase: str) -> str:
    return '"' + phrase.replace("\\", "\\\\").replace('"', '\\"') + '"'


def print_task_spec(spec: TaskSpec) -> str:
    """Bit-stable canonical form; ``parse_task_spec`` round-trips it."""
    chunks: list[str] = []
    for pred in spec.predicates:
        template = " ".join(el.token() for el in pred.template)
        labels = ", ".join(_quote(p) for p in pred.label_words)
        chunks.append(
            f"predicate {pred.name} {{\n"
            f"  template: {template};\n"
            f"  labels: {labels};\n"
            f"}}"
        )
    chunks.append("classes { " + ", ".join(spec.classes) + " }")
    for rule in spec.rules:
        body = " & ".join(f"{name}({_quote(phrase)})" for name, phrase in rule.conjuncts)
        marker = "reversed " if rule.reversed else ""
        chunks.append(f"rule {rule.class_label} = {marker}{body};")
    return "\n\n".join(chunks) + "\n"


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    location: tuple[int, int] | None = None


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Finding, ...]
    warnings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        lines = [f"error: {f.message}" for f in self.errors]
        lines += [f"warning: {f.message}" for f in self.warnings]
        return "\n".join(lines) if lines else "ok"


def _verbalizer_tuples(spec: TaskSpec) -> dict[str, tuple[str, ...]]:
    return {r.class_label: tuple(phrase for _, phrase in r.conjuncts) for r in spec.rules}


def validate(spec: TaskSpec) -> ValidationReport:
    """Re-check every structural invariant and report findings.

    Specs built by :func:`parse_task_spec` always pass; this catches
    hand-constructed or programmatically edited specs.
    """
    errors: list[Finding] = []
    warnings: list[Finding] = []

    def err(code: str, message: str, loc=None) -> None:
        errors.append(Finding(code, message, loc))

    for pred in spec.predicates:
        loc = spec.location_of("predicate", pred.name)
        masks = sum(1 for el in pred.template if el.kind == "mask")
        if masks != 1:
            err("mask-count", f"predicate {pred.name!r} has {masks} mask slots, wants 1", loc)
        if pred.arity not in (1, 2):
            err("bad-arity", f"predicate {pred.name!r} has arity {pred.arity}", loc)
        if not pred.label_words:
            err("no-labels", f"predicate {pred.name!r} has no label phrases", loc)
        if len(set(pred.label_words)) != len(pred.label_words):
            err("duplicate-label", f"predicate {pred.name!r} repeats a label phrase", loc)
        for el in pred.template:
            if el.kind == "literal" and (el.word is None or not el.word.strip()):
                err("blank-literal", f"predicate {pred.name!r} has a blank literal", loc)
            if el.kind == "text":
                err("text-in-subprompt", f"predicate {pred.name!r} embeds <text>", loc)

    rule_labels = [r.class_label for r in spec.rules]
    for cls in spec.classes:
        if cls not in rule_labels:
            err("class-without-rule", f"class without rule: {cls!r}")
    for label in rule_labels:
        if label not in spec.classes:
            err("rule-without-class", f"rule for undeclared class {label!r}")
    if len(set(rule_labels)) != len(rule_labels):
        err("duplicate-rule", "two rules share a class label")

    order = spec.composition_order
    for rule in spec.rules:
        loc = spec.location_of("rule", rule.class_label)
        if tuple(name for name, _ in rule.conjuncts) != order:
            err(
                "inconsistent-composition-order",
                f"rule {rule.class_label!r} orders predicates differently from "
                f"the first rule",
                loc,
            )
        for pred_name, phrase in rule.conjuncts:
            pred = spec.predicate_map.get(pred_name)
            if pred is None:
                err("unknown-predicate", f"rule {rule.class_label!r} uses undeclared "
                    f"predicate {pred_name!r}", loc)
            elif phrase not in pred.label_words:
                err("unknown-phrase", f"rule {rule.class_label!r} picks {phrase!r}, not a "
                    f"label of {pred_name!r}", loc)

    tuples = _verbalizer_tuples(spec)
    by_tuple: dict[tuple[str, ...], str] = {}
    for cls, tup in tuples.items():
        if tup in by_tuple:
            err(
                "non-injective-joint-verbalizer",
                f"classes {by_tuple[tup]!r} and {cls!r} map to the same phrase tuple {tup}",
            )
        else:
            by_tuple[tup] = cls

    # one warning per phrase that is a candidate at several mask positions
    position_vocab: dict[str, set[int]] = {}
    for rule in spec.rules:
        for j, (_, phrase) in enumerate(rule.conjuncts):
            position_vocab.setdefault(phrase, set()).add(j)
    for phrase in sorted(position_vocab):
        if len(position_vocab[phrase]) > 1:
            spots = ", ".join(str(j + 1) for j in sorted(position_vocab[phrase]))
            warnings.append(
                Finding(
                    "phrase-in-multiple-positions",
                    f"phrase {phrase!r} is a candidate at mask positions {spots}",
                )
            )

    return ValidationReport(tuple(errors), tuple(warnings))


def phrases_by_position(spec: TaskSpec) -> list[list[str]]:
    """Per mask position, the phrases used by rules in first-seen order."""
    order = spec.composition_order
    vocabs: list[list[str]] = [[] for _ in order]
    for rule in spec.rules:
        for j, (_, phrase) in enumerate(rule.conjuncts):
            if phrase not in vocabs[j]:
                vocabs[j].append(phrase)
    return vocabs


def all_label_phrases(spec: TaskSpec) -> list[str]:
    """Every declared label phrase, deduplicated, in declaration order."""
    seen: list[str] = []
    for pred in spec.predicates:
        for phrase in pred.label_words:
            if phrase not in seen:
                seen.append(phrase)
    return seen


def spec_classes_with_binary(spec: TaskSpec, classes: Iterable[str]) -> list[str]:
    """Subset of ``classes`` whose rule includes an arity-2 conjunct."""
    out = []
    for cls in classes:
        rule = spec.rule_map[cls]
        if any(spec.predicate_map[name].arity == 2 for name, _ in rule.conjuncts):
            out.append(cls)
    return out
