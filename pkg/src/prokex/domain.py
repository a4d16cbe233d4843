"""Stage-document data model shared by the prompt chain, backends and graph emitter.

A procedure moves through six JSON stages (draft, validated, filtered,
ordered, tools, actions).  Each stage is a :class:`StageDocument`; this
module parses those documents, checks the per-stage invariants and checks
that each hop only adds what its prompt asks for.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, replace
from typing import Any, Iterable, Optional

from .errors import MalformedDocument, SchemaViolation, StageMismatch


class Stage(enum.IntEnum):
    S1_Draft = 1
    S2_Validated = 2
    S3_Filtered = 3
    S4_Ordered = 4
    S5_Tools = 5
    S6_Actions = 6

    @classmethod
    def from_number(cls, n: int) -> "Stage":
        return cls(int(n))


CORRECT = "correct"
INCORRECT = "incorrect"

_WS = re.compile(r"\s+")


def normalize_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def split_separated_list(raw: Optional[str]) -> list[str]:
    """Split a semicolon-joined field into trimmed, non-empty names.

    Order and duplicates are preserved.  ``None`` and blank input give ``[]``.
    """
    if not raw:
        return []
    return [part.strip() for part in raw.split(";") if part.strip()]


def join_separated_list(names: Iterable[str]) -> str:
    return "; ".join(names)


@dataclass(frozen=True)
class ProcedureText:
    id: str
    title: str
    body: str

    def __post_init__(self):
        if not self.body.strip():
            raise ValueError(f"procedure {self.id!r} has an empty body")

    @classmethod
    def from_file_text(cls, text: str, procedure_id: str) -> "ProcedureText":
        """First line is the title, the rest is the body."""
        title, _, body = text.lstrip("﻿").partition("\n")
        return cls(id=procedure_id, title=title.strip(), body=body.strip())


@dataclass(frozen=True)
class StepRecord:
    text: str
    validation: Optional[str] = None
    reason: Optional[str] = None
    order: Optional[int] = None
    tools: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"step": self.text}
        if self.validation is not None:
            out["validation"] = self.validation
        if self.reason is not None:
            out["reason"] = self.reason
        if self.order is not None:
            out["order"] = self.order
        if self.tools:
            out["tools"] = join_separated_list(self.tools)
        if self.actions:
            out["actions"] = join_separated_list(self.actions)
        return out


@dataclass(frozen=True)
class StageDocument:
    stage: Stage
    procedure_id: str
    steps: tuple[StepRecord, ...] = ()
    title: str = ""

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.procedure_id:
            out["procedure_id"] = self.procedure_id
        if self.title:
            out["title"] = self.title
        out["steps"] = [s.to_json() for s in self.steps]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n"

    def with_procedure(self, procedure_id: str, title: str) -> "StageDocument":
        return replace(self, procedure_id=self.procedure_id or procedure_id,
                       title=self.title or title)


def _names_field(value: Any, key: str, index: int) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(split_separated_list(value))
    # LLMs sometimes emit a JSON list instead of the joined string
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        names = []
        for v in value:
            names.extend(split_separated_list(v))
        return tuple(names)
    raise MalformedDocument(f"step {index}: {key!r} must be a string")


def _parse_step(obj: Any, index: int) -> StepRecord:
    if not isinstance(obj, dict):
        raise MalformedDocument(f"step {index} is not an object")
    text = obj.get("step")
    if not isinstance(text, str):
        raise MalformedDocument(f"step {index} lacks a 'step' string")
    validation = obj.get("validation")
    if validation is not None:
        if not isinstance(validation, str):
            raise MalformedDocument(f"step {index}: 'validation' must be a string")
        validation = validation.strip().lower()
    reason = obj.get("reason")
    if reason is not None and not isinstance(reason, str):
        raise MalformedDocument(f"step {index}: 'reason' must be a string")
    order = obj.get("order")
    if order is not None and (isinstance(order, bool) or not isinstance(order, int)):
        raise MalformedDocument(f"step {index}: 'order' must be an integer")
    return StepRecord(
        text=text,
        validation=validation,
        reason=reason,
        order=order,
        tools=_names_field(obj.get("tools"), "tools", index),
        actions=_names_field(obj.get("actions"), "actions", index),
    )


def parse_stage_document(raw: str, expected_stage: Stage, procedure_id: str = "",
                         title: str = "") -> StageDocument:
    """Parse unwrapped JSON into a document and check ``expected_stage`` invariants.

    ``procedure_id``/``title`` fill in when the JSON does not carry them.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    if isinstance(data, list):
        data = {"steps": data}
    if not isinstance(data, dict) or not isinstance(data.get("steps"), list):
        raise MalformedDocument("expected an object with a 'steps' array")
    pid = data.get("procedure_id") or procedure_id
    doc = StageDocument(
        stage=Stage(expected_stage),
        procedure_id=str(pid),
        steps=tuple(_parse_step(s, i) for i, s in enumerate(data["steps"], 1)),
        title=str(data.get("title") or title),
    )
    check_stage_invariants(doc)
    return doc


def check_stage_invariants(doc: StageDocument) -> None:
    """Raise :class:`SchemaViolation` naming the first broken rule."""
    stage = doc.stage
    for i, s in enumerate(doc.steps, 1):
        if not s.text.strip():
            raise SchemaViolation(f"step {i}: empty step text")
        for kind, names in (("tool", s.tools), ("action", s.actions)):
            for name in names:
                if not name or name != name.strip() or ";" in name:
                    raise SchemaViolation(f"step {i}: bad {kind} entry {name!r}")
        if s.order is not None and s.order < 1:
            raise SchemaViolation(f"step {i}: order must be >= 1")

        if stage == Stage.S2_Validated:
            if s.validation not in (CORRECT, INCORRECT):
                raise SchemaViolation(f"step {i}: validation missing or not correct/incorrect")
            if s.validation == INCORRECT and not (s.reason and s.reason.strip()):
                raise SchemaViolation(f"step {i}: incorrect step missing reason")
        elif s.validation is not None or s.reason is not None:
            raise SchemaViolation(f"step {i}: validation/reason not allowed at {stage.name}")

        if stage < Stage.S4_Ordered and s.order is not None:
            raise SchemaViolation(f"step {i}: order not allowed at {stage.name}")
        if stage < Stage.S5_Tools and s.tools:
            raise SchemaViolation(f"step {i}: tools not allowed at {stage.name}")
        if stage < Stage.S6_Actions and s.actions:
            raise SchemaViolation(f"step {i}: actions not allowed at {stage.name}")
        if stage == Stage.S6_Actions and not s.actions:
            raise SchemaViolation(f"step {i}: step has no action")

    if stage >= Stage.S4_Ordered:
        orders = [s.order for s in doc.steps]
        if any(o is None for o in orders):
            raise SchemaViolation("step without order")
        if orders != list(range(1, len(orders) + 1)):
            raise SchemaViolation(f"orders not contiguous: {orders}")


def _texts(doc: StageDocument) -> list[str]:
    return [normalize_ws(s.text) for s in doc.steps]


def validate_stage_transition(before: StageDocument, after: StageDocument) -> list[str]:
    """Check that ``after`` only adds what its stage's prompt instructs.

    Returns human-readable violations; an empty list means the hop is clean.
    """
    if after.stage != before.stage + 1:
        raise StageMismatch(f"{before.stage.name} -> {after.stage.name} is not a single hop")
    problems: list[str] = []

    if after.stage == Stage.S3_Filtered:
        kept = [s for s in before.steps if s.validation == CORRECT]
        dropped = {normalize_ws(s.text) for s in before.steps if s.validation == INCORRECT}
        want = [normalize_ws(s.text) for s in kept]
        got = _texts(after)
        if got != want:
            for t in got:
                if t in dropped and t not in want:
                    problems.append(f"incorrect step retained: {t!r}")
            missing = [t for t in want if t not in got]
            for t in missing:
                problems.append(f"correct step removed: {t!r}")
            if not problems:
                problems.append("step text mutated or reordered")
        return problems

    if len(before.steps) != len(after.steps):
        return [f"step count changed: {len(before.steps)} -> {len(after.steps)}"]

    for i, (b, a) in enumerate(zip(before.steps, after.steps), 1):
        if normalize_ws(b.text) != normalize_ws(a.text):
            problems.append(f"step {i}: step text mutated")
        if after.stage >= Stage.S5_Tools and a.order != b.order:
            problems.append(f"step {i}: order mutated")
        if after.stage == Stage.S6_Actions and a.tools != b.tools:
            problems.append(f"step {i}: tools mutated")
    return problems
