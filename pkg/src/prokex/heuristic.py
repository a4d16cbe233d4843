"""Deterministic rule-based stand-in for the LLM.

Every stage of the chain has a rule here: sentence segmentation for drafting,
an anti-step classifier for validation, lexicon matching for tools and a
leading-verb rule for actions.  Replies are JSON/Turtle text shaped exactly
like a well-behaved model's, so the orchestrator cannot tell the difference.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

from .backend import CompletionRequest
from .domain import (
    CORRECT,
    INCORRECT,
    ProcedureText,
    Stage,
    StageDocument,
    StepRecord,
    normalize_ws,
    parse_stage_document,
)
from .kg import OntologyTerms, build_graph, emit_turtle

ABBREVIATIONS = {
    "e.g", "i.e", "etc", "approx", "vs", "mr", "mrs", "ms", "dr", "st", "no",
    "fig", "min", "max", "tbsp", "tsp", "oz", "lb", "lbs", "cf", "ca",
}


def load_lexicon(path: Union[str, Path]) -> list[str]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            entries.append(line)
    return entries


@dataclass(frozen=True)
class Lexicons:
    verbs: frozenset[str]
    tools: tuple[str, ...]

    @classmethod
    def load(cls, directory: Union[str, Path, None] = None) -> "Lexicons":
        from .chain import DATA_DIR

        directory = Path(directory) if directory else DATA_DIR / "lexicons"
        return cls(frozenset(load_lexicon(directory / "verbs.txt")),
                   tuple(load_lexicon(directory / "tools.txt")))


def segment_sentences(text: str) -> list[str]:
    """Split on ``.``/``!``/``?`` + whitespace + uppercase or digit.

    Known abbreviations (``e.g.``, ``approx.``...) never end a sentence.
    Returned sentences are whitespace-normalized.
    """
    sentences = []
    start = 0
    for m in re.finditer(r"[.!?][\"')\]]*\s+(?=[\"'(\[]?[A-Z0-9])", text):
        candidate = text[start:m.start() + 1]
        last_word = re.search(r"([A-Za-z.]+)\.$", candidate.rstrip("\"')]"))
        if m.group()[0] == "." and last_word and last_word.group(1).lower() in ABBREVIATIONS:
            continue
        sentences.append(text[start:m.end()])
        start = m.end()
    sentences.append(text[start:])
    return [normalize_ws(s) for s in sentences if s.strip()]


@dataclass(frozen=True)
class AntiStepPattern:
    pattern: re.Pattern
    label: str

    @classmethod
    def compile(cls, phrase: str, label: str) -> "AntiStepPattern":
        return cls(re.compile(phrase, re.I), label)


# Longest form first: "you may want to" must win over "you may".
ANTI_STEP_PATTERNS = (
    AntiStepPattern.compile(r"you\s+may\s+want\s+to\b", "optional suggestion"),
    AntiStepPattern.compile(r"be\s+careful\s+not\s+to\b", "warning, not an instruction"),
    AntiStepPattern.compile(r"pay\s+attention\s+not\s+to\b", "warning, not an instruction"),
    AntiStepPattern.compile(r"you\s+may\b", "optional, not required"),
    AntiStepPattern.compile(r"(?:do\s+not|don['’]t)\b", "prohibition, not an instruction"),
)
NO_ACTION = "no action to perform"

_LEAD_CLAUSE = re.compile(
    r"^(?:if|when|once|after|before|while|until|as\s+soon\s+as|whenever)\b[^,]*,\s*", re.I)
_PLEASE = re.compile(r"^(?:please|now|then|next|finally|first|also)\b,?\s*", re.I)
_WORD = re.compile(r"[A-Za-z][A-Za-z'’-]*")


def _core(sentence: str) -> str:
    """The imperative part of a sentence: drops a leading condition and fillers."""
    core = sentence.strip().lstrip("\"'([ ")
    for _ in range(3):
        new = _PLEASE.sub("", _LEAD_CLAUSE.sub("", core))
        if new == core:
            break
        core = new
    return core


@dataclass(frozen=True)
class Classification:
    is_step: bool
    reason: Optional[str] = None


def classify_sentence(sentence: str, patterns=ANTI_STEP_PATTERNS,
                      verbs: frozenset[str] = frozenset()) -> Classification:
    """Decide whether a sentence is an executable step.

    Anti-step patterns are checked at the start of the imperative part of the
    sentence (after an optional leading condition such as "If it is wet,").
    """
    if not sentence.strip():
        raise ValueError("empty sentence")
    core = _core(sentence)
    for pat in patterns:
        if pat.pattern.match(core) or pat.pattern.match(sentence.strip()):
            return Classification(False, pat.label)
    words = _WORD.findall(core)
    if not words or words[0].lower() not in verbs:
        return Classification(False, NO_ACTION)
    return Classification(True, None)


_CONJUNCTION = re.compile(r"\b(?:and|or|then)\s+(?:then\s+)?([A-Za-z][A-Za-z'-]*)", re.I)


def find_actions(text: str, verbs: frozenset[str]) -> list[str]:
    """Leading verb of each sentence plus verbs right after and/or/then."""
    actions: list[str] = []
    for sentence in segment_sentences(text):
        core = _core(sentence)
        words = _WORD.findall(core)
        if words and words[0].lower() in verbs:
            actions.append(words[0].lower())
        for m in _CONJUNCTION.finditer(core):
            word = m.group(1).lower()
            if word in verbs:
                actions.append(word)
    if not actions:
        # every step needs an action: first known verb anywhere, else first word
        words = [w.lower() for w in _WORD.findall(text)]
        known = [w for w in words if w in verbs]
        actions = known[:1] or words[:1] or [normalize_ws(text).split()[0].lower()]
    return list(dict.fromkeys(actions))


def find_tools(text: str, tools: tuple[str, ...]) -> list[str]:
    """Lexicon entries mentioned in ``text``, in order of appearance.

    Longer entries win on overlap ("roasting tray" over "tray").
    """
    hits = []
    for entry in tools:
        pattern = r"\b" + r"\s+".join(map(re.escape, entry.split())) + r"(?:e?s)?\b"
        for m in re.finditer(pattern, text, re.I):
            hits.append((m.start(), -(m.end() - m.start()), m.end(), entry))
    hits.sort()
    found: list[str] = []
    covered_to = -1
    for start, _, end, entry in hits:
        if start < covered_to:
            continue
        covered_to = end
        if entry not in found:
            found.append(entry)
    return found


def _dump(doc: StageDocument) -> str:
    return json.dumps(doc.to_json(), ensure_ascii=False, indent=2)


def heuristic_stage_reply(stage_id: str, stage_input: str, lexicons: Lexicons,
                          terms: Optional[OntologyTerms] = None) -> str:
    n = int(stage_id.lstrip("Pp"))
    if n == 1:
        steps = tuple(StepRecord(s) for s in segment_sentences(stage_input))
        return _dump(StageDocument(Stage.S1_Draft, "", steps))

    doc = parse_stage_document(stage_input, Stage(n - 1))
    if n == 2:
        steps = []
        for s in doc.steps:
            verdict = classify_sentence(s.text, verbs=lexicons.verbs)
            if verdict.is_step:
                steps.append(replace(s, validation=CORRECT, reason="describes an action to perform"))
            else:
                steps.append(replace(s, validation=INCORRECT, reason=verdict.reason))
        new_steps = tuple(steps)
    elif n == 3:
        new_steps = tuple(replace(s, validation=None, reason=None)
                          for s in doc.steps if s.validation == CORRECT)
    elif n == 4:
        new_steps = tuple(replace(s, order=i) for i, s in enumerate(doc.steps, 1))
    elif n == 5:
        new_steps = tuple(replace(s, tools=tuple(find_tools(s.text, lexicons.tools)))
                          for s in doc.steps)
    elif n == 6:
        new_steps = tuple(replace(s, actions=tuple(find_actions(s.text, lexicons.verbs)))
                          for s in doc.steps)
    elif n == 7:
        pid = doc.procedure_id or "procedure"
        source = ProcedureText(pid, doc.title or pid, " ".join(s.text for s in doc.steps))
        return emit_turtle(build_graph(doc, terms or OntologyTerms(), source))
    else:
        raise ValueError(f"unknown stage {stage_id}")
    return _dump(replace(doc, stage=Stage(n), steps=new_steps))


class HeuristicBackend:
    """Offline backend: recognizes which prompt it got and answers by rule."""

    def __init__(self, specs=None, lexicons: Optional[Lexicons] = None,
                 terms: Optional[OntologyTerms] = None):
        from .chain import load_stage_specs

        self.specs = specs or load_stage_specs()
        self.lexicons = lexicons or Lexicons.load()
        self.terms = terms or OntologyTerms()

    def locate(self, prompt: str) -> tuple[str, str]:
        """Find (stage id, stage input) inside a rendered prompt."""
        prompt = prompt.split("\n\nYour previous output was invalid:")[0]
        best = None
        for spec in self.specs:
            marker = spec.input_marker
            at = prompt.rfind(marker)
            if at >= 0 and (best is None or at > best[0]):
                best = (at, spec, prompt[at + len(marker):])
        if best is None:
            raise ValueError("prompt does not match any known stage")
        return best[1].stage_id, best[2].strip()

    def complete(self, request: CompletionRequest) -> str:
        stage_id, stage_input = self.locate(request.prompt)
        return heuristic_stage_reply(stage_id, stage_input, self.lexicons, self.terms)
