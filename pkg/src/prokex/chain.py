"""Seven-prompt extraction chain: templates, few-shot assets and orchestration."""
from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Protocol, Union

from .backend import CompletionRequest, extract_json_payload, extract_turtle_payload
from .domain import (
    ProcedureText,
    Stage,
    StageDocument,
    parse_stage_document,
    validate_stage_transition,
)
from .errors import (
    EmptyProcedure,
    GraphInvalid,
    MalformedDocument,
    MissingAsset,
    NoPayloadFound,
    SchemaViolation,
    StageFailed,
    TurtleSyntaxError,
)
from .kg import OntologyTerms, ProceduralGraph, parse_turtle, validate_graph

log = logging.getLogger(__name__)

SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_-]*)\}")
RETRY_NOTE = "\n\nYour previous output was invalid: {error}. Return only corrected {kind}."
DATA_DIR = Path(str(resources.files("prokex") / "data"))


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    instruction_template: str
    example_slots: tuple[str, ...]
    input_slot: str
    output_stage: Optional[Stage]  # None means Turtle text

    def __post_init__(self):
        allowed = set(self.example_slots) | {self.input_slot}
        for name in SLOT.findall(self.instruction_template):
            if name not in allowed:
                raise ValueError(f"{self.stage_id}: template slot {{{name}}} is not declared")
        if "{" + self.input_slot + "}" not in self.instruction_template:
            raise ValueError(f"{self.stage_id}: template lacks input slot {{{self.input_slot}}}")

    @property
    def input_marker(self) -> str:
        """Static instruction text right before the input slot."""
        head = self.instruction_template.split("{" + self.input_slot + "}")[0]
        return head.rsplit("}", 1)[-1]


# (stage id, example slots, input slot, output stage)
STAGE_TABLE = (
    ("P1", ("keyboard_example", "keyboard_initial_steps"), "procedure_for_llm", Stage.S1_Draft),
    ("P2", ("keyboard_initial_steps", "keyboard_correct_incorrect"), "initial-steps", Stage.S2_Validated),
    ("P3", ("keyboard_correct_incorrect", "keyboard_remove_incorrect"), "correct-incorrect-steps",
     Stage.S3_Filtered),
    ("P4", ("keyboard_remove_incorrect", "keyboard_order"), "only-correct-steps", Stage.S4_Ordered),
    ("P5", ("keyboard_order", "keyboard_tools"), "ordered-steps", Stage.S5_Tools),
    ("P6", ("keyboard_tools", "keyboard_actions"), "tools-steps", Stage.S6_Actions),
    ("P7", ("keyboard_actions", "keyboard_ttl"), "actions-steps", None),
)

ASSET_STAGES = {
    "keyboard_initial_steps": Stage.S1_Draft,
    "keyboard_correct_incorrect": Stage.S2_Validated,
    "keyboard_remove_incorrect": Stage.S3_Filtered,
    "keyboard_order": Stage.S4_Ordered,
    "keyboard_tools": Stage.S5_Tools,
    "keyboard_actions": Stage.S6_Actions,
}


def load_stage_specs(prompts_dir: Union[str, Path, None] = None) -> list[StageSpec]:
    prompts_dir = Path(prompts_dir) if prompts_dir else DATA_DIR / "prompts"
    specs = []
    for i, (sid, examples, input_slot, out) in enumerate(STAGE_TABLE, 1):
        # newline="" keeps the template bytes exactly as shipped
        with open(prompts_dir / f"p{i}.txt", encoding="utf-8", newline="") as fh:
            template = fh.read()
        specs.append(StageSpec(sid, template, examples, input_slot, out))
    return specs


class FewShotAssets(dict):
    """Slot name -> worked-example text."""

    @classmethod
    def load(cls, assets_dir: Union[str, Path, None] = None) -> "FewShotAssets":
        assets_dir = Path(assets_dir) if assets_dir else DATA_DIR / "assets"
        out = cls()
        for path in sorted(assets_dir.glob("*.txt")):
            out[path.stem] = path.read_text(encoding="utf-8").rstrip("\n")
        return out

    def check(self, specs: list[StageSpec]) -> list[str]:
        """Problems with the asset set; empty means usable."""
        problems = []
        for spec in specs:
            for slot in spec.example_slots:
                if slot not in self:
                    problems.append(f"missing asset {slot}")
        for slot, stage in ASSET_STAGES.items():
            if slot in self:
                try:
                    parse_stage_document(self[slot], stage)
                except (MalformedDocument, SchemaViolation) as exc:
                    problems.append(f"asset {slot}: {exc}")
        if "keyboard_ttl" in self:
            try:
                parse_turtle(self["keyboard_ttl"])
            except TurtleSyntaxError as exc:
                problems.append(f"asset keyboard_ttl: {exc}")
        return problems


def render_prompt(spec: StageSpec, assets: dict[str, str], stage_input: str) -> str:
    values = dict(assets)
    values[spec.input_slot] = stage_input

    def fill(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise MissingAsset(name)
        return values[name]

    return SLOT.sub(fill, spec.instruction_template)


@dataclass
class Limits:
    max_retries: int = 2
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


@dataclass
class StageTrace:
    stage_id: str
    attempts: list[dict[str, Any]] = field(default_factory=list)
    output: Any = None
    retries: int = 0
    duration_seconds: float = 0.0

    @property
    def prompt(self) -> str:
        return self.attempts[0]["prompt"] if self.attempts else ""

    @property
    def reply(self) -> str:
        return self.attempts[-1]["reply"] if self.attempts else ""

    def to_json(self) -> dict[str, Any]:
        if isinstance(self.output, StageDocument):
            parsed = self.output.to_json()
        elif isinstance(self.output, ProceduralGraph):
            parsed = {"triples": len(self.output)}
        else:
            parsed = self.output
        return {
            "stage_id": self.stage_id,
            "retries": self.retries,
            "duration_seconds": round(self.duration_seconds, 6),
            "attempts": self.attempts,
            "parsed_output": parsed,
        }


@dataclass
class PipelineTrace:
    procedure_id: str
    stages: list[StageTrace] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    turtle: str = ""
    error: Optional[str] = None

    def documents(self) -> list[StageDocument]:
        return [s.output for s in self.stages if isinstance(s.output, StageDocument)]

    def to_json(self) -> dict[str, Any]:
        return {
            "procedure_id": self.procedure_id,
            "status": "failed" if self.error else "ok",
            "error": self.error,
            "warnings": self.warnings,
            "stages": [s.to_json() for s in self.stages],
            "turtle": self.turtle,
        }


def _parse_reply(spec: StageSpec, reply: str, procedure: Optional[ProcedureText],
                 terms: OntologyTerms):
    if spec.output_stage is not None:
        payload = extract_json_payload(reply)
        pid = procedure.id if procedure else ""
        title = procedure.title if procedure else ""
        return parse_stage_document(payload, spec.output_stage, pid, title)
    graph = parse_turtle(extract_turtle_payload(reply), terms.prefixes)
    if procedure is not None:
        violations = validate_graph(graph, terms, procedure)
        if violations:
            raise SchemaViolation("; ".join(str(v) for v in violations))
    return graph


def run_stage(spec: StageSpec, assets: dict[str, str], backend: Backend, stage_input: str,
              limits: Optional[Limits] = None, procedure: Optional[ProcedureText] = None,
              terms: Optional[OntologyTerms] = None):
    """One hop of the chain, re-prompting with the parse error on bad output.

    Returns ``(parsed output, StageTrace)``.  Backend errors propagate as-is.
    """
    limits = limits or Limits()
    terms = terms or OntologyTerms()
    base_prompt = render_prompt(spec, assets, stage_input)
    kind = "JSON" if spec.output_stage is not None else "Turtle"
    trace = StageTrace(spec.stage_id)
    started = time.perf_counter()
    prompt = base_prompt
    last_error: Optional[Exception] = None
    for attempt in range(limits.max_retries + 1):
        request = CompletionRequest(prompt, limits.temperature, limits.max_output_tokens)
        reply = backend.complete(request)
        entry = {"prompt": prompt, "reply": reply, "error": None}
        trace.attempts.append(entry)
        trace.retries = attempt
        try:
            output = _parse_reply(spec, reply, procedure, terms)
        except (NoPayloadFound, MalformedDocument, SchemaViolation, TurtleSyntaxError) as exc:
            last_error = exc
            entry["error"] = f"{type(exc).__name__}: {exc}"
            log.info("%s attempt %d rejected: %s", spec.stage_id, attempt + 1, exc)
            prompt = base_prompt + RETRY_NOTE.format(error=exc, kind=kind)
            continue
        trace.output = output
        trace.duration_seconds = time.perf_counter() - started
        return output, trace
    trace.duration_seconds = time.perf_counter() - started
    failure = GraphInvalid if spec.output_stage is None else StageFailed
    raise failure(spec.stage_id, last_error, trace)


def run_pipeline(procedure: ProcedureText, backend: Backend, assets: dict[str, str],
                 limits: Optional[Limits] = None, specs: Optional[list[StageSpec]] = None,
                 terms: Optional[OntologyTerms] = None):
    """Run P1..P7 over one procedure; returns ``(PipelineTrace, ProceduralGraph)``.

    On failure the partial trace rides on the raised exception as ``.trace``.
    """
    if not procedure.body.strip():
        raise ValueError("procedure body is empty")
    specs = specs or load_stage_specs()
    terms = terms or OntologyTerms()
    trace = PipelineTrace(procedure.id)
    stage_input = procedure.body
    previous: Optional[StageDocument] = None
    try:
        for spec in specs:
            try:
                output, entry = run_stage(spec, assets, backend, stage_input, limits,
                                          procedure, terms)
            except StageFailed as exc:
                trace.stages.append(exc.trace)
                raise
            trace.stages.append(entry)
            log.info("%s: %s ok (%d retries, %.3fs)", procedure.id, spec.stage_id,
                     entry.retries, entry.duration_seconds)
            if isinstance(output, StageDocument):
                output = output.with_procedure(procedure.id, procedure.title)
                entry.output = output
                if previous is not None:
                    for problem in validate_stage_transition(previous, output):
                        trace.warnings.append(f"{previous.stage.name}->{output.stage.name}: {problem}")
                if output.stage == Stage.S3_Filtered and not output.steps:
                    raise EmptyProcedure(spec.stage_id,
                                         ValueError("no steps survived validation"), trace)
                previous = output
                stage_input = output.dumps()
            else:
                trace.turtle = extract_turtle_payload(entry.reply)
                return trace, output
    except StageFailed as exc:
        trace.error = str(exc)
        exc.trace = trace
        raise
    raise RuntimeError("stage table has no Turtle stage")
