"""Procedural knowledge graph: IRI minting, construction, Turtle output, validation."""
from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .domain import ProcedureText, Stage, StageDocument, check_stage_invariants, normalize_ws
from .errors import SchemaViolation, UnsluggableKey

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
RDF_TYPE = RDF + "type"
RDFS_LABEL = RDFS + "label"


@dataclass(frozen=True)
class Literal:
    value: Union[str, int]
    lang: Optional[str] = None


Term = Union[str, Literal]  # plain str is an absolute IRI
Triple = tuple[str, str, Term]


@dataclass(frozen=True)
class OntologyTerms:
    ontology_ns: str = "https://example.org/pko#"
    instance_base: str = "https://example.org/resource"
    ontology_prefix: str = "pko"
    procedure_class: str = ""
    step_class: str = ""
    action_class: str = ""
    tool_class: str = ""
    has_step: str = ""
    has_action: str = ""
    uses_tool: str = ""
    step_number: str = ""
    label: str = RDFS_LABEL

    def __post_init__(self):
        defaults = {
            "procedure_class": "Procedure", "step_class": "Step",
            "action_class": "Action", "tool_class": "Tool",
            "has_step": "hasStep", "has_action": "hasAction",
            "uses_tool": "usesTool", "step_number": "stepNumber",
        }
        for role, local in defaults.items():
            if not getattr(self, role):
                object.__setattr__(self, role, self.ontology_ns + local)
        object.__setattr__(self, "instance_base", self.instance_base.rstrip("/"))
        for role in list(defaults) + ["label"]:
            if not re.match(r"^[a-zA-Z][a-zA-Z0-9+.-]*:\S+$", getattr(self, role)):
                raise ValueError(f"term {role} is not an absolute IRI: {getattr(self, role)!r}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "OntologyTerms":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)

    @property
    def prefixes(self) -> dict[str, str]:
        return {self.ontology_prefix: self.ontology_ns, "rdf": RDF, "rdfs": RDFS, "xsd": XSD}

    @property
    def classes(self) -> dict[str, str]:
        return {"procedure": self.procedure_class, "step": self.step_class,
                "action": self.action_class, "tool": self.tool_class}

    @property
    def predicates(self) -> set[str]:
        return {RDF_TYPE, self.label, self.has_step, self.has_action,
                self.uses_tool, self.step_number}


@dataclass(frozen=True)
class ProceduralGraph:
    triples: frozenset[Triple]
    prefixes: dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __len__(self):
        return len(self.triples)

    def objects(self, s: str, p: str) -> list[Term]:
        return [o for (s2, p2, o) in self.triples if s2 == s and p2 == p]

    def subjects_of_type(self, cls: str) -> list[str]:
        return sorted(s for (s, p, o) in self.triples if p == RDF_TYPE and o == cls)


def slug(text: str) -> str:
    # fold accents so "Crème" keeps its letters
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def mint_iri(kind: str, key: Union[str, int], procedure_id: str,
             terms: Optional[OntologyTerms] = None) -> str:
    terms = terms or OntologyTerms()
    base = terms.instance_base
    key = str(key)
    if not key.strip():
        raise UnsluggableKey("empty key")
    if kind == "procedure":
        s = slug(key)
        if not s:
            raise UnsluggableKey(f"cannot slug {key!r}")
        return f"{base}/procedure/{s}"
    pid = slug(procedure_id)
    if not pid:
        raise UnsluggableKey(f"cannot slug procedure id {procedure_id!r}")
    if kind == "step":
        s = slug(key)
        if not s:
            raise UnsluggableKey(f"cannot slug {key!r}")
        return f"{base}/procedure/{pid}/step/{s}"
    if kind in ("action", "tool"):
        s = slug(key)
        if not s:
            raise UnsluggableKey(f"cannot slug {key!r}")
        return f"{base}/{kind}/{s}"
    raise ValueError(f"unknown kind {kind!r}")


def build_graph(doc: StageDocument, terms: OntologyTerms, source: ProcedureText) -> ProceduralGraph:
    if doc.stage != Stage.S6_Actions:
        raise SchemaViolation(f"graph needs an S6 document, got {doc.stage.name}")
    check_stage_invariants(doc)
    pid = doc.procedure_id or source.id
    proc = mint_iri("procedure", pid, pid, terms)
    triples: set[Triple] = {
        (proc, RDF_TYPE, terms.procedure_class),
        (proc, terms.label, Literal(source.title or pid)),
    }
    labelled: set[str] = set()
    for step in doc.steps:
        node = mint_iri("step", step.order, pid, terms)
        triples |= {
            (proc, terms.has_step, node),
            (node, RDF_TYPE, terms.step_class),
            (node, terms.label, Literal(step.text)),
            (node, terms.step_number, Literal(step.order)),
        }
        for kind, names, link in (("action", step.actions, terms.has_action),
                                  ("tool", step.tools, terms.uses_tool)):
            for name in names:
                inst = mint_iri(kind, name, pid, terms)
                triples.add((node, link, inst))
                if inst not in labelled:
                    # first surface form seen names the shared instance
                    labelled.add(inst)
                    triples.add((inst, RDF_TYPE, terms.classes[kind]))
                    triples.add((inst, terms.label, Literal(name)))
    return ProceduralGraph(frozenset(triples), dict(terms.prefixes))


_PN_LOCAL = re.compile(r"^[A-Za-z_0-9](?:[A-Za-z_0-9.-]*[A-Za-z_0-9-])?$")


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _escape_iri(iri: str) -> str:
    return "".join(ch if ch not in '<>"{}|^`\\' and ord(ch) > 0x20 else f"\\u{ord(ch):04X}"
                   for ch in iri)


def _object_key(o: Term):
    if isinstance(o, Literal):
        return (1, str(o.value), o.lang or "", repr(o))
    return (0, o, "", "")


def emit_turtle(graph: ProceduralGraph) -> str:
    """Serialize deterministically, declaring exactly the prefixes that get used."""
    # longest namespace first so nested namespaces pick the tighter prefix
    ns_list = sorted(graph.prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    used: set[str] = set()

    def iri(value: str) -> str:
        for prefix, ns in ns_list:
            if value.startswith(ns) and _PN_LOCAL.match(value[len(ns):]):
                used.add(prefix)
                return f"{prefix}:{value[len(ns):]}"
        return f"<{_escape_iri(value)}>"

    def term(value: Term) -> str:
        if isinstance(value, Literal):
            if isinstance(value.value, int):
                return str(value.value)
            lit = f'"{_escape(value.value)}"'
            return lit + (f"@{value.lang}" if value.lang else "")
        return iri(value)

    by_subject: dict[str, dict[str, list[Term]]] = {}
    for s, p, o in graph.triples:
        by_subject.setdefault(s, {}).setdefault(p, []).append(o)

    blocks = []
    for s in sorted(by_subject):
        preds = by_subject[s]
        lines = []
        for p in sorted(preds):
            objs = sorted(preds[p], key=_object_key)
            verb = "a" if p == RDF_TYPE else iri(p)
            lines.append(f"{verb} " + " , ".join(term(o) for o in objs))
        blocks.append(iri(s) + " " + " ;\n    ".join(lines) + " .\n")

    header = "".join(f"@prefix {p}: <{graph.prefixes[p]}> .\n" for p in sorted(used))
    return header + ("\n" if header and blocks else "") + "\n".join(blocks)


def parse_turtle(text: str, prefixes: Optional[dict[str, str]] = None) -> ProceduralGraph:
    from .turtle import TurtleParser

    triples, declared = TurtleParser(text).parse()
    table = dict(prefixes or {})
    table.update(declared)
    return ProceduralGraph(frozenset(triples), table)


@dataclass(frozen=True)
class Violation:
    code: str
    node: str
    detail: str = ""

    def __str__(self):
        return f"{self.code}: {self.node}" + (f" ({self.detail})" if self.detail else "")


VIOLATION_CODES = (
    "LabelNotVerbatim", "OrderGap", "MissingAction", "MissingLabel",
    "UnknownPredicate", "UnlinkedStep", "MultipleProcedures",
    "MissingProcedure", "NotMentioned", "BadStepNumber",
)


def validate_graph(graph: ProceduralGraph, terms: OntologyTerms,
                   source: ProcedureText) -> list[Violation]:
    out: list[Violation] = []
    procs = graph.subjects_of_type(terms.procedure_class)
    steps = graph.subjects_of_type(terms.step_class)
    if not procs:
        out.append(Violation("MissingProcedure", "-", "no node typed Procedure"))
    elif len(procs) > 1:
        out.extend(Violation("MultipleProcedures", p) for p in procs)

    for s, p, o in sorted(graph.triples, key=repr):
        if p not in terms.predicates:
            out.append(Violation("UnknownPredicate", s, p))

    linked = {o for (s, p, o) in graph.triples if p == terms.has_step and s in procs}
    for st in steps:
        if st not in linked:
            out.append(Violation("UnlinkedStep", st))

    instances = sorted({s for (s, p, o) in graph.triples if p == RDF_TYPE})
    for inst in instances:
        labels = [o for o in graph.objects(inst, terms.label) if isinstance(o, Literal)]
        if len(labels) != 1:
            out.append(Violation("MissingLabel", inst,
                                 "no label" if not labels else f"{len(labels)} labels"))

    numbers = []
    body = normalize_ws(source.body)
    for st in steps:
        nums = graph.objects(st, terms.step_number)
        if len(nums) != 1 or not isinstance(nums[0], Literal) or not isinstance(nums[0].value, int) \
                or nums[0].value < 0:
            out.append(Violation("BadStepNumber", st, "need exactly one integer stepNumber"))
        else:
            numbers.append(nums[0].value)
        if not graph.objects(st, terms.has_action):
            out.append(Violation("MissingAction", st))
        step_labels = [str(o.value) for o in graph.objects(st, terms.label) if isinstance(o, Literal)]
        for lab in step_labels:
            if normalize_ws(lab) not in body:
                out.append(Violation("LabelNotVerbatim", st, lab))
        haystack = " ".join(step_labels).lower()
        for link in (terms.has_action, terms.uses_tool):
            for inst in graph.objects(st, link):
                if isinstance(inst, Literal):
                    continue
                for lab in graph.objects(inst, terms.label):
                    if isinstance(lab, Literal) and normalize_ws(str(lab.value)).lower() not in haystack:
                        out.append(Violation("NotMentioned", inst, f"{lab.value!r} not in step {st}"))
    if numbers and sorted(numbers) != list(range(1, len(numbers) + 1)):
        out.append(Violation("OrderGap", "-", f"step numbers {sorted(numbers)}"))
    return out
