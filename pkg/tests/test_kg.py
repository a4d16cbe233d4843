import pytest
import rdflib
from hypothesis import given, settings
from hypothesis import strategies as st

from prokex.domain import ProcedureText, Stage, StageDocument, StepRecord
from prokex.errors import SchemaViolation, TurtleSyntaxError, UnknownPrefix, UnsluggableKey
from prokex.kg import (
    RDF_TYPE,
    RDFS_LABEL,
    Literal,
    OntologyTerms,
    ProceduralGraph,
    build_graph,
    emit_turtle,
    mint_iri,
    parse_turtle,
    slug,
    validate_graph,
)

BASE = "https://example.org/resource"
PKO = "https://example.org/pko#"
TERMS = OntologyTerms()


def s6(*steps, pid="p1", title="Clean a keyboard"):
    return StageDocument(Stage.S6_Actions, pid, tuple(steps), title)


def source_for(d, body=None):
    return ProcedureText(d.procedure_id, d.title, body or " ".join(s.text for s in d.steps))


class TestMint:
    def test_tool(self):
        assert mint_iri("tool", "Roasting Tray", "p1") == f"{BASE}/tool/roasting-tray"

    def test_step(self):
        assert mint_iri("step", 2, "p1") == f"{BASE}/procedure/p1/step/2"

    def test_procedure(self):
        assert mint_iri("procedure", "Tree Watering", "x") == f"{BASE}/procedure/tree-watering"

    def test_unsluggable(self):
        with pytest.raises(UnsluggableKey):
            mint_iri("action", "¡¡¡", "p1")

    @pytest.mark.parametrize("raw,expected", [("  A--b  c ", "a-b-c"), ("Crème brûlée", "creme-brulee"),
                                              ("x/y?z", "x-y-z")])
    def test_slug(self, raw, expected):
        assert slug(raw) == expected

    def test_deterministic_and_shared(self):
        assert mint_iri("action", "Rinse", "p1") == mint_iri("action", "rinse", "p2")


class TestBuild:
    def test_single_step_counts(self):
        d = s6(StepRecord("Rinse the keyboard.", order=1, tools=("water",), actions=("rinse",)))
        g = build_graph(d, TERMS, source_for(d))
        typed = [t for t in g.triples if t[1] == RDF_TYPE]
        links = [t for t in g.triples if t[1] in (TERMS.has_step, TERMS.has_action, TERMS.uses_tool)]
        labels = [t for t in g.triples if t[1] == RDFS_LABEL]
        numbers = [t for t in g.triples if t[1] == TERMS.step_number]
        assert (len(typed), len(links), len(labels), len(numbers)) == (4, 3, 4, 1)
        assert len(g) == 12

    def test_shared_tool_instance(self):
        d = s6(StepRecord("Stir with a spoon.", order=1, tools=("spoon",), actions=("stir",)),
               StepRecord("Serve with a spoon.", order=2, tools=("spoon",), actions=("serve",)))
        g = build_graph(d, TERMS, source_for(d))
        assert g.subjects_of_type(TERMS.tool_class) == [f"{BASE}/tool/spoon"]
        assert len([t for t in g.triples if t[1] == TERMS.uses_tool]) == 2

    def test_step_without_action(self):
        d = s6(StepRecord("Rinse.", order=1))
        with pytest.raises(SchemaViolation):
            build_graph(d, TERMS, source_for(d))

    def test_wrong_stage(self):
        d = StageDocument(Stage.S5_Tools, "p1", (StepRecord("Rinse.", order=1),))
        with pytest.raises(SchemaViolation):
            build_graph(d, TERMS, ProcedureText("p1", "t", "Rinse."))

    def test_step_label_verbatim(self):
        d = s6(StepRecord("Rinse the keyboard.", order=1, actions=("rinse",)))
        g = build_graph(d, TERMS, source_for(d))
        step = f"{BASE}/procedure/p1/step/1"
        assert g.objects(step, RDFS_LABEL) == [Literal("Rinse the keyboard.")]
        assert g.objects(step, TERMS.step_number) == [Literal(1)]


# -- random valid graphs ------------------------------------------------------
words = st.sampled_from(["rinse", "dry", "stir", "Spoon", "bowl", "Roasting Tray", "cloth",
                         "pan", "knife", "give", "pull"])
step_texts = st.text(min_size=1, max_size=40).filter(lambda t: t.strip())


@st.composite
def s6_documents(draw):
    n = draw(st.integers(1, 5))
    steps = []
    for i in range(1, n + 1):
        actions = draw(st.lists(words, min_size=1, max_size=3, unique_by=slug))
        tools = draw(st.lists(words, max_size=3, unique_by=slug))
        steps.append(StepRecord(draw(step_texts), order=i, tools=tuple(tools),
                                actions=tuple(actions)))
    pid = draw(st.sampled_from(["p1", "tree-watering", "Roast Potatoes"]))
    return s6(*steps, pid=pid, title=draw(step_texts))


@settings(max_examples=150, deadline=None)
@given(s6_documents())
def test_triple_count_formula(d):
    g = build_graph(d, TERMS, source_for(d))
    distinct = {("action", slug(a)) for s in d.steps for a in s.actions} | \
               {("tool", slug(t)) for s in d.steps for t in s.tools}
    # per step: type, label, stepNumber, hasStep edge, then its links
    expected = 2 + sum(4 + len(s.actions) + len(s.tools) for s in d.steps) + 2 * len(distinct)
    assert len(g) == expected


@settings(max_examples=150, deadline=None)
@given(s6_documents())
def test_round_trip_and_determinism(d):
    g = build_graph(d, TERMS, source_for(d))
    text = emit_turtle(g)
    assert parse_turtle(text).triples == g.triples
    assert emit_turtle(ProceduralGraph(frozenset(set(g.triples)), dict(g.prefixes))) == text


@settings(max_examples=60, deadline=None)
@given(s6_documents())
def test_emitted_turtle_reads_in_rdflib(d):
    g = build_graph(d, TERMS, source_for(d))
    other = rdflib.Graph().parse(data=emit_turtle(g), format="turtle")
    assert len(other) == len(g)
    labels = {str(o) for _, _, o in other.triples((None, rdflib.RDFS.label, None))}
    assert labels == {o.value for _, p, o in g.triples if p == RDFS_LABEL}


def mention_everything(d):
    steps = tuple(StepRecord(f"{s.text} ({', '.join(s.actions + s.tools)})", order=s.order,
                             tools=s.tools, actions=s.actions) for s in d.steps)
    return s6(*steps, pid=d.procedure_id, title=d.title)


@settings(max_examples=100, deadline=None)
@given(s6_documents())
def test_built_graph_validates_clean(d):
    d = mention_everything(d)
    assert validate_graph(build_graph(d, TERMS, source_for(d)), TERMS, source_for(d)) == []


@settings(max_examples=100, deadline=None)
@given(s6_documents())
def test_unmentioned_names_only_flag_not_mentioned(d):
    codes = {v.code for v in validate_graph(build_graph(d, TERMS, source_for(d)), TERMS,
                                            source_for(d))}
    assert codes <= {"NotMentioned"}


class TestEmit:
    def test_prefixes_minimal(self):
        g = ProceduralGraph(frozenset({("https://a.example/s", "https://a.example/p",
                                        "https://a.example/o")}), TERMS.prefixes)
        text = emit_turtle(g)
        assert "@prefix" not in text
        assert text == "<https://a.example/s> <https://a.example/p> <https://a.example/o> .\n"

    def test_only_used_prefixes(self):
        d = s6(StepRecord("Rinse.", order=1, actions=("rinse",)))
        text = emit_turtle(build_graph(d, TERMS, source_for(d)))
        assert "@prefix pko:" in text and "@prefix rdfs:" in text
        assert "@prefix rdf:" not in text and "@prefix xsd:" not in text

    def test_escaping_round_trip(self):
        label = 'He said "stir"\nthen\\wait\ttab'
        g = ProceduralGraph(frozenset({(f"{BASE}/x", RDFS_LABEL, Literal(label))}), TERMS.prefixes)
        text = emit_turtle(g)
        assert "\n" not in text.split('"', 1)[1].rsplit('"', 1)[0]
        assert parse_turtle(text).triples == g.triples


class TestParse:
    def test_unterminated_literal(self):
        with pytest.raises(TurtleSyntaxError):
            parse_turtle('@prefix ex: <https://e.org/> .\nex:s ex:p "x')

    def test_unknown_prefix(self):
        with pytest.raises(UnknownPrefix):
            parse_turtle('foo:s foo:p "x" .')

    def test_error_reports_line(self):
        with pytest.raises(TurtleSyntaxError) as info:
            parse_turtle('@prefix ex: <https://e.org/> .\n\nex:s ex:p ex:o ;\n ex:q "a"\n ex:r .')
        assert info.value.line >= 4

    def test_features(self):
        text = """
        # comment
        PREFIX ex: <https://e.org/>
        @prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
        ex:s a ex:C ; rdfs:label "one"@en , 'two' , \"\"\"three
        lines\"\"\" ; ex:n 3 , "4"^^<http://www.w3.org/2001/XMLSchema#integer> ;
          ex:o <https://e.org/x> .
        """
        g = parse_turtle(text)
        objs = {o for s, p, o in g.triples}
        assert Literal("one", "en") in objs and Literal("two") in objs
        assert Literal("three\n        lines") in objs
        assert Literal(3) in objs and Literal(4) in objs
        assert ("https://e.org/s", RDF_TYPE, "https://e.org/C") in g.triples

    @pytest.mark.parametrize("text", [
        "@prefix ex: <https://e.org/> .\n_:b ex:p ex:o .",
        "@prefix ex: <https://e.org/> .\nex:s ex:p [ ex:q ex:o ] .",
        "@base <https://e.org/> .",
        "@prefix ex: <https://e.org/> .\nex:s ex:p 1.5 .",
        "<relative> <https://e.org/p> <https://e.org/o> .",
        "@prefix ex: <https://e.org/> .\nex:s ex:p ex:o",
    ])
    def test_out_of_subset_rejected(self, text):
        with pytest.raises(TurtleSyntaxError):
            parse_turtle(text)

    def test_agrees_with_rdflib_on_llm_style_output(self):
        text = """@prefix pko: <https://example.org/pko#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix ex: <https://example.org/resource/> .

ex:proc a pko:Procedure ; rdfs:label "Water a tree" ;
    pko:hasStep ex:step1 .
ex:step1 a pko:Step ;
    rdfs:label "Fill the stand." ;
    pko:stepNumber 1 ;
    pko:hasAction ex:fill .
ex:fill a pko:Action ; rdfs:label "fill" .
"""
        ours = parse_turtle(text)
        theirs = rdflib.Graph().parse(data=text, format="turtle")
        as_ours = set()
        for s, p, o in theirs:
            if isinstance(o, rdflib.Literal):
                o = Literal(o.toPython() if o.datatype else str(o), o.language)
            else:
                o = str(o)
            as_ours.add((str(s), str(p), o))
        assert ours.triples == as_ours


class TestValidate:
    def setup_method(self):
        self.doc = s6(StepRecord("Rinse the keyboard.", order=1, actions=("rinse",)),
                      StepRecord("Dry it with a cloth.", order=2, tools=("cloth",), actions=("dry",)))
        self.src = ProcedureText("p1", "Clean", "Rinse the keyboard. Some tip. Dry it with a cloth.")
        self.graph = build_graph(self.doc, TERMS, self.src)

    def codes(self, triples):
        return sorted({v.code for v in validate_graph(ProceduralGraph(frozenset(triples)),
                                                       TERMS, self.src)})

    def test_clean(self):
        assert validate_graph(self.graph, TERMS, self.src) == []

    def test_rephrased_label(self):
        step = f"{BASE}/procedure/p1/step/1"
        t = {x for x in self.graph.triples if not (x[0] == step and x[1] == RDFS_LABEL)}
        t.add((step, RDFS_LABEL, Literal("Rinse thoroughly.")))
        assert "LabelNotVerbatim" in self.codes(t)

    def test_order_gap(self):
        step = f"{BASE}/procedure/p1/step/2"
        t = {x for x in self.graph.triples if not (x[0] == step and x[1] == TERMS.step_number)}
        t.add((step, TERMS.step_number, Literal(3)))
        assert self.codes(t) == ["OrderGap"]

    def test_not_mentioned_tool(self):
        t = set(self.graph.triples)
        t.add((f"{BASE}/procedure/p1/step/1", TERMS.uses_tool, f"{BASE}/tool/hammer"))
        t |= {(f"{BASE}/tool/hammer", RDF_TYPE, TERMS.tool_class),
              (f"{BASE}/tool/hammer", RDFS_LABEL, Literal("hammer"))}
        assert self.codes(t) == ["NotMentioned"]

    def test_missing_procedure(self):
        proc = f"{BASE}/procedure/p1"
        t = {x for x in self.graph.triples if x[0] != proc}
        assert "MissingProcedure" in self.codes(t)
