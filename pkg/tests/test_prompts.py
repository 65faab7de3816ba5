from types import SimpleNamespace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argex.data import EventInstance
from argex.errors import UnknownEventType
from argex.prompts import (
    SEPARATOR,
    EventTemplate,
    Ontology,
    RoleAssignment,
    build_prompt,
    decode_output,
    fill_template,
    load_ontology,
    save_ontology,
)

APPEAL = EventTemplate(
    event_type="Justice:Appeal",
    description="the word {trigger} marks an appeal event .",
    template_text="somebody in somewhere appealed the adjudication from some adjudicator.",
    placeholders=(
        ("somebody", "Plaintiff"),
        ("somewhere", "Place"),
        ("some adjudicator", "Adjudicator"),
    ),
)

FILLED = "districts in washington appealed the adjudication from u.s. supreme court."

PASSAGE = (
    "the u.s. supreme court agreed to hear the appeal of districts in washington ."
).split()


def appeal_instance():
    return EventInstance(
        doc_id="fig1",
        tokens=PASSAGE,
        trigger=(8, 9, "Justice:Appeal"),
        arguments=((10, 11, "Plaintiff"), (12, 13, "Place"), (1, 4, "Adjudicator")),
    )


class TestEventTemplate:
    def test_roles_in_order(self):
        assert APPEAL.roles == ("Plaintiff", "Place", "Adjudicator")

    def test_literal_segments_reassemble(self):
        segs = APPEAL.literal_segments()
        assert len(segs) == len(APPEAL.placeholders) + 1
        rebuilt = segs[0]
        for (ph, _), lit in zip(APPEAL.placeholders, segs[1:]):
            rebuilt += ph + lit
        assert rebuilt == APPEAL.template_text

    def test_duplicate_roles_rejected(self):
        with pytest.raises(ValueError):
            EventTemplate("T", "x {trigger}", "a b", (("a", "R"), ("b", "R")))

    def test_placeholder_absent_rejected(self):
        with pytest.raises(ValueError):
            EventTemplate("T", "x {trigger}", "just text", (("ghost", "R"),))

    def test_placeholder_repeated_rejected(self):
        with pytest.raises(ValueError):
            EventTemplate("T", "x {trigger}", "who saw who", (("who", "R"),))

    def test_out_of_order_placeholders_rejected(self):
        with pytest.raises(ValueError):
            EventTemplate(
                "T", "x {trigger}", "alpha then beta",
                (("beta", "R1"), ("alpha", "R2")),
            )

    def test_missing_trigger_slot_rejected(self):
        with pytest.raises(ValueError):
            EventTemplate("T", "no marker here", "alpha", (("alpha", "R"),))


class TestFillTemplate:
    def test_worked_example(self):
        a = RoleAssignment.for_template(
            APPEAL,
            {
                "Plaintiff": ["districts"],
                "Place": ["washington"],
                "Adjudicator": ["u.s. supreme court"],
            },
        )
        assert fill_template(APPEAL, a) == FILLED

    def test_all_empty_is_identity(self):
        assert fill_template(APPEAL, RoleAssignment.empty(APPEAL)) == APPEAL.template_text

    def test_multiple_fillers_joined_with_and(self):
        a = RoleAssignment.for_template(APPEAL, {"Plaintiff": ["A", "B"]})
        out = fill_template(APPEAL, a)
        assert out.startswith("A and B in somewhere appealed ")

    def test_unknown_role_rejected(self):
        with pytest.raises(ValueError):
            fill_template(APPEAL, RoleAssignment({"Nope": ["x"]}))


class TestDecodeOutput:
    def test_worked_example(self):
        got = decode_output(APPEAL, FILLED)
        assert got == RoleAssignment.for_template(
            APPEAL,
            {
                "Plaintiff": ["districts"],
                "Place": ["washington"],
                "Adjudicator": ["u.s. supreme court"],
            },
        )
        assert not got.degraded

    def test_unfilled_template_decodes_empty(self):
        got = decode_output(APPEAL, APPEAL.template_text)
        assert got == RoleAssignment.empty(APPEAL)
        assert not got.degraded

    def test_partial_fill(self):
        text = "districts in somewhere appealed the adjudication from some adjudicator."
        got = decode_output(APPEAL, text)
        assert got.fillers == {"Plaintiff": ["districts"], "Place": [], "Adjudicator": []}

    def test_multi_filler_split(self):
        text = "A and B in somewhere appealed the adjudication from some adjudicator."
        got = decode_output(APPEAL, text)
        assert got.fillers["Plaintiff"] == ["A", "B"]

    def test_unalignable_output_degrades(self):
        got = decode_output(APPEAL, "complete nonsense")
        assert got == RoleAssignment.empty(APPEAL)
        assert got.degraded

    def test_never_raises_on_junk(self):
        for junk in ("", ".", "(((", APPEAL.template_text * 2, "in in in in"):
            decode_output(APPEAL, junk)

    # fillers drawn from words that avoid anchor substrings and "and"
    _WORDS = st.sampled_from(
        ["alpha", "bravo", "delta", "echo", "foxtrot", "zulu", "k9", "mx7"]
    )
    _FILLER = st.lists(_WORDS, min_size=1, max_size=3).map(" ".join)

    @given(
        st.fixed_dictionaries(
            {
                "Plaintiff": st.lists(_FILLER, max_size=3),
                "Place": st.lists(_FILLER, max_size=2),
                "Adjudicator": st.lists(_FILLER, max_size=2),
            }
        )
    )
    @settings(max_examples=300, deadline=None)
    def test_fill_decode_round_trip(self, fillers):
        a = RoleAssignment.for_template(APPEAL, fillers)
        assert decode_output(APPEAL, fill_template(APPEAL, a)) == a


class TestBuildPrompt:
    def ontology(self):
        return Ontology([APPEAL])

    def test_prompt_ends_with_template(self):
        prompt = build_prompt(appeal_instance(), self.ontology())
        joined = " ".join(prompt)
        assert joined.endswith(
            "somebody in somewhere appealed the adjudication from some adjudicator."
        )

    def test_layout(self):
        inst = appeal_instance()
        prompt = build_prompt(inst, self.ontology())
        assert prompt[: len(PASSAGE)] == list(PASSAGE)
        assert prompt.count(SEPARATOR) == 2
        # trigger word substituted into the description segment
        first_sep = prompt.index(SEPARATOR)
        second_sep = prompt.index(SEPARATOR, first_sep + 1)
        assert "appeal" in prompt[first_sep + 1 : second_sep]
        assert "{trigger}" not in " ".join(prompt)

    def test_length_accounting(self):
        inst = appeal_instance()
        prompt = build_prompt(inst, self.ontology())
        desc = APPEAL.description.replace("{trigger}", "appeal")
        expected = len(PASSAGE) + len(desc.split()) + len(APPEAL.template_text.split()) + 2
        assert len(prompt) == expected

    def test_unknown_event_type(self):
        inst = EventInstance("d", ("a", "b"), (0, 1, "No:Such"))
        with pytest.raises(UnknownEventType):
            build_prompt(inst, self.ontology())

    def test_empty_passage_still_well_formed(self):
        # the dataset schema cannot represent a triggerless empty passage, so
        # exercise the operation structurally
        ghost = SimpleNamespace(tokens=[], trigger=(0, 0, "Justice:Appeal"),
                                event_type="Justice:Appeal")
        prompt = build_prompt(ghost, self.ontology())
        assert prompt[0] == SEPARATOR
        assert prompt.count(SEPARATOR) == 2
        assert " ".join(prompt).endswith(APPEAL.template_text)


class TestOntology:
    def test_duplicate_event_type_rejected(self):
        with pytest.raises(ValueError):
            Ontology([APPEAL, APPEAL])

    def test_lookup(self):
        ont = Ontology([APPEAL])
        assert "Justice:Appeal" in ont
        assert ont.roles_for("Justice:Appeal") == ("Plaintiff", "Place", "Adjudicator")
        with pytest.raises(UnknownEventType):
            ont.get("Life:Die")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "ontology.json"
        save_ontology(Ontology([APPEAL]), path)
        back = load_ontology(path)
        assert len(back) == 1
        assert back.get("Justice:Appeal") == APPEAL
