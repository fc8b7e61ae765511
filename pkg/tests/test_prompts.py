"""Template loading, rendering and per-stage binding tests."""

import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillweave.errors import RenderError
from skillweave.prompts import (
    CONTEXT_ASSET_NAMES,
    TEMPLATE_IDS,
    PromptTemplate,
    bind_for_stage,
    escaped_names,
    load_builtin_templates,
    load_context_assets,
    placeholder_names,
    render,
)
from skillweave.skills import Skill, SkillBank, SkillExemplar, SkillPair


@pytest.fixture(scope="module")
def templates():
    return load_builtin_templates()


@pytest.fixture
def bank():
    def exemplars(tag):
        return tuple(
            SkillExemplar(question=f"{tag} question {i}", solution=f"{tag} solution {i}")
            for i in range(1, 4)
        )

    return SkillBank(
        skills=(
            Skill("modular_arithmetic", "Number Theory"),
            Skill("perimeter_and_area", "Pre-Algebra"),
        ),
        exemplars={
            "modular_arithmetic": exemplars("mod"),
            "perimeter_and_area": exemplars("area"),
        },
    )


PAIR = SkillPair("perimeter_and_area", "modular_arithmetic")

FAKE_CONTEXT = {name: f"[{name} text]" for name in CONTEXT_ASSET_NAMES}


# ==============================================================================
# Loading
# ==============================================================================


def test_all_six_templates_load(templates):
    assert set(templates) == set(TEMPLATE_IDS)
    for t in templates.values():
        assert t.body.strip()


def test_validation_template_has_verdict_heading(templates):
    assert "# FINAL ANSWER" in templates["validation"].body


def test_generation_template_has_exemplar_slot(templates):
    assert "<skill_2_question_3>" in templates["generation"].body


def test_context_assets_load():
    assets = load_context_assets()
    assert set(assets) == set(CONTEXT_ASSET_NAMES)
    assert all(text.strip() for text in assets.values())


def test_expected_vocabularies(templates):
    skill_slots = {"skill_1", "skill_2"} | {
        f"skill_{s}_{kind}_{i}"
        for s in "12"
        for kind in ("question", "solution")
        for i in (1, 2, 3)
    }
    assert templates["pair_validation"].placeholders == frozenset(skill_slots)
    assert templates["generation"].placeholders == frozenset(
        skill_slots | {"agent_convo_1", "agent_convo_2"}
    )
    assert templates["attempt"].placeholders == frozenset({"question"})
    assert templates["validation"].placeholders == frozenset(
        skill_slots
        | {f"validation_exemplar_{i}" for i in range(1, 7)}
        | {"question", "solution"}
    )
    assert templates["final_solution"].placeholders == frozenset(
        skill_slots | {"question"}
    )
    assert templates["grading"].placeholders == frozenset(
        {"question", "correct_solution", "student_solution"}
    )


# ==============================================================================
# Rendering
# ==============================================================================


def test_render_is_pure_and_total(templates, bank):
    bindings = bind_for_stage("generation", PAIR, bank, context=FAKE_CONTEXT)
    out1 = render(templates["generation"], bindings)
    out2 = render(templates["generation"], bindings)
    assert out1 == out2
    # any residual angle token must be a deliberate format-block literal
    assert placeholder_names(out1) <= escaped_names(templates["generation"].body)


def test_render_missing_binding_names_it(templates, bank):
    bindings = bind_for_stage("pair_validation", PAIR, bank)
    del bindings["skill_2"]
    with pytest.raises(RenderError, match="skill_2"):
        render(templates["pair_validation"], bindings)


def test_render_empty_binding_fails_closed():
    template = PromptTemplate(id="t", body="value: <x>")
    with pytest.raises(RenderError, match="empty binding for x"):
        render(template, {"x": "   "})


def test_render_extra_binding_warns_not_fails(caplog):
    template = PromptTemplate(id="t", body="value: <x>")
    with caplog.at_level(logging.WARNING):
        out = render(template, {"x": "1", "y": "2"})
    assert out == "value: 1"
    assert "unused" in caplog.text


def test_render_no_placeholders_is_identity():
    template = PromptTemplate(id="t", body="plain text, no slots")
    assert render(template, {}) == "plain text, no slots"


def test_escaped_markers_render_literally():
    template = PromptTemplate(id="t", body="write '# Q\n<<question>>' after <name>")
    out = render(template, {"name": "Ada"})
    assert out == "write '# Q\n<question>' after Ada"


def test_generation_format_block_survives_rendering(templates, bank):
    bindings = bind_for_stage("generation", PAIR, bank, context=FAKE_CONTEXT)
    out = render(templates["generation"], bindings)
    assert "# QUESTION\n<question>" in out
    assert "# SOLUTION\n<solution>" in out


def test_bound_values_are_not_rescanned():
    template = PromptTemplate(id="t", body="Q: <question>")
    out = render(template, {"question": "is <x> smaller than <y>?"})
    assert out == "Q: is <x> smaller than <y>?"


@given(value=st.text(min_size=1).filter(lambda s: s.strip()))
def test_render_purity_property(value):
    template = PromptTemplate(id="t", body="before <slot> after")
    assert render(template, {"slot": value}) == f"before {value} after"


# ==============================================================================
# Stage bindings
# ==============================================================================


def test_pair_validation_bindings_have_six_exemplars(bank):
    bindings = bind_for_stage("pair_validation", PAIR, bank)
    question_slots = [k for k in bindings if "question" in k]
    assert len(question_slots) == 6
    assert bindings["skill_1"] == "perimeter_and_area"
    assert bindings["skill_2"] == "modular_arithmetic"
    assert bindings["skill_1_question_1"] == "area question 1"


def test_attempt_bindings_carry_question_only(bank):
    bindings = bind_for_stage("attempt", question="What is 2+2?")
    assert bindings == {"question": "What is 2+2?"}


def test_attempt_prompt_leaks_no_skill_names(templates, bank):
    bindings = bind_for_stage("attempt", question="Count the lattice points.")
    out = render(templates["attempt"], bindings)
    assert "perimeter_and_area" not in out
    assert "modular_arithmetic" not in out


def test_validation_bindings_include_attempt(templates, bank):
    bindings = bind_for_stage(
        "validation",
        PAIR,
        bank,
        question="Q text",
        solution="attempted solution text",
        context=FAKE_CONTEXT,
    )
    out = render(templates["validation"], bindings)
    assert "# SOLUTION ATTEMPT\nattempted solution text" in out
    assert "# QUESTION TO BE CHECKED\nQ text" in out


def test_final_solution_bindings(templates, bank):
    bindings = bind_for_stage("final_solution", PAIR, bank, question="Q text")
    out = render(templates["final_solution"], bindings)
    assert "QUESTION: Q text" in out


def test_grading_bindings(templates):
    bindings = bind_for_stage(
        "grading",
        question="Q",
        correct_solution="C",
        student_solution="S",
    )
    out = render(templates["grading"], bindings)
    assert "STUDENT'S SOLUTION: S" in out
    assert "CORRECT SOLUTION: C" in out


def test_every_stage_renders_without_residue(templates, bank):
    stage_kwargs = {
        "pair_validation": {},
        "generation": {"context": FAKE_CONTEXT},
        "attempt": {"question": "Q"},
        "validation": {"question": "Q", "solution": "S", "context": FAKE_CONTEXT},
        "final_solution": {"question": "Q"},
        "grading": {
            "question": "Q",
            "correct_solution": "C",
            "student_solution": "S",
        },
    }
    for stage, kwargs in stage_kwargs.items():
        if stage in ("attempt", "grading"):
            bindings = bind_for_stage(stage, **kwargs)
        else:
            bindings = bind_for_stage(stage, PAIR, bank, **kwargs)
        out = render(templates[stage], bindings)
        assert placeholder_names(out) <= escaped_names(templates[stage].body), stage


def test_missing_candidate_field_errors(bank):
    with pytest.raises(RenderError, match="question"):
        bind_for_stage("attempt")
    with pytest.raises(RenderError, match="solution"):
        bind_for_stage("validation", PAIR, bank, question="Q", context=FAKE_CONTEXT)
    with pytest.raises(RenderError, match="pair"):
        bind_for_stage("generation")


def test_unknown_stage_rejected():
    with pytest.raises(ValueError):
        bind_for_stage("mystery", question="Q")
