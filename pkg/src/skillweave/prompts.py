"""Prompt templates and rendering.

Six fixed templates drive the pipeline: pair_validation, generation,
attempt, validation, final_solution and grading. They ship as text assets
with ``<name>`` placeholders (names match ``[a-z0-9_]+``), so prompt edits
never require code changes. ``<<name>>`` renders as the literal ``<name>``,
used where a template shows the model an output format containing
angle-bracket markers.

Rendering fails closed: a placeholder without a binding, or with an empty
binding, is an error naming the placeholder. Bindings that match nothing
produce a warning only. Substitution is a single pass over the template
body, so bound values are never rescanned for placeholders.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from .errors import RenderError
from .skills import SkillBank, SkillPair, reference_exemplars

logger = logging.getLogger(__name__)

__all__ = [
    "TEMPLATE_IDS",
    "CONTEXT_ASSET_NAMES",
    "PromptTemplate",
    "placeholder_names",
    "escaped_names",
    "load_builtin_templates",
    "load_context_assets",
    "render",
    "bind_for_stage",
]

TEMPLATE_IDS = (
    "pair_validation",
    "generation",
    "attempt",
    "validation",
    "final_solution",
    "grading",
)

CONTEXT_ASSET_NAMES = (
    "agent_convo_1",
    "agent_convo_2",
    "validation_exemplar_1",
    "validation_exemplar_2",
    "validation_exemplar_3",
    "validation_exemplar_4",
    "validation_exemplar_5",
    "validation_exemplar_6",
)

# <<name>> is an escape for a literal <name>; plain <name> is a placeholder.
_TOKEN_RE = re.compile(r"<<([a-z0-9_]+)>>|(?<!<)<([a-z0-9_]+)>(?!>)")


def placeholder_names(body: str) -> frozenset[str]:
    return frozenset(
        m.group(2) for m in _TOKEN_RE.finditer(body) if m.group(2)
    )


def escaped_names(body: str) -> frozenset[str]:
    """Names written as ``<<name>>``, rendered as literal ``<name>``."""
    return frozenset(
        m.group(1) for m in _TOKEN_RE.finditer(body) if m.group(1)
    )


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError(f"template {self.id!r} has empty body")

    @property
    def placeholders(self) -> frozenset[str]:
        return placeholder_names(self.body)


def load_builtin_templates() -> dict[str, PromptTemplate]:
    """All six shipped templates, byte-faithful to the asset files."""
    root = resources.files("skillweave").joinpath("templates")
    templates: dict[str, PromptTemplate] = {}
    for template_id in TEMPLATE_IDS:
        asset = root.joinpath(f"{template_id}.txt")
        try:
            body = asset.read_text(encoding="utf-8")
        except (FileNotFoundError, OSError) as exc:
            raise RenderError(f"missing template asset {template_id}: {exc}") from exc
        templates[template_id] = PromptTemplate(id=template_id, body=body)
    return templates


def load_context_assets() -> dict[str, str]:
    """Shipped in-context conversations for the generation and validation
    prompts. Replaceable content; name -> text."""
    root = resources.files("skillweave").joinpath("templates/context")
    assets: dict[str, str] = {}
    for name in CONTEXT_ASSET_NAMES:
        try:
            text = root.joinpath(f"{name}.txt").read_text(encoding="utf-8")
        except (FileNotFoundError, OSError) as exc:
            raise RenderError(f"missing context asset {name}: {exc}") from exc
        assets[name] = text.rstrip("\n")
    return assets


def render(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder; pure function of (template, bindings)."""
    needed = template.placeholders
    missing = sorted(needed - set(bindings))
    if missing:
        raise RenderError(
            f"template {template.id!r}: no binding for {', '.join(missing)}"
        )
    empty = sorted(name for name in needed if not str(bindings[name]).strip())
    if empty:
        raise RenderError(
            f"template {template.id!r}: empty binding for {', '.join(empty)}"
        )
    extra = sorted(set(bindings) - needed)
    if extra:
        logger.warning(
            "template %r: unused bindings %s", template.id, ", ".join(extra)
        )

    def substitute(match: re.Match) -> str:
        if match.group(1):
            return f"<{match.group(1)}>"
        return str(bindings[match.group(2)])

    return _TOKEN_RE.sub(substitute, template.body)


def _exemplar_bindings(pair: SkillPair, bank: SkillBank) -> dict[str, str]:
    bindings = {"skill_1": pair.first, "skill_2": pair.second}
    for slot, skill_id in (("1", pair.first), ("2", pair.second)):
        exemplars = reference_exemplars(bank, skill_id, k=3)
        if len(exemplars) < 3:
            raise RenderError(
                f"skill {skill_id!r} has {len(exemplars)} exemplars, need 3"
            )
        for i, ex in enumerate(exemplars, start=1):
            bindings[f"skill_{slot}_question_{i}"] = ex.question
            bindings[f"skill_{slot}_solution_{i}"] = ex.solution
    return bindings


def _require(stage: str, **fields: str | None) -> dict[str, str]:
    out: dict[str, str] = {}
    for name, value in fields.items():
        if value is None or not value.strip():
            raise RenderError(f"stage {stage!r} needs {name}")
        out[name] = value
    return out


def bind_for_stage(
    stage: str,
    pair: SkillPair | None = None,
    bank: SkillBank | None = None,
    *,
    question: str | None = None,
    solution: str | None = None,
    correct_solution: str | None = None,
    student_solution: str | None = None,
    context: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Assemble exactly the placeholder set of one stage's template.

    The attempt stage deliberately gets the question alone: the solving
    model must not see skill names or reference exemplars. The grading
    stage likewise carries no skill identity.
    """
    if stage in ("pair_validation", "generation", "validation", "final_solution"):
        if pair is None or bank is None:
            raise RenderError(f"stage {stage!r} needs a skill pair and bank")
        bindings = _exemplar_bindings(pair, bank)
    else:
        bindings = {}

    if stage == "pair_validation":
        return bindings
    if stage == "generation":
        ctx = dict(context) if context is not None else load_context_assets()
        bindings.update(
            _require(
                stage,
                agent_convo_1=ctx.get("agent_convo_1"),
                agent_convo_2=ctx.get("agent_convo_2"),
            )
        )
        return bindings
    if stage == "attempt":
        return _require(stage, question=question)
    if stage == "validation":
        ctx = dict(context) if context is not None else load_context_assets()
        bindings.update(
            _require(
                stage,
                **{
                    name: ctx.get(name)
                    for name in CONTEXT_ASSET_NAMES
                    if name.startswith("validation_exemplar_")
                },
            )
        )
        bindings.update(_require(stage, question=question, solution=solution))
        return bindings
    if stage == "final_solution":
        bindings.update(_require(stage, question=question))
        return bindings
    if stage == "grading":
        return _require(
            stage,
            question=question,
            correct_solution=correct_solution,
            student_solution=student_solution,
        )
    raise ValueError(f"unknown stage {stage!r}")
