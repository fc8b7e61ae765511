"""Skill repository: loading, pair sampling, and exemplar lookup.

A skill bank is a set of named math skills, each tagged with one of the
seven MATH topic labels and carrying at least three reference
question-solution exemplars. Question generation starts by sampling a pair
of distinct skills: the first from a configured topic subset (pre-algebra
and algebra by default), the second from anywhere else in the bank. A small
exclusion list keeps trivial skills such as basic_arithmetic out of pairs.

The bank is immutable after load, so concurrent readers need no locking.
All sampling goes through caller-supplied random.Random instances.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SkillBankError

__all__ = [
    "TOPICS",
    "DEFAULT_FIRST_TOPICS",
    "DEFAULT_EXCLUSIONS",
    "Skill",
    "SkillExemplar",
    "SkillPair",
    "PairPolicy",
    "SkillBank",
    "load_skill_bank",
    "load_skill_catalog",
    "sample_skill_pair",
    "reference_exemplars",
    "skill_histogram",
]

TOPICS = (
    "Pre-Algebra",
    "Algebra",
    "Inter-Algebra",
    "Geometry",
    "Number Theory",
    "Precalculus",
    "Probability",
)

DEFAULT_FIRST_TOPICS = frozenset({"Pre-Algebra", "Algebra"})
DEFAULT_EXCLUSIONS = frozenset({"basic_arithmetic", "arithmetic_operations"})

# Exemplars shown per skill in generation prompts.
DEFAULT_EXEMPLARS_PER_SKILL = 3

MIN_EXEMPLARS = 3


@dataclass(frozen=True)
class Skill:
    id: str  # snake_case identifier, unique within a bank
    topic: str  # one of TOPICS
    excluded: bool = False  # kept out of sampling but still resolvable

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("skill id must be nonempty")
        if self.topic not in TOPICS:
            raise ValueError(f"unknown topic {self.topic!r} for skill {self.id!r}")


@dataclass(frozen=True)
class SkillExemplar:
    question: str
    solution: str
    source: str = ""  # provenance, e.g. base-dataset item id

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.solution.strip():
            raise ValueError("exemplar question and solution must be nonempty")


@dataclass(frozen=True)
class SkillPair:
    """A sampled pair in role order: first fills the SKILL 1 prompt slot."""

    first: str
    second: str

    def __post_init__(self) -> None:
        if self.first == self.second:
            raise ValueError("pair must use two distinct skills")

    @property
    def canonical(self) -> tuple[str, str]:
        """Order-insensitive key for deduplication."""
        return tuple(sorted((self.first, self.second)))


@dataclass(frozen=True)
class PairPolicy:
    first_topics: frozenset[str] = DEFAULT_FIRST_TOPICS
    exclusions: frozenset[str] = DEFAULT_EXCLUSIONS
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.first_topics:
            raise ValueError("first_topics must be nonempty")
        unknown = self.first_topics - set(TOPICS)
        if unknown:
            raise ValueError(f"unknown topics in policy: {sorted(unknown)}")


@dataclass(frozen=True)
class SkillBank:
    skills: tuple[Skill, ...]
    exemplars: dict[str, tuple[SkillExemplar, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [s.id for s in self.skills]
        if len(set(ids)) != len(ids):
            dupes = sorted(i for i, n in Counter(ids).items() if n > 1)
            raise SkillBankError(f"duplicate skill ids: {dupes}")
        known = set(ids)
        stray = sorted(set(self.exemplars) - known)
        if stray:
            raise SkillBankError(f"exemplars for unknown skills: {stray}")
        short = sorted(
            s.id
            for s in self.skills
            if not s.excluded and len(self.exemplars.get(s.id, ())) < MIN_EXEMPLARS
        )
        if short:
            raise SkillBankError(
                f"non-excluded skills need >= {MIN_EXEMPLARS} exemplars: {short}"
            )

    def __contains__(self, skill_id: str) -> bool:
        return any(s.id == skill_id for s in self.skills)

    def get(self, skill_id: str) -> Skill:
        for s in self.skills:
            if s.id == skill_id:
                return s
        raise SkillBankError(f"unknown skill id: {skill_id!r}")

    def eligible(self, exclusions: frozenset[str] = frozenset()) -> list[Skill]:
        return [
            s for s in self.skills if not s.excluded and s.id not in exclusions
        ]


def load_skill_bank(path: str | Path) -> SkillBank:
    """Load a bank from a JSONL file, one skill record per line.

    Record shape: {"id", "topic", "excluded", "exemplars": [{"question",
    "solution", "source"}]}. The bank is sorted by skill id so the result
    does not depend on file order.
    """
    path = Path(path)
    if not path.exists():
        raise SkillBankError(f"skill bank file not found: {path}")
    skills: list[Skill] = []
    exemplars: dict[str, tuple[SkillExemplar, ...]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SkillBankError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            try:
                skill = Skill(
                    id=record["id"],
                    topic=record["topic"],
                    excluded=bool(record.get("excluded", False)),
                )
                exemplars[skill.id] = tuple(
                    SkillExemplar(
                        question=ex["question"],
                        solution=ex["solution"],
                        source=ex.get("source", ""),
                    )
                    for ex in record.get("exemplars", [])
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SkillBankError(f"{path}:{lineno}: {exc}") from exc
            skills.append(skill)
    if not skills:
        raise SkillBankError(f"no skills in {path}")
    skills.sort(key=lambda s: s.id)
    return SkillBank(skills=tuple(skills), exemplars=exemplars)


def load_skill_catalog() -> dict[str, str]:
    """Bundled catalog of the 114 extracted skill names, id -> topic.

    Four names appear under two topics in the source tables; the catalog
    keeps the first topic for each.
    """
    raw = resources.files("skillweave").joinpath("data/skill_catalog.json")
    payload = json.loads(raw.read_text(encoding="utf-8"))
    return {entry["id"]: entry["topic"] for entry in payload["skills"]}


def sample_skill_pair(
    bank: SkillBank, policy: PairPolicy, rng: random.Random
) -> SkillPair:
    """Draw one skill pair: first from policy.first_topics, second from the
    rest of the bank. Uniform over eligible skills in each slot."""
    eligible = bank.eligible(policy.exclusions)
    first_pool = sorted(
        (s.id for s in eligible if s.topic in policy.first_topics)
    )
    if not first_pool:
        raise SkillBankError(
            f"no eligible first skill in topics {sorted(policy.first_topics)}"
        )
    first = rng.choice(first_pool)
    second_pool = sorted(s.id for s in eligible if s.id != first)
    if not second_pool:
        raise SkillBankError("no eligible second skill")
    second = rng.choice(second_pool)
    return SkillPair(first=first, second=second)


def reference_exemplars(
    bank: SkillBank, skill_id: str, k: int = DEFAULT_EXEMPLARS_PER_SKILL
) -> list[SkillExemplar]:
    """First min(k, available) exemplars of a skill, in stored order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    bank.get(skill_id)  # raises on unknown id
    return list(bank.exemplars.get(skill_id, ())[:k])


def skill_histogram(
    bank: SkillBank, labels: Iterable[tuple[str, Sequence[str]]]
) -> dict[str, int]:
    """Count how many items list each skill.

    ``labels`` is (item_id, skill_ids) per item; an item listing a skill
    twice still counts it twice, since that would be a labeling error worth
    seeing in the histogram.
    """
    counts: Counter[str] = Counter()
    for item_id, skill_ids in labels:
        for sid in skill_ids:
            if sid not in bank:
                raise SkillBankError(
                    f"item {item_id!r} references unknown skill {sid!r}"
                )
            counts[sid] += 1
    return dict(counts)
