"""LLM-written concept descriptions: summarize from 10 instances, then polish
one instance at a time over up to 20 further instances."""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import Sample
from .llm import ChatClient, ChatRequest, LLMError
from .ontology import Concept, instance_string

logger = logging.getLogger(__name__)

INIT_SAMPLE = 10
POLISH_SAMPLE = 20

INIT_PROMPT = """# Writing Entity Descriptions

## Introduction
This guide provides a step-by-step process for writing a clear, concise, and accurate description of an entity type based on a provided list of examples. The objective is to generalize the shared characteristics of the examples without referencing any specific instance, giving a broad and comprehensive understanding of the entity type.

## Prerequisites
Before you begin, make sure you have the following:
- **Entity Type**: The name of the entity type that requires a description.
- **Entity List**: A set of examples representing this entity type.
- **Basic Description**: While not mandatory, familiarity with the general concept of the entity type could be beneficial.

## Step-by-Step Instructions
### Step 1: Begin with the Required Phrase
Each description should start with:
**"[Entity Type] refers to"**
This ensures consistency across all descriptions. Replace **[Entity Type]** with the actual type name.

### Step 2: Generalize the Shared Characteristics
- Review the **Entity List** to identify common traits among all examples.
- Avoid referring to specific examples directly. Generalize to cover the entire group.
- Example: If the list includes various vehicles (cars, trucks), the description should focus on common traits such as modes of transportation designed for movement.

### Step 3: Provide Comprehensive Coverage
- The description should encapsulate all critical aspects represented in the example list, accounting for any outliers or unusual cases.
    - Example: If the list includes motorized vehicles and non-motorized bicycles, ensure the description covers both.

### Step 4: Output the Description
- After completing the description, present it without referencing explicit examples. It should summarize the entity type in a single, generalized statement.
- If you want to revise the description, output the modified description in the format.

## Conclusion
By following these steps, you will create an accurate, clear, and generalized description of an entity type. Start with the required phrase, focus on generalization, and keep the language simple yet precise.

## Input
Entity Type: {entity_type}
Entity Example List: {entity_example_list}

## Example Template for Output
Entity Type: {entity_type}
Entity Example List: {entity_example_list}
Entity Type Description: "{entity_type} refers to..."(in the language of the Entity list)
"""

POLISH_PROMPT = """# Evaluating and Revising Entity Description

## Introduction
This guide provides a systematic approach to evaluate whether a given description accurately represents the characteristics of an entity type. If the description is accurate and complete, no revision is necessary. However, if inaccuracies or omissions exist, revisions are required to ensure clarity and consistency in classifying entities.

## Step-by-Step Instructions
### Step 1: Analyze the Entity Type Description
- Carefully review the **entity type description** provided.
- Example: For the entity type "Animal," the description may include "living organisms that move, breathe, and consume organic matter."

### Step 2: Analyze the Entity
- Review the specific entity's characteristics, noting its unique features.
- Example: If the entity is "dog," note traits like "mammal, four-legged, domesticated, etc."

### Step 3: Evaluate the Description's Accuracy and Completeness
- Compare the entity type description with the entity's characteristics.
    - Does the description fully encompass the defining features of the entity?
    - Are any characteristics missing or misrepresented?
- Check for completeness:
    - Does the description cover all essential traits necessary for classification?
- Verify accuracy:
    - Are the described attributes factually correct?

### Step 4: Revise the Description (if necessary)
- If the description is incomplete or inaccurate, revise it to reflect the entity's correct characteristics.
- Ensure the revised description is clear, precise, and free from ambiguities.

## Conclusion
Following these steps will ensure each entity's description is both accurate and comprehensive. This process maintains clarity and consistency in classifying entities under their respective types.

## Input
Entity Type: {entity_type}
Entity Example List: {entity_example_list}
Entity Type Description: {description}

## Example Template for Output
Entity Type: {entity_type}
Entity Example List: {entity_example_list}
Entity Type Description: "{entity_type} refers to..."(in the language of the Entity list)
"""


class DescriptionError(RuntimeError):
    pass


@dataclass
class Revision:
    instance: str
    changed: bool
    text: str
    note: str = ""


@dataclass
class DescriptionDraft:
    concept_id: str
    text: str
    seed_instances: list[str] = field(default_factory=list)
    history: list[Revision] = field(default_factory=list)

    def __post_init__(self):
        if not self.text.startswith(f"{self.concept_id} refers to"):
            raise DescriptionError(f"description must start with '{self.concept_id} refers to'")


def concept_instances(corpus: Iterable[Sample], concept_id: str) -> list[str]:
    """Distinct instance strings of a concept in first-occurrence order."""
    seen: dict[str, None] = {}
    for sample in corpus:
        for top in sample.instances:
            for inst in top.walk():
                if inst.concept == concept_id:
                    seen.setdefault(instance_string(inst), None)
    return list(seen)


def extract_description(response: str, concept_id: str) -> str | None:
    """The ``<concept> refers to ...`` statement in ``response``, if any."""
    found = None
    # last real statement wins; echoed template lines ("X refers to...") are skipped
    for m in re.finditer(re.escape(concept_id) + r" refers to[^\n]*", response):
        text = re.sub(r'["”]?\s*\(in the language[^)]*\)\s*$', "", m.group().strip())
        text = text.rstrip("\"” ").strip()
        if text.rstrip(". ") != f"{concept_id} refers to":
            found = text
    return found


def _format(template: str, **values: str) -> str:
    out = template
    for k, v in values.items():
        out = out.replace("{" + k + "}", v)
    return out


def _examples(items: Sequence[str]) -> str:
    return json.dumps(list(items), ensure_ascii=False)


def init_description(
    concept: Concept | str,
    corpus: Sequence[Sample],
    llm: ChatClient,
    *,
    model: str = "gpt-4o-2024-08-06",
    seed: int = 0,
    k: int = INIT_SAMPLE,
) -> DescriptionDraft:
    cid = concept if isinstance(concept, str) else concept.canonical_id
    pool = concept_instances(corpus, cid)
    if not pool:
        raise DescriptionError(f"no instances of {cid} in the corpus")
    rng = random.Random(seed)
    chosen = rng.sample(pool, min(k, len(pool)))
    prompt = _format(INIT_PROMPT, entity_type=cid, entity_example_list=_examples(chosen))
    for attempt in range(2):
        response = llm.complete(ChatRequest.user(model, prompt, tag="description_init")).content
        text = extract_description(response, cid)
        if text:
            return DescriptionDraft(cid, text, chosen)
        logger.warning("%s: description missing required phrase (attempt %d)", cid, attempt + 1)
    raise DescriptionError(f"{cid}: no '{cid} refers to' statement after 2 attempts")


def polish_description(
    draft: DescriptionDraft,
    corpus: Sequence[Sample],
    llm: ChatClient,
    *,
    model: str = "gpt-4o-2024-08-06",
    seed: int = 0,
    k: int = POLISH_SAMPLE,
) -> DescriptionDraft:
    """Evaluate the draft against up to ``k`` fresh instances, one per call.

    Instances used for initialization are excluded while any others remain.
    Revisions that drop the required phrase are rejected; LLM failures skip
    the instance. The returned draft carries the full history.
    """
    cid = draft.concept_id
    pool = concept_instances(corpus, cid)
    used = set(draft.seed_instances)
    fresh = [p for p in pool if p not in used] or pool
    rng = random.Random(seed + 1)
    chosen = rng.sample(fresh, min(k, len(fresh)))
    current = draft.text
    history = list(draft.history)
    for inst in chosen:
        prompt = _format(
            POLISH_PROMPT, entity_type=cid, entity_example_list=_examples([inst]), description=current
        )
        try:
            response = llm.complete(ChatRequest.user(model, prompt, tag="description_polish")).content
        except LLMError as e:
            logger.warning("%s: polish call failed on %r: %s", cid, inst, e)
            history.append(Revision(inst, False, current, f"error: {e}"))
            continue
        revised = extract_description(response, cid)
        if revised is None:
            history.append(Revision(inst, False, current, "rejected: missing required phrase"))
            continue
        changed = revised != current
        current = revised
        history.append(Revision(inst, changed, current))
    return DescriptionDraft(cid, current, draft.seed_instances, history)


def generate_description(
    concept: Concept | str, corpus: Sequence[Sample], llm: ChatClient, *, model: str = "gpt-4o-2024-08-06", seed: int = 0
) -> DescriptionDraft:
    draft = init_description(concept, corpus, llm, model=model, seed=seed)
    return polish_description(draft, corpus, llm, model=model, seed=seed)
