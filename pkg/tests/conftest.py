import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from codeie.ontology import load_ontology  # noqa: E402

NER_CONFIG = """
task: NER
dataset: toy
concepts:
  - id: PER
    base: Entity
    names: {zh: 人物, ko: 사람}
    description: "PER refers to people."
    examples: [Steve, 李明]
  - id: ORG
    base: Entity
    names: {zh: 组织}
  - id: LOC
    base: Entity
    names: {zh: 地点}
"""

RE_CONFIG = """
task: RE
concepts:
  - {id: PER, base: Entity}
  - {id: ORG, base: Entity}
  - id: WorkFor
    base: Relation
    attributes:
      - {name: subject, kind: ref, type: PER}
      - {name: object, kind: ref, type: ORG}
"""

EAE_CONFIG = """
task: EAE
concepts:
  - {id: PER, base: Entity}
  - {id: LOC, base: Entity}
  - id: Attack
    base: Event
    attributes:
      - {name: trigger, kind: span}
      - {name: attacker, kind: refs}
      - {name: place, kind: refs}
"""


@pytest.fixture(scope="session")
def ner_onto():
    return load_ontology(NER_CONFIG)


@pytest.fixture(scope="session")
def re_onto():
    return load_ontology(RE_CONFIG)


@pytest.fixture(scope="session")
def eae_onto():
    return load_ontology(EAE_CONFIG)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
