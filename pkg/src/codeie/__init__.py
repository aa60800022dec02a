"""Data tooling for code-style multilingual information extraction."""

from .codegen import PromptPair, build_training_pair, render_completion, render_instruction
from .data import ExtractionInstance, Sample, Span
from .metrics import ScoreCard, score_eae, score_ed, score_faithfulness, score_ner, score_re
from .ontology import Ontology, load_ontology, resolve_surface, sample_examples
from .parser import ParseReport, parse_completion

__version__ = "0.1.0"
