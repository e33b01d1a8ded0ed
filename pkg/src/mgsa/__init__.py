"""Multi-granularity structure-aware encoder-decoder for knowledge-graph-to-text generation."""

from .kg import Corpus, Example, KnowledgeGraph, Triple, parse_corpus
from .linearize import Vocab, build_vocab, linearize_entity_level, linearize_word_level
from .metrics import ScoreReport, bleu4, rouge_l

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Example", "KnowledgeGraph", "Triple", "parse_corpus",
    "Vocab", "build_vocab", "linearize_entity_level", "linearize_word_level",
    "ScoreReport", "bleu4", "rouge_l",
]
