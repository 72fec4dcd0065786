"""Tensor-decomposed PCFG induction.

The binary-rule probability tensor is never materialized: it lives in
CP/Kruskal factor form, which drops the inside algorithm from cubic to
(at most) quadratic cost in the symbol number and lets neural networks
generate grammars with hundreds of symbols.  Parsing is two-stage MBR:
span posteriors by differentiating the inside log-likelihood, then a
cubic dynamic program maximizing the expected constituent count.
"""

from .grammar import (
    DensePcfg,
    TdPcfg,
    random_td_pcfg,
    reconstruct_tensor,
    validate_factored,
)
from .inside import Chart, Sentence, batch_log_likelihood, inside_dense, inside_factored
from .decoder import (
    ParseTree,
    SpanPosteriors,
    cyk_viterbi_dense,
    enumerate_trees,
    label_spans,
    mbr_parse,
    span_posteriors,
)
from .parameterizer import ModelConfig, NeuralParams, emit_grammar, parameter_count
from .symbols import SymbolTable, Vocabulary
from .trainer import TrainConfig, nll_batch, perplexity, train

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "DensePcfg",
    "ModelConfig",
    "NeuralParams",
    "ParseTree",
    "Sentence",
    "SpanPosteriors",
    "SymbolTable",
    "TdPcfg",
    "TrainConfig",
    "Vocabulary",
    "batch_log_likelihood",
    "cyk_viterbi_dense",
    "emit_grammar",
    "enumerate_trees",
    "inside_dense",
    "inside_factored",
    "label_spans",
    "mbr_parse",
    "nll_batch",
    "parameter_count",
    "perplexity",
    "random_td_pcfg",
    "reconstruct_tensor",
    "span_posteriors",
    "train",
    "validate_factored",
]
