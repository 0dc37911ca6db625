"""KG-grounded mixture-of-experts diverse text generation, desk scale.

Submodules:
  tensor    float64 reverse-mode autodiff engine, Adam, checkpoints
  kg        triple store, concept grounding, 2-hop subgraph extraction
  rgcn      relational graph convolution encoder
  selector  concept scoring, supervision labels, top-N selection
  generator vocabulary and transformer encoder-decoder
  moe       hard-EM training over K experts
  decoding  per-expert greedy, beam, top-k and nucleus decoders
  metrics   quality / diversity evaluation suite
  pipeline  dataset and KG files, synthetic task, run orchestration
  cli       train / generate / evaluate / subgraph / synth subcommands
"""

from .kg import KnowledgeGraph, Subgraph, extract_subgraph, ground_concepts, load_kg
from .generator import Vocab
from .metrics import MetricReport, evaluate_hypothesis_sets
from .moe import Model, TrainConfig, train
from .pipeline import Example, RunConfig, load_dataset, make_synthetic_task

__all__ = [
    "Example", "KnowledgeGraph", "MetricReport", "Model", "RunConfig",
    "Subgraph", "TrainConfig", "Vocab", "evaluate_hypothesis_sets",
    "extract_subgraph", "ground_concepts", "load_dataset", "load_kg",
    "make_synthetic_task", "train",
]
