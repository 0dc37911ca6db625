"""End-to-end orchestration: dataset and KG files, the synthetic one-to-many
task generator, and the train / generate / evaluate entry points.

File formats:
  dataset   JSONL, one {"id", "input", "references": [...]} object per line
  kg        TSV head<TAB>relation<TAB>tail
  vocab     one token per line in id order
  checkpoint versioned JSON parameter map (tensor_core format)
  generations JSONL, one {"id", "strategy", "expert", "output", "concepts"} per output
  metrics   JSON MetricReport
  training log JSONL, one {"epoch", "step", "expert_histogram", "mean_loss"} per step
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .decoding import (GenerationBundle, decode_beam, decode_moe, decode_nucleus,
                       decode_truncated)
from .generator import Vocab
from .kg import KnowledgeGraph, ground_concepts, load_kg
from .metrics import MetricReport, evaluate_hypothesis_sets
from .moe import Model, TrainConfig, build_model, prepare_example, sub_seed, train


@dataclass
class Example:
    """One dataset item: an input string and at least one reference output."""

    id: str
    input: str
    references: list[str]


def load_dataset(path) -> list[Example]:
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {err}") from None
            for key in ("id", "input", "references"):
                if key not in obj:
                    raise ValueError(f"{path}: line {lineno} missing {key!r}")
            if not obj["references"]:
                raise ValueError(f"{path}: example {obj['id']!r} has no references")
            examples.append(Example(str(obj["id"]), str(obj["input"]),
                                    [str(r) for r in obj["references"]]))
    return examples


def save_dataset(path, examples: list[Example]):
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({"id": ex.id, "input": ex.input,
                                "references": ex.references}) + "\n")


def save_kg_tsv(path, triples: list[tuple[str, str, str]]):
    with open(path, "w", encoding="utf-8") as f:
        for h, r, t in triples:
            f.write(f"{h}\t{r}\t{t}\n")


# ---------------------------------------------------------------------------
# synthetic one-to-many task

# Mode templates all surround the concept slots with the same function words
# ("with {a} and {b} of {m}") but differ everywhere else.  Outputs from
# different modes then share almost no 4-grams, while any decode that splices a
# concept from one mode into another mode's template produces only bigrams that
# legitimate outputs already contain.
_MODE_TEMPLATES = [
    "so the story goes with {a} and {b} of {m} all along the way as they say",
    "folks gather with {a} and {b} of {m} quite happily",
    "nobody links with {a} and {b} of {m} anymore",
    "children sing with {a} and {b} of {m} at dusk",
    "few recall with {a} and {b} of {m} these days",
]


def make_synthetic_task(seed: int, n_inputs: int, k_modes: int,
                        kg_size: int | None = None) -> tuple[list[Example], list[tuple[str, str, str]]]:
    """Build a one-to-many dataset plus KG triples.

    Each input grounds one seed concept; each of its k_modes references is
    built from a distinct concept cluster reachable within two hops, so the
    per-reference grounded concept sets are pairwise disjoint by construction.
    Returns (examples, kg_triples); both are deterministic in the seed.
    """
    if k_modes < 2:
        raise ValueError("k_modes must be >= 2")
    minimum = k_modes + n_inputs * (1 + 2 * k_modes + 2)
    if kg_size is None:
        kg_size = minimum
    if kg_size < minimum:
        raise ValueError(
            f"kg_size {kg_size} too small for {k_modes} disjoint clusters over "
            f"{n_inputs} inputs (need >= {minimum})")
    rng = np.random.default_rng(sub_seed(seed, "synthetic"))

    triples: list[tuple[str, str, str]] = []
    examples: list[Example] = []
    markers = [f"flavor{j}" for j in range(k_modes)]
    for i in range(n_inputs):
        src = f"topic{i}"
        refs = []
        for j in range(k_modes):
            a, b = f"item{i}x{j}", f"thing{i}x{j}"
            triples.append((src, "linksto", a))
            triples.append((a, "pairswith", b))
            triples.append((a, "marks", markers[j]))
            template = _MODE_TEMPLATES[j % len(_MODE_TEMPLATES)]
            refs.append(template.format(src=src, a=a, b=b, m=markers[j]))
        for suffix in ("p", "q"):
            triples.append((src, "hasextra", f"extra{i}{suffix}"))
        examples.append(Example(f"ex{i:04d}", f"tell me about {src}", refs))

    # spend any remaining concept budget on extra distractors
    extra_budget = kg_size - minimum
    for e in range(extra_budget):
        target = f"topic{int(rng.integers(0, n_inputs))}"
        triples.append((target, "hasextra", f"bonus{e}"))
    return examples, triples


def synthetic_kg(triples: list[tuple[str, str, str]]) -> KnowledgeGraph:
    kg = KnowledgeGraph()
    for h, r, t in triples:
        kg.add_triple(h, r, t)
    return kg


# ---------------------------------------------------------------------------
# run configuration and subcommand bodies

@dataclass
class RunConfig:
    """TrainConfig plus file locations and the decode strategy."""

    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_path: str = "dataset.jsonl"
    kg_path: str = "kg.tsv"
    vocab_path: str = "vocab.txt"
    checkpoint_path: str = "checkpoint.json"
    generations_path: str = "generations.jsonl"
    metrics_path: str = "metrics.json"
    train_log_path: str = "train_log.jsonl"
    strategy: str = "moe"                # moe | beam | truncated | nucleus
    sample_k: int = 5                    # truncated sampling cutoff
    sample_p: float = 0.9                # nucleus mass
    n_outputs: int | None = None         # defaults to n_experts


_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, raw: str):
    kind = _CONFIG_TYPES.get(name, "str")
    if name in ("warmup_steps",):
        return None if raw.lower() == "none" else int(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        return raw.lower() in ("1", "true", "yes", "on")
    return raw


def load_run_config(path) -> RunConfig:
    """Flat key=value config file; unknown keys raise."""
    cfg = RunConfig()
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    run_fields = {f.name for f in dataclasses.fields(RunConfig)} - {"train"}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno} is not key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key in train_fields:
                setattr(cfg.train, key, _coerce(key, raw))
            elif key in run_fields:
                current = getattr(cfg, key)
                if isinstance(current, bool):
                    setattr(cfg, key, raw.lower() in ("1", "true", "yes", "on"))
                elif isinstance(current, int):
                    setattr(cfg, key, int(raw))
                elif isinstance(current, float):
                    setattr(cfg, key, float(raw))
                else:
                    setattr(cfg, key, raw)
            else:
                raise ValueError(f"{path}: unknown config key {key!r} on line {lineno}")
    cfg.train = dataclasses.replace(cfg.train)  # rerun validation
    return cfg


def run_train(cfg: RunConfig) -> Model:
    """Train and persist checkpoint, vocabulary and the training log."""
    dataset = load_dataset(cfg.dataset_path)
    kg = load_kg(cfg.kg_path)
    model, log = train(dataset, kg, cfg.train)
    model.vocab.save(cfg.vocab_path)
    meta = {
        "vocab_hash": model.vocab.content_hash(),
        "train_config": dataclasses.asdict(cfg.train),
    }
    T.save_checkpoint(cfg.checkpoint_path, model.params, meta)
    with open(cfg.train_log_path, "w", encoding="utf-8") as f:
        for entry in log:
            f.write(json.dumps(entry) + "\n")
    return model


def load_model(cfg: RunConfig) -> Model:
    kg = load_kg(cfg.kg_path)
    params, meta = T.load_checkpoint(cfg.checkpoint_path)
    saved = meta.get("train_config", {})
    train_cfg = TrainConfig(**saved) if saved else cfg.train
    vocab = Vocab.load(cfg.vocab_path, train_cfg.n_experts)
    if meta.get("vocab_hash") and meta["vocab_hash"] != vocab.content_hash():
        raise ValueError("checkpoint/vocabulary mismatch (vocab hash differs)")
    model = build_model(kg, vocab, train_cfg)
    for name in model.params:
        if name not in params:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        model.params[name] = params[name]
    return model


def generate_bundles(model: Model, dataset: list[Example], cfg: RunConfig) -> list[GenerationBundle]:
    bundles = []
    n_out = cfg.n_outputs or model.cfg.n_experts
    for ex in dataset:
        ctx = prepare_example(ex, model.kg, model.vocab, model.cfg)
        if cfg.strategy == "moe":
            bundles.append(decode_moe(ctx, model))
        elif cfg.strategy == "beam":
            bundles.append(decode_beam(ctx, model, beam=n_out))
        elif cfg.strategy == "truncated":
            bundles.append(decode_truncated(ctx, model, cfg.sample_k,
                                            model.cfg.seed, n_samples=n_out))
        elif cfg.strategy == "nucleus":
            bundles.append(decode_nucleus(ctx, model, cfg.sample_p,
                                          model.cfg.seed, n_samples=n_out))
        else:
            raise ValueError(f"unknown decode strategy {cfg.strategy!r}")
    return bundles


def run_generate(cfg: RunConfig) -> list[GenerationBundle]:
    model = load_model(cfg)
    dataset = load_dataset(cfg.dataset_path)
    bundles = generate_bundles(model, dataset, cfg)
    with open(cfg.generations_path, "w", encoding="utf-8") as f:
        for bundle in bundles:
            for entry in bundle.entries:
                f.write(json.dumps({
                    "id": bundle.example_id,
                    "strategy": bundle.strategy,
                    "expert": entry.expert,
                    "output": entry.output,
                    "concepts": entry.concepts,
                }) + "\n")
    return bundles


def load_generations(path) -> dict[str, dict]:
    """Group a generations JSONL by example id, preserving file order."""
    grouped: dict[str, dict] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}: malformed JSON on line {lineno}: {err}") from None
            entry = grouped.setdefault(obj["id"], {"strategy": obj["strategy"],
                                                   "outputs": [], "concepts": []})
            entry["outputs"].append(obj["output"])
            entry["concepts"].append(obj["concepts"])
    return grouped


def run_evaluate(cfg: RunConfig) -> MetricReport:
    """Score a generations file against the dataset; no model weights needed."""
    dataset = load_dataset(cfg.dataset_path)
    kg = load_kg(cfg.kg_path)
    grouped = load_generations(cfg.generations_path)

    hypothesis_sets, references, concept_sets = [], [], []
    strategy = None
    for ex in dataset:
        if ex.id not in grouped:
            continue
        entry = grouped[ex.id]
        strategy = entry["strategy"]
        hypothesis_sets.append(entry["outputs"])
        references.append(ex.references)
        concept_sets.append([ground_concepts(out, kg) for out in entry["outputs"]])
    if not hypothesis_sets:
        raise ValueError("no generations matched the dataset")

    k = len(hypothesis_sets[0])
    report = evaluate_hypothesis_sets(hypothesis_sets, references, concept_sets,
                                      config={"K": k, "strategy": strategy})
    with open(cfg.metrics_path, "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    return report


def subgraph_json(kg: KnowledgeGraph, text: str, hops: int = 2,
                  max_nodes: int = 300) -> str:
    """Debug view of the grounded subgraph for a piece of text."""
    from .kg import extract_subgraph
    seeds = ground_concepts(text, kg)
    sub = extract_subgraph(seeds, kg, hops=hops, max_nodes=max_nodes)
    return json.dumps({
        "nodes": [kg.concepts[c] for c in sub.sorted_nodes()],
        "edges": [[kg.concepts[h], kg.relations[r], kg.concepts[t]]
                  for h, r, t in sub.edges],
        "seeds": [kg.concepts[c] for c in sorted(sub.seeds)],
    }, indent=2)
