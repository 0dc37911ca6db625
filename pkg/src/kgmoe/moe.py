"""Hard-EM training over K experts with the joint generation + selection loss.

Each (example, reference) pair is one EM unit.  The E-step assigns the unit to
the expert with the lowest joint loss (ties go to the lowest id, realizing the
argmax of the joint probability under a uniform expert prior); the M-step takes
one Adam step on the mean joint loss of the chosen experts only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .generator import (EOS, UNK, GeneratorConfig, GeneratorInput, Vocab,
                        generation_loss, init_generator_params, sinusoidal_positions)
from .kg import KnowledgeGraph, Subgraph, extract_subgraph, ground_concepts
from .rgcn import encode, init_rgcn_params
from .selector import (build_labels, concept_loss, init_selector_params,
                       score_concepts, top_n)


@dataclass
class TrainConfig:
    """Training and model hyperparameters; one seed drives all randomness."""

    n_experts: int = 3
    concept_weight: float = 0.3          # weight of the selection loss in the joint
    top_concepts: int = 10
    learning_rate: float = 3e-3
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    warmup_steps: int | None = None      # default: min(1000, total // 10)
    expert_mode: str = "prompt"          # "embed" | "prompt"
    disjoint_rule: bool = False
    weight_decay: float = 0.0
    # model dimensions
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    d_ff: int = 256
    max_len: int = 64
    rgcn_layers: int = 2
    subgraph_hops: int = 2
    max_subgraph_nodes: int = 300

    def __post_init__(self):
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if self.concept_weight < 0:
            raise ValueError("concept_weight must be >= 0")

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.d_model, self.n_heads, self.n_encoder_layers,
                               self.n_decoder_layers, self.d_ff, self.max_len)


def sub_seed(base_seed: int, name: str) -> int:
    """Named deterministic sub-seed derived from one base seed."""
    digest = hashlib.sha256(f"{base_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class Model:
    """All trainable parameters plus the static pieces needed to run them."""

    params: dict[str, T.Tensor]
    vocab: Vocab
    kg: KnowledgeGraph
    cfg: TrainConfig
    positions: np.ndarray

    def trainable(self) -> dict[str, T.Tensor]:
        return self.params


def build_model(kg: KnowledgeGraph, vocab: Vocab, cfg: TrainConfig) -> Model:
    rng = np.random.default_rng(sub_seed(cfg.seed, "init"))
    params = {}
    params.update(init_rgcn_params(rng, kg.num_concepts, kg.num_relations,
                                   cfg.d_model, cfg.rgcn_layers))
    params.update(init_selector_params(rng, cfg.d_model, cfg.n_experts))
    params.update(init_generator_params(rng, len(vocab), cfg.n_experts,
                                        cfg.generator_config()))
    return Model(params, vocab, kg, cfg, sinusoidal_positions(cfg.max_len, cfg.d_model))


@dataclass
class ExampleContext:
    """Preprocessed, parameter-independent view of one dataset example."""

    example_id: str
    x_ids: list[int]
    subgraph: Subgraph
    node_ids: list[int]
    concept_tokens: dict[int, list[int]]     # concept id -> surface token ids
    y_ids: list[list[int]]                   # per reference, EOS-terminated
    labels: list[np.ndarray]                 # per reference, over sorted nodes


def prepare_example(example, kg: KnowledgeGraph, vocab: Vocab, cfg: TrainConfig) -> ExampleContext:
    seeds = ground_concepts(example.input, kg)
    subgraph = extract_subgraph(seeds, kg, hops=cfg.subgraph_hops,
                                max_nodes=cfg.max_subgraph_nodes)
    node_ids = subgraph.sorted_nodes()
    concept_tokens = {}
    for cid in node_ids:
        toks = vocab.encode(kg.concepts[cid].replace("_", " "))
        concept_tokens[cid] = toks or [UNK]
    x_ids = vocab.encode(example.input)[: cfg.max_len]
    y_ids, labels = [], []
    for ref in example.references:
        ids = vocab.encode(ref)[: cfg.max_len - 1] + [EOS]
        y_ids.append(ids)
        labels.append(build_labels(subgraph, ref, kg))
    return ExampleContext(example.id, x_ids, subgraph, node_ids, concept_tokens,
                          y_ids, labels)


@dataclass
class Responsibility:
    """Hard one-hot expert assignment for one (example, reference) unit."""

    expert: int
    losses: list[float]

    def one_hot(self) -> list[int]:
        return [1 if z == self.expert else 0 for z in range(len(self.losses))]


def select_concepts(ctx: ExampleContext, model: Model, expert: int,
                    forbidden: set[int] | None = None) -> list[int]:
    """Top-N concept ids under the given expert's selection scores."""
    with T.no_grad():
        states = encode(ctx.subgraph, model.params, model.kg, model.cfg.rgcn_layers)
        p = score_concepts(states, model.params, expert)
    scores = dict(zip(ctx.node_ids, p.data.tolist()))
    return top_n(scores, model.cfg.top_concepts, forbidden)


def joint_loss(ctx: ExampleContext, ref_idx: int, expert: int, model: Model,
               forbidden: set[int] | None = None) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
    """Returns (joint, generation, concept) losses for one unit and expert."""
    cfg = model.cfg
    if not 0 <= expert < cfg.n_experts:
        raise ValueError(f"invalid expert id {expert}")
    states = encode(ctx.subgraph, model.params, model.kg, cfg.rgcn_layers)
    p = score_concepts(states, model.params, expert)
    l_concept = concept_loss(p, ctx.labels[ref_idx])
    scores = dict(zip(ctx.node_ids, p.data.tolist()))
    chosen = top_n(scores, cfg.top_concepts, forbidden)
    inp = GeneratorInput(ctx.x_ids, [ctx.concept_tokens[c] for c in chosen],
                         expert, cfg.expert_mode)
    l_gen = generation_loss(inp, ctx.y_ids[ref_idx], model.params, model.vocab,
                            cfg.generator_config(), model.positions)
    joint = T.add(l_gen, T.scale(l_concept, cfg.concept_weight))
    return joint, l_gen, l_concept


def e_step(ctx: ExampleContext, ref_idx: int, model: Model) -> Responsibility:
    """Assign the unit to the expert with the smallest joint loss."""
    losses = []
    with T.no_grad():
        for z in range(model.cfg.n_experts):
            loss, _, _ = joint_loss(ctx, ref_idx, z, model)
            losses.append(loss.item())
    best = min(range(len(losses)), key=lambda z: (losses[z], z))
    return Responsibility(best, losses)


def m_step(batch: list[tuple[ExampleContext, int, int]], model: Model,
           optimizer: T.Adam, lr: float) -> float:
    """One optimizer step on the mean joint loss of the chosen experts."""
    losses = []
    for ctx, ref_idx, expert in batch:
        loss, _, _ = joint_loss(ctx, ref_idx, expert, model)
        losses.append(loss)
    mean = T.scale(_sum_tensors(losses), 1.0 / len(losses))
    value = mean.item()
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite training loss {value}; aborting")
    optimizer.zero_grad()
    mean.backward()
    optimizer.step(lr=lr)
    return value


def _sum_tensors(tensors):
    acc = tensors[0]
    for t in tensors[1:]:
        acc = T.add(acc, t)
    return acc


def epoch_unit_order(n_units: int, epoch: int, seed: int) -> list[int]:
    """Deterministic shuffle of EM units for one epoch."""
    rng = np.random.default_rng(sub_seed(seed, f"shuffle-epoch{epoch}"))
    return rng.permutation(n_units).tolist()


def learning_rate_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup then linear decay; step is 0-based."""
    warmup = cfg.warmup_steps if cfg.warmup_steps is not None else min(1000, max(total_steps // 10, 1))
    warmup = max(warmup, 1)
    if step < warmup:
        return cfg.learning_rate * (step + 1) / warmup
    if total_steps <= warmup:
        return cfg.learning_rate
    frac = (total_steps - step) / (total_steps - warmup)
    return cfg.learning_rate * max(frac, 0.0)


def train(dataset, kg: KnowledgeGraph, cfg: TrainConfig,
          vocab: Vocab | None = None) -> tuple[Model, list[dict]]:
    """Seeded hard-EM epoch loop; returns the model and a per-step log."""
    if not dataset:
        raise ValueError("empty dataset")
    if vocab is None:
        texts = [ex.input for ex in dataset]
        for ex in dataset:
            texts.extend(ex.references)
        vocab = Vocab.build(texts, cfg.n_experts)
    model = build_model(kg, vocab, cfg)
    contexts = [prepare_example(ex, kg, vocab, cfg) for ex in dataset]

    units = [(ei, ri) for ei, ctx in enumerate(contexts) for ri in range(len(ctx.y_ids))]
    steps_per_epoch = max(1, (len(units) + cfg.batch_size - 1) // cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    optimizer = T.Adam(model.params, lr=cfg.learning_rate,
                       weight_decay=cfg.weight_decay)

    log: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = epoch_unit_order(len(units), epoch, cfg.seed)
        for start in range(0, len(units), cfg.batch_size):
            chosen_batch = []
            histogram = [0] * cfg.n_experts
            for idx in order[start : start + cfg.batch_size]:
                ei, ri = units[idx]
                resp = e_step(contexts[ei], ri, model)
                histogram[resp.expert] += 1
                chosen_batch.append((contexts[ei], ri, resp.expert))
            lr = learning_rate_at(step, total_steps, cfg)
            mean_loss = m_step(chosen_batch, model, optimizer, lr)
            log.append({"epoch": epoch, "step": step,
                        "expert_histogram": histogram, "mean_loss": mean_loss})
            step += 1
    return model, log
