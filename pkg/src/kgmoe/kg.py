"""ConceptNet-style triple store, concept grounding and 2-hop subgraph extraction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

# Suffixes tried longest-first; a rule only applies if the stem keeps >= 3 chars.
_SUFFIXES = ("ing", "es", "ed", "s")
_MIN_STEM = 3


def stem(token: str) -> str:
    """Tiny rule stemmer: lowercase and strip a plural/verbal suffix."""
    token = token.lower()
    for suf in _SUFFIXES:
        if token.endswith(suf) and len(token) - len(suf) >= _MIN_STEM:
            return token[: -len(suf)]
    return token


def norm_tokens(text: str) -> list[str]:
    """Whitespace tokenization, lowercasing, rule stemming."""
    return [stem(t) for t in text.split()]


def _surface_key(surface: str) -> tuple[str, ...]:
    # ConceptNet multiword surfaces may use underscores; treat them as spaces.
    return tuple(stem(t) for t in surface.replace("_", " ").split())


@dataclass
class Subgraph:
    """Per-example concept neighborhood: nodes, the triples among them, seeds."""

    nodes: set[int]
    edges: list[tuple[int, int, int]]
    seeds: set[int]

    def sorted_nodes(self) -> list[int]:
        return sorted(self.nodes)


class KnowledgeGraph:
    """Immutable-after-load triple store with id<->surface tables and adjacency."""

    def __init__(self):
        self.concepts: list[str] = []
        self.concept_ids: dict[str, int] = {}
        self.relations: list[str] = []
        self.relation_ids: dict[str, int] = {}
        self.triples: list[tuple[int, int, int]] = []
        self._triple_set: set[tuple[int, int, int]] = set()
        # concept id -> list of (neighbor id, triple index), both directions
        self.adjacency: dict[int, list[tuple[int, int]]] = {}
        self._surface_index: dict[tuple[str, ...], int] = {}
        self._max_surface_len = 0

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def concept_id(self, surface: str) -> int:
        if surface not in self.concept_ids:
            cid = len(self.concepts)
            self.concept_ids[surface] = cid
            self.concepts.append(surface)
            self.adjacency[cid] = []
            key = _surface_key(surface)
            self._surface_index.setdefault(key, cid)
            self._max_surface_len = max(self._max_surface_len, len(key))
        return self.concept_ids[surface]

    def relation_id(self, name: str) -> int:
        if name not in self.relation_ids:
            self.relation_ids[name] = len(self.relations)
            self.relations.append(name)
        return self.relation_ids[name]

    def add_triple(self, head: str, relation: str, tail: str) -> bool:
        """Insert one triple; returns False for duplicates."""
        h, r, t = self.concept_id(head), self.relation_id(relation), self.concept_id(tail)
        triple = (h, r, t)
        if triple in self._triple_set:
            return False
        idx = len(self.triples)
        self._triple_set.add(triple)
        self.triples.append(triple)
        self.adjacency[h].append((t, idx))
        if t != h:
            self.adjacency[t].append((h, idx))
        return True


def load_kg(path) -> KnowledgeGraph:
    """Load a TSV of head<TAB>relation<TAB>tail lines, deduplicated.

    Ids are assigned in first-seen order; a malformed line raises with its number.
    """
    kg = KnowledgeGraph()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise ValueError(f"{path}: malformed KG line {lineno}: {line!r}")
            kg.add_triple(parts[0].strip(), parts[1].strip(), parts[2].strip())
    return kg


def ground_concepts(text: str, kg: KnowledgeGraph) -> set[int]:
    """Match normalized token spans of the text against KG surface forms.

    Greedy left-to-right scan, longest span first; matched spans are consumed.
    """
    tokens = norm_tokens(text)
    found: set[int] = set()
    i = 0
    while i < len(tokens):
        matched = False
        max_len = min(kg._max_surface_len, len(tokens) - i)
        for span in range(max_len, 0, -1):
            cid = kg._surface_index.get(tuple(tokens[i : i + span]))
            if cid is not None:
                found.add(cid)
                i += span
                matched = True
                break
        if not matched:
            i += 1
    return found


def extract_subgraph(seed_ids, kg: KnowledgeGraph, hops: int = 2,
                     max_nodes: int | None = 300) -> Subgraph:
    """Undirected BFS expansion of the seeds up to `hops`.

    Nodes are the union of BFS frontiers; edges are every KG triple with both
    endpoints inside the node set (original direction preserved).  The optional
    cap truncates by discovery order with seeds always kept.
    """
    seeds = set(seed_ids)
    for cid in seeds:
        if cid < 0 or cid >= kg.num_concepts:
            raise KeyError(f"unknown concept id {cid}")

    discovery = sorted(seeds)
    nodes = set(discovery)
    frontier = deque(discovery)
    for _ in range(hops):
        next_frontier: list[int] = []
        for v in sorted(frontier):
            for u, _idx in kg.adjacency[v]:
                if u not in nodes:
                    nodes.add(u)
                    discovery.append(u)
                    next_frontier.append(u)
        frontier = deque(next_frontier)
        if not frontier:
            break

    if max_nodes is not None and len(discovery) > max_nodes:
        nodes = set(discovery[:max_nodes]) | seeds

    edges = [t for t in kg.triples if t[0] in nodes and t[2] in nodes]
    return Subgraph(nodes=nodes, edges=edges, seeds=seeds)
