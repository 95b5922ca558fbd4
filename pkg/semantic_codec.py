"""
Semantic codec module for the OSSDM simulator
Toy knowledge-graph source, embedding encoder to complex semantic symbols and branched decoder
"""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

import config
from errors import ArgumentError, DimensionError, EncodingError, InfeasibleError
from utils import derive_rng, id_to_triplet, triplet_to_id

logger = logging.getLogger('ossdm.codec')

NODES_PER_TRIPLET = 2


class Triplet(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass
class ToyKgDataset:
    concepts: int
    relations: int
    graphs: List[List[Triplet]]
    train_ids: List[int]
    heldout_ids: List[int]
    seed: int

    @property
    def vocabulary_size(self) -> int:
        """Number of distinct (head, relation, tail) triplets"""
        return self.concepts * self.concepts * self.relations

    @property
    def train_graphs(self) -> List[List[Triplet]]:
        return [self.graphs[i] for i in self.train_ids]

    @property
    def heldout_graphs(self) -> List[List[Triplet]]:
        return [self.graphs[i] for i in self.heldout_ids]

    def triplet_id(self, triplet: Sequence[int]) -> int:
        return triplet_to_id(tuple(triplet), self.concepts, self.relations)


def canonical_order(graph: Sequence[Sequence[int]]) -> List[Triplet]:
    """Sort by head concept, then relation, then tail"""
    return [Triplet(*map(int, t)) for t in sorted(tuple(t) for t in graph)]


def generate_dataset(concepts: int = config.CONCEPT_VOCAB, relations: int = config.RELATION_VOCAB,
                     graph_count: int = config.GRAPH_COUNT, triplets_per_graph: int = config.TRIPLETS_PER_GRAPH,
                     seed: int = config.DATASET_SEED) -> ToyKgDataset:
    """Uniform triplets without within-graph duplicates, 90/10 train/held-out split"""
    if concepts < 2 or relations < 1:
        raise ArgumentError(f"Need at least 2 concepts and 1 relation, got C={concepts}, R={relations}")
    if graph_count < 1 or triplets_per_graph < 1:
        raise ArgumentError("Graph and triplet counts must be positive")
    vocabulary = concepts * concepts * relations
    if triplets_per_graph > vocabulary:
        raise InfeasibleError(f"{triplets_per_graph} distinct triplets requested from a vocabulary of {vocabulary}")

    rng = derive_rng(seed)
    graphs = []
    for _ in range(graph_count):
        ids = rng.choice(vocabulary, size=triplets_per_graph, replace=False)
        graphs.append(canonical_order(id_to_triplet(i, concepts, relations) for i in ids))

    order = rng.permutation(graph_count)
    heldout = int(round(graph_count * config.HELDOUT_FRACTION))
    heldout_ids = sorted(int(i) for i in order[:heldout])
    train_ids = sorted(int(i) for i in order[heldout:])
    logger.debug(f"Generated {graph_count} graphs (C={concepts}, R={relations}, {triplets_per_graph} triplets each)")
    return ToyKgDataset(concepts, relations, graphs, train_ids, heldout_ids, seed)


@dataclass(frozen=True)
class CodecSpec:
    concepts: int = config.CONCEPT_VOCAB
    relations: int = config.RELATION_VOCAB
    latent_width: int = config.LATENT_WIDTH
    symbols_per_node: int = config.SYMBOLS_PER_NODE
    embed_width: int = config.LATENT_WIDTH
    seed: int = config.TRAIN_SEED

    @property
    def symbols_per_triplet(self) -> int:
        return NODES_PER_TRIPLET * self.symbols_per_node


@dataclass
class SemanticSymbolFrame:
    """Complex semantic symbols of one graph with the node slot each came from"""

    symbols: np.ndarray
    node_ids: np.ndarray
    power_normalized: bool = True

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128).ravel()
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64).ravel()
        if self.symbols.shape != self.node_ids.shape:
            raise DimensionError("One node id per symbol is required")

    @property
    def count(self) -> int:
        return self.symbols.size

    def to_iq(self) -> np.ndarray:
        return np.stack([self.symbols.real, self.symbols.imag], axis=-1)

    @classmethod
    def from_iq(cls, iq: np.ndarray, node_ids: np.ndarray, power_normalized: bool = True) -> "SemanticSymbolFrame":
        iq = np.asarray(iq, dtype=np.float64)
        return cls(iq[..., 0] + 1j * iq[..., 1], node_ids, power_normalized)


class DecodedGraph(NamedTuple):
    triplets: List[Triplet]  # one per slot, in canonical slot order
    concept_scores: np.ndarray  # (T, 2, C) softmax scores of head and tail
    relation_scores: np.ndarray  # (T, R)


def normalize_node_power(iq: torch.Tensor) -> torch.Tensor:
    """Scale each node's symbols to mean |s|^2 = 1; iq has shape (..., symbols_per_node, 2)"""
    power = iq.pow(2).sum(dim=-1).mean(dim=-1, keepdim=True).unsqueeze(-1)
    return iq / torch.sqrt(power + 1e-12)


class SemanticEncoder(nn.Module):
    """Concept and relation embeddings -> node latent -> complex symbols per node"""

    def __init__(self, spec: CodecSpec):
        super().__init__()
        self.spec = spec
        self.concept_embed = nn.Embedding(spec.concepts, spec.embed_width)
        self.relation_embed = nn.Embedding(spec.relations, spec.embed_width)
        self.node_ffn = nn.Sequential(
            nn.Linear(2 * spec.embed_width, spec.latent_width),
            nn.Tanh(),
            nn.Linear(spec.latent_width, spec.latent_width),
        )
        self.to_symbols = nn.Linear(spec.latent_width, 2 * spec.symbols_per_node)

    def forward(self, triplets: torch.Tensor) -> torch.Tensor:
        """(T, 3) ids -> (T * 2 * symbols_per_node, 2) normalized I/Q rows"""
        relation = self.relation_embed(triplets[:, 1])
        heads = torch.cat([self.concept_embed(triplets[:, 0]), relation], dim=-1)
        tails = torch.cat([self.concept_embed(triplets[:, 2]), relation], dim=-1)
        nodes = torch.stack([heads, tails], dim=1)
        iq = self.to_symbols(self.node_ffn(nodes)).reshape(len(triplets), NODES_PER_TRIPLET,
                                                           self.spec.symbols_per_node, 2)
        return normalize_node_power(iq).reshape(-1, 2)


class SemanticDecoder(nn.Module):
    """Node decoder over concepts and relation decoder over head/tail latents, run in parallel"""

    def __init__(self, spec: CodecSpec):
        super().__init__()
        self.spec = spec
        self.node_ffn = nn.Sequential(
            nn.Linear(2 * spec.symbols_per_node, spec.latent_width),
            nn.Tanh(),
            nn.Linear(spec.latent_width, spec.latent_width),
            nn.Tanh(),
        )
        self.concept_head = nn.Linear(spec.latent_width, spec.concepts)
        self.relation_head = nn.Linear(2 * spec.latent_width, spec.relations)

    def forward(self, iq: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        width = NODES_PER_TRIPLET * self.spec.symbols_per_node * 2
        if iq.numel() % width:
            raise DimensionError(f"{iq.numel()} I/Q values do not form whole triplet slots of {width}")
        nodes = iq.reshape(-1, NODES_PER_TRIPLET, 2 * self.spec.symbols_per_node)
        latent = self.node_ffn(nodes)
        concept_logits = self.concept_head(latent)
        relation_logits = self.relation_head(latent.reshape(len(latent), -1))
        return concept_logits, relation_logits


class SemanticCodec(nn.Module):
    """Encoder (theta) and decoder (phi) built from one seed, float64"""

    def __init__(self, spec: CodecSpec):
        super().__init__()
        self.spec = spec
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(spec.seed)
            self.encoder = SemanticEncoder(spec)
            self.decoder = SemanticDecoder(spec)
        self.double()


def graph_tensor(graph: Sequence[Sequence[int]], spec: CodecSpec) -> torch.Tensor:
    """Canonically ordered (T, 3) id tensor; rejects ids outside the vocabulary"""
    if len(graph) == 0:
        raise ArgumentError("Graph has no triplets")
    ordered = canonical_order(graph)
    for head, relation, tail in ordered:
        if not (0 <= head < spec.concepts and 0 <= tail < spec.concepts and 0 <= relation < spec.relations):
            raise EncodingError(f"Triplet ({head}, {relation}, {tail}) is outside the vocabulary")
    return torch.tensor(ordered, dtype=torch.long)


def codec_losses(concept_logits: torch.Tensor, relation_logits: torch.Tensor,
                 triplets: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Mean cross-entropy of the concept heads (head and tail nodes) and the relation head"""
    concept_targets = triplets[:, [0, 2]].reshape(-1)
    ce_concept = F.cross_entropy(concept_logits.reshape(-1, concept_logits.shape[-1]), concept_targets)
    ce_relation = F.cross_entropy(relation_logits, triplets[:, 1])
    return ce_concept, ce_relation


def encode_graph(graph: Sequence[Sequence[int]], encoder: SemanticEncoder) -> SemanticSymbolFrame:
    """Symbols per triplet slot: head node then tail node, symbols_per_node each"""
    spec = encoder.spec
    triplets = graph_tensor(graph, spec)
    with torch.no_grad():
        iq = encoder(triplets).numpy()
    node_ids = np.repeat(np.arange(len(triplets) * NODES_PER_TRIPLET), spec.symbols_per_node)
    return SemanticSymbolFrame.from_iq(iq, node_ids, power_normalized=True)


def decode_symbols(frame: SemanticSymbolFrame, decoder: SemanticDecoder) -> DecodedGraph:
    """Argmax decoding of every slot"""
    iq = torch.as_tensor(frame.to_iq(), dtype=torch.float64)
    with torch.no_grad():
        concept_logits, relation_logits = decoder(iq)
        concept_scores = torch.softmax(concept_logits, dim=-1).numpy()
        relation_scores = torch.softmax(relation_logits, dim=-1).numpy()
    concepts = concept_scores.argmax(axis=-1)
    relations = relation_scores.argmax(axis=-1)
    triplets = [Triplet(int(c[0]), int(r), int(c[1])) for c, r in zip(concepts, relations)]
    return DecodedGraph(triplets, concept_scores, relation_scores)
