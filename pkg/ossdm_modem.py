"""
OSSDM modem module for the OSSDM simulator
Semantic symbols to Walsh-domain waveforms and back, plus the codebook-driven OSDM baseline
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

import numpy as np

import config
from codebook import Codebook, CodebookManager
from errors import CapacityError, ConfigurationError, DimensionError, FramingError
from semantic_codec import SemanticSymbolFrame
from utils import derive_rng
from walsh_core import WalshBasis, iwt, wt

logger = logging.getLogger('ossdm.modem')


@dataclass(frozen=True)
class OssdmConfig:
    walsh_order: int = 6
    refresh_rate: float = config.REFRESH_RATE
    symbols_per_node: int = config.SYMBOLS_PER_NODE
    tx_power_per_symbol: float = config.TX_POWER_PER_SYMBOL
    hard_projection: bool = False

    def __post_init__(self):
        if self.refresh_rate <= 0:
            raise ConfigurationError(f"Refresh rate must be positive, got {self.refresh_rate}")
        if self.tx_power_per_symbol <= 0:
            raise ConfigurationError(f"Transmit power per symbol must be positive, got {self.tx_power_per_symbol}")

    @property
    def block_len(self) -> int:
        return 2 ** self.walsh_order

    @property
    def frame_duration(self) -> float:
        """Delta T = N / F_refresh"""
        return self.block_len / self.refresh_rate

    def duration_for(self, symbol_count: int) -> float:
        return symbol_count * self.frame_duration


class SymbolMapper(Protocol):
    walsh_order: int

    def to_coefficients(self, iq: np.ndarray) -> np.ndarray:
        ...

    def to_symbols(self, coefficients: np.ndarray) -> np.ndarray:
        ...


@dataclass
class IdentityMapper:
    """I into coefficient 0 and Q into coefficient 1; the inverse reads them back"""

    walsh_order: int

    def to_coefficients(self, iq: np.ndarray) -> np.ndarray:
        iq = np.asarray(iq, dtype=np.float64)
        coefficients = np.zeros((len(iq), 2 ** self.walsh_order))
        coefficients[:, :2] = iq
        return coefficients

    def to_symbols(self, coefficients: np.ndarray) -> np.ndarray:
        return np.asarray(coefficients, dtype=np.float64)[:, :2].copy()


def project_energy(coefficients: np.ndarray, energy: float) -> np.ndarray:
    """Rows rescaled to the given energy; all-zero rows become the sequency-0 function"""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    norms = np.linalg.norm(coefficients, axis=-1, keepdims=True)
    fallback = np.zeros_like(coefficients)
    fallback[..., 0] = 1.0
    unit = np.where(norms > 0, coefficients / np.where(norms > 0, norms, 1.0), fallback)
    return unit * math.sqrt(energy)


def nearest_blocks(coefficients: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Replace every row by its nearest block from the codebook's block pool"""
    pool = codebook.block_pool()
    if coefficients.shape[-1] != pool.shape[-1]:
        raise DimensionError(f"Coefficient width {coefficients.shape[-1]} does not match block length {pool.shape[-1]}")
    scores = np.sum(pool ** 2, axis=1)[None, :] - 2.0 * coefficients @ pool.T
    return pool[np.argmin(scores, axis=1)]


def _check_orders(mapper: SymbolMapper, basis: WalshBasis, ossdm_config: OssdmConfig) -> None:
    if mapper.walsh_order != ossdm_config.walsh_order or basis.order != ossdm_config.walsh_order:
        raise ConfigurationError(
            f"Walsh order mismatch: mapper {mapper.walsh_order}, basis {basis.order}, config {ossdm_config.walsh_order}"
        )


def ossdm_modulate(frame: SemanticSymbolFrame, mapper: SymbolMapper, basis: WalshBasis, ossdm_config: OssdmConfig,
                   codebook: Optional[Codebook] = None) -> np.ndarray:
    """
    One length-N segment per semantic symbol.

    The mapper output is projected onto the power sphere so every segment
    carries exactly tx_power_per_symbol. With hard_projection the projected
    vector is snapped to its nearest codebook block and projected again.
    """
    _check_orders(mapper, basis, ossdm_config)
    if frame.count == 0:
        return np.zeros(0)
    coefficients = project_energy(mapper.to_coefficients(frame.to_iq()), ossdm_config.tx_power_per_symbol)
    if ossdm_config.hard_projection:
        if codebook is None:
            raise ConfigurationError("Hard projection needs a codebook")
        coefficients = project_energy(nearest_blocks(coefficients, codebook), ossdm_config.tx_power_per_symbol)
    return iwt(coefficients, basis).reshape(-1)


def ossdm_demodulate(received: np.ndarray, mapper: SymbolMapper, basis: WalshBasis, ossdm_config: OssdmConfig,
                     node_ids: Optional[np.ndarray] = None) -> SemanticSymbolFrame:
    _check_orders(mapper, basis, ossdm_config)
    received = np.asarray(received, dtype=np.float64).ravel()
    if received.size % basis.size:
        raise FramingError(f"Received {received.size} samples, not a multiple of N={basis.size}")
    coefficients = wt(received.reshape(-1, basis.size), basis).coefficients
    iq = mapper.to_symbols(coefficients)
    if node_ids is None:
        node_ids = np.arange(len(iq))
    return SemanticSymbolFrame.from_iq(iq, node_ids, power_normalized=False)


# ---------------------------------------------------------------- OSDM

@dataclass
class OsdmAssignment:
    """Injective map from triplet vocabulary ids to codebook entry indices"""

    codebook_indices: np.ndarray
    seed: int
    _assigned: Optional[Codebook] = field(default=None, init=False, repr=False)

    @classmethod
    def build(cls, vocabulary_size: int, codebook_size: int, seed: int) -> "OsdmAssignment":
        if vocabulary_size > codebook_size:
            raise CapacityError(f"Vocabulary of {vocabulary_size} triplets exceeds the {codebook_size} codebook entries")
        indices = derive_rng(seed).permutation(codebook_size)[:vocabulary_size]
        return cls(indices.astype(np.int64), seed)

    @property
    def vocabulary_size(self) -> int:
        return len(self.codebook_indices)

    def assigned(self, codebook: Codebook) -> Codebook:
        """Codebook restricted to assigned entries, row v holding triplet id v"""
        if self._assigned is None or self._assigned.config != codebook.config:
            self._assigned = codebook.subset(self.codebook_indices)
        return self._assigned


def osdm_encode(triplet_id: int, assignment: OsdmAssignment, codebook: Codebook) -> np.ndarray:
    if not 0 <= triplet_id < assignment.vocabulary_size:
        raise CapacityError(f"Triplet id {triplet_id} is outside the assigned vocabulary")
    return codebook.entries[assignment.codebook_indices[triplet_id]]


def osdm_modulate(triplet_ids: Sequence[int], assignment: OsdmAssignment, codebook: Codebook,
                  basis: WalshBasis) -> np.ndarray:
    """Concatenated codeword waveforms, one per triplet"""
    blocks = np.concatenate([osdm_encode(t, assignment, codebook) for t in triplet_ids])
    return iwt(blocks, basis).reshape(-1)


def osdm_decode(received: np.ndarray, assignment: OsdmAssignment, codebook: Codebook, basis: WalshBasis) -> List[int]:
    """WT per block, then nearest assigned codeword per triplet; always returns valid ids"""
    received = np.asarray(received, dtype=np.float64).ravel()
    length = codebook.config.codeword_len
    if received.size % length:
        raise FramingError(f"Received {received.size} samples, not a multiple of the codeword length {length}")
    coefficients = wt(received.reshape(-1, codebook.config.num_blocks, codebook.config.block_len), basis).coefficients
    assigned = assignment.assigned(codebook)
    return [CodebookManager.nearest_codeword(query, assigned)[0] for query in coefficients]
