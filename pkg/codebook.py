"""
Codebook module for the OSSDM simulator
Generates the mask-compliant Walsh codebook from sinewave fragments and serves nearest-neighbor queries
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import config
from errors import (BoundsError, ConfigurationError, DimensionError, GenerationError,
                    OrderingError, StateError)
from metrics import EmissionMask, default_mask, mask_check
from utils import derive_rng, is_power_of_two
from walsh_core import WalshBasis, build_walsh_basis, iwt, wt

logger = logging.getLogger('ossdm.codebook')


@dataclass(frozen=True)
class CodebookConfig:
    block_len: int = config.CODEBOOK_BLOCK_LEN
    num_blocks: int = config.CODEBOOK_NUM_BLOCKS
    num_entries: int = config.CODEBOOK_NUM_ENTRIES
    freq_range: Optional[Tuple[float, float]] = None
    sample_rate: float = config.REFRESH_RATE
    power_variance: Optional[float] = None
    seed: int = config.CODEBOOK_SEED
    power_mean: float = field(init=False)

    def __post_init__(self):
        if not is_power_of_two(self.block_len) or self.block_len < 2:
            raise ConfigurationError(f"Block length must be a power of two >= 2, got {self.block_len}")
        if self.num_blocks < 1 or self.num_entries < 1:
            raise ConfigurationError("Codebook needs at least one block and one entry")
        if self.freq_range is None:
            object.__setattr__(self, "freq_range", default_freq_range(default_mask()))
        f_min, f_max = self.freq_range
        if not 0 <= f_min < f_max <= self.sample_rate / 2:
            raise ConfigurationError(
                f"Frequency range [{f_min}, {f_max}] must satisfy f_min < f_max <= {self.sample_rate / 2}"
            )
        if self.power_variance is None:
            object.__setattr__(self, "power_variance", config.CODEBOOK_VARIANCE_SCALE / self.num_blocks)
        if self.power_variance < 0:
            raise ConfigurationError("Power variance must be non-negative")
        object.__setattr__(self, "freq_range", (float(f_min), float(f_max)))
        object.__setattr__(self, "power_mean", 1.0 / self.num_blocks)

    @property
    def codeword_len(self) -> int:
        return self.block_len * self.num_blocks

    @property
    def walsh_order(self) -> int:
        return int(math.log2(self.block_len))

    @property
    def energy_tolerance(self) -> float:
        """Allowed deviation of a codeword's mean block energy from mu (3 sigma / sqrt(B))"""
        return 3.0 * math.sqrt(self.power_variance) * self.power_mean / math.sqrt(self.num_blocks)


def default_freq_range(mask: EmissionMask, fraction: float = config.CODEBOOK_PASSBAND_FRACTION) -> Tuple[float, float]:
    """Central `fraction` of the mask passband"""
    low, high = mask.passband
    margin = (high - low) * (1.0 - fraction) / 2.0
    return low + margin, high - margin


@dataclass
class Codebook:
    entries: np.ndarray  # (M, B, N) Walsh coefficients
    config: CodebookConfig
    source_freqs: np.ndarray

    def __post_init__(self):
        expected = (self.config.num_blocks, self.config.block_len)
        if self.entries.ndim != 3 or self.entries.shape[1:] != expected:
            raise DimensionError(f"Codebook entries must have shape (M, {expected[0]}, {expected[1]})")
        if len(self.source_freqs) != len(self.entries):
            raise DimensionError("One source frequency per entry is required")

    @property
    def size(self) -> int:
        return len(self.entries)

    def block_pool(self) -> np.ndarray:
        """All M*B blocks as rows of length N"""
        return self.entries.reshape(-1, self.config.block_len)

    def subset(self, indices: Sequence[int]) -> "Codebook":
        indices = np.asarray(indices, dtype=np.int64)
        return Codebook(self.entries[indices], self.config, self.source_freqs[indices])


def _synthesize_entry(index: int, cb_config: CodebookConfig, mask: EmissionMask) -> Tuple[np.ndarray, float, int]:
    """Draw one mask-compliant codeword; returns (blocks, frequency, attempts)"""
    basis = build_walsh_basis(cb_config.walsh_order)
    rng = derive_rng(cb_config.seed, index)
    mu = cb_config.power_mean
    sigma = math.sqrt(cb_config.power_variance)
    samples = np.arange(cb_config.codeword_len)
    f_min, f_max = cb_config.freq_range

    for attempt in range(1, config.CODEBOOK_MAX_ATTEMPTS + 1):
        freq = float(rng.uniform(f_min, f_max))
        eps = rng.normal(0.0, sigma, cb_config.num_blocks) if sigma > 0 else np.zeros(cb_config.num_blocks)

        # continuous global phase across fragments
        wave = np.sin(2.0 * np.pi * freq * samples / cb_config.sample_rate)
        blocks = wt(wave.reshape(cb_config.num_blocks, cb_config.block_len), basis).coefficients
        energies = np.sum(blocks ** 2, axis=1)
        if np.any(energies <= 1e-30):
            continue
        targets = mu * np.maximum(1.0 + eps, config.CODEBOOK_POWER_FLOOR)
        blocks = blocks * np.sqrt(targets / energies)[:, None]

        if abs(float(np.mean(targets)) - mu) > cb_config.energy_tolerance:
            continue
        waveform = iwt(blocks, basis).ravel()
        if not mask_check(waveform, cb_config.sample_rate, mask).passed:
            continue
        return blocks, freq, attempt

    raise GenerationError(
        f"Entry {index}: no mask-compliant codeword in {config.CODEBOOK_MAX_ATTEMPTS} attempts; "
        f"mask is infeasible for frequency range {cb_config.freq_range}"
    )


class CodebookManager:
    """Class to build, query and assemble Walsh codebooks"""

    @classmethod
    def build_codebook(cls, cb_config: CodebookConfig, mask: EmissionMask, workers: int = 1,
                       progress: bool = False) -> Codebook:
        """
        Populate M codewords from sampled sinewaves.

        Each entry is derived from its own seed stream, so the result is
        identical for any worker count.
        """
        low, high = mask.passband
        f_min, f_max = cb_config.freq_range
        if f_min < low or f_max > high:
            raise ConfigurationError(
                f"Frequency range [{f_min:.4g}, {f_max:.4g}] Hz is outside the mask passband [{low:.4g}, {high:.4g}] Hz"
            )

        indices = range(cb_config.num_entries)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunk = max(1, cb_config.num_entries // (workers * 8))
                results = list(pool.map(_synthesize_entry, indices, [cb_config] * len(indices),
                                        [mask] * len(indices), chunksize=chunk))
        else:
            results = [_synthesize_entry(i, cb_config, mask)
                       for i in tqdm(indices, desc="codebook", disable=not progress)]

        attempts = sum(r[2] for r in results)
        rejection = 1.0 - cb_config.num_entries / attempts
        if attempts >= config.CODEBOOK_MAX_ATTEMPTS and rejection > config.CODEBOOK_MAX_REJECTION:
            raise GenerationError(f"Mask rejection rate {rejection:.2%} over {attempts} attempts")

        entries = np.stack([r[0] for r in results])
        freqs = np.array([r[1] for r in results])
        logger.info(
            f"Built codebook N={cb_config.block_len} B={cb_config.num_blocks} M={cb_config.num_entries} "
            f"({attempts} draws, rejection {rejection:.2%})"
        )
        return Codebook(entries, cb_config, freqs)

    @classmethod
    def nearest_codeword(cls, query: np.ndarray, codebook: Codebook, chunk: int = 512) -> Tuple[int, float]:
        """Entry minimizing squared Euclidean distance; ties go to the lowest index"""
        if codebook.size == 0:
            raise StateError("Codebook is empty")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != codebook.entries.shape[1:]:
            raise DimensionError(f"Query shape {query.shape} does not match entry shape {codebook.entries.shape[1:]}")
        best_index, best_distance = -1, np.inf
        for start in range(0, codebook.size, chunk):
            distances = np.sum((codebook.entries[start:start + chunk] - query) ** 2, axis=(1, 2))
            local = int(np.argmin(distances))
            if distances[local] < best_distance:
                best_index, best_distance = start + local, float(distances[local])
        return best_index, best_distance

    @classmethod
    def assemble_waveform(cls, blocks: Sequence[Tuple[int, int]], codebook: Codebook, basis: WalshBasis) -> np.ndarray:
        """Concatenate the IWT of one selected block per segment, in ascending time order"""
        cb_config = codebook.config
        if basis.size != cb_config.block_len:
            raise DimensionError(f"Basis size {basis.size} does not match block length {cb_config.block_len}")
        if len(blocks) != cb_config.num_blocks:
            raise BoundsError(f"Need {cb_config.num_blocks} blocks, got {len(blocks)}")
        block_indices = [b for _, b in blocks]
        if any(b <= a for a, b in zip(block_indices, block_indices[1:])):
            raise OrderingError(f"Block indices must be strictly ascending, got {block_indices}")
        for entry, block in blocks:
            if not 0 <= entry < codebook.size or not 0 <= block < cb_config.num_blocks:
                raise BoundsError(f"Block reference ({entry}, {block}) is out of range")
        selected = np.stack([codebook.entries[entry, block] for entry, block in blocks])
        return iwt(selected, basis).ravel()

    @classmethod
    def codeword_waveform(cls, codebook: Codebook, index: int, basis: Optional[WalshBasis] = None) -> np.ndarray:
        basis = basis or build_walsh_basis(codebook.config.walsh_order)
        return cls.assemble_waveform([(index, b) for b in range(codebook.config.num_blocks)], codebook, basis)

    @classmethod
    def random_assembly(cls, codebook: Codebook, basis: WalshBasis,
                        rng: np.random.Generator) -> Tuple[List[Tuple[int, int]], np.ndarray]:
        """One block per segment from independently drawn entries"""
        entries = rng.integers(0, codebook.size, codebook.config.num_blocks)
        blocks = [(int(e), b) for b, e in enumerate(entries)]
        return blocks, cls.assemble_waveform(blocks, codebook, basis)
