"""
Utility functions shared across the OSSDM simulator
"""
import logging
import math
from typing import Tuple

import numpy as np

logger = logging.getLogger('ossdm.utils')


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, key...) - used for per-entry and per-trial streams"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit integer seed derived from (seed, key...)"""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float, floor: float = 1e-30) -> float:
    return 10.0 * math.log10(max(value, floor))


def is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def mean_power(signal: np.ndarray) -> float:
    """Mean |x|^2 per sample"""
    signal = np.asarray(signal)
    if signal.size == 0:
        return 0.0
    return float(np.mean(np.abs(signal) ** 2))


def triplet_to_id(triplet: Tuple[int, int, int], concepts: int, relations: int) -> int:
    head, relation, tail = triplet
    return (head * relations + relation) * concepts + tail


def id_to_triplet(triplet_id: int, concepts: int, relations: int) -> Tuple[int, int, int]:
    rest, tail = divmod(int(triplet_id), concepts)
    head, relation = divmod(rest, relations)
    return head, relation, tail
