"""
Classic chain module for the OSSDM simulator
Huffman source coding, rate-1/2 regular LDPC with sum-product decoding and Gray 64-QAM
"""
import heapq
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import config
from errors import (ConfigurationError, DecodeError, DimensionError, EncodingError,
                    GenerationError, PaddingError)
from utils import derive_rng

logger = logging.getLogger('ossdm.classic')

Token = Tuple[str, int]
Triplet = Tuple[int, int, int]


# ---------------------------------------------------------------- Huffman

@dataclass
class HuffmanCode:
    """Prefix-free code from the greedy two-smallest merge"""

    codes: Dict[Hashable, str]
    decode_table: Dict[str, Hashable] = field(init=False, repr=False)

    def __post_init__(self):
        self.decode_table = {bits: token for token, bits in self.codes.items()}

    @classmethod
    def from_frequencies(cls, frequencies: Dict[Hashable, float]) -> "HuffmanCode":
        if not frequencies:
            raise EncodingError("Frequency table is empty")
        if any(weight <= 0 for weight in frequencies.values()):
            raise EncodingError("Every token needs a positive frequency")
        if len(frequencies) == 1:
            return cls({next(iter(frequencies)): "0"})

        # counter breaks weight ties in insertion order so the code is deterministic
        counter = itertools.count()
        heap = [(weight, next(counter), token) for token, weight in frequencies.items()]
        heapq.heapify(heap)
        children = {}
        while len(heap) > 1:
            w1, i1, _ = heapq.heappop(heap)
            w2, i2, _ = heapq.heappop(heap)
            node = next(counter)
            children[node] = (i1, i2)
            heapq.heappush(heap, (w1 + w2, node, None))

        leaves = dict(enumerate(frequencies))
        codes = {}
        stack = [(heap[0][1], "")]
        while stack:
            node, prefix = stack.pop()
            if node in children:
                left, right = children[node]
                stack.append((left, prefix + "0"))
                stack.append((right, prefix + "1"))
            else:
                codes[leaves[node]] = prefix
        return cls(codes)

    def lengths(self) -> Dict[Hashable, int]:
        return {token: len(bits) for token, bits in self.codes.items()}

    def mean_length(self, frequencies: Dict[Hashable, float]) -> float:
        total = sum(frequencies.values())
        return sum(frequencies[t] * len(self.codes[t]) for t in frequencies) / total


def huffman_encode(tokens: Iterable[Hashable], code: HuffmanCode) -> np.ndarray:
    parts = []
    for token in tokens:
        try:
            parts.append(code.codes[token])
        except KeyError:
            raise EncodingError(f"Token {token!r} is not in the Huffman table")
    return np.frombuffer("".join(parts).encode("ascii"), dtype=np.uint8) - ord("0")


def huffman_decode(bits: np.ndarray, code: HuffmanCode, count: Optional[int] = None,
                   partial: bool = False) -> List[Hashable]:
    """
    Decode a bit stream.

    With `count` set, decoding stops after that many tokens and trailing bits are
    ignored; otherwise every bit must be consumed. With `partial`, running out of
    bits returns what was decoded instead of raising.
    """
    tokens = []
    prefix = ""
    for bit in np.asarray(bits, dtype=np.uint8):
        prefix += "1" if bit else "0"
        if prefix in code.decode_table:
            tokens.append(code.decode_table[prefix])
            prefix = ""
            if count is not None and len(tokens) == count:
                return tokens
    if (prefix or (count is not None and len(tokens) < count)) and not partial:
        raise DecodeError(f"Bit stream ends inside a codeword after {len(tokens)} tokens")
    return tokens


def triplets_to_tokens(triplets: Sequence[Triplet]) -> List[Token]:
    tokens = []
    for head, relation, tail in triplets:
        tokens.extend([("c", int(head)), ("r", int(relation)), ("c", int(tail))])
    return tokens


def tokens_to_triplets(tokens: Sequence[Token]) -> List[Triplet]:
    """Group tokens in threes; groups with the wrong token kinds are dropped"""
    triplets = []
    for i in range(0, len(tokens) - len(tokens) % 3, 3):
        head, relation, tail = tokens[i:i + 3]
        if head[0] == "c" and relation[0] == "r" and tail[0] == "c":
            triplets.append((head[1], relation[1], tail[1]))
    return triplets


def build_frequency_table(graphs: Iterable[Sequence[Triplet]], concepts: int, relations: int) -> Dict[Token, int]:
    """Token counts over the given graphs with add-one smoothing over the full vocabulary"""
    counts = Counter({("c", c): 1 for c in range(concepts)})
    counts.update({("r", r): 1 for r in range(relations)})
    for graph in graphs:
        counts.update(triplets_to_tokens(graph))
    return dict(counts)


# ---------------------------------------------------------------- LDPC

class LdpcResult(NamedTuple):
    message: np.ndarray
    converged: bool
    iterations: int


@dataclass
class LdpcCode:
    n: int
    k: int
    parity_matrix: np.ndarray  # (n - k, n) uint8
    check_vars: np.ndarray  # (n - k, row weight) variable index per edge
    info_cols: np.ndarray
    parity_cols: np.ndarray
    parity_map: np.ndarray  # (n - k, k): parity bits = parity_map @ message mod 2
    seed: int
    max_iterations: int = config.LDPC_MAX_ITERATIONS

    @property
    def rate(self) -> float:
        return self.k / self.n


def _peg_edges(n: int, m: int, col_weight: int, row_weight: int, rng: np.random.Generator) -> Optional[List[List[int]]]:
    """Progressive edge growth with 4-cycle avoidance; None when the regular degrees cannot be met"""
    check_degree = np.zeros(m, dtype=np.int64)
    var_checks: List[List[int]] = [[] for _ in range(n)]
    check_vars: List[List[int]] = [[] for _ in range(m)]

    for var in rng.permutation(n):
        chosen: List[int] = []
        forbidden = set()
        for _ in range(col_weight):
            open_checks = np.flatnonzero(check_degree < row_weight)
            candidates = [c for c in open_checks if c not in forbidden and c not in chosen]
            if not candidates:
                candidates = [c for c in open_checks if c not in chosen]
            if not candidates:
                return None
            degrees = check_degree[candidates]
            lowest = [c for c, d in zip(candidates, degrees) if d == degrees.min()]
            check = int(lowest[rng.integers(len(lowest))])
            chosen.append(check)
            check_degree[check] += 1
            # checks sharing a variable with `check` would close a 4-cycle
            for other in check_vars[check]:
                forbidden.update(var_checks[other])
            check_vars[check].append(int(var))
        var_checks[var] = chosen
    return check_vars


def _gf2_rref(matrix: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    a = matrix.copy()
    rows, cols = a.shape
    pivots = []
    row = 0
    for col in range(cols):
        if row == rows:
            break
        hits = np.flatnonzero(a[row:, col]) + row
        if hits.size == 0:
            continue
        pivot = hits[0]
        if pivot != row:
            a[[row, pivot]] = a[[pivot, row]]
        others = np.flatnonzero(a[:, col])
        others = others[others != row]
        a[others] ^= a[row]
        pivots.append(col)
        row += 1
    return a, pivots


def build_ldpc_code(n: int = config.LDPC_N, col_weight: int = config.LDPC_COLUMN_WEIGHT,
                    row_weight: int = config.LDPC_ROW_WEIGHT, seed: int = config.LDPC_SEED,
                    max_iterations: int = config.LDPC_MAX_ITERATIONS) -> LdpcCode:
    """Regular (col_weight, row_weight) code; retries with a new seed until H has full row rank"""
    if (n * col_weight) % row_weight:
        raise ConfigurationError(f"n={n} cannot carry a regular ({col_weight},{row_weight}) graph")
    m = n * col_weight // row_weight
    k = n - m

    for attempt in range(config.LDPC_CONSTRUCTION_RETRIES):
        attempt_seed = seed + attempt
        edges = _peg_edges(n, m, col_weight, row_weight, derive_rng(attempt_seed))
        if edges is None:
            logger.warning(f"LDPC construction with seed {attempt_seed} could not close the degrees, retrying")
            continue
        h = np.zeros((m, n), dtype=np.uint8)
        for check, variables in enumerate(edges):
            h[check, variables] = 1
        rref, pivots = _gf2_rref(h)
        if len(pivots) < m:
            logger.warning(f"LDPC parity matrix from seed {attempt_seed} has rank {len(pivots)} < {m}, retrying")
            continue
        parity_cols = np.array(pivots)
        info_cols = np.setdiff1d(np.arange(n), parity_cols)
        check_vars = np.array([sorted(v) for v in edges], dtype=np.int64)
        logger.info(f"Built ({col_weight},{row_weight}) LDPC code n={n} k={k} from seed {attempt_seed}")
        return LdpcCode(n, k, h, check_vars, info_cols, parity_cols, rref[:, info_cols].astype(np.int64),
                        attempt_seed, max_iterations)
    raise GenerationError(f"No full-rank LDPC code after {config.LDPC_CONSTRUCTION_RETRIES} seeds")


def syndrome(code: LdpcCode, codeword: np.ndarray) -> np.ndarray:
    return np.asarray(codeword, dtype=np.int64)[code.check_vars].sum(axis=1) % 2


def ldpc_encode(message: np.ndarray, code: LdpcCode) -> np.ndarray:
    message = np.asarray(message, dtype=np.int64)
    if message.shape != (code.k,):
        raise DimensionError(f"LDPC message must have {code.k} bits, got {message.shape}")
    codeword = np.zeros(code.n, dtype=np.uint8)
    codeword[code.info_cols] = message
    codeword[code.parity_cols] = (code.parity_map @ message) % 2
    return codeword


def ldpc_decode(llrs: np.ndarray, code: LdpcCode) -> LdpcResult:
    """Sum-product belief propagation; LLR = log P(0)/P(1)"""
    llrs = np.clip(np.asarray(llrs, dtype=np.float64), -config.LLR_CLIP, config.LLR_CLIP)
    if llrs.shape != (code.n,):
        raise DimensionError(f"LDPC decoder needs {code.n} LLRs, got {llrs.shape}")

    edges = code.check_vars
    flat = edges.ravel()
    to_check = llrs[edges]
    hard = (llrs < 0).astype(np.uint8)
    for iteration in range(1, code.max_iterations + 1):
        t = np.clip(np.tanh(to_check / 2.0), -1.0 + 1e-15, 1.0 - 1e-15)
        # leave-one-out products from prefix and suffix cumulative products
        ones = np.ones((t.shape[0], 1))
        prefix = np.cumprod(np.hstack([ones, t[:, :-1]]), axis=1)
        suffix = np.cumprod(np.hstack([ones, t[:, :0:-1]]), axis=1)[:, ::-1]
        to_var = np.clip(2.0 * np.arctanh(np.clip(prefix * suffix, -1.0 + 1e-15, 1.0 - 1e-15)),
                         -config.LLR_CLIP, config.LLR_CLIP)

        total = llrs + np.bincount(flat, weights=to_var.ravel(), minlength=code.n)
        to_check = total[edges] - to_var
        hard = (total < 0).astype(np.uint8)
        if not syndrome(code, hard).any():
            return LdpcResult(hard[code.info_cols], True, iteration)
    return LdpcResult(hard[code.info_cols], False, code.max_iterations)


# ---------------------------------------------------------------- 64-QAM

def _gray_levels(bits_per_axis: int) -> np.ndarray:
    """Amplitude of each Gray-coded axis label"""
    size = 2 ** bits_per_axis
    labels = np.arange(size)
    binary = labels.copy()
    shift = labels >> 1
    while shift.any():
        binary ^= shift
        shift >>= 1
    return 2.0 * binary - (size - 1)


def qam64_constellation() -> np.ndarray:
    """Point for each 6-bit label (first 3 bits on I, last 3 on Q), unit mean energy"""
    levels = _gray_levels(3)
    labels = np.arange(64)
    points = levels[labels >> 3] + 1j * levels[labels & 7]
    return points / np.sqrt(42.0)


def qam64_map(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % config.QAM_BITS:
        raise PaddingError(f"Bit count {bits.size} is not a multiple of {config.QAM_BITS}")
    weights = 1 << np.arange(config.QAM_BITS - 1, -1, -1)
    return qam64_constellation()[bits.reshape(-1, config.QAM_BITS) @ weights]


def qam64_soft_demap(received: np.ndarray, noise_var) -> np.ndarray:
    """Max-log LLRs (log P0/P1); noise_var is the complex noise variance, scalar or per symbol"""
    received = np.asarray(received, dtype=np.complex128).ravel()
    nv = np.maximum(np.broadcast_to(np.asarray(noise_var, dtype=np.float64), received.shape), 1e-12)
    points = qam64_constellation()
    distances = np.abs(received[:, None] - points[None, :]) ** 2 / nv[:, None]
    labels = np.arange(64)
    llrs = np.empty((received.size, config.QAM_BITS))
    for bit in range(config.QAM_BITS):
        is_one = ((labels >> (config.QAM_BITS - 1 - bit)) & 1).astype(bool)
        llrs[:, bit] = distances[:, is_one].min(axis=1) - distances[:, ~is_one].min(axis=1)
    return np.clip(llrs, -config.LLR_CLIP, config.LLR_CLIP).ravel()


def qam64_hard_demap(received: np.ndarray) -> np.ndarray:
    return (qam64_soft_demap(received, 1.0) < 0).astype(np.uint8)


# ---------------------------------------------------------------- chain

@dataclass
class EncodedGraph:
    symbols: np.ndarray
    payload: np.ndarray  # Huffman bits before padding
    coded_bits: int
    token_count: int


class ClassicChain:
    """Triplets -> Huffman -> LDPC blocks -> 64-QAM and back"""

    def __init__(self, code: HuffmanCode, ldpc: LdpcCode):
        self.code = code
        self.ldpc = ldpc

    def encode(self, triplets: Sequence[Triplet]) -> EncodedGraph:
        tokens = triplets_to_tokens(triplets)
        payload = huffman_encode(tokens, self.code)
        blocks = max(1, -(-payload.size // self.ldpc.k))
        message = np.zeros(blocks * self.ldpc.k, dtype=np.uint8)
        message[:payload.size] = payload
        coded = np.concatenate([ldpc_encode(block, self.ldpc) for block in message.reshape(blocks, self.ldpc.k)])
        pad = -coded.size % config.QAM_BITS
        symbols = qam64_map(np.concatenate([coded, np.zeros(pad, dtype=np.uint8)]))
        return EncodedGraph(symbols, payload, coded.size, len(tokens))

    def decode(self, llrs: np.ndarray, encoded: EncodedGraph) -> Tuple[List[Triplet], np.ndarray, np.ndarray]:
        """Returns (triplets, decoded payload bits, pre-decoding hard payload bits)"""
        llrs = np.asarray(llrs)[:encoded.coded_bits].reshape(-1, self.ldpc.n)
        decoded, hard = [], []
        for block in llrs:
            decoded.append(ldpc_decode(block, self.ldpc).message)
            hard.append((block[self.ldpc.info_cols] < 0).astype(np.uint8))
        bits = np.concatenate(decoded)[:encoded.payload.size]
        raw = np.concatenate(hard)[:encoded.payload.size]
        tokens = huffman_decode(bits, self.code, count=encoded.token_count, partial=True)
        return tokens_to_triplets(tokens), bits, raw
