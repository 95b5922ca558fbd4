import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from classic_chain import (ClassicChain, HuffmanCode, build_frequency_table, build_ldpc_code, huffman_decode,
                           huffman_encode, ldpc_decode, ldpc_encode, qam64_constellation, qam64_hard_demap,
                           qam64_map, qam64_soft_demap, syndrome, tokens_to_triplets, triplets_to_tokens)
from errors import ConfigurationError, DecodeError, DimensionError, EncodingError, PaddingError


@pytest.fixture(scope="module")
def ldpc():
    return build_ldpc_code()


@pytest.fixture(scope="module")
def chain(ldpc, tiny_dataset):
    table = build_frequency_table(tiny_dataset.train_graphs, tiny_dataset.concepts, tiny_dataset.relations)
    return ClassicChain(HuffmanCode.from_frequencies(table), ldpc)


class TestHuffman:
    FREQUENCIES = {"a": 45, "b": 13, "c": 12, "d": 16, "e": 9, "f": 5}

    def test_prefix_free(self):
        codes = list(HuffmanCode.from_frequencies(self.FREQUENCIES).codes.values())
        for first in codes:
            for second in codes:
                assert first == second or not second.startswith(first)

    def test_kraft_equality_and_optimal_length(self):
        code = HuffmanCode.from_frequencies(self.FREQUENCIES)
        assert sum(2.0 ** -length for length in code.lengths().values()) == pytest.approx(1.0)
        total = sum(self.FREQUENCIES.values())
        entropy = -sum(w / total * math.log2(w / total) for w in self.FREQUENCIES.values())
        assert entropy <= code.mean_length(self.FREQUENCIES) < entropy + 1
        # textbook optimum for this table
        assert code.mean_length(self.FREQUENCIES) == pytest.approx(2.24)

    def test_deterministic(self):
        assert HuffmanCode.from_frequencies(self.FREQUENCIES).codes == HuffmanCode.from_frequencies(self.FREQUENCIES).codes

    def test_roundtrip(self):
        code = HuffmanCode.from_frequencies(self.FREQUENCIES)
        tokens = list("abacabadfe")
        assert huffman_decode(huffman_encode(tokens, code), code) == tokens

    def test_single_symbol_table(self):
        code = HuffmanCode.from_frequencies({"x": 3})
        assert huffman_decode(huffman_encode(["x", "x"], code), code) == ["x", "x"]

    def test_invalid_tables_and_tokens(self):
        with pytest.raises(EncodingError):
            HuffmanCode.from_frequencies({})
        with pytest.raises(EncodingError):
            HuffmanCode.from_frequencies({"a": 0})
        with pytest.raises(EncodingError):
            huffman_encode(["z"], HuffmanCode.from_frequencies(self.FREQUENCIES))

    def test_truncated_stream(self):
        code = HuffmanCode.from_frequencies(self.FREQUENCIES)
        bits = huffman_encode(list("bcd"), code)
        with pytest.raises(DecodeError):
            huffman_decode(bits[:-1], code)
        assert huffman_decode(bits[:-1], code, partial=True) == ["b", "c"]
        assert huffman_decode(np.concatenate([bits, [0, 1, 1]]), code, count=3) == list("bcd")


def test_tokens_roundtrip_triplets():
    triplets = [(0, 1, 2), (3, 0, 3)]
    tokens = triplets_to_tokens(triplets)
    assert tokens[:3] == [("c", 0), ("r", 1), ("c", 2)]
    assert tokens_to_triplets(tokens) == triplets
    assert tokens_to_triplets(tokens[1:]) == []


def test_frequency_table_covers_vocabulary(tiny_dataset):
    table = build_frequency_table(tiny_dataset.train_graphs, 4, 2)
    assert set(table) == {("c", c) for c in range(4)} | {("r", r) for r in range(2)}
    assert min(table.values()) >= 1


class TestLdpc:
    def test_structure(self, ldpc):
        assert (ldpc.n, ldpc.k) == (1024, 512)
        assert ldpc.rate == 0.5
        assert_array_equal(ldpc.parity_matrix.sum(axis=0), 3)
        assert_array_equal(ldpc.parity_matrix.sum(axis=1), 6)

    def test_encoded_words_satisfy_parity(self, ldpc, rng):
        for _ in range(5):
            codeword = ldpc_encode(rng.integers(0, 2, ldpc.k), ldpc)
            assert not syndrome(ldpc, codeword).any()

    def test_noiseless_decode_in_one_iteration(self, ldpc, rng):
        message = rng.integers(0, 2, ldpc.k)
        codeword = ldpc_encode(message, ldpc)
        llrs = np.where(codeword == 0, np.inf, -np.inf)
        result = ldpc_decode(llrs, ldpc)
        assert result.converged and result.iterations == 1
        assert_array_equal(result.message, message)

    def test_decoding_lowers_bit_errors(self, ldpc, rng):
        sigma = 0.8
        raw_errors, decoded_errors = 0, 0
        for _ in range(10):
            message = rng.integers(0, 2, ldpc.k)
            codeword = ldpc_encode(message, ldpc)
            received = 1.0 - 2.0 * codeword + sigma * rng.standard_normal(ldpc.n)
            llrs = 2.0 * received / sigma ** 2
            raw_errors += np.count_nonzero((llrs[ldpc.info_cols] < 0) != message)
            decoded_errors += np.count_nonzero(ldpc_decode(llrs, ldpc).message != message)
        assert decoded_errors < raw_errors

    def test_same_seed_same_code(self, ldpc):
        assert_array_equal(build_ldpc_code(seed=ldpc.seed).parity_matrix, ldpc.parity_matrix)

    def test_validation(self, ldpc):
        with pytest.raises(ConfigurationError):
            build_ldpc_code(n=1001)
        with pytest.raises(DimensionError):
            ldpc_encode(np.zeros(10), ldpc)
        with pytest.raises(DimensionError):
            ldpc_decode(np.zeros(10), ldpc)


class TestQam:
    def test_unit_energy(self):
        assert np.mean(np.abs(qam64_constellation()) ** 2) == pytest.approx(1.0)

    def test_gray_neighbors_differ_in_one_bit(self):
        points = qam64_constellation()
        step = 2 / np.sqrt(42)
        for a in range(64):
            for b in range(64):
                if abs(abs(points[a] - points[b]) - step) < 1e-9:
                    assert bin(a ^ b).count("1") == 1

    def test_hard_roundtrip(self, rng):
        bits = rng.integers(0, 2, 600).astype(np.uint8)
        assert_array_equal(qam64_hard_demap(qam64_map(bits)), bits)

    def test_soft_signs_and_clipping(self, rng):
        bits = rng.integers(0, 2, 120)
        llrs = qam64_soft_demap(qam64_map(bits), 1e-6)
        assert_array_equal(llrs < 0, bits == 1)
        assert np.abs(llrs).max() <= 30.0

    def test_per_symbol_noise_variance(self, rng):
        bits = rng.integers(0, 2, 60)
        symbols = qam64_map(bits)
        scalar = qam64_soft_demap(symbols + 0.01, 0.5)
        vector = qam64_soft_demap(symbols + 0.01, np.full(10, 0.5))
        assert_array_equal(scalar, vector)

    def test_padding(self):
        with pytest.raises(PaddingError):
            qam64_map(np.zeros(7))


class TestChain:
    def test_ideal_channel_reproduces_triplets(self, chain, tiny_dataset):
        for graph in tiny_dataset.graphs[:5]:
            encoded = chain.encode(graph)
            triplets, bits, raw = chain.decode(qam64_soft_demap(encoded.symbols, 1e-4), encoded)
            assert triplets == [tuple(t) for t in graph]
            assert_array_equal(bits, encoded.payload)
            assert_array_equal(raw, encoded.payload)

    def test_symbol_count(self, chain, tiny_dataset):
        encoded = chain.encode(tiny_dataset.graphs[0])
        assert encoded.coded_bits == 1024
        assert encoded.symbols.size == math.ceil(1024 / 6)

    @pytest.mark.slow
    def test_block_error_rate_is_monotone_in_snr(self, chain, tiny_dataset):
        blocks = 200
        rates = []
        rng = np.random.default_rng(99)
        for snr_db in range(0, 13, 2):
            failures = 0
            for index in range(blocks):
                graph = tiny_dataset.graphs[index % len(tiny_dataset.graphs)]
                encoded = chain.encode(graph)
                noise_var = 10.0 ** (-snr_db / 10.0)
                noise = (rng.standard_normal(encoded.symbols.size) + 1j * rng.standard_normal(encoded.symbols.size))
                received = encoded.symbols + noise * np.sqrt(noise_var / 2)
                triplets, _, _ = chain.decode(qam64_soft_demap(received, noise_var), encoded)
                failures += triplets != [tuple(t) for t in graph]
            rates.append(failures / blocks)
        for low, high in zip(rates, rates[1:]):
            slack = 1.96 * np.sqrt(max(low * (1 - low), 1.0 / blocks) / blocks)
            assert high <= low + slack
        assert rates[-1] <= rates[0]
