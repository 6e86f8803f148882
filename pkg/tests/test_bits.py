import numpy as np
import pytest

from hashlab import bits
from hashlab.bits import BinaryCode, hamming, pack, to_real, truncate, unpack


def oracle_hamming(a: BinaryCode, b: BinaryCode) -> int:
    # Independent per-bit counting path, no packed arithmetic.
    return sum(a.bit(i) != b.bit(i) for i in range(a.length))


def random_code(rng, length):
    return pack(rng.integers(0, 2, size=length))


class TestBinaryCode:
    def test_length_bounds(self):
        with pytest.raises(ValueError):
            BinaryCode.zeros(0)
        with pytest.raises(ValueError):
            BinaryCode.zeros(513)
        assert BinaryCode.zeros(1).length == 1
        assert BinaryCode.zeros(512).length == 512

    def test_pack_rejects_513_bits(self):
        with pytest.raises(ValueError):
            pack(np.zeros(513, dtype=np.uint8))

    def test_padding_is_canonical(self):
        # Construction from raw bytes must zero the bits beyond the length.
        c = BinaryCode([0xFF], 3)
        assert list(unpack(c)) == [1, 1, 1]
        assert c.packed[0] == 0b11100000
        assert c == pack([1, 1, 1])

    def test_equality_is_over_first_length_bits(self):
        a = BinaryCode([0b10100000], 3)
        b = BinaryCode([0b10111111], 3)
        assert a == b
        assert hash(a) == hash(b)
        assert BinaryCode([0b10100000], 3) != BinaryCode([0b10100000], 4)

    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            length = int(rng.integers(1, 513))
            b = rng.integers(0, 2, size=length)
            assert np.array_equal(unpack(pack(b)), b)

    def test_bit_indexing_msb_first(self):
        c = BinaryCode([0b10000001, 0b01000000], 16)
        assert c.bit(0) == 1
        assert c.bit(7) == 1
        assert c.bit(9) == 1
        assert sum(c.bit(i) for i in range(16)) == 3

    def test_complement(self):
        rng = np.random.default_rng(3)
        c = random_code(rng, 37)
        assert np.array_equal(unpack(c.complement()), 1 - unpack(c))


class TestHamming:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(5)
        c = random_code(rng, 512)
        assert hamming(c, c) == 0

    def test_complement_512_is_512(self):
        rng = np.random.default_rng(6)
        c = random_code(rng, 512)
        assert hamming(c, c.complement()) == 512

    def test_matches_per_bit_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            length = int(rng.integers(1, 513))
            a, b = random_code(rng, length), random_code(rng, length)
            assert hamming(a, b) == oracle_hamming(a, b)

    def test_metric_properties_on_random_triples(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            length = int(rng.integers(2, 513))
            a, b, c = (random_code(rng, length) for _ in range(3))
            assert hamming(a, b) == hamming(b, a)
            assert hamming(a, b) >= 0
            assert (hamming(a, b) == 0) == (a == b)
            assert hamming(a, c) <= hamming(a, b) + hamming(b, c)

    def test_length_mismatch_is_an_error(self):
        with pytest.raises(ValueError):
            hamming(BinaryCode.zeros(8), BinaryCode.zeros(9))


class TestTruncate:
    def test_full_length_is_identity(self):
        rng = np.random.default_rng(9)
        c = random_code(rng, 100)
        assert truncate(c, 100) == c

    def test_prefix_semantics_vs_bit_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            length = int(rng.integers(2, 513))
            k = int(rng.integers(1, length + 1))
            c = random_code(rng, length)
            t = truncate(c, k)
            assert t.length == k
            assert all(t.bit(i) == c.bit(i) for i in range(k))

    def test_composition(self):
        rng = np.random.default_rng(12)
        c = random_code(rng, 256)
        for a, b in [(200, 64), (256, 256), (17, 3)]:
            assert truncate(truncate(c, a), b) == truncate(c, b)

    def test_bounds(self):
        c = BinaryCode.zeros(64)
        with pytest.raises(ValueError):
            truncate(c, 0)
        with pytest.raises(ValueError):
            truncate(c, 65)


class TestToReal:
    def test_mappings(self):
        c = pack([1, 0, 1])
        assert list(to_real(c, bits.ZERO_ONE)) == [1.0, 0.0, 1.0]
        assert list(to_real(c, bits.PLUS_MINUS_ONE)) == [1.0, -1.0, 1.0]

    def test_sign_threshold_round_trip(self):
        # value > 0 -> 1, value <= 0 -> 0 recovers the code under +/-1 mapping
        rng = np.random.default_rng(13)
        c = random_code(rng, 129)
        x = to_real(c, bits.PLUS_MINUS_ONE)
        assert pack((x > 0).astype(np.uint8)) == c

    def test_unknown_mapping(self):
        with pytest.raises(ValueError):
            to_real(pack([1]), "spin")


class TestRowHelpers:
    def test_pack_unpack_rows_round_trip(self):
        rng = np.random.default_rng(14)
        m = rng.integers(0, 2, size=(50, 77)).astype(np.uint8)
        assert np.array_equal(bits.unpack_rows(bits.pack_rows(m), 77), m)

    def test_truncate_rows_matches_scalar_truncate(self):
        rng = np.random.default_rng(15)
        m = rng.integers(0, 2, size=(20, 130)).astype(np.uint8)
        packed = bits.pack_rows(m)
        for k in (1, 8, 13, 130):
            rows = bits.truncate_rows(packed, 130, k)
            for i in range(20):
                assert BinaryCode(rows[i], k) == truncate(BinaryCode(packed[i], 130), k)

    def test_hamming_to_all_matches_scalar(self):
        rng = np.random.default_rng(16)
        m = rng.integers(0, 2, size=(40, 96)).astype(np.uint8)
        packed = bits.pack_rows(m)
        d = bits.hamming_to_all(packed[0], packed)
        for i in range(40):
            assert d[i] == hamming(BinaryCode(packed[0], 96), BinaryCode(packed[i], 96))
