import random

import pytest
from hypothesis import given, strategies as st

from privmas.errors import ConfigurationError, EncodingError, ProtocolError
from privmas.paillier import (Ciphertext, FixedPointCodec, decode_real, decrypt, encode_real, encrypt,
                              hom_add, hom_scale, is_probable_prime, keygen)


def test_keygen_deterministic_and_structured():
    a, b = keygen(512, 7), keygen(512, 7)
    assert a.public.n == b.public.n
    assert a.public.n.bit_length() == 512
    assert keygen(512, 8).public.n != a.public.n


@pytest.mark.parametrize("bits", [256, 511])
def test_keygen_rejects_bad_sizes(bits):
    with pytest.raises(ConfigurationError):
        keygen(bits, 0)


def test_primality_against_sieve():
    rng = random.Random(0)
    limit = 5000
    sieve = [True] * limit
    sieve[0] = sieve[1] = False
    for p in range(2, limit):
        if sieve[p]:
            for q in range(p * p, limit, p):
                sieve[q] = False
    assert all(is_probable_prime(n, rng) == sieve[n] for n in range(limit))


def test_roundtrip_boundaries(keys512):
    kp = keys512[0]
    rng = random.Random(1)
    n = kp.public.n
    for m in (0, 1, n // 2, n // 2 + 1, n - 1):
        assert decrypt(kp.secret, encrypt(kp.public, m, rng)) == m


def test_plaintext_range_enforced(keys512):
    pk = keys512[0].public
    with pytest.raises(EncodingError):
        encrypt(pk, pk.n, random.Random(0))
    with pytest.raises(EncodingError):
        encrypt(pk, -1, random.Random(0))


def test_probabilistic_encryption(keys512):
    kp = keys512[0]
    rng = random.Random(2)
    seen = set()
    for _ in range(1000):
        c = encrypt(kp.public, 42, rng)
        seen.add(c.value)
    assert len(seen) == 1000
    assert decrypt(kp.secret, encrypt(kp.public, 42, rng)) == 42


def test_add_examples(keys512):
    kp = keys512[0]
    pk, rng = kp.public, random.Random(3)
    assert decrypt(kp.secret, hom_add(pk, encrypt(pk, 3, rng), encrypt(pk, 4, rng))) == 7
    assert decrypt(kp.secret, hom_add(pk, encrypt(pk, pk.n - 1, rng), encrypt(pk, 2, rng))) == 1


def test_scale_examples(keys512):
    kp = keys512[0]
    pk, rng = kp.public, random.Random(4)
    c = encrypt(pk, 12345, rng)
    assert decrypt(kp.secret, hom_scale(pk, c, 1)) == 12345
    assert decrypt(kp.secret, hom_scale(pk, c, 0)) == 0


def test_key_mismatch(keys512):
    a, b = keys512
    rng = random.Random(5)
    ca, cb = encrypt(a.public, 1, rng), encrypt(b.public, 1, rng)
    with pytest.raises(ProtocolError):
        hom_add(a.public, ca, cb)
    with pytest.raises(ProtocolError):
        hom_scale(b.public, ca, 2)
    with pytest.raises(ProtocolError):
        decrypt(b.secret, ca)


def test_wire_format(keys512):
    kp = keys512[0]
    c = encrypt(kp.public, 99, random.Random(6))
    raw = c.to_bytes(kp.public)
    assert raw[:8] == kp.public.fingerprint
    assert len(raw) == 8 + kp.public.ciphertext_bytes
    assert Ciphertext.from_bytes(raw) == c


@given(st.data())
def test_homomorphism_matches_plaintext_oracle(keys512, data):
    kp = keys512[data.draw(st.integers(0, 1))]
    n = kp.public.n
    m1 = data.draw(st.integers(0, n - 1))
    m2 = data.draw(st.integers(0, n - 1))
    rng = random.Random(data.draw(st.integers(0, 2**32)))
    c1, c2 = encrypt(kp.public, m1, rng), encrypt(kp.public, m2, rng)
    assert decrypt(kp.secret, hom_add(kp.public, c1, c2)) == (m1 + m2) % n
    assert decrypt(kp.secret, hom_scale(kp.public, c1, m2)) == (m1 * m2) % n


class TestCodec:
    def test_examples(self, keys512):
        codec = FixedPointCodec(keys512[0].public.n, 32)
        assert encode_real(codec, 0.0) == 0
        assert decode_real(codec, encode_real(codec, -1.5)) == -1.5
        assert abs(decode_real(codec, encode_real(codec, 0.1)) - 0.1) <= 2 ** -32

    def test_overflow(self, keys512):
        codec = FixedPointCodec(keys512[0].public.n, 32)
        with pytest.raises(EncodingError):
            codec.encode(codec.max_abs * 1.01)
        with pytest.raises(EncodingError):
            codec.encode(float("nan"))

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_roundtrip_bound(self, x):
        codec = FixedPointCodec((1 << 511) + 187, 32)
        assert abs(codec.decode(codec.encode(x)) - x) <= 2 ** -32

    @given(st.floats(-1e3, 1e3), st.floats(-1, 1))
    def test_product_decodes_at_depth_two(self, x, y):
        n = (1 << 511) + 187
        codec = FixedPointCodec(n, 32)
        prod = codec.encode(x) * codec.encode(y) % n
        assert abs(codec.decode(prod, depth=2) - x * y) <= 2 * 2 ** -32 * (1 + abs(x) + abs(y))

    def test_encrypted_weighted_difference(self, keys512):
        # the secure-edge message pattern: Enc(-x_i) + Enc(x_j), scaled by an encoded factor
        kp = keys512[0]
        pk, rng = kp.public, random.Random(9)
        codec = FixedPointCodec(pk.n, 32)
        xi, xj, a = 1.25, -3.5, 0.7
        c = hom_scale(pk, hom_add(pk, encrypt(pk, codec.encode(-xi), rng), encrypt(pk, codec.encode(xj), rng)),
                      codec.encode(a))
        assert codec.decode(decrypt(kp.secret, c), depth=2) == pytest.approx(a * (xj - xi), abs=1e-9)
