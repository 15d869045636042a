"""Paillier additively homomorphic encryption with a fixed-point codec.

Uses the ``g = n + 1`` simplification, so ``g^m mod n^2 = 1 + m*n`` and the
secret key reduces to ``lambda = lcm(p-1, q-1)``, ``mu = lambda^-1 mod n``.

All randomness is passed in explicitly (a :class:`random.Random`), which
makes key generation reproducible from a seed. The seeded generator is for
reproducible experiments only; it is not a cryptographically secure source.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass

from .errors import ConfigurationError, EncodingError, ProtocolError

MIN_KEY_BITS = 512
DEFAULT_KEY_BITS = 2048

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p ** 0.5) + 1))]


def is_probable_prime(n: int, rng: random.Random, rounds: int = 40) -> bool:
    """Miller-Rabin with trial division by small primes first."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: random.Random) -> int:
    """Random prime with exactly ``bits`` bits (top two bits set)."""
    while True:
        cand = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 1
        if is_probable_prime(cand, rng):
            return cand


@dataclass(frozen=True)
class PublicKey:
    n: int

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def fingerprint(self) -> bytes:
        digest = hashlib.sha256(self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")).digest()
        return digest[:8]

    @property
    def ciphertext_bytes(self) -> int:
        return (self.n_sq.bit_length() + 7) // 8


@dataclass(frozen=True)
class SecretKey:
    public: PublicKey
    lam: int
    mu: int


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    secret: SecretKey
    key_bits: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    fingerprint: bytes

    def to_bytes(self, pk: PublicKey) -> bytes:
        """Wire format: 8-byte key fingerprint, then the big-endian value."""
        if pk.fingerprint != self.fingerprint:
            raise ProtocolError("ciphertext serialized under a different key")
        return self.fingerprint + self.value.to_bytes(pk.ciphertext_bytes, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        return cls(int.from_bytes(data[8:], "big"), bytes(data[:8]))


def keygen(key_bits: int = DEFAULT_KEY_BITS, rng: random.Random | int | None = None) -> KeyPair:
    """Generate a key pair with an exactly ``key_bits``-bit modulus."""
    if key_bits < MIN_KEY_BITS:
        raise ConfigurationError(f"key_bits must be >= {MIN_KEY_BITS}, got {key_bits}")
    if key_bits % 2:
        raise ConfigurationError("key_bits must be even")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    half = key_bits // 2
    while True:
        p = random_prime(half, rng)
        q = random_prime(half, rng)
        n = p * q
        if p != q and n.bit_length() == key_bits and math.gcd(n, (p - 1) * (q - 1)) == 1:
            break
    lam = math.lcm(p - 1, q - 1)
    pk = PublicKey(n)
    # L(g^lam mod n^2) = lam mod n when g = n + 1
    mu = pow(lam % n, -1, n)
    return KeyPair(pk, SecretKey(pk, lam, mu), key_bits)


def _check_key(pk: PublicKey, *cts: Ciphertext) -> None:
    for c in cts:
        if c.fingerprint != pk.fingerprint:
            raise ProtocolError("ciphertext was produced under a different public key")


def encrypt(pk: PublicKey, m: int, rng: random.Random) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise EncodingError(f"plaintext must lie in [0, n), got {m}")
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            break
    n_sq = pk.n_sq
    c = ((1 + m * pk.n) % n_sq) * pow(r, pk.n, n_sq) % n_sq
    return Ciphertext(c, pk.fingerprint)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    pk = sk.public
    _check_key(pk, c)
    u = pow(c.value, sk.lam, pk.n_sq)
    return ((u - 1) // pk.n) * sk.mu % pk.n


def hom_add(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Ciphertext of ``(m1 + m2) mod n``."""
    _check_key(pk, c1, c2)
    return Ciphertext(c1.value * c2.value % pk.n_sq, pk.fingerprint)


def hom_scale(pk: PublicKey, c: Ciphertext, a: int) -> Ciphertext:
    """Ciphertext of ``(a * m) mod n`` for a plaintext integer ``a``."""
    _check_key(pk, c)
    if not 0 <= a < pk.n:
        raise EncodingError(f"scalar must lie in [0, n), got {a}")
    return Ciphertext(pow(c.value, a, pk.n_sq), pk.fingerprint)


@dataclass(frozen=True)
class FixedPointCodec:
    """Reals as integers mod ``n`` with ``frac_bits`` fractional bits.

    Negative values wrap into the upper half of ``[0, n)``. Encoding refuses
    values that would leave no room for one multiply by another encoding
    (magnitude below 1), whose result carries ``2 * frac_bits`` fractional bits.
    """

    n: int
    frac_bits: int = 32

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def max_abs(self) -> float:
        return self.n / 2 ** (2 * self.frac_bits + 2)

    def encode(self, x: float) -> int:
        if not math.isfinite(x) or abs(x) >= self.max_abs:
            raise EncodingError(f"|{x}| exceeds codec headroom {self.max_abs:.3e}")
        return round(x * self.scale) % self.n

    def decode(self, v: int, depth: int = 1) -> float:
        """Inverse of :meth:`encode`; ``depth=2`` for a product of two encodings."""
        v %= self.n
        if v > self.n // 2:
            v -= self.n
        # exact rational -> nearest float
        return v / (1 << (self.frac_bits * depth))


def encode_real(codec: FixedPointCodec, x: float) -> int:
    return codec.encode(x)


def decode_real(codec: FixedPointCodec, v: int, depth: int = 1) -> float:
    return codec.decode(v, depth)
