"""Additive-masking primitives for privacy-preserving aggregation.

Two secret-sharing mechanisms, both pure and deterministic under a seeded
noise source:

* finite-field sharing for non-negative integers: noise is drawn uniformly
  from Z_p and added with modular arithmetic, so the sum of masked values
  minus the sum of noise values reconstructs the plain sum exactly;
* real-number sharing for floats (and negative integers): noise is drawn
  from a zero-mean Gaussian and added with ordinary float arithmetic, so
  reconstruction is exact up to float rounding.

Also provides the closed-form upper bound on the mutual information between
a float value and its masked form.

No I/O and no protocol knowledge live here; everything operates on numpy
arrays (any shape) and plain numbers.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidVariance,
    ModulusTooLarge,
    NonFiniteInput,
    NotPrime,
    ShapeMismatch,
    ValueOutOfField,
)

# Largest prime fitting in 54 bits; supports ~500 clients without 64-bit
# overflow during aggregation.
DEFAULT_PRIME = 2**54 - 33

DEFAULT_NOISE_VARIANCE = 1e12

# Witnesses making Miller-Rabin deterministic for all n < 3.3e24 (covers the
# full 63-bit range admitted by PrimeModulus).
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin primality test for n < 3.3e24."""
    if n < 2:
        return False
    for small in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % small == 0:
            return n == small
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimeModulus:
    """A prime field size p, constrained so field values fit in int64."""

    p: int
    bit_width: int = field(init=False)

    def __post_init__(self):
        if not isinstance(self.p, int) or self.p < 2:
            raise NotPrime(f"modulus must be an integer >= 2, got {self.p!r}")
        if not is_prime(self.p):
            raise NotPrime(f"{self.p} is not prime")
        object.__setattr__(self, "bit_width", (self.p - 1).bit_length())
        if self.bit_width > 63:
            raise ModulusTooLarge(
                f"modulus needs {self.bit_width} bits; at most 63 are storable "
                "in a signed 64-bit integer",
                max_bit_width=63,
            )


def default_modulus() -> PrimeModulus:
    return PrimeModulus(DEFAULT_PRIME)


def validate_modulus(modulus: PrimeModulus, max_clients: int) -> None:
    """Check that summing max_clients field elements cannot overflow int64.

    Requires bit_width(p) <= 63 - ceil(log2 K), which guarantees
    K * (p - 1) < 2**63 even if every client holds the maximum value.
    Raises ModulusTooLarge carrying the maximal admissible bit width.
    """
    if max_clients < 1:
        raise ValueOutOfField(f"client count must be >= 1, got {max_clients}")
    headroom = (max_clients - 1).bit_length()  # == ceil(log2 K)
    max_bits = 63 - headroom
    if modulus.bit_width > max_bits:
        raise ModulusTooLarge(
            f"modulus of {modulus.bit_width} bits cannot support "
            f"{max_clients} clients; need at most {max_bits} bits",
            max_bit_width=max_bits,
        )


@dataclass(frozen=True)
class GaussianSpec:
    """Zero-mean Gaussian noise specification (the mean is fixed at zero)."""

    variance: float = DEFAULT_NOISE_VARIANCE

    def __post_init__(self):
        if not (self.variance > 0) or not math.isfinite(self.variance):
            raise InvalidVariance(f"noise variance must be > 0, got {self.variance}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


class RngHandle:
    """Noise source with two backends.

    "prng": a seeded PCG64 stream; fast, and the same seed always yields the
    identical noise stream (the reproducibility contract used everywhere in
    tests and the simulation harness).

    "os": draws from OS entropy; not reproducible, for deployments that want
    noise independent of any stored seed. The seed argument is ignored.
    """

    PRNG = "prng"
    OS = "os"

    def __init__(self, seed: int = 0, algorithm: str = PRNG):
        if algorithm not in (self.PRNG, self.OS):
            raise ValueError(f"unknown rng algorithm {algorithm!r}")
        self.seed = int(seed)
        self.algorithm = algorithm
        self._gen = np.random.default_rng(self.seed) if algorithm == self.PRNG else None

    def raw_words(self, count: int) -> np.ndarray:
        """count uniform 64-bit words as a uint64 array."""
        if self._gen is not None:
            return self._gen.integers(0, 2**64, size=count, dtype=np.uint64, endpoint=False)
        return np.frombuffer(os.urandom(8 * count), dtype=np.uint64).copy()

    def normal(self, sigma: float, shape) -> np.ndarray:
        """Zero-mean Gaussian draws with standard deviation sigma."""
        if self._gen is not None:
            return self._gen.normal(0.0, sigma, size=shape)
        return _box_muller(self, int(np.prod(shape, dtype=np.int64))).reshape(shape) * sigma


def _box_muller(rng: RngHandle, count: int) -> np.ndarray:
    """Standard normals from raw 64-bit words (used by the OS-entropy backend)."""
    pairs = (count + 1) // 2
    w1 = rng.raw_words(pairs)
    w2 = rng.raw_words(pairs)
    # top 53 bits -> uniforms; +1 keeps u1 strictly positive for the log
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (w2 >> np.uint64(11)).astype(np.float64) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
    return out[:count]


# --- field (non-negative integer) path --------------------------------------


def as_field_vector(values, modulus: PrimeModulus) -> np.ndarray:
    """Coerce to an int64 array and check every element lies in [0, p)."""
    arr = np.asarray(values)
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.integer):
        try:
            arr = np.array(values, dtype=np.int64)
        except (OverflowError, ValueError, TypeError) as exc:
            raise ValueOutOfField(f"values not representable as int64: {exc}") from exc
    arr = arr.astype(np.int64, copy=False)
    if arr.size and (int(arr.min()) < 0 or int(arr.max()) >= modulus.p):
        raise ValueOutOfField(
            f"field elements must lie in [0, {modulus.p}), got range "
            f"[{int(arr.min())}, {int(arr.max())}]"
        )
    return arr


def uniform_field_elements(rng: RngHandle, modulus: PrimeModulus, shape) -> np.ndarray:
    """Uniform draws from [0, p) via rejection sampling on 64-bit words.

    Masking each word down to bit_width(p) bits and rejecting values >= p
    avoids modulo bias; acceptance probability is always > 1/2.
    """
    count = int(np.prod(shape, dtype=np.int64))
    mask = np.uint64((1 << modulus.bit_width) - 1)
    p = np.uint64(modulus.p)
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        need = count - filled
        draws = rng.raw_words(max(2 * need, 16)) & mask
        accepted = draws[draws < p][:need]
        out[filled : filled + accepted.size] = accepted.astype(np.int64)
        filled += accepted.size
    return out.reshape(shape)


def field_share(
    values, modulus: PrimeModulus, rng: RngHandle
) -> tuple[np.ndarray, np.ndarray]:
    """Split a field vector into (noise, masked) additive shares.

    noise is uniform over [0, p); masked = (values + noise) mod p. Either
    share alone is uniformly distributed and reveals nothing about values.
    """
    vals = as_field_vector(values, modulus)
    noise = uniform_field_elements(rng, modulus, vals.shape)
    masked = _mod_add(vals, noise, modulus.p)
    return noise, masked


def _mod_add(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    # a + b can reach 2p - 2, which may exceed int64 for 63-bit p; go through
    # uint64 where it always fits, then reduce back below p.
    total = a.astype(np.uint64) + b.astype(np.uint64)
    return (total % np.uint64(p)).astype(np.int64)


def field_aggregate(vectors, modulus: PrimeModulus) -> np.ndarray:
    """Elementwise modular sum of same-shaped field vectors.

    When validate_modulus holds for K = len(vectors) the whole sum is taken
    in int64 without intermediate reduction (no overflow possible); otherwise
    falls back to exact Python-integer accumulation.
    """
    if not vectors:
        raise ShapeMismatch("cannot aggregate an empty list of vectors")
    arrs = [as_field_vector(v, modulus) for v in vectors]
    shape = arrs[0].shape
    for i, a in enumerate(arrs[1:], start=1):
        if a.shape != shape:
            raise ShapeMismatch(f"vector {i} has shape {a.shape}, expected {shape}")
    try:
        validate_modulus(modulus, len(arrs))
    except ModulusTooLarge:
        total = np.sum([a.astype(object) for a in arrs], axis=0)
        return (total % modulus.p).astype(np.int64)
    stacked = np.stack(arrs)
    return (np.sum(stacked, axis=0, dtype=np.int64) % modulus.p).astype(np.int64)


def field_unmask(masked_sum, noise_sum, modulus: PrimeModulus) -> np.ndarray:
    """(masked_sum - noise_sum) mod p, normalized into [0, p)."""
    ms = as_field_vector(masked_sum, modulus)
    ns = as_field_vector(noise_sum, modulus)
    if ms.shape != ns.shape:
        raise ShapeMismatch(f"shapes differ: {ms.shape} vs {ns.shape}")
    # difference lies in (-p, p), safely inside int64; numpy % is non-negative
    return (ms - ns) % np.int64(modulus.p)


# --- real (float / negative integer) path -----------------------------------


def as_real_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NonFiniteInput("real vectors must not contain NaN or Inf")
    return arr


def real_share(values, spec: GaussianSpec, rng: RngHandle) -> tuple[np.ndarray, np.ndarray]:
    """Split a float vector into (noise, masked) with Gaussian noise.

    noise is i.i.d. per element from Normal(0, variance); masked = values + noise.
    """
    vals = as_real_vector(values)
    noise = rng.normal(spec.sigma, vals.shape)
    return noise, vals + noise


def real_aggregate(vectors) -> np.ndarray:
    """Elementwise float sum, folded left-to-right in list index order.

    Float addition is not associative, so the fold order is pinned to make
    aggregation reproducible across runs and transports.
    """
    if not vectors:
        raise ShapeMismatch("cannot aggregate an empty list of vectors")
    arrs = [as_real_vector(v) for v in vectors]
    shape = arrs[0].shape
    for i, a in enumerate(arrs[1:], start=1):
        if a.shape != shape:
            raise ShapeMismatch(f"vector {i} has shape {a.shape}, expected {shape}")
    total = arrs[0].copy()
    for a in arrs[1:]:
        total += a
    return total


def real_unmask(masked_sum, noise_sum) -> np.ndarray:
    """masked_sum - noise_sum, elementwise."""
    ms = as_real_vector(masked_sum)
    ns = as_real_vector(noise_sum)
    if ms.shape != ns.shape:
        raise ShapeMismatch(f"shapes differ: {ms.shape} vs {ns.shape}")
    return ms - ns


# --- leakage bound -----------------------------------------------------------


def mi_upper_bound(sigma2_model: float, sigma2_noise: float) -> float:
    """Upper bound, in bits, on the mutual information between a value and
    its noise-masked form: 0.5 * log2(1 + sigma2_model / sigma2_noise).

    Monotone increasing in the model variance and decreasing in the noise
    variance; zero when the model variance is zero.
    """
    if not (sigma2_noise > 0):
        raise InvalidVariance(f"noise variance must be > 0, got {sigma2_noise}")
    if sigma2_model < 0:
        raise InvalidVariance(f"model variance must be >= 0, got {sigma2_model}")
    return 0.5 * math.log2(1.0 + sigma2_model / sigma2_noise)
