"""Real <-> binary genotype mapping for bounded continuous variables.

Each decision variable is stored as an unsigned big-endian bit field whose
length is derived from the variable's range and precision requirement.  A
chromosome concatenates the fields of all variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Chromosome",
    "EncodingSpec",
    "VariableSpec",
    "compute_bit_length",
    "decode",
    "decode_batch",
    "encode",
    "min_population_size",
    "random_bits",
]


def compute_bit_length(lower: float, upper: float, precision: float) -> int:
    """Smallest bit count ``l`` with ``(upper - lower) / precision <= 2**l``.

    At least one bit is always allocated, so degenerate ranges that would fit
    in zero bits still produce a usable field.  When the ratio is an exact
    power of two the smaller admissible ``l`` is returned.
    """
    if not lower < upper:
        raise ValueError(f"need lower < upper, got [{lower}, {upper}]")
    if not precision > 0:
        raise ValueError(f"precision must be positive, got {precision}")
    ratio = (upper - lower) / precision
    return max(1, math.ceil(math.log2(ratio)))


def min_population_size(string_length: int, confidence: float) -> int:
    """Population size below which random initialization risks missing alleles.

    Returns ``ceil(1 + log2(l / -ln P))`` for a binary alphabet: the smallest
    size at which every locus carries both allele values with probability at
    least ``confidence``.
    """
    if string_length < 1:
        raise ValueError(f"string_length must be >= 1, got {string_length}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    return math.ceil(1.0 + math.log2(string_length / -math.log(confidence)))


@dataclass(frozen=True)
class VariableSpec:
    """Range, precision and bit budget of one encoded variable.

    ``bit_length`` may be omitted, in which case it is derived from the
    precision requirement via :func:`compute_bit_length`.
    """

    lower: float
    upper: float
    precision: float
    bit_length: int = 0

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if not self.precision > 0:
            raise ValueError(f"precision must be positive, got {self.precision}")
        if self.bit_length == 0:
            object.__setattr__(
                self,
                "bit_length",
                compute_bit_length(self.lower, self.upper, self.precision),
            )
        ratio = (self.upper - self.lower) / self.precision
        l = self.bit_length
        if ratio > 2**l or (l > 1 and ratio < 2 ** (l - 1)):
            raise ValueError(
                f"bit_length {l} inconsistent with range/precision (ratio {ratio})"
            )

    @property
    def grid_step(self) -> float:
        """Spacing between adjacent decodable values."""
        return (self.upper - self.lower) / (2**self.bit_length - 1)


@dataclass(frozen=True)
class EncodingSpec:
    """Ordered variable layout of a chromosome."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self) -> None:
        if not self.variables:
            raise ValueError("EncodingSpec needs at least one variable")
        object.__setattr__(self, "variables", tuple(self.variables))

    @classmethod
    def for_bounds(cls, lower, upper, precision) -> "EncodingSpec":
        """Build a spec from bound vectors and a scalar or per-variable precision."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("lower/upper length mismatch")
        prec = np.broadcast_to(np.asarray(precision, dtype=float), lower.shape)
        return cls(
            tuple(
                VariableSpec(lo, up, p)
                for lo, up, p in zip(lower, upper, prec, strict=True)
            )
        )

    @property
    def total_length(self) -> int:
        return sum(v.bit_length for v in self.variables)

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @cached_property
    def _offsets(self) -> np.ndarray:
        lengths = [v.bit_length for v in self.variables]
        return np.concatenate(([0], np.cumsum(lengths)))

    @cached_property
    def _weights(self) -> list[np.ndarray]:
        # big-endian: first bit of each field is the most significant
        return [
            (2 ** np.arange(v.bit_length - 1, -1, -1)).astype(np.int64)
            for v in self.variables
        ]


@dataclass(frozen=True, eq=False)
class Chromosome:
    """Fixed-length bit vector (values 0/1, big-endian per variable field)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("chromosome bits must be a 1-D vector")
        if bits.size and bits.max() > 1:
            raise ValueError("chromosome bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Chromosome):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(
            np.all(self.bits == other.bits)
        )

    def copy(self) -> "Chromosome":
        return Chromosome(self.bits.copy())


def random_bits(length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random ``(count, length)`` bit matrix."""
    return rng.integers(0, 2, size=(count, length), dtype=np.uint8)


def _check_length(nbits: int, spec: EncodingSpec) -> None:
    if nbits != spec.total_length:
        raise ValueError(
            f"chromosome length {nbits} does not match encoding length "
            f"{spec.total_length}"
        )


def decode_batch(bits: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    """Decode a ``(m, L)`` bit matrix into a ``(m, n)`` matrix of reals."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ValueError("expected a 2-D bit matrix")
    _check_length(bits.shape[1], spec)
    offs = spec._offsets
    out = np.empty((bits.shape[0], spec.dimension), dtype=float)
    for i, var in enumerate(spec.variables):
        field = bits[:, offs[i] : offs[i + 1]].astype(np.int64)
        codes = field @ spec._weights[i]
        denom = 2**var.bit_length - 1
        out[:, i] = var.lower + (var.upper - var.lower) * (codes / denom)
    return out


def decode(chrom: Chromosome, spec: EncodingSpec) -> np.ndarray:
    """Decode one chromosome into its real-valued phenotype vector."""
    _check_length(len(chrom), spec)
    return decode_batch(chrom.bits[None, :], spec)[0]


def encode(x, spec: EncodingSpec) -> Chromosome:
    """Nearest-grid-point inverse of :func:`decode`.

    Values marginally outside a variable's range (by at most its precision)
    are clamped; anything further out raises.  Midpoint ties round toward the
    smaller integer code.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dimension,):
        raise ValueError(f"expected vector of length {spec.dimension}, got {x.shape}")
    fields = []
    for xi, var in zip(x, spec.variables, strict=True):
        if xi < var.lower - var.precision or xi > var.upper + var.precision:
            raise ValueError(
                f"value {xi} outside [{var.lower}, {var.upper}] beyond clamp tolerance"
            )
        xi = min(max(xi, var.lower), var.upper)
        denom = 2**var.bit_length - 1
        t = (xi - var.lower) / (var.upper - var.lower) * denom
        code = int(math.ceil(t - 0.5))  # round half down
        code = min(max(code, 0), denom)
        field = (code >> np.arange(var.bit_length - 1, -1, -1)) & 1
        fields.append(field.astype(np.uint8))
    return Chromosome(np.concatenate(fields))
