"""Polynomials over GF(2) and systematic CRC encoding.

A polynomial is stored as a Python int whose bit ``k`` is the coefficient of
``x**k``.  Hex and octal text forms list coefficients from the highest order
down, so ``0xD`` is ``x^3 + x^2 + 1`` and octal ``13`` is ``x^3 + x + 1``.

Bit sequences (messages, codewords) map to polynomials with the first bit as
the highest-order coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_BASES = {"hex": 16, "octal": 8, "oct": 8, "bin": 2}


class PolynomialError(ValueError):
    """Invalid polynomial text or arithmetic domain error."""


@dataclass(frozen=True, order=True)
class BinaryPolynomial:
    bits: int

    def __post_init__(self):
        if self.bits < 0:
            raise PolynomialError("polynomial bits must be non-negative")

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[int]) -> "BinaryPolynomial":
        """Build from coefficients indexed by power (``coeffs[0]`` is the constant)."""
        value = 0
        for k, c in enumerate(coeffs):
            if c & 1:
                value |= 1 << k
        return cls(value)

    @property
    def degree(self) -> int:
        """Degree; the zero polynomial reports -1."""
        return self.bits.bit_length() - 1

    @property
    def coeffs(self) -> tuple[int, ...]:
        return tuple((self.bits >> k) & 1 for k in range(max(self.degree + 1, 1)))

    def coeff(self, k: int) -> int:
        return (self.bits >> k) & 1

    def is_zero(self) -> bool:
        return self.bits == 0

    def weight(self) -> int:
        return bin(self.bits).count("1")

    def __add__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return BinaryPolynomial(self.bits ^ other.bits)

    __xor__ = __add__

    def __mul__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return BinaryPolynomial(clmul(self.bits, other.bits))

    def __mod__(self, other: "BinaryPolynomial") -> "BinaryPolynomial":
        return poly_mod(self, other)

    def to_hex(self) -> str:
        return f"0x{self.bits:X}"

    def to_octal(self) -> str:
        return f"{self.bits:o}"

    def __str__(self) -> str:
        if self.bits == 0:
            return "0"
        terms = []
        for k in range(self.degree, -1, -1):
            if self.coeff(k):
                terms.append("1" if k == 0 else ("x" if k == 1 else f"x^{k}"))
        return " + ".join(terms)


def parse_poly(text: str, base: str = "hex") -> BinaryPolynomial:
    """Parse a hex ("0x59F", "59F") or octal ("133") numeral into a polynomial."""
    try:
        radix = _BASES[base]
    except KeyError:
        raise PolynomialError(f"unknown base {base!r}") from None
    s = text.strip().replace("_", "")
    prefixes = {16: ("0x", "0X"), 8: ("0o", "0O"), 2: ("0b", "0B")}[radix]
    if s.startswith(prefixes):
        s = s[2:]
    if not s:
        raise PolynomialError(f"empty {base} numeral")
    try:
        return BinaryPolynomial(int(s, radix))
    except ValueError:
        raise PolynomialError(f"invalid {base} numeral {text!r}") from None


def clmul(a: int, b: int) -> int:
    """Carry-less product of two int-encoded polynomials."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def int_mod(a: int, p: int) -> int:
    """Remainder of int-encoded ``a`` modulo int-encoded ``p`` over GF(2)."""
    if p == 0:
        raise PolynomialError("division by the zero polynomial")
    dp = p.bit_length()
    while a.bit_length() >= dp:
        a ^= p << (a.bit_length() - dp)
    return a


def poly_mod(a: BinaryPolynomial, p: BinaryPolynomial) -> BinaryPolynomial:
    return BinaryPolynomial(int_mod(a.bits, p.bits))


def bits_to_int(bits: Sequence[int]) -> int:
    """First bit becomes the highest-order coefficient."""
    value = 0
    for b in bits:
        value = (value << 1) | (int(b) & 1)
    return value


def int_to_bits(value: int, length: int) -> np.ndarray:
    return np.array([(value >> (length - 1 - i)) & 1 for i in range(length)], dtype=np.uint8)


def crc_append(message: Sequence[int], p: BinaryPolynomial) -> np.ndarray:
    """Append ``deg(p)`` parity bits so the whole sequence is divisible by ``p``."""
    m = p.degree
    if m < 1 or not p.coeff(0):
        raise PolynomialError("CRC polynomial needs degree >= 1 and constant term 1")
    msg = np.asarray(message, dtype=np.uint8)
    parity = int_mod(bits_to_int(msg) << m, p.bits)
    return np.concatenate([msg, int_to_bits(parity, m)])


def crc_check(sequence: Sequence[int], p: BinaryPolynomial) -> bool:
    return int_mod(bits_to_int(sequence), p.bits) == 0


def crc_candidates(m: int) -> list[BinaryPolynomial]:
    """All degree-m polynomials with leading and constant coefficient 1, ascending."""
    if m < 1:
        raise PolynomialError("CRC degree must be >= 1")
    if m == 1:
        return [BinaryPolynomial(0b11)]
    return [BinaryPolynomial((1 << m) | (mid << 1) | 1) for mid in range(1 << (m - 1))]
