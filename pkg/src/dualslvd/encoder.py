"""Systematic rate-(n-1)/n feedback convolutional encoding from a parity-check matrix.

The encoder memory is the observer-canonical partial-sum register of ``H(D)``:
a v-bit integer whose bit ``k`` holds the partial sum destined for the parity
check ``k`` steps ahead.  This is exactly the boundary state of the dual
trellis, so encoder states and trellis states share one numbering.

One rail carries the feedback-computed parity bit.  For the usual codes this is
rail 0 (``h^(0)`` has a constant term); when ``h^(0)`` lacks one, the lowest
rail with a constant term is used instead.  All remaining rails are
systematic and take the message bits in ascending rail order.

On the wire a primal step emits ``y^(0), y^(1), ..., y^(n-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .algebra import BinaryPolynomial, crc_append, parse_poly


class ConfigError(ValueError):
    pass


class EncodingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParityCheck:
    """``H(D) = [h^(n-1), ..., h^(0)]`` in the order it is written."""

    polys: tuple[BinaryPolynomial, ...]

    def __post_init__(self):
        if len(self.polys) < 2:
            raise ConfigError("parity-check matrix needs at least two rails")
        if self.polys[-1].is_zero():
            raise ConfigError("h^(0) must be nonzero")
        if not any(p.coeff(0) for p in self.polys):
            raise ConfigError("no rail has a constant term; the code has no causal encoder")

    @classmethod
    def from_octal(cls, text: str | Sequence[str | int]) -> "ParityCheck":
        if isinstance(text, str):
            items = [t for t in text.replace("(", "").replace(")", "").split(",") if t.strip()]
        else:
            items = list(text)
        return cls(tuple(parse_poly(str(t), "octal") for t in items))

    @property
    def n(self) -> int:
        return len(self.polys)

    @property
    def v(self) -> int:
        return max(p.degree for p in self.polys)

    def h(self, j: int) -> int:
        """Int-encoded ``h^(j)``; bit ``k`` is ``h_k^(j)``."""
        return self.polys[self.n - 1 - j].bits

    @cached_property
    def parity_rail(self) -> int:
        return min(j for j in range(self.n) if self.h(j) & 1)

    @cached_property
    def systematic_rails(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n) if j != self.parity_rail)

    def to_octal(self) -> str:
        return ",".join(p.to_octal() for p in self.polys)

    def __str__(self) -> str:
        return "(" + ", ".join(p.to_octal() for p in self.polys) + ")"


def encode_step(state: int, inputs: Sequence[int], H: ParityCheck) -> tuple[np.ndarray, int]:
    """Advance the encoder one primal step.

    Returns the ``n`` output bits in wire order and the next state.
    """
    out = np.zeros(H.n, dtype=np.uint8)
    a = state
    for rail, bit in zip(H.systematic_rails, inputs):
        bit = int(bit) & 1
        out[rail] = bit
        if bit:
            a ^= H.h(rail)
    parity = a & 1
    out[H.parity_rail] = parity
    if parity:
        a ^= H.h(H.parity_rail)
    return out, a >> 1


class StateMachine:
    """Tabulated primal encoder: ``next[s][u]`` and ``out[s][u]`` for every
    state and input vector ``u`` (first systematic rail is the MSB of ``u``)."""

    def __init__(self, H: ParityCheck):
        self.H = H
        self.k = H.n - 1
        self.num_states = 1 << H.v
        self.num_inputs = 1 << self.k
        nxt = np.zeros((self.num_states, self.num_inputs), dtype=np.int64)
        out = np.zeros((self.num_states, self.num_inputs, H.n), dtype=np.uint8)
        for s in range(self.num_states):
            for u in range(self.num_inputs):
                o, t = encode_step(s, self.unpack_input(u), H)
                nxt[s, u] = t
                out[s, u] = o
        self.next = nxt
        self.out = out
        self.weight = out.sum(axis=2).astype(np.int64)
        # plain lists are much faster than numpy scalars in search loops
        self.next_list = nxt.tolist()
        self.weight_list = self.weight.tolist()

    def unpack_input(self, u: int) -> tuple[int, ...]:
        return tuple((u >> (self.k - 1 - i)) & 1 for i in range(self.k))

    def run(self, state: int, inputs: Sequence[int]) -> tuple[np.ndarray, int]:
        """Encode a whole input-vector sequence (ints) from ``state``."""
        outs = np.empty((len(inputs), self.H.n), dtype=np.uint8)
        for i, u in enumerate(inputs):
            outs[i] = self.out[state, u]
            state = int(self.next[state, u])
        return outs.reshape(-1), state

    def linear_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """State-update matrices over GF(2): ``next = A s + B u``."""
        v = self.H.v
        A = np.zeros((v, v), dtype=np.uint8)
        for c in range(v):
            t = int(self.next[1 << c, 0])
            A[:, c] = [(t >> r) & 1 for r in range(v)]
        B = np.zeros((v, self.k), dtype=np.uint8)
        for c in range(self.k):
            t = int(self.next[0, 1 << (self.k - 1 - c)])
            B[:, c] = [(t >> r) & 1 for r in range(v)]
        return A, B


_MACHINES: dict[ParityCheck, StateMachine] = {}


def state_machine(H: ParityCheck) -> StateMachine:
    sm = _MACHINES.get(H)
    if sm is None:
        sm = _MACHINES[H] = StateMachine(H)
    return sm


@dataclass(frozen=True)
class CodeConfig:
    H: ParityCheck
    K: int
    m: int
    crc: BinaryPolynomial
    mode: str = "TB"

    def __post_init__(self):
        mode = self.mode.upper()
        if mode not in ("ZT", "TB"):
            raise ConfigError(f"mode must be ZT or TB, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.K < 1:
            raise ConfigError("K must be positive")
        if self.crc.degree != self.m:
            raise ConfigError(f"CRC {self.crc.to_hex()} has degree {self.crc.degree}, expected m={self.m}")
        if self.m >= 1 and not self.crc.coeff(0):
            raise ConfigError("CRC polynomial must have constant term 1")
        if (self.K + self.m) % (self.H.n - 1):
            raise ConfigError(
                f"K+m={self.K + self.m} is not divisible by n-1={self.H.n - 1}; "
                "the blocklength N=(K+m[+termination])*n/(n-1) must be an integer"
            )

    @property
    def n(self) -> int:
        return self.H.n

    @property
    def v(self) -> int:
        return self.H.v

    @property
    def data_steps(self) -> int:
        return (self.K + self.m) // (self.n - 1)

    @property
    def term_steps(self) -> int:
        return math.ceil(self.v / (self.n - 1)) if self.mode == "ZT" else 0

    @property
    def steps(self) -> int:
        return self.data_steps + self.term_steps

    @property
    def N(self) -> int:
        return self.steps * self.n

    @property
    def rate(self) -> float:
        return self.K / self.N


def blocklength(K: int, m: int, n: int, v: int, mode: str) -> int:
    """Blocklength for a CRC-ZTCC or CRC-TBCC."""
    if (K + m) % (n - 1):
        raise ConfigError("K+m must be divisible by n-1")
    extra = (n - 1) * math.ceil(v / (n - 1)) if mode.upper() == "ZT" else 0
    return (K + m + extra) * n // (n - 1)


def pack_inputs(bits: Sequence[int], k: int) -> list[int]:
    """Group a bit sequence into k-bit input vectors (first bit is the MSB)."""
    bits = np.asarray(bits, dtype=np.int64)
    if len(bits) % k:
        raise ConfigError(f"{len(bits)} bits do not split into {k}-bit steps")
    weights = 1 << np.arange(k - 1, -1, -1)
    return (bits.reshape(-1, k) @ weights).tolist()


def unpack_inputs(inputs: Sequence[int], k: int) -> np.ndarray:
    arr = np.asarray(inputs, dtype=np.int64)[:, None]
    return ((arr >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8).reshape(-1)


def zt_encode(data: Sequence[int], cfg: CodeConfig) -> np.ndarray:
    """CRC-append, encode from the zero state and drive the encoder back to zero."""
    from .trellis import build_termination_table

    if cfg.mode != "ZT":
        raise ConfigError("zt_encode needs a ZT configuration")
    if len(data) != cfg.K:
        raise ConfigError(f"expected {cfg.K} data bits, got {len(data)}")
    sm = state_machine(cfg.H)
    word = crc_append(data, cfg.crc)
    body, state = sm.run(0, pack_inputs(word, cfg.n - 1))
    table = build_termination_table(cfg.H)
    tail_in = table.inputs[state]
    tail, final = sm.run(state, tail_in)
    if final != 0:
        raise EncodingError("termination table failed to reach the zero state")
    return np.concatenate([body, tail])


def tb_initial_state(inputs: Sequence[int], H: ParityCheck, method: str = "solve") -> int:
    """Lowest initial state whose encoding of ``inputs`` ends where it started.

    ``method="exhaustive"`` tries every state; ``"solve"`` solves the affine
    relation ``final = A^L s + f(u)`` over GF(2) and falls back to the scan when
    ``A^L + I`` is singular.
    """
    sm = state_machine(H)
    if method == "exhaustive":
        for s in range(sm.num_states):
            if sm.run(s, inputs)[1] == s:
                return s
        raise EncodingError("no initial state satisfies the tail-biting condition")
    if method != "solve":
        raise ValueError(f"unknown method {method!r}")
    A, _ = sm.linear_maps()
    M = (gf2_matpow(A, len(inputs)) ^ np.eye(H.v, dtype=np.uint8)).astype(np.uint8)
    f = sm.run(0, inputs)[1]
    rhs = np.array([(f >> r) & 1 for r in range(H.v)], dtype=np.uint8)
    sol = gf2_solve(M, rhs)
    if sol is None:
        return tb_initial_state(inputs, H, "exhaustive")
    return int(sum(int(b) << r for r, b in enumerate(sol)))


def tb_encode(data: Sequence[int], cfg: CodeConfig, method: str = "solve") -> tuple[np.ndarray, int]:
    """CRC-append and encode from the state that makes the path tail-biting."""
    if cfg.mode != "TB":
        raise ConfigError("tb_encode needs a TB configuration")
    if len(data) != cfg.K:
        raise ConfigError(f"expected {cfg.K} data bits, got {len(data)}")
    sm = state_machine(cfg.H)
    inputs = pack_inputs(crc_append(data, cfg.crc), cfg.n - 1)
    s0 = tb_initial_state(inputs, cfg.H, method)
    word, final = sm.run(s0, inputs)
    assert final == s0
    return word, s0


def encode(data: Sequence[int], cfg: CodeConfig) -> np.ndarray:
    if cfg.mode == "ZT":
        return zt_encode(data, cfg)
    return tb_encode(data, cfg)[0]


def gf2_matmul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return (X.astype(np.int64) @ Y.astype(np.int64) % 2).astype(np.uint8)


def gf2_matpow(A: np.ndarray, e: int) -> np.ndarray:
    result = np.eye(A.shape[0], dtype=np.uint8)
    base = A.copy()
    while e:
        if e & 1:
            result = gf2_matmul(result, base)
        base = gf2_matmul(base, base)
        e >>= 1
    return result


def gf2_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Unique solution of ``M x = b`` over GF(2), or None if M is singular."""
    n = M.shape[0]
    aug = np.concatenate([M % 2, (b % 2)[:, None]], axis=1).astype(np.uint8)
    for col in range(n):
        pivots = np.nonzero(aug[col:, col])[0]
        if len(pivots) == 0:
            return None
        p = col + pivots[0]
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        rows = np.nonzero(aug[:, col])[0]
        for r in rows:
            if r != col:
                aug[r] ^= aug[col]
    return aug[:, n]


def gf2_rank(M: np.ndarray) -> int:
    M = (M % 2).astype(np.uint8).copy()
    rank = 0
    rows, cols = M.shape
    for c in range(cols):
        pivots = np.nonzero(M[rank:, c])[0]
        if len(pivots) == 0:
            continue
        p = rank + pivots[0]
        M[[rank, p]] = M[[p, rank]]
        for r in np.nonzero(M[:, c])[0]:
            if r != rank:
                M[r] ^= M[rank]
        rank += 1
        if rank == rows:
            break
    return rank
