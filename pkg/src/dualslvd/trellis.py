"""Dual (parity-check) trellis of a rate-(n-1)/n convolutional code.

A dual state is the (v+1)-bit vector of partial sums in the observer
canonical form of ``H(D)``, stored as an int with bit ``k`` equal to ``s_k``.
Each primal step is expanded into ``n`` stages; stage ``j`` of a step consumes
output bit ``y^(j)``:

* ``s <- s + y h^(j)`` for every stage,
* at stage ``lam`` only ``y = s_0`` is allowed, which clears ``s_0``,
* at stage ``n-1`` the sum is rotated right, ``(a_v..a_0) -> (0, a_v..a_1)``.

States at step boundaries therefore have ``s_v = 0`` and coincide with the
primal encoder states of :mod:`dualslvd.encoder`.

Only one period of ``n`` transition tables is stored; a trellis of any length
reuses them.  Zero-termination pins some systematic output bits to 0 in the
final steps, which is recorded per absolute stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterator

import numpy as np

from .encoder import ParityCheck, gf2_rank, state_machine


class TrellisError(ValueError):
    pass


def compute_lambda(H: ParityCheck) -> int:
    """Maximum instant response order: largest ``j`` with ``h_0^(j) = 1``."""
    rails = [j for j in range(H.n) if H.h(j) & 1]
    if not rails:
        raise TrellisError("no rail has a constant term; dual trellis undefined")
    return max(rails)


@dataclass(frozen=True, eq=False)
class PeriodTables:
    """Transition tables for one primal step (``n`` stages)."""

    n: int
    v: int
    lam: int
    succ: np.ndarray  # (n, S, 2): next state for y in {0, 1}, -1 if absent
    pred_state: np.ndarray  # (n, S, 2): predecessors sorted by (state, y), -1 padded
    pred_y: np.ndarray  # (n, S, 2)

    @property
    def num_states(self) -> int:
        return 1 << (self.v + 1)


@lru_cache(maxsize=None)
def period_tables(H: ParityCheck) -> PeriodTables:
    n, v = H.n, H.v
    lam = compute_lambda(H)
    S = 1 << (v + 1)
    succ = np.full((n, S, 2), -1, dtype=np.int64)
    pred_state = np.full((n, S, 2), -1, dtype=np.int64)
    pred_y = np.full((n, S, 2), -1, dtype=np.int64)
    for j in range(n):
        h = H.h(j)
        preds: list[list[tuple[int, int]]] = [[] for _ in range(S)]
        for s in range(S):
            if j == 0 and s >> v:
                continue  # step boundary: s_v = 0
            for y in (0, 1):
                if j == lam and y != (s & 1):
                    continue
                a = s ^ (h if y else 0)
                if j == n - 1:
                    if a & 1:
                        continue  # parity check at this step violated
                    a >>= 1
                succ[j, s, y] = a
                preds[a].append((s, y))
        for t, plist in enumerate(preds):
            if len(plist) > 2:
                raise TrellisError("dual trellis state has more than two predecessors")
            for c, (s, y) in enumerate(sorted(plist)):
                pred_state[j, t, c] = s
                pred_y[j, t, c] = y
    return PeriodTables(n, v, lam, succ, pred_state, pred_y)


@dataclass(frozen=True)
class TerminationTable:
    """Per-state zero-termination input vectors and the outputs they produce.

    ``free`` lists, per termination step, the input positions (0 = first
    systematic rail) that may be nonzero; all others are pinned to zero so
    every state has exactly one termination sequence.
    """

    H: ParityCheck
    steps: int
    free: tuple[tuple[int, ...], ...]
    inputs: tuple[tuple[int, ...], ...]
    outputs: tuple[np.ndarray, ...]

    @property
    def input_bits(self) -> int:
        return (self.H.n - 1) * self.steps

    @property
    def output_bits(self) -> int:
        return self.H.n * self.steps

    def pinned_rails(self) -> list[tuple[int, int]]:
        """(step, rail) pairs whose output bit is forced to zero."""
        rails = self.H.systematic_rails
        return [
            (i, rails[p])
            for i in range(self.steps)
            for p in range(self.H.n - 1)
            if p not in self.free[i]
        ]


@lru_cache(maxsize=None)
def build_termination_table(H: ParityCheck) -> TerminationTable:
    """Breadth-first search for a zero-terminating input from every state.

    The search runs over ``ceil(v/(n-1))`` primal steps with an input alphabet
    restricted to a fixed set of ``rank`` free positions, so the terminating
    sequence of each state is unique and the pinned positions can be imposed
    on the decoding trellis.
    """
    sm = state_machine(H)
    k = H.n - 1
    T = math.ceil(H.v / k)
    # columns of the input -> final-state map over T steps from state 0
    cols = []
    for pos in range(k * T):
        seq = [0] * T
        seq[pos // k] = 1 << (k - 1 - pos % k)
        final = sm.run(0, seq)[1]
        cols.append([(final >> r) & 1 for r in range(H.v)])
    chosen: list[int] = []
    for pos in range(k * T):
        trial = np.array([cols[c] for c in chosen + [pos]], dtype=np.uint8).T
        if gf2_rank(trial) == len(chosen) + 1:
            chosen.append(pos)
    free = tuple(tuple(p % k for p in chosen if p // k == i) for i in range(T))
    alphabet = []
    for i in range(T):
        mask = sum(1 << (k - 1 - p) for p in free[i])
        alphabet.append([u for u in range(1 << k) if u & ~mask == 0])

    inputs, outputs = [], []
    for s in range(sm.num_states):
        # layered BFS keeping the first input sequence that reaches each state
        frontier = {s: ()}
        for i in range(T):
            nxt: dict[int, tuple[int, ...]] = {}
            for state, path in frontier.items():
                for u in alphabet[i]:
                    t = sm.next_list[state][u]
                    nxt.setdefault(t, path + (u,))
            frontier = nxt
        if 0 not in frontier:
            raise TrellisError(f"state {s} cannot be zero-terminated in {T} steps")
        seq = frontier[0]
        inputs.append(seq)
        outputs.append(sm.run(s, seq)[0])
    return TerminationTable(H, T, free, tuple(inputs), tuple(outputs))


@dataclass(frozen=True)
class DualTrellis:
    """Dual trellis over ``steps`` primal steps (``N = n * steps`` stages).

    ``start`` / ``end`` restrict the boundary states a path may begin or end
    in (``None`` means any of the ``2^v``).  ``pinned`` holds absolute stage
    indices where only ``y = 0`` is allowed.  ``root`` marks the zero-metric
    terminal node joining every admissible final state.
    """

    H: ParityCheck
    steps: int
    tables: PeriodTables
    start: tuple[int, ...] | None = None
    end: tuple[int, ...] | None = None
    pinned: frozenset[int] = field(default_factory=frozenset)
    root: bool = False

    @property
    def n(self) -> int:
        return self.H.n

    @property
    def v(self) -> int:
        return self.H.v

    @property
    def lam(self) -> int:
        return self.tables.lam

    @property
    def N(self) -> int:
        return self.steps * self.H.n

    @property
    def num_states(self) -> int:
        return self.tables.num_states

    @property
    def start_states(self) -> tuple[int, ...]:
        return self.start if self.start is not None else tuple(range(1 << self.v))

    @property
    def end_states(self) -> tuple[int, ...]:
        return self.end if self.end is not None else tuple(range(1 << self.v))

    def branches(self, stage: int, state: int) -> list[tuple[int, int]]:
        """Outgoing ``(y, next_state)`` pairs at absolute stage index ``stage``."""
        j = stage % self.n
        out = []
        for y in (0, 1):
            t = int(self.tables.succ[j, state, y])
            if t >= 0 and not (y and stage in self.pinned):
                out.append((y, t))
        return out

    def predecessors(self, stage: int) -> tuple[np.ndarray, np.ndarray]:
        """Predecessor (state, y) arrays for branches entering stage ``stage + 1``."""
        j = stage % self.n
        ps, py = self.tables.pred_state[j], self.tables.pred_y[j]
        if stage in self.pinned:
            ps = np.where(py == 1, -1, ps)
            py = np.where(py == 1, -1, py)
        return ps, py

    def pinned_to(self, state: int) -> "DualTrellis":
        return replace(self, start=(state,), end=(state,), root=False)


def build_dual_trellis(H: ParityCheck, N: int, zero_terminated: bool = False) -> DualTrellis:
    """Dual trellis of ``N`` stages.

    With ``zero_terminated`` paths start and end in state 0 and the systematic
    bits of the final termination steps are pinned per the termination table.
    """
    if N % H.n:
        raise TrellisError(f"N={N} is not a multiple of n={H.n}")
    tables = period_tables(H)
    steps = N // H.n
    if not zero_terminated:
        return DualTrellis(H, steps, tables)
    table = build_termination_table(H)
    if steps < table.steps:
        raise TrellisError("trellis shorter than the termination region")
    first = steps - table.steps
    pinned = frozenset((first + i) * H.n + rail for i, rail in table.pinned_rails())
    return DualTrellis(H, steps, tables, start=(0,), end=(0,), pinned=pinned)


def augment_root_node(t: DualTrellis) -> DualTrellis:
    if t.root:
        raise TrellisError("trellis already has a root node")
    return replace(t, root=True)


def build_multi_trellis_forest(H: ParityCheck, N: int) -> list[DualTrellis]:
    """One trellis per boundary state, each pinned to start and end there.

    The trellises share their transition tables.
    """
    base = build_dual_trellis(H, N)
    return [base.pinned_to(s) for s in range(1 << H.v)]


def iter_paths(t: DualTrellis) -> Iterator[tuple[int, int, np.ndarray]]:
    """Every complete path as ``(start, end, outputs)``; exponential, for tests."""
    ends = set(t.end_states)
    N = t.N

    def walk(stage: int, state: int, ys: list[int]):
        if stage == N:
            if state in ends:
                yield state, np.array(ys, dtype=np.uint8)
            return
        for y, nxt in t.branches(stage, state):
            ys.append(y)
            yield from walk(stage + 1, nxt, ys)
            ys.pop()

    for s in t.start_states:
        for end, ys in walk(0, s, []):
            yield s, end, ys


def reachable_states(t: DualTrellis, stage: int) -> set[int]:
    states = set(t.start_states)
    for k in range(stage):
        states = {nxt for s in states for _, nxt in t.branches(k, s)}
    return states


def to_dot(t: DualTrellis) -> str:
    """One period of the trellis as a Graphviz digraph."""
    n, v = t.n, t.v
    width = v + 1
    lines = [
        "digraph dual_trellis {",
        "  rankdir=LR;",
        f'  label="H={t.H} n={n} v={v} lambda={t.lam}";',
        "  node [shape=circle, fontsize=10];",
    ]
    states = set(range(1 << v))
    layers = [sorted(states)]
    for j in range(n):
        states = {
            int(t.tables.succ[j, s, y])
            for s in states
            for y in (0, 1)
            if t.tables.succ[j, s, y] >= 0
        }
        layers.append(sorted(states))
    for j, layer in enumerate(layers):
        names = " ".join(f'"{j}:{s:0{width}b}"' for s in layer)
        lines.append(f"  {{ rank=same; {names} }}")
    for j in range(n):
        for s in layers[j]:
            for y in (0, 1):
                nxt = int(t.tables.succ[j, s, y])
                if nxt < 0:
                    continue
                style = "dashed" if y else "solid"
                lines.append(
                    f'  "{j}:{s:0{width}b}" -> "{j + 1}:{nxt:0{width}b}" '
                    f'[label="{y}/{y}", style={style}];'
                )
    lines.append("}")
    return "\n".join(lines) + "\n"
