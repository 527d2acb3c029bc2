"""CRC-aided serial list Viterbi decoding (SLVD) over the dual trellis.

The list is produced by the tree-trellis algorithm.  After one forward
add-compare-select pass, every path is identified by its end state and the
set of stages at which it enters a state through the losing (non-survivor)
branch.  A path's parent is the same path with its earliest such detour
removed, so a child costs its parent's metric plus the survivor/loser gap at
the detour point.  Children of a path can only detour before the parent's
own earliest detour, which makes the tree a partition of all paths.  A
min-heap of pending detours then yields paths in nondecreasing metric order.

Tie-breaks: the ACS keeps the predecessor with the lower state index (then
``y = 0``); the heap pops equal metrics in insertion order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .algebra import crc_check
from .encoder import CodeConfig
from .trellis import DualTrellis

INF = float("inf")

FOUND = "found"
EXHAUSTED = "list_exhausted"


def branch_metric(received: float, y: int, amplitude: float = 1.0) -> float:
    """Squared Euclidean distance to the BPSK point of ``y`` (0 -> +A, 1 -> -A)."""
    return (received - amplitude * (1 - 2 * y)) ** 2


def path_metric(received: Sequence[float], codeword: Sequence[int], amplitude: float = 1.0) -> float:
    r = np.asarray(received, dtype=float)
    x = amplitude * (1.0 - 2.0 * np.asarray(codeword, dtype=float))
    return float(np.sum((r - x) ** 2))


@dataclass(frozen=True)
class StageTables:
    """Per-stage predecessor tables for a given trellis (pinning applied).

    ``gather`` maps missing predecessors to the sentinel state ``S`` whose
    metric is always ``inf``.
    """

    pred_state: tuple[np.ndarray, ...]
    pred_y: tuple[np.ndarray, ...]
    gather: tuple[np.ndarray, ...]
    pred_state_l: tuple[list, ...]
    pred_y_l: tuple[list, ...]


@lru_cache(maxsize=64)
def stage_tables(t: DualTrellis) -> StageTables:
    S = t.num_states
    ps, py, gather = [], [], []
    cache: dict[int, tuple] = {}
    for k in range(t.N):
        a, b = t.predecessors(k)
        key = id(a)
        if key not in cache:
            cache[key] = (np.where(a >= 0, a, S), a.tolist(), b.tolist())
        ps.append(a)
        py.append(np.where(b >= 0, b, 0))
        gather.append(cache[key][0])
    return StageTables(
        tuple(ps),
        tuple(py),
        tuple(gather),
        tuple(cache[id(a)][1] for a in ps),
        tuple(cache[id(a)][2] for a in ps),
    )


@dataclass
class MetricTable:
    """Forward-pass result for a batch of ``B`` trellises sharing one structure.

    ``metric[k, b, s]`` is the survivor metric into state ``s`` at stage ``k``;
    ``surv[k, b, s]`` the predecessor column it came through; ``delta[k, b, s]``
    the losing candidate's excess metric (``inf`` if there is none).
    """

    metric: np.ndarray
    surv: np.ndarray
    delta: np.ndarray
    tables: StageTables

    @property
    def N(self) -> int:
        return self.metric.shape[0] - 1

    def traceback(self, b: int, stage: int, state: int, states: list, ys: list) -> None:
        """Follow survivors from ``(stage, state)`` back to stage 0, in place."""
        surv = self._surv_l[b]
        ps_l, py_l = self.tables.pred_state_l, self.tables.pred_y_l
        states[stage] = state
        for k in range(stage, 0, -1):
            col = surv[k][state]
            ys[k - 1] = py_l[k - 1][state][col]
            state = ps_l[k - 1][state][col]
            states[k - 1] = state

    def prepare(self) -> None:
        # python lists make the sequential traceback several times faster
        self._surv_l = [self.surv[:, b, :].tolist() for b in range(self.surv.shape[1])]


def viterbi_forward(
    t: DualTrellis,
    received: Sequence[float],
    initial_metrics: np.ndarray,
    amplitude: float = 1.0,
) -> MetricTable:
    """Add-compare-select over all ``N`` stages.

    ``initial_metrics`` has shape ``(S,)`` or ``(B, S)``; use ``inf`` for
    states a path may not start in.
    """
    r = np.asarray(received, dtype=float)
    if len(r) != t.N:
        raise ValueError(f"received length {len(r)} != N={t.N}")
    init = np.atleast_2d(np.asarray(initial_metrics, dtype=float))
    B, S = init.shape
    if S != t.num_states:
        raise ValueError(f"initial metrics need {t.num_states} states, got {S}")
    tabs = stage_tables(t)
    N = t.N
    metric = np.full((N + 1, B, S + 1), INF)
    surv = np.zeros((N + 1, B, S), dtype=np.int8)
    delta = np.empty((N + 1, B, S))
    delta[0] = INF
    metric[0, :, :S] = init
    bm = np.stack([(r - amplitude) ** 2, (r + amplitude) ** 2], axis=1)
    with np.errstate(invalid="ignore"):
        for k in range(N):
            cand = metric[k][:, tabs.gather[k]] + bm[k][tabs.pred_y[k]]
            c0, c1 = cand[..., 0], cand[..., 1]
            pick1 = c1 < c0
            np.minimum(c0, c1, out=metric[k + 1, :, :S])
            surv[k + 1] = pick1
            # nan where both candidates are missing; such states are never on a path
            np.abs(c1 - c0, out=delta[k + 1])
    metric = metric[:, :, :S]
    table = MetricTable(metric, surv, delta, tabs)
    table.prepare()
    return table


@dataclass
class TrellisPath:
    metric: float
    batch: int
    states: list
    ys: list
    rank: int

    @property
    def start(self) -> int:
        return self.states[0]

    @property
    def end(self) -> int:
        return self.states[-1]

    @property
    def is_tail_biting(self) -> bool:
        return self.states[0] == self.states[-1]

    def codeword(self) -> np.ndarray:
        return np.array(self.ys, dtype=np.uint8)


class ListViterbi:
    """Tree-trellis list state: a min-heap of pending paths and detours.

    ``terminals`` are ``(metric, batch, end_state)`` seeds, one per admissible
    final state (the root node's incoming branches).  The best seed is the
    rank-1 path; the remaining seeds count as insertions.
    """

    def __init__(self, table: MetricTable, terminals: Sequence[tuple[float, int, int]]):
        self.table = table
        self.N = table.N
        self.heap: list = []
        self.paths: list[TrellisPath] = []
        self.insertions = 0
        self._count = 0
        seeds = sorted((m, b, s) for m, b, s in terminals if np.isfinite(m))
        for m, b, s in seeds:
            self._push(m, b, -1, self.N, s)
        self.insertions = max(len(seeds) - 1, 0)

    def _push(self, metric: float, b: int, parent: int, stage: int, state: int) -> None:
        heapq.heappush(self.heap, (metric, self._count, b, parent, stage, state))
        self._count += 1

    def __bool__(self) -> bool:
        return bool(self.heap)

    def next_path(self) -> TrellisPath | None:
        """Pop the best pending path, materialize it, and queue its detours."""
        if not self.heap:
            return None
        metric, _, b, parent, stage, state = heapq.heappop(self.heap)
        table = self.table
        N = self.N
        states = [0] * (N + 1)
        ys = [0] * N
        if parent < 0:
            table.traceback(b, N, state, states, ys)
            limit = N
        else:
            par = self.paths[parent]
            states[stage:] = par.states[stage:]
            ys[stage:] = par.ys[stage:]
            s = par.states[stage]
            col = 1 - table._surv_l[b][stage][s]
            ys[stage - 1] = table.tables.pred_y_l[stage - 1][s][col]
            prev = table.tables.pred_state_l[stage - 1][s][col]
            table.traceback(b, stage - 1, prev, states, ys)
            limit = stage - 1
        idx = len(self.paths)
        path = TrellisPath(metric, b, states, ys, idx + 1)
        self.paths.append(path)
        if limit > 0:
            d = table.delta[np.arange(1, limit + 1), b, states[1 : limit + 1]]
            ok = np.nonzero(np.isfinite(d))[0]
            heap, push, count = self.heap, heapq.heappush, self._count
            for i, gap in zip(ok.tolist(), d[ok].tolist()):
                push(heap, (metric + gap, count, b, idx, i + 1, 0))
                count += 1
            self._count = count
            self.insertions += len(ok)
        return path


def slvd_next_path(lv: ListViterbi) -> TrellisPath:
    path = lv.next_path()
    if path is None:
        raise LookupError("list exhausted")
    return path


@dataclass
class DecodeResult:
    data: np.ndarray | None
    status: str
    list_rank: int
    insertions: int
    metric: float
    tb: bool
    wava_early: bool = False
    codeword: np.ndarray | None = field(default=None, repr=False)
    start_state: int | None = None

    @property
    def found(self) -> bool:
        return self.status == FOUND

    def to_json(self) -> dict:
        data_hex = None
        if self.data is not None:
            bits = "".join(str(int(b)) for b in self.data)
            data_hex = "0x" + format(int(bits, 2), "X") if bits else "0x0"
        return {
            "data": data_hex,
            "data_bits": len(self.data) if self.data is not None else 0,
            "status": self.status,
            "L": self.list_rank,
            "I": self.insertions,
            "metric": self.metric,
            "tb": self.tb,
            "wava_early": self.wava_early,
        }


def extract_inputs(ys: Sequence[int], cfg: CodeConfig) -> np.ndarray:
    """The K+m CRC-protected input bits carried by a trellis path."""
    word = np.asarray(ys, dtype=np.uint8).reshape(-1, cfg.n)
    return word[: cfg.data_steps, list(cfg.H.systematic_rails)].reshape(-1)


def _boundary_init(t: DualTrellis, states: Sequence[int], values=None) -> np.ndarray:
    init = np.full(t.num_states, INF)
    init[list(states)] = 0.0 if values is None else values
    return init


def _run_list(
    lv: ListViterbi,
    received,
    cfg: CodeConfig,
    amplitude: float,
    need_tb: bool,
    max_list: int | None,
) -> DecodeResult:
    rank = 0
    while max_list is None or rank < max_list:
        path = lv.next_path()
        if path is None:
            break
        rank += 1
        tb = path.is_tail_biting
        if need_tb and not tb:
            continue
        inputs = extract_inputs(path.ys, cfg)
        if crc_check(inputs, cfg.crc):
            word = path.codeword()
            return DecodeResult(
                data=inputs[: cfg.K],
                status=FOUND,
                list_rank=rank,
                insertions=lv.insertions,
                metric=path_metric(received, word, amplitude),
                tb=tb,
                codeword=word,
                start_state=path.start,
            )
    return DecodeResult(None, EXHAUSTED, max(rank, 1), lv.insertions, INF, False)


def decode_zt(t: DualTrellis, received, cfg: CodeConfig, amplitude: float = 1.0, max_list: int | None = None) -> DecodeResult:
    """List-decode a CRC-ZTCC on the zero-terminated dual trellis."""
    table = viterbi_forward(t, received, _boundary_init(t, t.start_states), amplitude)
    ends = [(table.metric[t.N, 0, s], 0, s) for s in t.end_states]
    return _run_list(ListViterbi(table, ends), received, cfg, amplitude, False, max_list)


def decode_tb_single(t: DualTrellis, received, cfg: CodeConfig, amplitude: float = 1.0, max_list: int | None = None) -> DecodeResult:
    """Single-trellis CRC-TBCC decoding: all start states open, root node at the end,
    paths failing the TB or CRC check are skipped."""
    if not t.root:
        raise ValueError("single-trellis TB decoding needs a root node")
    table = viterbi_forward(t, received, _boundary_init(t, t.start_states), amplitude)
    ends = [(table.metric[t.N, 0, s], 0, s) for s in t.end_states]
    return _run_list(ListViterbi(table, ends), received, cfg, amplitude, True, max_list)


def decode_tb_multi(forest: Sequence[DualTrellis], received, cfg: CodeConfig, amplitude: float = 1.0, max_list: int | None = None) -> DecodeResult:
    """Multi-trellis CRC-TBCC decoding: one pinned trellis per start state and a
    single global heap, so every listed path is tail-biting."""
    base = forest[0]
    init = np.full((len(forest), base.num_states), INF)
    for b, tr in enumerate(forest):
        (s,) = tr.start_states
        init[b, s] = 0.0
    table = viterbi_forward(base, received, init, amplitude)
    ends = [(table.metric[base.N, b, tr.end_states[0]], b, tr.end_states[0]) for b, tr in enumerate(forest)]
    return _run_list(ListViterbi(table, ends), received, cfg, amplitude, True, max_list)


def decode_tb_wava(t: DualTrellis, received, cfg: CodeConfig, amplitude: float = 1.0, max_list: int | None = None) -> DecodeResult:
    """WAVA-preprocessed single-trellis decoding (two wrap-around iterations).

    If the best path of the first iteration is tail-biting and passes the CRC
    it is returned at once.  Otherwise the final metrics seed a second
    iteration and SLVD runs on its metrics until a TB, CRC-passing path.
    """
    if not t.root:
        raise ValueError("WAVA decoding needs a root node")
    N = t.N
    starts = list(t.start_states)
    first = viterbi_forward(t, received, _boundary_init(t, starts), amplitude)
    final = first.metric[N, 0]
    ends = [s for s in t.end_states if np.isfinite(final[s])]
    best = min(ends, key=lambda s: (final[s], s))
    states, ys = [0] * (N + 1), [0] * N
    first.traceback(0, N, best, states, ys)
    inputs = extract_inputs(ys, cfg)
    if states[0] == states[N] and crc_check(inputs, cfg.crc):
        word = np.array(ys, dtype=np.uint8)
        return DecodeResult(
            data=inputs[: cfg.K],
            status=FOUND,
            list_rank=1,
            insertions=0,
            metric=path_metric(received, word, amplitude),
            tb=True,
            wava_early=True,
            codeword=word,
            start_state=states[0],
        )
    wrapped = final[starts] - final[starts].min()
    second = viterbi_forward(t, received, _boundary_init(t, starts, wrapped), amplitude)
    ends2 = [(second.metric[N, 0, s], 0, s) for s in t.end_states]
    return _run_list(ListViterbi(second, ends2), received, cfg, amplitude, True, max_list)
