"""Distance-spectrum-optimal (DSO) CRC search for high-rate ZT and TB codes.

The search has two phases.  Collection gathers irreducible error events
(IEEs) on the primal state machine whose output weight is below a threshold
``d_tilde``.  Reconstruction assembles every codeword of the target length
below that threshold from those events; a CRC candidate leaves a codeword
undetected exactly when the codeword's CRC-protected input bits, read as a
polynomial, are divisible by it.  The winning CRC maximizes the minimum
undetected distance, with ties resolved on the spectrum.

Inputs and outputs of events and paths are carried as ints with the first
bit in the most significant position, matching :func:`algebra.bits_to_int`.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .algebra import BinaryPolynomial, crc_candidates, int_to_bits
from .encoder import ParityCheck, state_machine
from .trellis import build_termination_table

log = logging.getLogger(__name__)


class InsufficientThreshold(RuntimeError):
    def __init__(self, message: str, needed: int):
        super().__init__(message)
        self.needed = needed


@dataclass(frozen=True)
class ErrorEvent:
    start_state: int
    length: int
    inputs: int  # (n-1)*length bits
    weight: int
    outputs: int  # n*length bits

    def input_bits(self, k: int) -> np.ndarray:
        return int_to_bits(self.inputs, k * self.length)

    def output_bits(self, n: int) -> np.ndarray:
        return int_to_bits(self.outputs, n * self.length)


@dataclass
class PathSet:
    """Low-weight codewords: CRC-protected input ints, weights and outputs."""

    input_len: int
    output_len: int
    inputs: list[int] = field(default_factory=list)
    weights: list[int] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.inputs)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(zip(self.inputs, self.weights))

    def add(self, inputs: int, weight: int, outputs: int) -> None:
        self.inputs.append(inputs)
        self.weights.append(weight)
        self.outputs.append(outputs)


@dataclass
class DistanceSpectrum:
    """Undetected codeword counts per distance, exact below ``d_tilde``."""

    counts: dict[int, int]
    d_tilde: int

    @property
    def d_min(self) -> int | None:
        return min(self.counts) if self.counts else None

    def as_list(self) -> list[tuple[int, int]]:
        return sorted(self.counts.items())

    def key(self) -> tuple:
        """Sort key: larger d_min first, then fewer codewords distance by distance."""
        if not self.counts:
            return (-self.d_tilde,)
        d0 = self.d_min
        return (-d0,) + tuple(self.counts.get(d, 0) for d in range(d0, self.d_tilde))


@dataclass
class CRCDesign:
    crc: BinaryPolynomial
    spectrum: DistanceSpectrum
    d_tilde: int
    co_winners: list[BinaryPolynomial]
    num_paths: int
    elapsed: float
    spectra: dict[int, DistanceSpectrum] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "crc_hex": self.crc.to_hex(),
            "d_min": self.spectrum.d_min,
            "spectrum": {str(d): c for d, c in self.spectrum.as_list()},
            "d_tilde_used": self.d_tilde,
            "co_winners": [p.to_hex() for p in self.co_winners],
            "num_paths": self.num_paths,
            "elapsed": round(self.elapsed, 3),
        }


def _min_weight_to(H: ParityCheck, target: int, allowed) -> list[float]:
    """Least output weight from each state to ``target`` through ``allowed`` states."""
    sm = state_machine(H)
    S = sm.num_states
    rev: list[list[tuple[int, int]]] = [[] for _ in range(S)]
    for s in range(S):
        for u in range(sm.num_inputs):
            rev[sm.next_list[s][u]].append((s, sm.weight_list[s][u]))
    best = [math.inf] * S
    best[target] = 0
    pq = [(0, target)]
    while pq:
        w, t = heapq.heappop(pq)
        if w > best[t] or (t != target and not allowed(t)):
            continue
        for s, bw in rev[t]:
            if w + bw < best[s]:
                best[s] = w + bw
                heapq.heappush(pq, (w + bw, s))
    return best


def _collect_loops(H: ParityCheck, sigma: int, d_tilde: int, max_len: int, allowed) -> list[ErrorEvent]:
    sm = state_machine(H)
    k, n = sm.k, H.n
    nxt, wt, out = sm.next_list, sm.weight_list, sm.out
    out_int = [[int("".join(map(str, out[s, u])), 2) for u in range(sm.num_inputs)] for s in range(sm.num_states)]
    to_sigma = _min_weight_to(H, sigma, allowed)
    events: list[ErrorEvent] = []

    def dfs(s: int, w: int, length: int, ins: int, outs: int) -> None:
        for u in range(sm.num_inputs):
            t = nxt[s][u]
            w2 = w + wt[s][u]
            if w2 >= d_tilde:
                continue
            ins2 = (ins << k) | u
            outs2 = (outs << n) | out_int[s][u]
            if t == sigma:
                if w2 > 0:
                    events.append(ErrorEvent(sigma, length + 1, ins2, w2, outs2))
            elif allowed(t) and length + 1 < max_len and w2 + to_sigma[t] < d_tilde:
                dfs(t, w2, length + 1, ins2, outs2)

    dfs(sigma, 0, 0, 0, 0)
    events.sort(key=lambda e: (e.weight, e.length, e.inputs))
    return events


def collect_iee_zt(H: ParityCheck, d_tilde: int, max_len: int | None = None) -> list[ErrorEvent]:
    """Paths that leave state 0 once and rejoin it once, with weight < ``d_tilde``."""
    if d_tilde < 1:
        raise ValueError("d_tilde must be >= 1")
    limit = max_len if max_len is not None else (H.v + 1) * d_tilde + 1
    return _collect_loops(H, 0, d_tilde, limit, lambda s: s != 0)


def collect_iee_tb(H: ParityCheck, d_tilde: int, max_len: int) -> dict[int, list[ErrorEvent]]:
    """IEE(sigma) for every state: loops at sigma whose interior avoids {0..sigma}."""
    return {
        sigma: _collect_loops(H, sigma, d_tilde, max_len, lambda s, sg=sigma: s > sg)
        for sigma in range(1 << H.v)
    }


def _tail_events(H: ParityCheck, d_tilde: int, max_steps: int) -> dict[int, list[tuple[int, int, int]]]:
    """Data-region paths that leave 0 and are still off zero when termination
    starts, completed by the termination table.

    Returns ``{steps: [(data inputs, weight incl. termination, outputs incl. termination)]}``.
    """
    sm = state_machine(H)
    k, n = sm.k, H.n
    table = build_termination_table(H)
    nxt, wt, out = sm.next_list, sm.weight_list, sm.out
    out_int = [[int("".join(map(str, out[s, u])), 2) for u in range(sm.num_inputs)] for s in range(sm.num_states)]
    term_w = [int(o.sum()) for o in table.outputs]
    term_out = [int("".join(map(str, o)), 2) for o in table.outputs]
    tbits = n * table.steps
    S = sm.num_states
    # finish[r][s]: least weight of r more nonzero-state steps plus termination
    finish = [[math.inf] * S for _ in range(max_steps + 1)]
    for s in range(1, S):
        finish[0][s] = term_w[s]
    for r in range(1, max_steps + 1):
        for s in range(1, S):
            finish[r][s] = min(
                (wt[s][u] + finish[r - 1][nxt[s][u]] for u in range(sm.num_inputs) if nxt[s][u] != 0),
                default=math.inf,
            )
    tails: dict[int, list[tuple[int, int, int]]] = {}
    for steps in range(1, max_steps + 1):
        found: list[tuple[int, int, int]] = []

        def dfs(s: int, r: int, w: int, ins: int, outs: int) -> None:
            if r == 0:
                found.append((ins, w + term_w[s], (outs << tbits) | term_out[s]))
                return
            for u in range(sm.num_inputs):
                t = nxt[s][u]
                if t == 0:
                    continue
                w2 = w + wt[s][u]
                if w2 + finish[r - 1][t] < d_tilde:
                    dfs(t, r - 1, w2, (ins << k) | u, (outs << n) | out_int[s][u])

        for u in range(1, sm.num_inputs):
            t = nxt[0][u]
            if t != 0 and wt[0][u] + finish[steps - 1][t] < d_tilde:
                dfs(t, steps - 1, wt[0][u], u, out_int[0][u])
        if found:
            tails[steps] = sorted(found, key=lambda x: x[1])
    return tails


def reconstruct_zt_paths(
    events: Sequence[ErrorEvent], H: ParityCheck, data_steps: int, d_tilde: int
) -> PathSet:
    """All ZT codewords of ``data_steps`` + termination steps with weight < ``d_tilde``.

    Codewords are IEEs separated by zero runs inside the data region, optionally
    followed by one event that is still open when termination begins.
    Inputs cover the data region only.
    """
    k, n = H.n - 1, H.n
    T = build_termination_table(H).steps
    D = data_steps
    tail_out_shift = 0
    paths = PathSet(input_len=k * D, output_len=n * (D + T))
    evs = sorted((e for e in events if e.length <= D and e.weight < d_tilde), key=lambda e: e.weight)
    tails = _tail_events(H, d_tilde, D)

    def rec(p: int, w: int, ins: int, outs: int) -> None:
        # outs holds n*D + n*T bits; events are shifted into place
        if w > 0:
            paths.add(ins, w, outs)
        budget = d_tilde - w
        for q in range(p, D):
            for e in evs:
                if e.weight >= budget:
                    break
                end = q + e.length
                if end > D:
                    continue
                rec(
                    end,
                    w + e.weight,
                    ins | (e.inputs << (k * (D - end))),
                    outs | (e.outputs << (n * (D - end + T))),
                )
            for t_ins, t_w, t_outs in tails.get(D - q, ()):
                if t_w >= budget:
                    break
                paths.add(ins | t_ins, w + t_w, outs | (t_outs << tail_out_shift))

    rec(0, 0, 0, 0)
    return paths


def _rotl(x: int, r: int, width: int) -> int:
    r %= width
    if r == 0:
        return x
    mask = (1 << width) - 1
    return ((x << r) | (x >> (width - r))) & mask


def reconstruct_tb_paths(
    events: dict[int, Sequence[ErrorEvent]], H: ParityCheck, steps: int, d_tilde: int
) -> PathSet:
    """All TB codewords of ``steps`` primal steps with weight < ``d_tilde``.

    For each state ``sigma`` the IEE(sigma) are concatenated into closed paths
    that start at a visit of ``sigma``; each TB path is then generated once
    per circular shift that starts inside its first event, which yields every
    rotation exactly once.  Duplicates are removed on the codeword.
    """
    k, n = H.n - 1, H.n
    L = steps
    ib, ob = k * L, n * L
    paths = PathSet(input_len=ib, output_len=ob)
    seen: set[int] = set()

    def emit(ins: int, w: int, outs: int, first_len: int) -> None:
        for s in range(first_len):
            o = _rotl(outs, n * s, ob)
            if o in seen:
                continue
            seen.add(o)
            paths.add(_rotl(ins, k * s, ib), w, o)

    for sigma, evlist in events.items():
        evs = sorted((e for e in evlist if e.length <= L and e.weight < d_tilde), key=lambda e: e.weight)
        if not evs:
            continue

        def rec(p: int, w: int, ins: int, outs: int, first_len: int) -> None:
            if p == L:
                emit(ins, w, outs, first_len)
                return
            budget = d_tilde - w
            starts = range(p, L) if sigma == 0 else (p,)
            for q in starts:
                if sigma == 0 and q == L:
                    break
                for e in evs:
                    if e.weight >= budget:
                        break
                    end = q + e.length
                    if end > L:
                        continue
                    fl = first_len if first_len else (e.length if q == 0 else 1)
                    rec(
                        end,
                        w + e.weight,
                        ins | (e.inputs << (k * (L - end))),
                        outs | (e.outputs << (n * (L - end))),
                        fl,
                    )
            if sigma == 0 and w > 0:
                # zero run to the end of the block
                emit(ins, w, outs, first_len if first_len else 1)

        rec(0, 0, 0, 0, 0)
    return paths


def _byte_tables(p: int, nbytes: int) -> np.ndarray:
    """``tab[j, b] = (b * x^(8j)) mod p`` for every byte position and value."""
    m = p.bit_length() - 1
    pow_mod = []
    r = 1
    for _ in range(8 * nbytes):
        pow_mod.append(r)
        r <<= 1
        if r >> m & 1:
            r ^= p
    tab = np.zeros((nbytes, 256), dtype=np.int64)
    vals = np.arange(256)
    for j in range(nbytes):
        acc = np.zeros(256, dtype=np.int64)
        for bit in range(8):
            acc ^= np.where((vals >> bit) & 1, pow_mod[8 * j + bit], 0)
        tab[j] = acc
    return tab


def _remainders(byte_mat: np.ndarray, p: int) -> np.ndarray:
    nbytes = byte_mat.shape[1]
    tab = _byte_tables(p, nbytes)
    rem = np.zeros(byte_mat.shape[0], dtype=np.int64)
    for j in range(nbytes):
        # column nbytes-1-j holds bits 8j..8j+7 (big-endian bytes)
        rem ^= tab[j][byte_mat[:, nbytes - 1 - j]]
    return rem


def spectra_for(paths: PathSet, m: int, d_tilde: int) -> dict[int, DistanceSpectrum]:
    """Undetected-distance spectrum of every degree-m candidate."""
    nbytes = max(1, (paths.input_len + 7) // 8)
    if len(paths):
        raw = b"".join(x.to_bytes(nbytes, "big") for x in paths.inputs)
        byte_mat = np.frombuffer(raw, dtype=np.uint8).reshape(len(paths), nbytes)
    else:
        byte_mat = np.zeros((0, nbytes), dtype=np.uint8)
    weights = np.asarray(paths.weights, dtype=np.int64)
    out = {}
    for cand in crc_candidates(m):
        hit = _remainders(byte_mat, cand.bits) == 0
        ws, cs = np.unique(weights[hit & (weights < d_tilde)], return_counts=True)
        out[cand.bits] = DistanceSpectrum({int(w): int(c) for w, c in zip(ws, cs)}, d_tilde)
    return out


def search_dso_crc(paths: PathSet, m: int, d_tilde: int) -> CRCDesign:
    """Pick the degree-m CRC with the largest minimum undetected distance.

    Ties go to the candidate with fewer codewords at d_min, then d_min+1, and
    so on; a remaining tie goes to the smallest polynomial, and all tied
    candidates are reported.
    """
    t0 = time.perf_counter()
    spectra = spectra_for(paths, m, d_tilde)
    blind = [p for p, s in spectra.items() if not s.counts]
    if blind:
        raise InsufficientThreshold(
            f"{len(blind)} candidate(s) have no undetected path below d_tilde={d_tilde}",
            needed=d_tilde + 1,
        )
    ranked = sorted(spectra, key=lambda p: (spectra[p].key(), p))
    best = ranked[0]
    co = [p for p in ranked if spectra[p].key() == spectra[best].key()]
    return CRCDesign(
        crc=BinaryPolynomial(best),
        spectrum=spectra[best],
        d_tilde=d_tilde,
        co_winners=[BinaryPolynomial(p) for p in co],
        num_paths=len(paths),
        elapsed=time.perf_counter() - t0,
        spectra={p: spectra[p] for p in ranked},
    )


def free_distance(H: ParityCheck, limit: int = 64) -> int:
    """Least weight of a ZT irreducible error event."""
    for d in range(2, limit + 1):
        evs = collect_iee_zt(H, d)
        if evs:
            return min(e.weight for e in evs)
    raise RuntimeError("no error event found below the weight limit")


def low_weight_paths(H: ParityCheck, K: int, m: int, mode: str, d_tilde: int) -> PathSet:
    k = H.n - 1
    if (K + m) % k:
        raise ValueError("K+m must be divisible by n-1")
    steps = (K + m) // k
    if mode.upper() == "ZT":
        return reconstruct_zt_paths(collect_iee_zt(H, d_tilde, max_len=steps), H, steps, d_tilde)
    return reconstruct_tb_paths(collect_iee_tb(H, d_tilde, max_len=steps), H, steps, d_tilde)


def design_crc(
    H: ParityCheck,
    K: int,
    m: int,
    mode: str,
    d_tilde: int | None = None,
    max_d_tilde: int | None = None,
) -> CRCDesign:
    """Full DSO design with automatic threshold growth.

    Starting from ``d_free + 2`` (or the given ``d_tilde``), the threshold is
    raised one unit at a time until every candidate has an undetected codeword
    below it and the winner is separated from all other candidates, or
    ``max_d_tilde`` is reached.  A fixed ``d_tilde`` runs exactly once.
    """
    t0 = time.perf_counter()
    fixed = d_tilde is not None
    dt = d_tilde if fixed else free_distance(H) + 2
    cap = max_d_tilde if max_d_tilde is not None else dt + 12
    while True:
        paths = low_weight_paths(H, K, m, mode, dt)
        log.info("d_tilde=%d: %d paths", dt, len(paths))
        try:
            design = search_dso_crc(paths, m, dt)
        except InsufficientThreshold:
            if fixed or dt >= cap:
                raise
            dt += 1
            continue
        if len(design.co_winners) == 1 or fixed or dt >= cap:
            design.elapsed = time.perf_counter() - t0
            return design
        dt += 1
