"""BI-AWGN Monte Carlo frame-error simulation and the decoding complexity model.

Every trial draws its data bits and its noise from a Philox generator keyed by
``(seed, trial)``, so a trial can be replayed on its own and paired across
decoders.  Trials run in fixed-size batches whose results are merged in trial
order; the stop rule cuts at the exact trial that reaches the error target,
which makes the output independent of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .decoder import (
    EXHAUSTED,
    DecodeResult,
    decode_tb_multi,
    decode_tb_single,
    decode_tb_wava,
    decode_zt,
)
from .encoder import CodeConfig, encode
from .trellis import augment_root_node, build_dual_trellis, build_multi_trellis_forest

VARIANTS = ("zt", "tb_single", "tb_multi", "tb_wava")
BATCH = 32


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    seed: int = 0

    @property
    def amplitude(self) -> float:
        return 10.0 ** (self.snr_db / 20.0)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial must be non-negative")
    key = ((seed & (2**64 - 1)) << 64) | (trial & (2**64 - 1))
    return np.random.Generator(np.random.Philox(key=key))


def trial_data(cfg: CodeConfig, chan: ChannelConfig, trial: int) -> tuple[np.ndarray, np.random.Generator]:
    rng = trial_rng(chan.seed, trial)
    return rng.integers(0, 2, cfg.K, dtype=np.uint8), rng


def channel_transmit(
    codeword: Sequence[int], chan: ChannelConfig, trial: int, rng: np.random.Generator | None = None
) -> np.ndarray:
    """BPSK map ``b -> A(1-2b)`` plus unit-variance Gaussian noise.

    Without ``rng`` the noise comes from the ``(seed, trial)`` stream directly.
    """
    if rng is None:
        rng = trial_rng(chan.seed, trial)
    word = np.asarray(codeword, dtype=np.float64)
    return chan.amplitude * (1.0 - 2.0 * word) + rng.standard_normal(word.shape[0])


def make_decoder(cfg: CodeConfig, variant: str) -> Callable[..., DecodeResult]:
    """Decoder closure ``f(received, amplitude, max_list)`` for one code and variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown decoder variant {variant!r}; expected one of {VARIANTS}")
    if (variant == "zt") != (cfg.mode == "ZT"):
        raise ValueError(f"decoder variant {variant!r} does not match code mode {cfg.mode}")
    if variant == "zt":
        t = build_dual_trellis(cfg.H, cfg.N, zero_terminated=True)
        return lambda r, a, cap=None: decode_zt(t, r, cfg, a, cap)
    if variant == "tb_multi":
        forest = build_multi_trellis_forest(cfg.H, cfg.N)
        return lambda r, a, cap=None: decode_tb_multi(forest, r, cfg, a, cap)
    t = augment_root_node(build_dual_trellis(cfg.H, cfg.N))
    fn = decode_tb_single if variant == "tb_single" else decode_tb_wava
    return lambda r, a, cap=None: fn(t, r, cfg, a, cap)


@dataclass
class TrialRecord:
    trial: int
    error: bool
    L: int
    I: int
    wava_early: bool = False
    tb: bool = False
    undetected: bool = False
    exhausted: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def run_trial(
    cfg: CodeConfig,
    decoder: Callable[..., DecodeResult],
    chan: ChannelConfig,
    trial: int,
    max_list: int | None = None,
) -> tuple[TrialRecord, DecodeResult]:
    data, rng = trial_data(cfg, chan, trial)
    received = channel_transmit(encode(data, cfg), chan, trial, rng)
    res = decoder(received, chan.amplitude, max_list)
    exhausted = res.status == EXHAUSTED
    wrong = exhausted or not np.array_equal(res.data, data)
    rec = TrialRecord(
        trial=trial,
        error=bool(wrong),
        L=int(res.list_rank),
        I=int(res.insertions),
        wava_early=bool(res.wava_early),
        tb=bool(res.tb),
        undetected=bool(wrong and not exhausted),
        exhausted=exhausted,
    )
    return rec, res


@dataclass(frozen=True)
class ComplexityModel:
    c_ssv: float
    c_trace: float
    c_list: float
    c_slvd: float
    c_wava: float = 0.0


def _c_list(E_I: float, c2: float) -> float:
    return c2 * E_I * math.log2(E_I) if E_I > 1 else 0.0


def complexity_model(
    cfg: CodeConfig,
    variant: str,
    E_L: float,
    E_I: float,
    P_wava: float = 0.0,
    c1: float = 1.0,
    c2: float = 1.0,
) -> ComplexityModel:
    """Closed-form operation counts per decoded frame.

    For the WAVA variant ``E_L`` and ``E_I`` describe the trials that needed
    the second iteration; ``P_wava`` is the fraction of such trials.
    """
    Km, v = cfg.K + cfg.m, cfg.v
    S = 2 ** (v + 1)
    L1 = max(E_L - 1.0, 0.0)
    if variant == "zt":
        c_ssv = (S - 2) + 1.5 * (S - 2) + 1.5 * (Km - v) * S + c1 * (2 * (Km + v) + 1.5 * Km)
        c_trace = c1 * L1 * (2 * (Km + v) + 1.5 * Km)
    elif variant in ("tb_single", "tb_wava"):
        c_ssv = 1.5 * Km * S + 2**v + 3.5 * c1 * Km
        c_trace = 3.5 * c1 * L1 * Km
    elif variant == "tb_multi":
        c_ssv = 2**v * (1.5 * Km * S) + 3.5 * c1 * Km
        c_trace = 3.5 * c1 * L1 * Km
    else:
        raise ValueError(f"unknown decoder variant {variant!r}")
    c_list = _c_list(E_I, c2)
    if variant == "tb_wava":
        c_wava = 1.5 * Km * S + 2**v
        return ComplexityModel(c_ssv, c_trace, c_list, c_ssv + P_wava * (c_wava + c_trace + c_list), c_wava)
    return ComplexityModel(c_ssv, c_trace, c_list, c_ssv + c_trace + c_list)


@dataclass
class SimSummary:
    snr_db: float
    variant: str
    trials: int = 0
    errors: int = 0
    undetected: int = 0
    exhausted: int = 0
    sum_L: int = 0
    max_L: int = 0
    sum_I: int = 0
    wava_second: int = 0
    sum_L_second: int = 0
    sum_I_second: int = 0
    complexity: ComplexityModel | None = field(default=None, repr=False)

    def add(self, rec: TrialRecord) -> None:
        self.trials += 1
        self.errors += rec.error
        self.undetected += rec.undetected
        self.exhausted += rec.exhausted
        self.sum_L += rec.L
        self.max_L = max(self.max_L, rec.L)
        self.sum_I += rec.I
        if self.variant == "tb_wava" and not rec.wava_early:
            self.wava_second += 1
            self.sum_L_second += rec.L
            self.sum_I_second += rec.I

    @property
    def fer(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def fer_ci95(self) -> float:
        """Normal-approximation half width of the 95% interval."""
        if not self.trials:
            return 0.0
        p = self.fer
        return 1.96 * math.sqrt(p * (1 - p) / self.trials)

    @property
    def fer_upper95(self) -> float:
        if not self.trials:
            return 1.0
        if self.errors == 0:
            return 3.0 / self.trials
        return min(1.0, self.fer + self.fer_ci95)

    @property
    def mean_L(self) -> float:
        return self.sum_L / self.trials if self.trials else 0.0

    @property
    def mean_I(self) -> float:
        return self.sum_I / self.trials if self.trials else 0.0

    @property
    def p_wava(self) -> float:
        if self.variant != "tb_wava" or not self.trials:
            return 0.0
        return self.wava_second / self.trials

    def finalize(self, cfg: CodeConfig) -> "SimSummary":
        if self.variant == "tb_wava":
            k = self.wava_second
            E_L = self.sum_L_second / k if k else 1.0
            E_I = self.sum_I_second / k if k else 0.0
            self.complexity = complexity_model(cfg, self.variant, E_L, E_I, self.p_wava)
        else:
            self.complexity = complexity_model(cfg, self.variant, self.mean_L, self.mean_I)
        return self

    def to_json(self) -> dict:
        c = self.complexity
        return {
            "snr_db": self.snr_db,
            "variant": self.variant,
            "trials": self.trials,
            "errors": self.errors,
            "fer": self.fer,
            "fer_ci95": self.fer_ci95,
            "fer_upper95": self.fer_upper95,
            "undetected": self.undetected,
            "list_cap_hits": self.exhausted,
            "mean_L": self.mean_L,
            "max_L": self.max_L,
            "mean_I": self.mean_I,
            "p_wava": self.p_wava,
            "c_ssv": c.c_ssv if c else None,
            "c_trace": c.c_trace if c else None,
            "c_list": c.c_list if c else None,
            "c_wava": c.c_wava if c else None,
            "c_slvd": c.c_slvd if c else None,
        }


# worker-process state, set once per process by _init_worker
_WORKER: dict = {}


def _init_worker(cfg: CodeConfig, variant: str, max_list: int | None) -> None:
    _WORKER.update(cfg=cfg, variant=variant, max_list=max_list, decoder=make_decoder(cfg, variant))


def _run_batch(args: tuple[ChannelConfig, int, int]) -> list[TrialRecord]:
    chan, start, stop = args
    w = _WORKER
    return [run_trial(w["cfg"], w["decoder"], chan, t, w["max_list"])[0] for t in range(start, stop)]


def _batches(chan: ChannelConfig, max_trials: int) -> Iterator[tuple[ChannelConfig, int, int]]:
    for start in range(0, max_trials, BATCH):
        yield chan, start, min(start + BATCH, max_trials)


def iter_trials(
    cfg: CodeConfig,
    variant: str,
    chan: ChannelConfig,
    max_trials: int,
    workers: int = 1,
    max_list: int | None = None,
) -> Iterator[TrialRecord]:
    """Trial records in trial order; stop consuming to stop early."""
    if workers <= 1:
        _init_worker(cfg, variant, max_list)
        for batch in _batches(chan, max_trials):
            yield from _run_batch(batch)
        return
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, variant, max_list)) as pool:
        pending = _batches(chan, max_trials)
        window: list = []
        try:
            for batch in pending:
                window.append(pool.submit(_run_batch, batch))
                if len(window) >= 2 * workers:
                    yield from window.pop(0).result()
            while window:
                yield from window.pop(0).result()
        finally:
            for fut in window:
                fut.cancel()


def run_fer_simulation(
    cfg: CodeConfig,
    variant: str,
    snrs: Iterable[float],
    seed: int = 0,
    min_errors: int = 100,
    max_trials: int = 10_000_000,
    workers: int = 1,
    max_list: int | None = None,
    on_trial: Callable[[float, TrialRecord], None] | None = None,
) -> list[SimSummary]:
    """FER and list statistics per SNR point.

    Each point stops after the trial that brings the error count to
    ``min_errors``, or after ``max_trials``.
    """
    out = []
    for snr in snrs:
        chan = ChannelConfig(float(snr), seed)
        summary = SimSummary(float(snr), variant)
        for rec in iter_trials(cfg, variant, chan, max_trials, workers, max_list):
            summary.add(rec)
            if on_trial is not None:
                on_trial(chan.snr_db, rec)
            if summary.errors >= min_errors:
                break
        out.append(summary.finalize(cfg))
    return out


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def union_bound(spectrum, snr_db: float) -> float:
    """Truncated union bound on the ML frame error rate.

    ``spectrum`` maps output distance to codeword count (a mapping or an
    object with ``counts``).  Two BPSK words at Hamming distance ``d`` are
    ``2A*sqrt(d)`` apart, so with unit noise their pairwise error
    probability is ``Q(A*sqrt(d))``.
    """
    counts = getattr(spectrum, "counts", spectrum)
    A = 10.0 ** (snr_db / 20.0)
    return sum(c * q_function(A * math.sqrt(d)) for d, c in counts.items())


def default_workers() -> int:
    return os.cpu_count() or 1
