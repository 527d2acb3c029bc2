"""Command-line entry point: ``dualslvd <subcommand> ...``.

Subcommands print JSON, CSV or DOT on stdout (or to ``--out``); diagnostics
go to stderr.  Exit status is 0 on success, 2 for usage and configuration
errors, 1 for failures at run time.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .algebra import PolynomialError, bits_to_int, int_to_bits, parse_poly
from .crcdesign import InsufficientThreshold, design_crc
from .encoder import CodeConfig, ConfigError, ParityCheck, encode, tb_encode
from .sim import VARIANTS, ChannelConfig, make_decoder, run_fer_simulation, trial_data
from .trellis import build_dual_trellis, to_dot

CSV_SCHEMA = "dualslvd-sim-csv/1"
CSV_COLUMNS = (
    "snr_db", "trials", "errors", "fer", "fer_ci95", "mean_L", "max_L", "mean_I",
    "p_wava", "c_ssv", "c_trace", "c_list", "c_slvd",
)

log = logging.getLogger("dualslvd")


class UsageError(Exception):
    pass


@dataclass
class StopRule:
    min_errors: int = 100
    max_trials: int = 10_000_000
    max_list: int | None = None


@dataclass
class RunConfig:
    code: CodeConfig
    variant: str
    channel: ChannelConfig
    snr_points: list[float] = field(default_factory=list)
    stop: StopRule = field(default_factory=StopRule)
    csv_path: str | None = None
    trial_log: str | None = None

    def to_json(self) -> dict:
        c = self.code
        return {
            "code": {
                "H": c.H.to_octal(),
                "n": c.n,
                "v": c.v,
                "K": c.K,
                "m": c.m,
                "crc": c.crc.to_hex(),
                "mode": c.mode,
            },
            "decoder": self.variant,
            "channel": {"seed": self.channel.seed},
            "snr_db": list(self.snr_points),
            "stop": {
                "min_errors": self.stop.min_errors,
                "max_trials": self.stop.max_trials,
                "max_list": self.stop.max_list,
            },
            "output": {"csv": self.csv_path, "trial_log": self.trial_log},
        }


def _check_keys(obj: Any, path: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    missing = sorted(required - obj.keys())
    if missing:
        raise ConfigError(f"{path}.{missing[0]}: required field missing")
    extra = sorted(obj.keys() - required - optional)
    if extra:
        raise ConfigError(f"{path}.{extra[0]}: unknown field")
    return obj


def _int(obj: dict, key: str, path: str, minimum: int = 0, default: Any = ...) -> Any:
    if key not in obj:
        return default
    val = obj[key]
    if val is None and default is None:
        return None
    if not isinstance(val, int) or isinstance(val, bool) or val < minimum:
        raise ConfigError(f"{path}.{key}: expected an integer >= {minimum}")
    return val


def _parse_H(value: Any, path: str) -> ParityCheck:
    try:
        if isinstance(value, str):
            return ParityCheck.from_octal(value)
        if isinstance(value, list):
            return ParityCheck.from_octal([str(x) for x in value])
    except (ValueError, PolynomialError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}: expected octal polynomials such as \"33,25,37,31\"")


def parse_code(obj: Any, path: str = "code") -> CodeConfig:
    _check_keys(obj, path, {"H", "K", "m", "crc", "mode"}, {"n", "v"})
    H = _parse_H(obj["H"], f"{path}.H")
    for key, actual in (("n", H.n), ("v", H.v)):
        if key in obj and obj[key] != actual:
            raise ConfigError(f"{path}.{key}: {obj[key]} does not match H (which gives {actual})")
    K = _int(obj, "K", path, 1)
    m = _int(obj, "m", path, 1)
    if not isinstance(obj["crc"], str):
        raise ConfigError(f"{path}.crc: expected a hex string such as \"0x9\"")
    try:
        crc = parse_poly(obj["crc"], "hex")
    except PolynomialError as exc:
        raise ConfigError(f"{path}.crc: {exc}") from None
    mode = obj["mode"]
    if not isinstance(mode, str) or mode.upper() not in ("ZT", "TB"):
        raise ConfigError(f"{path}.mode: expected \"ZT\" or \"TB\"")
    if (K + m) % (H.n - 1):
        raise ConfigError(
            f"{path}: K+m = {K + m} must be divisible by n-1 = {H.n - 1} "
            "so the message fills whole encoder steps"
        )
    try:
        return CodeConfig(H=H, K=K, m=m, crc=crc, mode=mode.upper())
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_run_config(obj: Any) -> RunConfig:
    _check_keys(obj, "$", {"code", "decoder"}, {"channel", "snr_db", "stop", "output"})
    code = parse_code(obj["code"], "$.code")
    variant = obj["decoder"]
    if variant not in VARIANTS:
        raise ConfigError(f"$.decoder: expected one of {', '.join(VARIANTS)}")
    if (variant == "zt") != (code.mode == "ZT"):
        raise ConfigError(f"$.decoder: variant {variant!r} is incompatible with mode {code.mode}")
    chan = _check_keys(obj.get("channel", {}), "$.channel", set(), {"seed"})
    seed = _int(chan, "seed", "$.channel", 0, 0)
    snrs = obj.get("snr_db", [])
    if isinstance(snrs, (int, float)) and not isinstance(snrs, bool):
        snrs = [snrs]
    if not isinstance(snrs, list) or not all(
        isinstance(s, (int, float)) and not isinstance(s, bool) and math.isfinite(s) for s in snrs
    ):
        raise ConfigError("$.snr_db: expected a list of finite numbers")
    st = _check_keys(obj.get("stop", {}), "$.stop", set(), {"min_errors", "max_trials", "max_list"})
    stop = StopRule(
        min_errors=_int(st, "min_errors", "$.stop", 1, 100),
        max_trials=_int(st, "max_trials", "$.stop", 1, 10_000_000),
        max_list=_int(st, "max_list", "$.stop", 1, None),
    )
    out = _check_keys(obj.get("output", {}), "$.output", set(), {"csv", "trial_log"})
    for key in ("csv", "trial_log"):
        if out.get(key) is not None and not isinstance(out[key], str):
            raise ConfigError(f"$.output.{key}: expected a path string or null")
    return RunConfig(
        code=code,
        variant=variant,
        channel=ChannelConfig(float(snrs[0]) if snrs else 0.0, seed),
        snr_points=[float(s) for s in snrs],
        stop=stop,
        csv_path=out.get("csv"),
        trial_log=out.get("trial_log"),
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_run_config(obj)


def _fmt(x: float | int | None) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return f"{x:.6g}"


def write_csv(summaries, run: RunConfig, stream) -> None:
    c = run.code
    stream.write(
        f"# {CSV_SCHEMA} dualslvd={__version__} H={c.H.to_octal()} K={c.K} m={c.m} "
        f"crc={c.crc.to_hex()} mode={c.mode} decoder={run.variant} seed={run.channel.seed}\n"
    )
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        j = s.to_json()
        w.writerow([_fmt(s.snr_db), s.trials, s.errors] + [_fmt(j[k]) for k in CSV_COLUMNS[3:]])


def _parse_snrs(values: Sequence[str] | None) -> list[float] | None:
    if not values:
        return None
    out = []
    for v in values:
        for part in v.split(","):
            if part.strip():
                out.append(float(part))
    return out


def cmd_simulate(args) -> int:
    run = load_config(args.config)
    snrs = _parse_snrs(args.snr) or run.snr_points
    if not snrs:
        raise UsageError("no SNR points: pass --snr or set snr_db in the config")
    if args.seed is not None:
        run.channel = ChannelConfig(run.channel.snr_db, args.seed)
    stop = run.stop
    max_trials = args.max_trials or stop.max_trials
    min_errors = args.min_errors or stop.min_errors
    log_path = args.trial_log or run.trial_log
    log_file = open(log_path, "w") if log_path else None

    def on_trial(snr, rec):
        log_file.write(json.dumps({"snr_db": snr, **rec.to_json()}, sort_keys=True) + "\n")

    try:
        summaries = run_fer_simulation(
            run.code,
            run.variant,
            snrs,
            seed=run.channel.seed,
            min_errors=min_errors,
            max_trials=max_trials,
            workers=args.workers,
            max_list=stop.max_list,
            on_trial=on_trial if log_file else None,
        )
    finally:
        if log_file:
            log_file.close()
    out_path = args.out or run.csv_path
    if out_path:
        with open(out_path, "w", newline="") as fh:
            write_csv(summaries, run, fh)
    else:
        write_csv(summaries, run, sys.stdout)
    return 0


def cmd_design_crc(args) -> int:
    H = ParityCheck.from_octal(args.H)
    if args.n is not None and args.n != H.n:
        raise UsageError(f"--n {args.n} does not match H (n={H.n})")
    if args.v is not None and args.v != H.v:
        raise UsageError(f"--v {args.v} does not match H (v={H.v})")
    if (args.K + args.m) % (H.n - 1):
        raise UsageError(f"K+m = {args.K + args.m} must be divisible by n-1 = {H.n - 1}")
    try:
        design = design_crc(H, args.K, args.m, args.mode.upper(), args.d_tilde, args.max_d_tilde)
    except InsufficientThreshold as exc:
        print(f"error: {exc}; retry with --d-tilde {exc.needed} or larger", file=sys.stderr)
        return 1
    _emit(json.dumps(design.to_json()) + "\n", args.out)
    return 0


def _read_data(args, cfg: CodeConfig) -> np.ndarray:
    if args.data_bits is not None:
        bits = [c for c in args.data_bits if c in "01"]
        if len(bits) != cfg.K:
            raise UsageError(f"--data-bits has {len(bits)} bits, expected K={cfg.K}")
        return np.array([int(c) for c in bits], dtype=np.uint8)
    if args.data is not None:
        try:
            value = int(args.data, 16)
        except ValueError:
            raise UsageError(f"--data {args.data!r} is not hex") from None
        if value >> cfg.K:
            raise UsageError(f"--data has more than K={cfg.K} bits")
        return int_to_bits(value, cfg.K)
    return trial_data(cfg, ChannelConfig(0.0, args.seed), args.trial)[0]


def cmd_encode(args) -> int:
    run = load_config(args.config)
    cfg = run.code
    data = _read_data(args, cfg)
    word = encode(data, cfg)
    out = {
        "data": f"0x{bits_to_int(data):X}",
        "data_bits": "".join(map(str, data)),
        "codeword": "".join(map(str, word)),
        "N": int(word.shape[0]),
    }
    if cfg.mode == "TB":
        out["start_state"] = tb_encode(data, cfg)[1]
    _emit(json.dumps(out) + "\n", args.out)
    return 0


def _read_received(path: str, fmt: str, N: int) -> np.ndarray:
    try:
        if fmt == "binary":
            r = np.fromfile(path, dtype="<f8")
        else:
            text = Path(path).read_text().replace(",", " ")
            r = np.array([float(x) for x in text.split()], dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read received values from {path}: {exc}") from None
    if r.shape[0] != N:
        raise UsageError(f"{path} holds {r.shape[0]} values, expected N={N}")
    return r


def cmd_decode(args) -> int:
    run = load_config(args.config)
    cfg = run.code
    variant = args.variant or run.variant
    received = _read_received(args.received, args.format, cfg.N)
    snr = args.snr if args.snr is not None else (run.snr_points[0] if run.snr_points else 0.0)
    try:
        decoder = make_decoder(cfg, variant)
    except ValueError as exc:
        raise UsageError(f"--variant: {exc}") from None
    res = decoder(received, ChannelConfig(snr).amplitude, args.max_list or run.stop.max_list)
    _emit(json.dumps(res.to_json()) + "\n", args.out)
    return 0


def cmd_dump_trellis(args) -> int:
    if args.config:
        H = load_config(args.config).code.H
    elif args.H:
        H = ParityCheck.from_octal(args.H)
    else:
        raise UsageError("pass --H or --config")
    _emit(to_dot(build_dual_trellis(H, H.n)), args.out)
    return 0


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dualslvd",
        description="CRC-aided list decoding of high-rate convolutional codes",
        allow_abbrev=False,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    d = sub.add_parser("design-crc", help="search the distance-spectrum-optimal CRC")
    d.add_argument("--H", required=True, help="octal parity polynomials, e.g. 33,25,37,31")
    d.add_argument("--v", type=int, help="memory (checked against H)")
    d.add_argument("--n", type=int, help="output count (checked against H)")
    d.add_argument("--K", type=int, required=True)
    d.add_argument("--m", type=int, required=True)
    d.add_argument("--mode", required=True, choices=("zt", "tb", "ZT", "TB"))
    d.add_argument("--d-tilde", type=int, help="fixed weight threshold (default: grow automatically)")
    d.add_argument("--max-d-tilde", type=int, help="upper limit for automatic growth")
    d.add_argument("--out")
    d.set_defaults(func=cmd_design_crc)

    s = sub.add_parser("simulate", help="Monte Carlo FER and complexity, CSV output")
    s.add_argument("--config", required=True)
    s.add_argument("--snr", action="append", help="SNR in dB; repeat or comma-separate")
    s.add_argument("--max-trials", type=int)
    s.add_argument("--min-errors", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--trial-log", help="write one JSON line per trial")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("encode", help="CRC-append and encode one message")
    e.add_argument("--config", required=True)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--data", help="K data bits as hex, first bit most significant")
    g.add_argument("--data-bits", help="K data bits as a 0/1 string")
    e.add_argument("--seed", type=int, default=0, help="random message seed when no data is given")
    e.add_argument("--trial", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_encode)

    c = sub.add_parser("decode", help="list-decode one received frame, JSON output")
    c.add_argument("--config", required=True)
    c.add_argument("--received", required=True, help="file of N channel values")
    c.add_argument("--format", choices=("text", "binary"), default="text",
                   help="whitespace/comma separated text, or little-endian float64")
    c.add_argument("--snr", type=float, help="SNR in dB for the metric scale")
    c.add_argument("--variant", choices=VARIANTS)
    c.add_argument("--max-list", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_decode)

    t = sub.add_parser("dump-trellis", help="one period of the dual trellis as Graphviz DOT")
    t.add_argument("--H", help="octal parity polynomials")
    t.add_argument("--config")
    t.add_argument("--out")
    t.set_defaults(func=cmd_dump_trellis)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, PolynomialError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report, do not trace back
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
