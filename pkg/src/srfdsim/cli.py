"""Command-line entry point: ``srfdsim <experiment> [--config PATH] [--out PATH] ...``.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
simulation itself fails.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config, harness
from .config import ConfigError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _summary_characterize(rep) -> str:
    parts = [f"{g.loss_db:g} dB delta={g.delta:.4f} UI" for g in rep.groups]
    return "characterize: " + "; ".join(parts)


def _summary_scurve(rep) -> str:
    parts = []
    for loss in sorted({p.loss_db for p in rep.points}):
        lo, hi = harness.detection_range(rep.curve(loss))
        parts.append(f"{loss:g} dB range {lo * 100:+.0f}%..{hi * 100:+.0f}%")
    return f"scurve: {len(rep.points)} points; " + "; ".join(parts)


def _summary_acquire(rep) -> str:
    return (f"acquire: f_err {rep.initial_f_err_ppm:+.1f} -> {rep.final_f_err_ppm:+.1f} ppm "
            f"in {rep.lock_dumps} dumps ({rep.lock_time_s * 1e6:.2f} us), "
            f"BER {rep.ber_errors}/{rep.ber_bits}")


def _summary_drift(rep) -> str:
    return (f"drift: track {'on' if rep.track else 'off'}, {rep.track_pulses} track pulses, "
            f"max |f_err| after transient {rep.max_err_after_transient_ppm:.1f} ppm, "
            f"BER {rep.ber_errors}/{rep.ber_bits}")


def _summary_ber(rep) -> str:
    return f"ber: {rep.errors}/{rep.bits} errors at {rep.f_err_ppm:+.1f} ppm"


COMMANDS = {
    "characterize": (harness.CharacterizeConfig, _summary_characterize),
    "scurve": (harness.ScurveConfig, _summary_scurve),
    "acquire": (harness.AcquireConfig, _summary_acquire),
    "drift": (harness.DriftConfig, _summary_drift),
    "ber": (harness.BerConfig, _summary_ber),
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="srfdsim", description="Reference-less CDR / SRFD behavioral simulator")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="key = value config file (defaults if omitted)")
        sp.add_argument("--out", type=Path, help="CSV output path (stdout if omitted)")
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--threads", type=int, default=1)
    return ap


def _run(name: str, cfg, seed: int, threads: int):
    if name == "scurve":
        return harness.sweep_scurve(cfg, seed=seed, threads=threads)
    if name == "characterize":
        return harness.run_characterize(cfg, seed)
    if name == "acquire":
        return harness.run_acquire(cfg, seed)
    if name == "drift":
        return harness.run_drift_test(cfg, seed)
    return harness.run_ber(cfg, seed)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cls, summarize = COMMANDS[args.command]
    try:
        cfg = cls() if args.config is None else config.load(cls, args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (ConfigError, ValueError) as exc:
        print(f"srfdsim: config error: {exc}", file=sys.stderr)
        return 1
    try:
        rep = _run(args.command, cfg, args.seed, args.threads)
        text = rep.to_csv()
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.write_text(text)
    except Exception as exc:  # any simulation failure maps to status 2
        print(f"srfdsim: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(summarize(rep), file=sys.stderr if args.out is None else sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
