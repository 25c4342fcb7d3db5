"""Experiment result records and their CSV form.

Floats are rounded to 9 significant digits when a record is built, so a
record written with ``to_csv`` parses back to an equal value.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields


def sig9(x: float) -> float:
    return float(f"{x:.9g}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _round_floats(obj) -> None:
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, float):
            object.__setattr__(obj, f.name, sig9(v))


def _write(header: list[str], rows, meta: dict) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={_fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _read(text: str, header: list[str]) -> tuple[dict[str, str], list[list[str]]]:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0] != header:
        raise ValueError(f"expected CSV header {','.join(header)}")
    return meta, rows[1:]


def _bool(s: str) -> bool:
    return s == "1"


@dataclass(frozen=True)
class GroupCharacterization:
    """Per-group BBPD crossing phase (UI) and slope of P(UP) there (1/UI)."""

    loss_db: float
    theta_g1: float
    theta_g2: float
    gain_g1: float
    gain_g2: float

    def __post_init__(self):
        _round_floats(self)

    @property
    def delta(self) -> float:
        d = abs(self.theta_g2 - self.theta_g1) % 1.0
        return min(d, 1.0 - d)


@dataclass
class CharacterizeReport:
    HEADER = ["loss_db", "theta_g1_ui", "theta_g2_ui", "gain_g1_per_ui", "gain_g2_per_ui",
              "delta_ui"]
    groups: list[GroupCharacterization]
    seed: int = 1

    def to_csv(self) -> str:
        rows = [(g.loss_db, g.theta_g1, g.theta_g2, g.gain_g1, g.gain_g2, g.delta)
                for g in self.groups]
        return _write(self.HEADER, rows, {"seed": self.seed})

    @classmethod
    def from_csv(cls, text: str) -> "CharacterizeReport":
        meta, rows = _read(text, cls.HEADER)
        groups = [GroupCharacterization(*(float(x) for x in r[:5])) for r in rows]
        return cls(groups, int(meta.get("seed", 1)))


@dataclass(frozen=True)
class ScurvePoint:
    f_err: float
    loss_db: float
    mean_dump: float
    up: int
    dn: int
    none: int

    def __post_init__(self):
        _round_floats(self)

    @property
    def dumps(self) -> int:
        return self.up + self.dn + self.none


@dataclass
class ScurveReport:
    HEADER = ["f_err", "loss_db", "mean_dump", "up", "dn", "none"]
    points: list[ScurvePoint]
    seed: int = 1
    edge_period_ui: int = 2
    dump_ticks: int = 100_000

    def to_csv(self) -> str:
        rows = [(p.f_err, p.loss_db, p.mean_dump, p.up, p.dn, p.none) for p in self.points]
        meta = {"seed": self.seed, "edge_period_ui": self.edge_period_ui,
                "dump_ticks": self.dump_ticks}
        return _write(self.HEADER, rows, meta)

    @classmethod
    def from_csv(cls, text: str) -> "ScurveReport":
        meta, rows = _read(text, cls.HEADER)
        pts = [ScurvePoint(float(r[0]), float(r[1]), float(r[2]), int(r[3]), int(r[4]),
                           int(r[5])) for r in rows]
        return cls(pts, int(meta.get("seed", 1)), int(meta.get("edge_period_ui", 2)),
                   int(meta.get("dump_ticks", 100_000)))

    def curve(self, loss_db: float) -> list[ScurvePoint]:
        return sorted((p for p in self.points if p.loss_db == loss_db), key=lambda p: p.f_err)


@dataclass(frozen=True)
class AcqRow:
    stage: str
    dump_index: int
    coarse: int
    fine: int
    f_err_ppm: float

    def __post_init__(self):
        _round_floats(self)


@dataclass
class LockReport:
    HEADER = ["stage", "dump_index", "coarse", "fine", "f_err_ppm"]
    META = (("data_rate", float), ("initial_f_err_ppm", float), ("final_f_err_ppm", float),
            ("lock_dumps", int), ("lock_time_s", float), ("ber_bits", int),
            ("ber_errors", int), ("final_stage", str), ("seed", int))
    rows: list[AcqRow]
    data_rate: float
    initial_f_err_ppm: float
    final_f_err_ppm: float
    lock_dumps: int
    lock_time_s: float
    ber_bits: int
    ber_errors: int
    final_stage: str = "lock"
    seed: int = 1

    def __post_init__(self):
        _round_floats(self)

    @property
    def ber(self) -> float:
        return self.ber_errors / self.ber_bits if self.ber_bits else math.nan

    def to_csv(self) -> str:
        rows = [(r.stage, r.dump_index, r.coarse, r.fine, r.f_err_ppm) for r in self.rows]
        return _write(self.HEADER, rows, {k: getattr(self, k) for k, _ in self.META})

    @classmethod
    def from_csv(cls, text: str) -> "LockReport":
        meta, rows = _read(text, cls.HEADER)
        acq = [AcqRow(r[0], int(r[1]), int(r[2]), int(r[3]), float(r[4])) for r in rows]
        return cls(acq, **{k: tp(meta[k]) for k, tp in cls.META})


@dataclass(frozen=True)
class DriftRow:
    t_us: float
    f_err_ppm: float
    coarse: int
    fine: int
    track_pulse: int
    ber_errors: int
    rotator_total: int

    def __post_init__(self):
        _round_floats(self)


@dataclass
class DriftReport:
    HEADER = ["t_us", "f_err_ppm", "coarse", "fine", "track_pulse", "ber_errors",
              "rotator_total"]
    META = (("track", _bool), ("ber_bits", int), ("ber_errors", int),
            ("max_err_after_transient_ppm", float), ("slip_rate", float),
            ("implied_slip_rate", float), ("fine_step_ppm", float), ("seed", int))
    rows: list[DriftRow]
    track: bool
    ber_bits: int
    ber_errors: int
    max_err_after_transient_ppm: float
    slip_rate: float
    implied_slip_rate: float
    fine_step_ppm: float
    seed: int = 1

    def __post_init__(self):
        _round_floats(self)

    @property
    def ber(self) -> float:
        return self.ber_errors / self.ber_bits if self.ber_bits else math.nan

    @property
    def track_pulses(self) -> int:
        return sum(1 for r in self.rows if r.track_pulse)

    def to_csv(self) -> str:
        rows = [(r.t_us, r.f_err_ppm, r.coarse, r.fine, r.track_pulse, r.ber_errors,
                 r.rotator_total) for r in self.rows]
        return _write(self.HEADER, rows, {k: getattr(self, k) for k, _ in self.META})

    @classmethod
    def from_csv(cls, text: str) -> "DriftReport":
        meta, rows = _read(text, cls.HEADER)
        dr = [DriftRow(float(r[0]), float(r[1]), *(int(x) for x in r[2:])) for r in rows]
        return cls(dr, **{k: tp(meta[k]) for k, tp in cls.META})


@dataclass
class BerReport:
    HEADER = ["loss_db", "f_err_ppm", "bits", "errors", "ber"]
    loss_db: float
    f_err_ppm: float
    bits: int
    errors: int
    seed: int = 1

    def __post_init__(self):
        _round_floats(self)

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else math.nan

    def to_csv(self) -> str:
        row = (self.loss_db, self.f_err_ppm, self.bits, self.errors, self.ber)
        return _write(self.HEADER, [row], {"seed": self.seed})

    @classmethod
    def from_csv(cls, text: str) -> "BerReport":
        meta, rows = _read(text, cls.HEADER)
        (r,) = rows
        return cls(float(r[0]), float(r[1]), int(r[2]), int(r[3]), int(meta.get("seed", 1)))
