"""Receiver clock (VCO + phase rotator), edge slot scheduling and the Alexander BBPD."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

ROTATOR_STEPS = 64


class Vote(enum.IntEnum):
    DN = -1
    NONE = 0
    UP = 1


class Group(enum.IntEnum):
    NONE = 0
    G1 = 1
    G2 = 2


@dataclass(frozen=True)
class VcoConfig:
    """Two-array capacitor-tuned VCO; a code raises frequency by one step per LSB."""

    f_center: float = 5.087e9
    coarse_bits: int = 6
    fine_bits: int = 8
    coarse_step: float = 16.5e6
    fine_step: float = 160e3

    @property
    def coarse_max(self) -> int:
        return (1 << self.coarse_bits) - 1

    @property
    def fine_max(self) -> int:
        return (1 << self.fine_bits) - 1

    @property
    def coarse_mid(self) -> int:
        return 1 << (self.coarse_bits - 1)

    @property
    def fine_mid(self) -> int:
        return 1 << (self.fine_bits - 1)

    def codes_for(self, f_target: float) -> tuple[int, int]:
        """Nearest (coarse, fine) pair, preferring a mid-range fine code."""
        coarse = round((f_target - self.f_center) / self.coarse_step + self.coarse_max / 2)
        coarse = min(max(coarse, 0), self.coarse_max)
        rest = f_target - vco_frequency(self, coarse, self.fine_max / 2)
        fine = round(rest / self.fine_step + self.fine_max / 2)
        return coarse, min(max(fine, 0), self.fine_max)


def vco_frequency(cfg: VcoConfig, coarse_code, fine_code, t: float = 0.0,
                  drift_ppm: Callable[[float], float] | None = None) -> float:
    """VCO frequency in Hz for the given codes at simulated time ``t``."""
    if not 0 <= coarse_code <= cfg.coarse_max:
        raise ValueError(f"coarse code {coarse_code} outside [0, {cfg.coarse_max}]")
    if not 0 <= fine_code <= cfg.fine_max:
        raise ValueError(f"fine code {fine_code} outside [0, {cfg.fine_max}]")
    f = (cfg.f_center
         + (coarse_code - cfg.coarse_max / 2) * cfg.coarse_step
         + (fine_code - cfg.fine_max / 2) * cfg.fine_step)
    if drift_ppm is not None:
        f *= 1.0 + drift_ppm(t) * 1e-6
    return f


@dataclass(frozen=True)
class DriftProfile:
    """Piecewise-linear VCO drift in ppm versus simulated time in seconds."""

    times: tuple[float, ...] = (0.0,)
    ppm: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if len(self.times) != len(self.ppm) or not self.times:
            raise ValueError("drift profile needs matching, non-empty time/ppm lists")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("drift profile times must be non-decreasing")

    @classmethod
    def ramp(cls, end_ppm: float, ramp_s: float, start_s: float = 0.0) -> "DriftProfile":
        return cls((start_s, start_s + ramp_s), (0.0, end_ppm))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.ppm))

    @property
    def is_zero(self) -> bool:
        return all(p == 0 for p in self.ppm)


@dataclass(frozen=True)
class EdgeScheme:
    """Which receiver UIs carry an edge sample.

    ``coarse`` alternates phi1/phi5 edges every ``edge_period`` UI and adds
    ``phi5_mismatch`` (UI) to the phi5 ones; ``fine`` keeps phi1 only;
    ``lock`` is the phase-tracking BBPD that sees every edge.
    """

    mode: str = "coarse"
    edge_period: int = 2
    phi5_mismatch: float = 0.02

    def __post_init__(self):
        if self.mode not in ("coarse", "fine", "lock"):
            raise ValueError(f"unknown edge scheme mode {self.mode!r}")
        if self.edge_period < 1:
            raise ValueError("edge_period must be >= 1 UI")

    @classmethod
    def coarse(cls, phi5_mismatch: float = 0.02) -> "EdgeScheme":
        return cls("coarse", 2, phi5_mismatch)

    @classmethod
    def fine(cls) -> "EdgeScheme":
        return cls("fine", 4, 0.0)

    @classmethod
    def lock(cls) -> "EdgeScheme":
        return cls("lock", 1, 0.0)

    def is_phi5(self, slot: int) -> bool:
        return self.mode == "coarse" and (slot // self.edge_period) % 2 == 1

    def edge_offset(self, slot: int) -> float | None:
        """Extra edge delay in receiver UI, or None when ``slot`` has no edge sample."""
        if slot % self.edge_period:
            return None
        return self.phi5_mismatch if self.is_phi5(slot) else 0.0


@dataclass(frozen=True)
class ClockState:
    """Receiver sampling clock.

    ``phase_acc`` is the start of the current receiver UI measured in
    transmit UI. The rotator advances the sampling point by
    ``(wrap_count * steps + rotator_code) / steps`` receiver UI; at
    ``rotator_code = steps / 2`` the data sample sits mid-UI.
    """

    phase_acc: float = 0.0
    rotator_code: int = ROTATOR_STEPS // 2
    wrap_count: int = 0
    slot: int = 0
    data_rate: float = 10e9
    steps: int = ROTATOR_STEPS

    @property
    def rotator_total(self) -> int:
        return self.wrap_count * self.steps + self.rotator_code

    def rotate(self, delta: int) -> "ClockState":
        wraps, code = divmod(self.rotator_code + delta, self.steps)
        return replace(self, rotator_code=code, wrap_count=self.wrap_count + wraps)


def next_sample_times(clk: ClockState, f_vco: float, scheme: EdgeScheme):
    """Sample instants (seconds) for the current receiver UI and the advanced clock.

    Returns ``(data_time, edge_time_or_None, next_clock)``. One receiver UI
    is half a VCO period (5 GHz clock against 10 Gb/s data).
    """
    if f_vco <= 0:
        raise ValueError("VCO frequency must be positive")
    t_ui = 1.0 / clk.data_rate
    rx_ui = clk.data_rate / (2.0 * f_vco)  # receiver UI in transmit UI
    data_u = clk.phase_acc + rx_ui * (1.0 - clk.rotator_total / clk.steps)
    extra = scheme.edge_offset(clk.slot)
    edge = None if extra is None else (data_u + rx_ui * (0.5 + extra)) * t_ui
    nxt = replace(clk, phase_acc=clk.phase_acc + rx_ui, slot=clk.slot + 1)
    return data_u * t_ui, edge, nxt


def bbpd_decide(d_prev: int, edge: int, d_cur: int) -> Vote:
    """Alexander phase detector on sliced samples.

    UP means the edge sample already shows the new bit, i.e. the clock is late.
    """
    if d_prev == d_cur:
        return Vote.NONE
    return Vote.UP if edge == d_cur else Vote.DN


@dataclass(frozen=True)
class BbpdEvent:
    slot_index: int
    group: Group = Group.NONE
    vote: Vote = Vote.NONE

    def __post_init__(self):
        if (self.group == Group.NONE) != (self.vote == Vote.NONE):
            raise ValueError("a BBPD event carries a group exactly when it carries a vote")
