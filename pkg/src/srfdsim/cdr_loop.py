"""Digital loop filter, frequency-acquisition state machine and VCO-track path.

The reference transitions (``dlf_update``, ``acquisition_step``,
``vco_track_update``) are small pure functions; ``run_acquisition`` and
``LockedReceiver`` drive the per-UI kernel with them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel
from .config import ConfigError
from .frontend import ROTATOR_STEPS, DriftProfile, EdgeScheme, VcoConfig, Vote, vco_frequency
from .reports import AcqRow, LockReport
from .signal import ChannelSpec, PulseResponse, make_channel, prbs_bits, seeded_prbs_state
from .srfd import FreqPulse, SrfdConfig


class ContractError(RuntimeError):
    """A state-machine input arrived in a stage that cannot accept it."""


class Stage(enum.IntEnum):
    INIT = 0
    COARSE_FD = 1
    FINE_FD = 2
    PHASE_LOCK = 3
    TRACK = 4


STAGE_NAMES = {Stage.INIT: "init", Stage.COARSE_FD: "coarse", Stage.FINE_FD: "fine",
               Stage.PHASE_LOCK: "lock", Stage.TRACK: "track"}


def relative_error(data_rate: float, f_vco: float) -> float:
    """Frequency error of the data against the receiver (2 UI per VCO cycle).

    Positive means the data is faster than the receiver clock, which the
    loop corrects by raising the VCO code.
    """
    return (data_rate - 2.0 * f_vco) / (2.0 * f_vco)


# ----------------------------------------------------------------------------
# loop filter

@dataclass(frozen=True)
class DlfState:
    """Bang-bang proportional + integral loop filter driving the rotator.

    ``freq`` is the integral register in rotator steps per UI and
    ``integral_acc`` the fractional step it has built up. ``monitor`` sums
    ``freq`` once per UI, so over a track interval it equals the phase the
    integral path contributed, in rotator steps.
    """

    kp: int = 1
    ki: float = 2.0 ** -12
    freq: float = 0.0
    integral_acc: float = 0.0
    rotator_code: int = ROTATOR_STEPS // 2
    wrap_count: int = 0
    monitor: float = 0.0
    steps: int = ROTATOR_STEPS

    def __post_init__(self):
        if not 0 <= self.rotator_code < self.steps:
            raise ValueError("rotator_code outside [0, steps)")

    @property
    def rotator_total(self) -> int:
        return self.wrap_count * self.steps + self.rotator_code


def _rotate(dlf: DlfState, delta: int, **kw) -> DlfState:
    wraps, code = divmod(dlf.rotator_code + delta, dlf.steps)
    return replace(dlf, rotator_code=code, wrap_count=dlf.wrap_count + wraps, **kw)


def dlf_update(dlf: DlfState, vote: Vote) -> DlfState:
    """Apply one BBPD vote: ``kp`` steps now and ``ki`` into the integral register."""
    if vote == Vote.NONE:
        return dlf
    s = int(vote)
    return _rotate(dlf, dlf.kp * s, freq=dlf.freq + dlf.ki * s)


def dlf_integrate(dlf: DlfState) -> DlfState:
    """Advance one UI: the integral register moves the rotator by whole steps."""
    acc = dlf.integral_acc + dlf.freq
    whole = math.floor(acc)
    return _rotate(dlf, whole, integral_acc=acc - whole, monitor=dlf.monitor + dlf.freq)


# ----------------------------------------------------------------------------
# acquisition state machine

@dataclass(frozen=True)
class AcquisitionFsm:
    stage: Stage = Stage.INIT
    coarse_dumps_done: int = 0
    fine_dumps_done: int = 0
    coarse_code: int = 32
    fine_code: int = 128
    coarse_target: int = 1 << 7
    fine_target: int = 1 << 9
    coarse_max: int = 63
    fine_max: int = 255

    def start(self) -> "AcquisitionFsm":
        if self.stage != Stage.INIT:
            raise ContractError(f"cannot start from stage {self.stage.name}")
        return replace(self, stage=Stage.COARSE_FD)

    def enable_track(self) -> "AcquisitionFsm":
        if self.stage != Stage.PHASE_LOCK:
            raise ContractError("track path starts only after phase lock")
        return replace(self, stage=Stage.TRACK)


def _clamp(x: int, hi: int) -> int:
    return min(max(x, 0), hi)


def acquisition_step(fsm: AcquisitionFsm, pulse: FreqPulse) -> AcquisitionFsm:
    """Apply one dump result to the active code and advance the stage on schedule."""
    if fsm.stage == Stage.COARSE_FD:
        done = fsm.coarse_dumps_done + 1
        nxt = replace(fsm, coarse_code=_clamp(fsm.coarse_code + int(pulse), fsm.coarse_max),
                      coarse_dumps_done=done)
        return replace(nxt, stage=Stage.FINE_FD) if done >= fsm.coarse_target else nxt
    if fsm.stage == Stage.FINE_FD:
        done = fsm.fine_dumps_done + 1
        nxt = replace(fsm, fine_code=_clamp(fsm.fine_code + int(pulse), fsm.fine_max),
                      fine_dumps_done=done)
        return replace(nxt, stage=Stage.PHASE_LOCK) if done >= fsm.fine_target else nxt
    raise ContractError(f"frequency pulse outside the FD stages (stage {fsm.stage.name})")


# ----------------------------------------------------------------------------
# VCO-track path

@dataclass(frozen=True)
class TrackConfig:
    threshold: float
    interval: float = 100e-6

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError("track interval must be positive")
        if not self.threshold >= 0:
            raise ValueError("track threshold must be >= 0")

    @classmethod
    def default(cls, vco: VcoConfig, data_rate: float, interval: float = 100e-6,
                fraction: float = 0.25, steps: int = ROTATOR_STEPS) -> "TrackConfig":
        """Threshold at ``fraction`` of the monitor sum one fine step of error builds per interval."""
        f_vco = data_rate / 2.0
        per_ui = vco.fine_step / f_vco * steps
        return cls(fraction * per_ui * interval * data_rate, interval)

    @classmethod
    def disabled(cls, interval: float = 100e-6) -> "TrackConfig":
        return cls(math.inf, interval)


def vco_track_update(track: TrackConfig, dlf: DlfState) -> tuple[FreqPulse, DlfState]:
    """End-of-interval decision; the monitor restarts from zero either way."""
    m = dlf.monitor
    pulse = FreqPulse.NONE
    if abs(m) > track.threshold:
        pulse = FreqPulse.UP_F if m > 0 else FreqPulse.DN_F
    return pulse, replace(dlf, monitor=0.0)


# ----------------------------------------------------------------------------
# closed-loop runs

@dataclass(frozen=True)
class AcquisitionConfig:
    """Everything ``run_acquisition`` needs. Times are seconds, rates bit/s."""

    data_rate: float = 10e9
    channel_loss_db: float = 10.0
    pole_count: int = 1
    os: int = 64
    vco: VcoConfig = field(default_factory=VcoConfig)
    coarse_code: int | None = None
    fine_code: int | None = None
    srfd: SrfdConfig = field(default_factory=SrfdConfig)
    coarse_edge_period: int = 2
    fine_edge_period: int = 4
    phi5_mismatch: float = 0.02
    coarse_dump_slots: int = 2048
    fine_dump_slots: int = 1024
    coarse_dumps: int = 1 << 7
    fine_dumps: int = 1 << 9
    kp: int = 1
    ki: float = 2.0 ** -12
    vote_chunk: int = 1
    lock_settle_ui: int = 200_000
    ctle_loss_db: float | None = 3.0
    ber_bits: int = 1_000_000
    track: bool = False
    noise_rms: float = 0.0

    def validate(self) -> None:
        if self.fine_edge_period != 2 * self.coarse_edge_period:
            raise ConfigError("fine edge period must be twice the coarse one (phi1 slots only)")
        if self.coarse_edge_period < 1:
            raise ConfigError("edge periods must be >= 1 UI")
        for name in ("coarse_dump_slots", "fine_dump_slots", "coarse_dumps", "fine_dumps", "kp",
                     "vote_chunk"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lock_settle_ui < 0 or self.ber_bits < 0:
            raise ConfigError("lock_settle_ui and ber_bits must be >= 0")
        for name, hi in (("coarse_code", self.vco.coarse_max), ("fine_code", self.vco.fine_max)):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= hi:
                raise ConfigError(f"{name} {v} outside [0, {hi}]")

    def start_codes(self) -> tuple[int, int]:
        c = self.vco.coarse_mid if self.coarse_code is None else self.coarse_code
        f = self.vco.fine_mid if self.fine_code is None else self.fine_code
        return c, f


def _noise(rng: np.random.Generator, rms: float, n: int = 1 << 16) -> np.ndarray:
    return rng.normal(0.0, rms, n) if rms > 0 else np.zeros(0)


def kernel_params(bits: np.ndarray, pulse: PulseResponse, data_rate: float, f_vco: float,
                  scheme: EdgeScheme, **kw) -> kernel.KernelParams:
    return kernel.KernelParams(bits, pulse.samples, pulse.os, pulse.span_ui, pulse.center_ui,
                               data_rate, f_vco, edge_period=scheme.edge_period,
                               phi5_mismatch=scheme.phi5_mismatch,
                               coarse=scheme.mode == "coarse", **kw)


def _bits_for(n_ui: float, rx: float, span: int, rng: np.random.Generator) -> np.ndarray:
    return prbs_bits(int(n_ui * rx * 1.05) + 4 * span + 4096, seeded_prbs_state(rng))


def run_acquisition(cfg: AcquisitionConfig, seed: int = 1) -> LockReport:
    """Init -> coarse FD -> fine FD -> phase lock (-> track), then a post-lock BER count."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    chan = make_channel(ChannelSpec(cfg.channel_loss_db, cfg.data_rate, cfg.pole_count), cfg.os)
    ctle = chan
    if cfg.ctle_loss_db is not None:
        ctle = make_channel(ChannelSpec(cfg.ctle_loss_db, cfg.data_rate, cfg.pole_count), cfg.os)
    span = max(chan.span_ui, ctle.span_ui)

    c0, f0 = cfg.start_codes()
    fsm = AcquisitionFsm(coarse_code=c0, fine_code=f0, coarse_target=cfg.coarse_dumps,
                         fine_target=cfg.fine_dumps, coarse_max=cfg.vco.coarse_max,
                         fine_max=cfg.vco.fine_max).start()
    f_vco = vco_frequency(cfg.vco, c0, f0)
    fd_ui = (cfg.coarse_dumps * cfg.coarse_dump_slots * cfg.coarse_edge_period
             + cfg.fine_dumps * cfg.fine_dump_slots * cfg.fine_edge_period)
    total_ui = fd_ui + 2 * cfg.lock_settle_ui + cfg.ber_bits
    rx_max = cfg.data_rate / (2.0 * vco_frequency(cfg.vco, 0, 0))
    bits = _bits_for(total_ui, max(rx_max, 1.0), span, rng)
    noise = _noise(rng, cfg.noise_rms)

    srfd = cfg.srfd
    common = dict(srfd_on=True, missing_age=srfd.missing_output_policy == "age",
                  clear_unresolved=srfd.unresolved_state_policy == "clear",
                  window=srfd.staleness_window, noise=noise)
    coarse_prm = kernel_params(bits, chan, cfg.data_rate, f_vco,
                               EdgeScheme("coarse", cfg.coarse_edge_period, cfg.phi5_mismatch),
                               **common)
    fine_prm = kernel_params(bits, chan, cfg.data_rate, f_vco,
                             EdgeScheme("fine", cfg.fine_edge_period, 0.0), **common)

    st = kernel.KernelState(c=float(span) + rng.uniform(0.0, 1.0))
    t_start = st.c
    rows = [AcqRow("init", 0, c0, f0, relative_error(cfg.data_rate, f_vco) * 1e6)]
    initial_err = rows[0].f_err_ppm
    index = 0
    for stage, prm, slots in ((Stage.COARSE_FD, coarse_prm, cfg.coarse_dump_slots),
                              (Stage.FINE_FD, fine_prm, cfg.fine_dump_slots)):
        st.reset_detector()
        while fsm.stage == stage:
            prm.f_vco = vco_frequency(cfg.vco, fsm.coarse_code, fsm.fine_code)
            st.acc = 0
            kernel.run(st, prm, 1 << 62, max_ticks=slots)
            pulse = FreqPulse.UP_F if st.acc > 0 else FreqPulse.DN_F if st.acc < 0 else FreqPulse.NONE
            fsm = acquisition_step(fsm, pulse)
            index += 1
            f_now = vco_frequency(cfg.vco, fsm.coarse_code, fsm.fine_code)
            rows.append(AcqRow(STAGE_NAMES[stage], index, fsm.coarse_code, fsm.fine_code,
                               relative_error(cfg.data_rate, f_now) * 1e6))
    lock_time = (st.c - t_start) / cfg.data_rate

    f_vco = vco_frequency(cfg.vco, fsm.coarse_code, fsm.fine_code)
    lock_prm = kernel_params(bits, chan, cfg.data_rate, f_vco, EdgeScheme.lock(),
                             dlf_on=True, kp=cfg.kp, ki=cfg.ki, chunk=cfg.vote_chunk, noise=noise)
    st.reset_detector()
    kernel.run(st, lock_prm, cfg.lock_settle_ui)
    if ctle is not chan:
        lock_prm = kernel_params(bits, ctle, cfg.data_rate, f_vco, EdgeScheme.lock(),
                                 dlf_on=True, kp=cfg.kp, ki=cfg.ki, chunk=cfg.vote_chunk,
                                 noise=noise)
        kernel.run(st, lock_prm, cfg.lock_settle_ui)
    if cfg.track:
        fsm = fsm.enable_track()
    st.reset_stats()
    st.n_prev = -1
    lock_prm.ber_on = True
    kernel.run(st, lock_prm, cfg.ber_bits)

    return LockReport(rows=rows, data_rate=cfg.data_rate, initial_f_err_ppm=initial_err,
                      final_f_err_ppm=rows[-1].f_err_ppm, lock_dumps=index,
                      lock_time_s=lock_time, ber_bits=st.ber_bits, ber_errors=st.ber_errors,
                      final_stage=STAGE_NAMES[fsm.stage], seed=seed)


class LockedReceiver:
    """A phase-locked receiver: DLF-driven rotator, optional drift and VCO-track path.

    Starts at the given codes with the loop closed; ``run_until`` advances
    to an absolute simulated time so callers can act on interval boundaries.
    """

    def __init__(self, pulse: PulseResponse, data_rate: float, vco: VcoConfig, coarse: int,
                 fine: int, *, n_ui: int, kp: int = 1, ki: float = 2.0 ** -12, chunk: int = 1,
                 drift: DriftProfile | None = None, noise_rms: float = 0.0,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng(1) if rng is None else rng
        self.vco, self.data_rate = vco, data_rate
        self.coarse, self.fine = coarse, fine
        self.drift = drift or DriftProfile()
        rx_max = data_rate / (2.0 * vco_frequency(vco, coarse, fine)) * (1.0 + 5e-3)
        bits = _bits_for(n_ui, rx_max, pulse.span_ui, rng)
        self.st = kernel.KernelState(c=float(pulse.span_ui) + rng.uniform(0.0, 1.0))
        self.t0 = self.st.c
        # the kernel evaluates drift at absolute pattern time
        dt = np.asarray(self.drift.times, dtype=float) + self.t0 / data_rate
        dp = np.asarray(self.drift.ppm, dtype=float)
        self.prm = kernel_params(bits, pulse, data_rate, vco_frequency(vco, coarse, fine),
                                 EdgeScheme.lock(), dlf_on=True, kp=kp, ki=ki, chunk=chunk,
                                 drift_t=dt, drift_ppm=dp, noise=_noise(rng, noise_rms))

    @property
    def time_s(self) -> float:
        """Simulated time since the receiver started."""
        return (self.st.c - self.t0) / self.data_rate

    def f_vco(self) -> float:
        return vco_frequency(self.vco, self.coarse, self.fine, self.time_s, self.drift)

    def f_err(self) -> float:
        return relative_error(self.data_rate, self.f_vco())

    def run_until(self, t: float) -> None:
        kernel.run(self.st, self.prm, 1 << 62, stop_u=self.t0 + t * self.data_rate)

    def set_ber(self, on: bool) -> None:
        self.prm.ber_on = on
        self.st.n_prev = -1

    @property
    def dlf(self) -> DlfState:
        s = self.st
        return DlfState(self.prm.kp, self.prm.ki, s.f_reg, s.pf, s.code, s.wraps, s.monitor,
                        self.prm.steps)

    def apply_track(self, track: TrackConfig) -> FreqPulse:
        pulse, dlf = vco_track_update(track, self.dlf)
        self.st.monitor = dlf.monitor
        if pulse != FreqPulse.NONE:
            self.fine = _clamp(self.fine + int(pulse), self.vco.fine_max)
            self.prm.f_vco = vco_frequency(self.vco, self.coarse, self.fine)
        return pulse
