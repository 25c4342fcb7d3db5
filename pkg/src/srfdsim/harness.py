"""Experiments: group characterization, S-curve sweeps, acquisition, drift and BER runs.

Each experiment takes a config dataclass (field names double as config-file
keys, with units in the names) plus a seed, and returns a report from
``srfdsim.reports``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernel
from .cdr_loop import (AcquisitionConfig, LockedReceiver, TrackConfig, kernel_params,
                       run_acquisition)
from .frontend import ROTATOR_STEPS, DriftProfile, EdgeScheme, VcoConfig
from .reports import (BerReport, CharacterizeReport, DriftReport, DriftRow,
                      GroupCharacterization, LockReport, ScurvePoint, ScurveReport)
from .signal import ChannelSpec, PulseResponse, make_channel, prbs_bits, seeded_prbs_state
from .srfd import TYPE_POLICIES, SrfdConfig


class StatisticsError(RuntimeError):
    """Too few BBPD transitions to estimate a probability."""


def _vco(center_ghz: float, coarse_mhz: float, fine_khz: float) -> VcoConfig:
    return VcoConfig(center_ghz * 1e9, coarse_step=coarse_mhz * 1e6, fine_step=fine_khz * 1e3)


def _check_type(srfd_type: int) -> None:
    if srfd_type not in TYPE_POLICIES:
        raise ValueError(f"srfd_type must be one of {sorted(TYPE_POLICIES)}")


# ----------------------------------------------------------------------------
# group characterization

@dataclass(frozen=True)
class CharacterizeConfig:
    losses_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    pole_count: int = 1
    data_rate_gbps: float = 10.0
    samples_per_ui: int = 64
    phase_points: int = 100
    bits_per_point: int = 100_000
    noise_rms: float = 0.0
    min_votes: int = 1

    def __post_init__(self):
        if self.phase_points < 8:
            raise ValueError("phase_points must be >= 8")
        if self.bits_per_point < 10_000:
            raise ValueError("bits_per_point must be >= 10000")


def group_up_curves(pulse: PulseResponse, phases: np.ndarray, n_bits: int, *,
                    rng: np.random.Generator, noise_rms: float = 0.0, min_votes: int = 1):
    """P(UP) per group at each static edge phase, at zero frequency error.

    Phase 0 puts the edge sample on the half-amplitude point of an isolated
    step, the group-independent reference crossing. Returns ``(p_g1, p_g2)``.
    """
    bits = prbs_bits(n_bits + 4 * pulse.span_ui, seeded_prbs_state(rng))
    noise = rng.normal(0.0, noise_rms, 1 << 16) if noise_rms > 0 else np.zeros(0)
    prm = kernel_params(bits, pulse, pulse.data_rate, pulse.data_rate / 2.0, EdgeScheme.lock(),
                        noise=noise)
    p1 = np.empty(len(phases))
    p2 = np.empty(len(phases))
    for i, th in enumerate(phases):
        # with the rotator at mid-code the edge sample sits at c + 1
        st = kernel.KernelState(c=pulse.span_ui + pulse.step_half_ui + (th % 1.0))
        kernel.run(st, prm, n_bits)
        if min(st.g1_n, st.g2_n) < min_votes:
            raise StatisticsError(f"only {min(st.g1_n, st.g2_n)} votes in a group at phase {th:.4f}")
        p1[i] = st.g1_up / st.g1_n
        p2[i] = st.g2_up / st.g2_n
    return p1, p2


def rising_crossing(phases: np.ndarray, p: np.ndarray,
                    window: float = 0.1) -> tuple[float, float]:
    """Phase where ``p`` rises through 0.5 (circularly) and the slope there.

    The slope is the rise of ``p`` across ``window`` UI centred on the
    crossing, divided by ``window``; step-like curves therefore give a
    finite gain. With several rising crossings the steepest one wins.
    """
    n = len(p)
    best = None
    for i in range(n):
        j = (i + 1) % n
        if p[i] < 0.5 <= p[j]:
            dphi = (phases[j] - phases[i]) % 1.0
            theta = (phases[i] + dphi * (0.5 - p[i]) / (p[j] - p[i])) % 1.0
            lo, hi = np.interp([theta - window / 2, theta + window / 2], phases, p, period=1.0)
            slope = (hi - lo) / window
            if best is None or slope > best[1]:
                best = (float(theta), float(slope))
    if best is None:
        raise StatisticsError("no rising 0.5 crossing in the UP-probability curve")
    return best


def characterize_groups(channel: ChannelSpec, phases: np.ndarray, n_bits: int, *, os: int = 64,
                        rng: np.random.Generator | None = None, noise_rms: float = 0.0,
                        min_votes: int = 1) -> GroupCharacterization:
    phases = np.asarray(phases, dtype=float)
    if len(phases) < 2 or phases[-1] - phases[0] + (phases[1] - phases[0]) < 1.0 - 1e-9:
        raise ValueError("phase grid must span one full UI")
    rng = np.random.default_rng(1) if rng is None else rng
    pulse = make_channel(channel, os)
    p1, p2 = group_up_curves(pulse, phases, n_bits, rng=rng, noise_rms=noise_rms,
                             min_votes=min_votes)
    t1, g1 = rising_crossing(phases, p1)
    t2, g2 = rising_crossing(phases, p2)
    return GroupCharacterization(channel.loss_db_at_nyquist, t1, t2, g1, g2)


def run_characterize(cfg: CharacterizeConfig, seed: int = 1) -> CharacterizeReport:
    rng = np.random.default_rng(seed)
    phases = np.arange(cfg.phase_points) / cfg.phase_points
    out = []
    for loss in cfg.losses_db:
        spec = ChannelSpec(loss, cfg.data_rate_gbps * 1e9, cfg.pole_count)
        out.append(characterize_groups(spec, phases, cfg.bits_per_point, os=cfg.samples_per_ui,
                                       rng=rng, noise_rms=cfg.noise_rms, min_votes=cfg.min_votes))
    return CharacterizeReport(out, seed)


# ----------------------------------------------------------------------------
# S-curve

@dataclass(frozen=True)
class ScurveConfig:
    losses_db: tuple[float, ...] = (5.0, 10.0, 15.0)
    pole_count: int = 1
    data_rate_gbps: float = 10.0
    samples_per_ui: int = 64
    f_err_min_pct: float = -20.0
    f_err_max_pct: float = 20.0
    f_err_step_pct: float = 1.0
    edge_mode: str = "coarse"
    edge_period_ui: int = 2
    phi5_mismatch_ui: float = 0.02
    srfd_type: int = 2
    staleness_window_slots: int = 1
    dump_ticks: int = 100_000
    dumps_per_point: int = 1
    noise_rms: float = 0.0

    def __post_init__(self):
        _check_type(self.srfd_type)
        if not self.f_err_step_pct > 0 or self.f_err_max_pct < self.f_err_min_pct:
            raise ValueError("f_err grid needs step > 0 and max >= min")
        if max(abs(self.f_err_min_pct), abs(self.f_err_max_pct)) > 25.0:
            raise ValueError("f_err grid must stay within +-25%")
        if self.dump_ticks < 1 or self.dumps_per_point < 1:
            raise ValueError("dump_ticks and dumps_per_point must be >= 1")
        EdgeScheme(self.edge_mode, self.edge_period_ui, self.phi5_mismatch_ui)

    def grid(self) -> list[float]:
        n = int(round((self.f_err_max_pct - self.f_err_min_pct) / self.f_err_step_pct)) + 1
        return [round(self.f_err_min_pct + k * self.f_err_step_pct, 9) / 100.0 for k in range(n)]

    @property
    def scheme(self) -> EdgeScheme:
        mism = self.phi5_mismatch_ui if self.edge_mode == "coarse" else 0.0
        return EdgeScheme(self.edge_mode, self.edge_period_ui, mism)

    @property
    def srfd(self) -> SrfdConfig:
        return SrfdConfig.of_type(self.srfd_type, staleness_window=self.staleness_window_slots,
                                  dump_length=self.dump_ticks)


def scurve_point(pulse: PulseResponse, f_err: float, cfg: ScurveConfig,
                 rng: np.random.Generator) -> ScurvePoint:
    """Open-loop SRFD output at a fixed frequency error (data faster for f_err > 0)."""
    srfd = cfg.srfd
    scheme = cfg.scheme
    n_ui = cfg.dumps_per_point * cfg.dump_ticks * scheme.edge_period
    rx = 1.0 + f_err
    bits = prbs_bits(int(n_ui * rx) + 4 * pulse.span_ui + 64, seeded_prbs_state(rng))
    noise = rng.normal(0.0, cfg.noise_rms, 1 << 16) if cfg.noise_rms > 0 else np.zeros(0)
    prm = kernel_params(bits, pulse, pulse.data_rate, pulse.data_rate / (2.0 * rx), scheme,
                        srfd_on=True, missing_age=srfd.missing_output_policy == "age",
                        clear_unresolved=srfd.unresolved_state_policy == "clear",
                        window=srfd.staleness_window, noise=noise)
    st = kernel.KernelState(c=float(pulse.span_ui) + rng.uniform(0.0, 1.0))
    sums = []
    for _ in range(cfg.dumps_per_point):
        st.acc = 0
        st.ticks = 0
        kernel.run(st, prm, 1 << 62, max_ticks=cfg.dump_ticks)
        sums.append(st.acc)
    sums = np.array(sums)
    return ScurvePoint(f_err, pulse.loss_db, float(np.mean(sums / cfg.dump_ticks)),
                       int(np.sum(sums > 0)), int(np.sum(sums < 0)), int(np.sum(sums == 0)))


def sweep_scurve(cfg: ScurveConfig, grid: list[float] | None = None,
                 losses: tuple[float, ...] | None = None, *, seed: int = 1,
                 threads: int = 1) -> ScurveReport:
    """One point per (loss, f_err), in that order; independent of ``threads``."""
    grid = cfg.grid() if grid is None else list(grid)
    losses = cfg.losses_db if losses is None else losses
    pulses = {loss: make_channel(ChannelSpec(loss, cfg.data_rate_gbps * 1e9, cfg.pole_count),
                                 cfg.samples_per_ui) for loss in losses}
    tasks = [(loss, f) for loss in losses for f in grid]
    seeds = np.random.SeedSequence(seed).spawn(len(tasks))

    def one(i: int) -> ScurvePoint:
        loss, f = tasks[i]
        return scurve_point(pulses[loss], f, cfg, np.random.default_rng(seeds[i]))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            pts = list(ex.map(one, range(len(tasks))))
    else:
        pts = [one(i) for i in range(len(tasks))]
    return ScurveReport(pts, seed, cfg.edge_period_ui, cfg.dump_ticks)


def detection_range(points: list[ScurvePoint]) -> tuple[float, float]:
    """Outermost offsets (negative side, positive side) reached from the centre
    with every grid point in between sign-correct. 0.0 when the first fails."""
    edges = []
    for sign in (-1, 1):
        side = sorted((p for p in points if p.f_err * sign > 0), key=lambda p: abs(p.f_err))
        edge = 0.0
        for p in side:
            if np.sign(p.mean_dump) != sign:
                break
            edge = p.f_err
        edges.append(edge)
    return edges[0], edges[1]


# ----------------------------------------------------------------------------
# acquisition

@dataclass(frozen=True)
class AcquireConfig:
    data_rate_gbps: float = 10.0
    loss_db_at_nyquist: float = 10.0
    pole_count: int = 1
    samples_per_ui: int = 64
    vco_center_ghz: float = 5.087
    coarse_step_mhz: float = 16.5
    fine_step_khz: float = 160.0
    coarse_code: int | None = None
    fine_code: int | None = None
    srfd_type: int = 2
    staleness_window_slots: int = 1
    coarse_edge_period_ui: int = 2
    fine_edge_period_ui: int = 4
    phi5_mismatch_ui: float = 0.02
    coarse_dump_slots: int = 2048
    fine_dump_slots: int = 1024
    coarse_dumps: int = 128
    fine_dumps: int = 512
    kp_steps: int = 1
    ki_steps: float = 2.0 ** -12
    vote_chunk: int = 1
    lock_settle_ui: int = 200_000
    ctle_loss_db: float | None = 3.0
    ber_bits: int = 1_000_000
    track: bool = False
    noise_rms: float = 0.0

    def __post_init__(self):
        _check_type(self.srfd_type)

    def to_acquisition(self) -> AcquisitionConfig:
        return AcquisitionConfig(
            data_rate=self.data_rate_gbps * 1e9, channel_loss_db=self.loss_db_at_nyquist,
            pole_count=self.pole_count, os=self.samples_per_ui,
            vco=_vco(self.vco_center_ghz, self.coarse_step_mhz, self.fine_step_khz),
            coarse_code=self.coarse_code, fine_code=self.fine_code,
            srfd=SrfdConfig.of_type(self.srfd_type, staleness_window=self.staleness_window_slots),
            coarse_edge_period=self.coarse_edge_period_ui,
            fine_edge_period=self.fine_edge_period_ui, phi5_mismatch=self.phi5_mismatch_ui,
            coarse_dump_slots=self.coarse_dump_slots, fine_dump_slots=self.fine_dump_slots,
            coarse_dumps=self.coarse_dumps, fine_dumps=self.fine_dumps, kp=self.kp_steps,
            ki=self.ki_steps, vote_chunk=self.vote_chunk, lock_settle_ui=self.lock_settle_ui,
            ctle_loss_db=self.ctle_loss_db, ber_bits=self.ber_bits, track=self.track,
            noise_rms=self.noise_rms)


def run_acquire(cfg: AcquireConfig, seed: int = 1) -> LockReport:
    return run_acquisition(cfg.to_acquisition(), seed)


# ----------------------------------------------------------------------------
# drift tracking

@dataclass(frozen=True)
class DriftConfig:
    data_rate_gbps: float = 10.0
    loss_db_at_nyquist: float = 3.0
    pole_count: int = 1
    samples_per_ui: int = 64
    vco_center_ghz: float = 5.087
    coarse_step_mhz: float = 16.5
    fine_step_khz: float = 160.0
    kp_steps: int = 1
    ki_steps: float = 2.0 ** -12
    vote_chunk: int = 1
    settle_us: float = 20.0
    drift_start_us: float = 20.0
    drift_ramp_us: float = 1000.0
    drift_hold_us: float = 200.0
    drift_end_ppm: float = -1500.0
    track: bool = True
    track_interval_us: float = 5.0
    track_threshold_fraction: float = 0.25
    transient_us: float = 100.0
    noise_rms: float = 0.0

    def __post_init__(self):
        if not self.track_interval_us > 0:
            raise ValueError("track_interval_us must be positive")
        if min(self.settle_us, self.drift_start_us, self.drift_ramp_us, self.drift_hold_us) < 0:
            raise ValueError("drift timing values must be >= 0")

    @property
    def vco(self) -> VcoConfig:
        return _vco(self.vco_center_ghz, self.coarse_step_mhz, self.fine_step_khz)

    def track_config(self) -> TrackConfig:
        t = TrackConfig.default(self.vco, self.data_rate_gbps * 1e9, self.track_interval_us * 1e-6,
                                self.track_threshold_fraction)
        return t if self.track else TrackConfig.disabled(t.interval)


def run_drift_test(cfg: DriftConfig, seed: int = 1) -> DriftReport:
    """Lock at zero error, then ramp the VCO drift and log one row per track interval.

    Row times are measured from the end of the settling period; BER counts
    every bit after settling.
    """
    rng = np.random.default_rng(seed)
    rate = cfg.data_rate_gbps * 1e9
    vco = cfg.vco
    pulse = make_channel(ChannelSpec(cfg.loss_db_at_nyquist, rate, cfg.pole_count),
                         cfg.samples_per_ui)
    coarse, fine = vco.codes_for(rate / 2.0)
    settle = cfg.settle_us * 1e-6
    t_a = settle + cfg.drift_start_us * 1e-6
    t_b = t_a + cfg.drift_ramp_us * 1e-6
    t_end = t_b + cfg.drift_hold_us * 1e-6
    drift = DriftProfile((0.0, t_a, t_b), (0.0, 0.0, cfg.drift_end_ppm))
    rr = LockedReceiver(pulse, rate, vco, coarse, fine, n_ui=int(t_end * rate) + 1000,
                        kp=cfg.kp_steps, ki=cfg.ki_steps, chunk=cfg.vote_chunk, drift=drift,
                        noise_rms=cfg.noise_rms, rng=rng)
    track = cfg.track_config()
    rr.run_until(settle)
    rr.set_ber(True)
    rr.st.reset_stats()

    rows = []
    hold_mark = None
    k = 0
    while True:
        k += 1
        t = min(settle + k * track.interval, t_end)
        rr.run_until(t)
        pulse_out = rr.apply_track(track)
        st = rr.st
        rows.append(DriftRow((t - settle) * 1e6, rr.f_err() * 1e6, rr.coarse, rr.fine,
                             int(pulse_out), st.ber_errors, st.wraps * ROTATOR_STEPS + st.code))
        if hold_mark is None and t >= t_b:
            hold_mark = (st.ui_count, rows[-1].rotator_total)
        if t >= t_end:
            break

    st = rr.st
    slip = math.nan
    if hold_mark is not None and st.ui_count > hold_mark[0]:
        slip = (rows[-1].rotator_total - hold_mark[1]) / (st.ui_count - hold_mark[0])
    after = [abs(r.f_err_ppm) for r in rows
             if r.t_us * 1e-6 + settle >= t_a + cfg.transient_us * 1e-6]
    fine_ppm = vco.fine_step / (rate / 2.0) * 1e6
    # phase slips f/(1+f) receiver UI per receiver UI at relative error f
    f_end = rows[-1].f_err_ppm * 1e-6
    implied = f_end / (1.0 + f_end) * ROTATOR_STEPS
    return DriftReport(rows, cfg.track, st.ber_bits, st.ber_errors,
                       max(after) if after else math.nan, slip, implied, fine_ppm, seed)


# ----------------------------------------------------------------------------
# BER

@dataclass(frozen=True)
class BerConfig:
    data_rate_gbps: float = 10.0
    loss_db_at_nyquist: float = 3.0
    pole_count: int = 1
    samples_per_ui: int = 64
    vco_center_ghz: float = 5.087
    coarse_step_mhz: float = 16.5
    fine_step_khz: float = 160.0
    f_err_ppm: float = 0.0
    kp_steps: int = 1
    ki_steps: float = 2.0 ** -12
    vote_chunk: int = 1
    settle_ui: int = 200_000
    ber_bits: int = 1_000_000
    noise_rms: float = 0.0

    def __post_init__(self):
        if self.ber_bits < 1:
            raise ValueError("ber_bits must be >= 1")


def run_ber(cfg: BerConfig, seed: int = 1) -> BerReport:
    """Closed-loop BER with the VCO codes nearest the requested frequency error."""
    rng = np.random.default_rng(seed)
    rate = cfg.data_rate_gbps * 1e9
    vco = _vco(cfg.vco_center_ghz, cfg.coarse_step_mhz, cfg.fine_step_khz)
    pulse = make_channel(ChannelSpec(cfg.loss_db_at_nyquist, rate, cfg.pole_count),
                         cfg.samples_per_ui)
    coarse, fine = vco.codes_for(rate / (2.0 * (1.0 + cfg.f_err_ppm * 1e-6)))
    rr = LockedReceiver(pulse, rate, vco, coarse, fine, n_ui=cfg.settle_ui + cfg.ber_bits + 1000,
                        kp=cfg.kp_steps, ki=cfg.ki_steps, chunk=cfg.vote_chunk,
                        noise_rms=cfg.noise_rms, rng=rng)
    kernel.run(rr.st, rr.prm, cfg.settle_ui)
    rr.set_ber(True)
    rr.st.reset_stats()
    kernel.run(rr.st, rr.prm, cfg.ber_bits)
    return BerReport(cfg.loss_db_at_nyquist, rr.f_err() * 1e6, rr.st.ber_bits,
                     rr.st.ber_errors, seed)

