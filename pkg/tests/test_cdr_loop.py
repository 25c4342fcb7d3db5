import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srfdsim import kernel
from srfdsim.cdr_loop import (AcquisitionConfig, AcquisitionFsm, ContractError, DlfState,
                              LockedReceiver, Stage, TrackConfig, acquisition_step,
                              dlf_integrate, dlf_update, kernel_params, relative_error,
                              run_acquisition, vco_track_update)
from srfdsim.config import ConfigError
from srfdsim.frontend import (ROTATOR_STEPS, DriftProfile, EdgeScheme, VcoConfig, Vote,
                              vco_frequency)
from srfdsim.signal import ChannelSpec, make_channel, prbs_bits
from srfdsim.srfd import FreqPulse


def test_relative_error_sign():
    assert relative_error(10e9, 5e9) == 0.0
    assert relative_error(10.1e9, 5e9) == pytest.approx(0.01)  # data faster
    assert relative_error(10e9, 5.05e9) < 0


# ---------------------------------------------------------------- loop filter

def test_dlf_none_vote_is_identity():
    d = DlfState(freq=0.3, integral_acc=0.2, rotator_code=7)
    assert dlf_update(d, Vote.NONE) is d


def test_dlf_proportional_step():
    d = dlf_update(DlfState(kp=1, ki=0.0), Vote.UP)
    assert d.rotator_code == ROTATOR_STEPS // 2 + 1 and d.freq == 0.0
    d = dlf_update(DlfState(kp=3, ki=0.0, rotator_code=1), Vote.DN)
    assert (d.rotator_code, d.wrap_count) == (ROTATOR_STEPS - 2, -1)


def test_dlf_wraps_modulo_r():
    d = dlf_update(DlfState(ki=0.0, rotator_code=ROTATOR_STEPS - 1), Vote.UP)
    assert (d.rotator_code, d.wrap_count, d.rotator_total) == (0, 1, ROTATOR_STEPS)


def test_dlf_integral_moves_code_in_whole_steps():
    d = DlfState(kp=1, ki=0.25)
    d = dlf_update(d, Vote.UP)  # freq 0.25 steps/UI
    codes = []
    for _ in range(8):
        d = dlf_integrate(d)
        codes.append(d.rotator_code)
    base = ROTATOR_STEPS // 2 + 1
    assert codes == [base, base, base, base + 1, base + 1, base + 1, base + 1, base + 2]
    assert d.monitor == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([Vote.UP, Vote.DN, Vote.NONE]), max_size=100))
def test_dlf_zero_ki_never_touches_integral(votes):
    d = DlfState(kp=1, ki=0.0)
    for v in votes:
        d = dlf_integrate(dlf_update(d, v))
        assert d.integral_acc == 0.0 and d.freq == 0.0
        assert 0 <= d.rotator_code < d.steps
    assert d.rotator_total - ROTATOR_STEPS // 2 == sum(int(v) for v in votes)


def _locked(f_err, loss=3.0, n_ui=300_000, seed=2):
    p = make_channel(ChannelSpec(loss))
    f_vco = p.data_rate / (2 * (1 + f_err))
    prm = kernel_params(prbs_bits(int(n_ui * 1.1) + 500), p, p.data_rate, f_vco,
                        EdgeScheme.lock(), dlf_on=True, ki=2.0 ** -12)
    rng = np.random.default_rng(seed)
    st_ = kernel.KernelState(c=p.span_ui + p.step_half_ui + rng.uniform(-0.05, 0.05))
    return p, prm, st_


def test_rotator_rate_matches_frequency_error():
    f_err = 500e-6
    p, prm, s = _locked(f_err)
    kernel.run(s, prm, 100_000)  # let the integral path settle
    r0, u0 = s.wraps * ROTATOR_STEPS + s.code, s.ui_count
    kernel.run(s, prm, 150_000)
    rate = (s.wraps * ROTATOR_STEPS + s.code - r0) / (s.ui_count - u0)
    assert rate == pytest.approx(f_err / (1 + f_err) * ROTATOR_STEPS, rel=0.02)


def test_bang_bang_balance_at_frequency_match():
    p, prm, s = _locked(0.0, n_ui=150_000)
    kernel.run(s, prm, 20_000)
    rec = kernel.run(s, prm, 100_000, record=True)
    half = ROTATOR_STEPS // 2
    steps = (np.diff(rec["code"]) + half) % ROTATOR_STEPS - half  # unwrap the rotator
    total = np.cumsum(np.r_[0, steps])
    slope = np.polyfit(np.arange(len(total)), total, 1)[0]
    assert abs(slope * 100_000) < 1.0


# ---------------------------------------------------------------- acquisition FSM

def test_fsm_schedule():
    fsm = AcquisitionFsm().start()
    assert fsm.stage == Stage.COARSE_FD
    for k in range(128):
        fsm = acquisition_step(fsm, FreqPulse.NONE)
        assert fsm.stage == (Stage.FINE_FD if k == 127 else Stage.COARSE_FD)
    for k in range(512):
        fsm = acquisition_step(fsm, FreqPulse.NONE)
        assert fsm.stage == (Stage.PHASE_LOCK if k == 511 else Stage.FINE_FD)
    assert (fsm.coarse_dumps_done, fsm.fine_dumps_done) == (128, 512)
    assert fsm.enable_track().stage == Stage.TRACK


def test_fsm_steps_active_code_only():
    fsm = AcquisitionFsm().start()
    fsm = acquisition_step(fsm, FreqPulse.UP_F)
    assert (fsm.coarse_code, fsm.fine_code) == (33, 128)
    fsm = AcquisitionFsm(stage=Stage.FINE_FD)
    fsm = acquisition_step(fsm, FreqPulse.DN_F)
    assert (fsm.coarse_code, fsm.fine_code) == (32, 127)


def test_fsm_saturates():
    fsm = acquisition_step(AcquisitionFsm(stage=Stage.COARSE_FD, coarse_code=63), FreqPulse.UP_F)
    assert fsm.coarse_code == 63
    fsm = acquisition_step(AcquisitionFsm(stage=Stage.COARSE_FD, coarse_code=0), FreqPulse.DN_F)
    assert fsm.coarse_code == 0
    fsm = acquisition_step(AcquisitionFsm(stage=Stage.FINE_FD, fine_code=255), FreqPulse.UP_F)
    assert fsm.fine_code == 255


@pytest.mark.parametrize("stage", [Stage.INIT, Stage.PHASE_LOCK, Stage.TRACK])
def test_fsm_rejects_pulses_outside_fd(stage):
    with pytest.raises(ContractError):
        acquisition_step(AcquisitionFsm(stage=stage), FreqPulse.UP_F)


def test_fsm_only_moves_forward():
    with pytest.raises(ContractError):
        AcquisitionFsm(stage=Stage.FINE_FD).start()
    with pytest.raises(ContractError):
        AcquisitionFsm(stage=Stage.COARSE_FD).enable_track()


# ---------------------------------------------------------------- VCO-track path

def test_default_track_threshold_arithmetic():
    tr = TrackConfig.default(VcoConfig(), 10e9)
    # one fine step = 160 kHz / 5 GHz of 64 steps per UI, over 1e6 UI, a quarter of it
    assert tr.threshold == pytest.approx(0.25 * 160e3 / 5e9 * 64 * 1e6)
    assert tr.interval == 100e-6


def test_track_below_threshold_is_none_and_resets():
    tr = TrackConfig(threshold=10.0)
    p, d = vco_track_update(tr, DlfState(monitor=9.9))
    assert p == FreqPulse.NONE and d.monitor == 0.0


def test_track_fires_with_monitor_sign():
    tr = TrackConfig(threshold=10.0)
    assert vco_track_update(tr, DlfState(monitor=10.5))[0] == FreqPulse.UP_F
    assert vco_track_update(tr, DlfState(monitor=-10.5))[0] == FreqPulse.DN_F


def test_disabled_track_never_fires():
    tr = TrackConfig.disabled()
    assert math.isinf(tr.threshold)
    assert vco_track_update(tr, DlfState(monitor=1e300))[0] == FreqPulse.NONE


def test_track_config_validation():
    with pytest.raises(ValueError):
        TrackConfig(1.0, interval=0.0)
    with pytest.raises(ValueError):
        TrackConfig(-1.0)


def test_track_pulses_follow_drift():
    # VCO drifting slow means data looks fast, so the track path raises the fine code
    p = make_channel(ChannelSpec(3.0))
    vco = VcoConfig()
    c, f = vco.codes_for(5e9)
    rr = LockedReceiver(p, 10e9, vco, c, f, n_ui=2_200_000,
                        drift=DriftProfile((0.0, 20e-6, 200e-6), (0.0, 0.0, -300.0)))
    tr = TrackConfig.default(vco, 10e9, interval=5e-6)
    pulses, errs = [], []
    for k in range(1, 41):
        rr.run_until(k * 5e-6)
        pulses.append(int(rr.apply_track(tr)))
        errs.append(rr.f_err())
    # the path dithers a step around the target but follows the ramp on net
    steps_needed = 300e-6 * 5e9 / vco.fine_step
    assert sum(pulses) == pytest.approx(steps_needed, abs=2)
    assert rr.fine - f == sum(pulses)
    assert max(abs(e) for e in errs) <= 2 * vco.fine_step / 5e9


# ---------------------------------------------------------------- run_acquisition

def _short_cfg(**kw):
    base = dict(coarse_dumps=8, fine_dumps=16, lock_settle_ui=20_000, ber_bits=20_000)
    base.update(kw)
    return AcquisitionConfig(**base)


def test_acquisition_rejects_inconsistent_edge_periods():
    with pytest.raises(ConfigError):
        run_acquisition(_short_cfg(fine_edge_period=6))
    with pytest.raises(ConfigError):
        run_acquisition(_short_cfg(coarse_code=64))


def test_acquisition_report_shape():
    cfg = _short_cfg()
    rep = run_acquisition(cfg, seed=4)
    assert rep.lock_dumps == 24 and len(rep.rows) == 25
    assert [r.stage for r in rep.rows] == ["init"] + ["coarse"] * 8 + ["fine"] * 16
    assert [r.dump_index for r in rep.rows] == list(range(25))
    assert rep.final_stage == "lock"
    assert rep.initial_f_err_ppm == pytest.approx(
        relative_error(10e9, vco_frequency(VcoConfig(), 32, 128)) * 1e6, rel=1e-9)
    # fixed schedule: 8 x 2048 x 2 + 16 x 1024 x 4 receiver UI, ~rx transmit UI each
    rx = 10e9 / (2 * vco_frequency(VcoConfig(), 32, 128))
    assert rep.lock_time_s == pytest.approx((8 * 4096 + 16 * 4096) * rx / 10e9, rel=0.02)
    assert rep.ber_bits >= 19_000


def test_acquisition_with_track_ends_in_track_stage():
    assert run_acquisition(_short_cfg(track=True)).final_stage == "track"


def test_acquisition_zero_error_keeps_coarse_code():
    # mid codes give 5.087 GHz; data at exactly twice that is a zero-error start
    vco = VcoConfig()
    rate = 2 * vco_frequency(vco, 32, 128)
    rep = run_acquisition(AcquisitionConfig(data_rate=rate), seed=3)
    last = rep.rows[-1]
    assert rep.lock_dumps == 128 + 512
    assert abs(last.coarse - 32) <= 2
    assert abs(rep.final_f_err_ppm) <= 2 * vco.fine_step / (rate / 2) * 1e6
    assert rep.ber_errors == 0
