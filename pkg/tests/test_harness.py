import itertools
import math

import numpy as np
import pytest

from srfdsim import cli, config, harness
from srfdsim.config import ConfigError
from srfdsim.harness import (AcquireConfig, BerConfig, CharacterizeConfig, DriftConfig,
                             ScurveConfig, StatisticsError, characterize_groups, detection_range,
                             group_up_curves, rising_crossing, sweep_scurve)
from srfdsim.reports import ScurvePoint
from srfdsim.signal import ChannelSpec, make_channel

PHASES = np.arange(100) / 100


# ---------------------------------------------------------------- config files

def test_parse_pairs_skips_comments_and_blanks():
    text = "# header\n\nloss = 3.0  # trailing\n  seed=4\n"
    assert config.parse_pairs(text) == {"loss": "3.0", "seed": "4"}


@pytest.mark.parametrize("text, msg", [("a = 1\na = 2\n", "duplicate"),
                                       ("a 1\n", "key = value"), ("= 1\n", "key = value")])
def test_parse_pairs_errors_name_the_line(text, msg):
    with pytest.raises(ConfigError, match=msg) as exc:
        config.parse_pairs(text, "exp.cfg")
    assert "exp.cfg:" in str(exc.value)


def test_from_pairs_converts_by_annotation():
    cfg = config.from_pairs(ScurveConfig, {"losses_db": "5, 10", "srfd_type": "3",
                                           "edge_mode": "fine", "edge_period_ui": "4"})
    assert cfg.losses_db == (5.0, 10.0) and cfg.srfd_type == 3 and cfg.edge_mode == "fine"
    acq = config.from_pairs(AcquireConfig, {"coarse_code": "none", "ctle_loss_db": "None",
                                            "track": "yes"})
    assert acq.coarse_code is None and acq.ctle_loss_db is None and acq.track is True
    acq = config.from_pairs(AcquireConfig, {"coarse_code": "12"})
    assert acq.coarse_code == 12
    dr = config.from_pairs(DriftConfig, {"drift_end_ppm": "-inf", "track": "off"})
    assert dr.drift_end_ppm == -math.inf and dr.track is False


@pytest.mark.parametrize("pairs, msg", [({"nope": "1"}, "unknown key"),
                                        ({"srfd_type": "two"}, "bad value"),
                                        ({"track": "maybe"}, "bad value"),
                                        ({"srfd_type": "7"}, "srfd_type")])
def test_from_pairs_rejects_bad_entries(pairs, msg):
    cls = DriftConfig if "track" in pairs else ScurveConfig
    with pytest.raises(ConfigError, match=msg):
        config.from_pairs(cls, pairs)


def test_load_missing_file_names_the_path(tmp_path):
    path = tmp_path / "absent.cfg"
    with pytest.raises(ConfigError, match="absent.cfg"):
        config.load(ScurveConfig, path)


@pytest.mark.parametrize("cls", [CharacterizeConfig, ScurveConfig, AcquireConfig, DriftConfig,
                                 BerConfig])
def test_dumps_round_trips(cls, tmp_path):
    cfg = cls()
    path = tmp_path / "c.cfg"
    path.write_text(config.dumps(cfg))
    assert config.load(cls, path) == cfg


def test_scurve_grid_and_validation():
    g = ScurveConfig().grid()
    assert len(g) == 41 and g[0] == -0.2 and g[20] == 0.0 and g[-1] == 0.2
    with pytest.raises(ValueError):
        ScurveConfig(f_err_max_pct=30.0)
    with pytest.raises(ValueError):
        ScurveConfig(f_err_step_pct=0.0)
    with pytest.raises(ValueError):
        ScurveConfig(srfd_type=5)
    assert ScurveConfig(edge_mode="fine", edge_period_ui=4).scheme.phi5_mismatch == 0.0


# ---------------------------------------------------------------- reports

def _roundtrip(rep):
    text = rep.to_csv()
    back = type(rep).from_csv(text)
    assert back.to_csv() == text
    return back


def test_scurve_report_round_trip():
    rep = sweep_scurve(ScurveConfig(dump_ticks=2000, dumps_per_point=2), [-0.1, 0.0, 0.1],
                       (10.0,), seed=3)
    assert "f_err,loss_db,mean_dump,up,dn,none" in rep.to_csv()
    back = _roundtrip(rep)
    assert back.points == rep.points and back.dump_ticks == 2000


def test_characterize_report_round_trip():
    rep = harness.run_characterize(CharacterizeConfig(losses_db=(5.0,), phase_points=20,
                                                      bits_per_point=10_000), seed=2)
    back = _roundtrip(rep)
    assert back.groups == rep.groups


def test_lock_report_round_trip():
    rep = harness.run_acquire(AcquireConfig(coarse_dumps=4, fine_dumps=4, lock_settle_ui=5000,
                                            ber_bits=5000), seed=2)
    assert "stage,dump_index,coarse,fine,f_err_ppm" in rep.to_csv()
    back = _roundtrip(rep)
    assert back.rows == rep.rows and back.lock_dumps == 8


def test_drift_and_ber_report_round_trip():
    dr = harness.run_drift_test(DriftConfig(settle_us=2.0, drift_start_us=1.0, drift_ramp_us=5.0,
                                            drift_hold_us=5.0, transient_us=1.0), seed=2)
    back = _roundtrip(dr)
    assert back.rows == dr.rows and back.track is True
    br = harness.run_ber(BerConfig(settle_ui=5000, ber_bits=5000), seed=2)
    assert _roundtrip(br).errors == br.errors


# ---------------------------------------------------------------- determinism

def _small_sweep(seed, threads):
    cfg = ScurveConfig(dump_ticks=3000)
    return sweep_scurve(cfg, [-0.15, -0.05, 0.05, 0.15], (5.0, 15.0), seed=seed,
                        threads=threads).to_csv()


def test_sweep_is_deterministic_and_thread_independent():
    a = _small_sweep(7, 1)
    assert a == _small_sweep(7, 1)
    assert a == _small_sweep(7, 3)
    assert a != _small_sweep(8, 1)


# ---------------------------------------------------------------- S-curve

def test_detection_range_walks_out_from_the_centre():
    def pts(means):
        return [ScurvePoint(f, 10.0, m, 1, 0, 0) for f, m in means]
    p = pts([(-0.2, -1), (-0.1, -1), (0.0, 0), (0.1, 1), (0.2, -1), (0.3, 1)])
    assert detection_range(p) == (-0.2, 0.1)
    assert detection_range(pts([(-0.1, 1), (0.1, 1)])) == (0.0, 0.1)


def test_positive_error_at_10db_gives_positive_mean():
    pt = harness.scurve_point(make_channel(ChannelSpec(10.0)), 0.10, ScurveConfig(),
                              np.random.default_rng(0))
    assert pt.mean_dump > 0 and pt.up == 1


def _floor(cfg):
    # a tick is at most 1 in magnitude, so one point's mean has sigma <= 1/sqrt(ticks)
    return 1.0 / math.sqrt(cfg.dump_ticks * cfg.dumps_per_point)


@pytest.mark.parametrize("loss", [5.0, 10.0, 15.0])
def test_zero_error_stays_below_noise_floor(loss):
    cfg = ScurveConfig(losses_db=(loss,))
    rep = sweep_scurve(cfg, [0.0] * 8, seed=1, threads=4)
    assert max(abs(p.mean_dump) for p in rep.points) < 3 * _floor(cfg)


@pytest.mark.parametrize("loss", [5.0, 10.0, 15.0])
def test_scurve_odd_symmetry_without_mismatch(loss):
    cfg = ScurveConfig(losses_db=(loss,), phi5_mismatch_ui=0.0, dumps_per_point=4)
    offs = [0.05, 0.10, 0.15, 0.20]
    rep = sweep_scurve(cfg, offs + [-f for f in offs], seed=1, threads=4)
    m = {p.f_err: p.mean_dump for p in rep.points}
    worst = max(abs(m[f] + m[-f]) for f in offs)
    assert worst < 3 * math.sqrt(2) * _floor(cfg)


# ---------------------------------------------------------------- characterization

def oracle_curves(p, phases, history=12):
    """Exhaustive P(UP) per group over every ``history``-bit pattern preceding the edge."""
    xs = np.arange(len(p.samples)) / p.os
    hist = np.array(list(itertools.product([0, 1], repeat=history + 2)))
    prev = hist[:, history - 1]
    bits = np.column_stack([hist[:, :history], 1 - prev, hist[:, history:]])
    lag = history + p.step_half_ui + phases[None, :] - np.arange(bits.shape[1])[:, None]
    v = (2.0 * bits - 1.0) @ np.interp(lag, xs, p.samples, left=0.0, right=0.0)
    up = (v > 0) == (prev[:, None] == 0)
    g1 = hist[:, history - 2] == prev
    return up[g1].mean(axis=0), up[~g1].mean(axis=0)


def test_clean_channel_groups_coincide():
    g = characterize_groups(ChannelSpec(0.0), PHASES, 20_000)
    assert g.delta < 0.005
    assert abs((g.theta_g1 + 0.5) % 1.0 - 0.5) < 0.01


@pytest.mark.parametrize("loss", [5.0, 10.0])
def test_group_curves_match_exhaustive_oracle(loss):
    # the oracle holds the data samples ideal, so compare only where they stay clean
    p = make_channel(ChannelSpec(loss))
    q = (PHASES + 0.5) % 1.0 - 0.5
    o1, o2 = oracle_curves(p, q)
    s1, s2 = group_up_curves(p, PHASES, 100_000, rng=np.random.default_rng(2))
    w = (q >= -0.45) & (q <= 0.2)
    assert np.abs(o1 - s1)[w].max() < 0.02
    assert np.abs(o2 - s2)[w].max() < 0.02


def test_5db_crossings_match_oracle():
    p = make_channel(ChannelSpec(5.0))
    o1, o2 = oracle_curves(p, (PHASES + 0.5) % 1.0 - 0.5)
    g = characterize_groups(ChannelSpec(5.0), PHASES, 100_000, rng=np.random.default_rng(3))
    for theta, o in ((g.theta_g1, o1), (g.theta_g2, o2)):
        want = rising_crossing(PHASES, o)[0]
        assert abs((theta - want + 0.5) % 1.0 - 0.5) < 0.01


def test_10db_delta_tracks_oracle():
    p = make_channel(ChannelSpec(10.0))
    o1, o2 = oracle_curves(p, (PHASES + 0.5) % 1.0 - 0.5)
    d = abs(rising_crossing(PHASES, o1)[0] - rising_crossing(PHASES, o2)[0]) % 1.0
    want = min(d, 1.0 - d)
    g = characterize_groups(ChannelSpec(10.0), PHASES, 100_000, rng=np.random.default_rng(3))
    assert g.delta == pytest.approx(want, abs=0.04)


def test_rising_crossing_on_synthetic_curve():
    p = np.clip(0.5 + (((PHASES - 0.3 + 0.5) % 1.0) - 0.5) * 2.0, 0.0, 1.0)
    theta, slope = rising_crossing(PHASES, p)
    assert theta == pytest.approx(0.3, abs=1e-9)
    assert slope == pytest.approx(2.0, rel=1e-6)
    with pytest.raises(StatisticsError):
        rising_crossing(PHASES, np.full(100, 0.2))


def test_characterize_errors():
    with pytest.raises(ValueError, match="full UI"):
        characterize_groups(ChannelSpec(5.0), np.linspace(0.0, 0.5, 20), 10_000)
    with pytest.raises(StatisticsError):
        characterize_groups(ChannelSpec(5.0), PHASES[::10], 1000, min_votes=10_000)
    with pytest.raises(ValueError):
        CharacterizeConfig(phase_points=4)


# ---------------------------------------------------------------- closed loop

def test_zero_drift_track_run_is_quiet():
    rep = harness.run_drift_test(DriftConfig(drift_end_ppm=0.0, settle_us=20.0, drift_ramp_us=50.0,
                                             drift_hold_us=50.0, transient_us=10.0), seed=4)
    assert rep.track_pulses == 0
    assert rep.ber_errors == 0 and rep.ber_bits > 1_000_000


# ---------------------------------------------------------------- CLI

def _write_cfg(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def test_cli_scurve_writes_csv(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "losses_db = 10\nf_err_min_pct = -5\nf_err_max_pct = 5\n"
                               "f_err_step_pct = 5\ndump_ticks = 2000\n")
    out = tmp_path / "s.csv"
    assert cli.main(["scurve", "--config", cfg, "--out", str(out), "--threads", "2"]) == 0
    assert "f_err,loss_db,mean_dump,up,dn,none" in out.read_text()
    assert "scurve: 3 points" in capsys.readouterr().out


def test_cli_ber_to_stdout(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "settle_ui = 5000\nber_bits = 5000\n")
    assert cli.main(["ber", "--config", cfg]) == 0
    out = capsys.readouterr()
    assert "loss_db,f_err_ppm,bits,errors,ber" in out.out
    assert "ber:" in out.err


def test_cli_missing_config_names_path(tmp_path, capsys):
    path = str(tmp_path / "gone.cfg")
    assert cli.main(["scurve", "--config", path]) == 1
    assert "gone.cfg" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["scurve", "--bogus"], ["warp"], [],
                                  ["scurve", "--threads", "0"]])
def test_cli_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        rc = cli.main(argv)
        raise SystemExit(rc)
    assert exc.value.code == 1


def test_cli_bad_key_is_config_error(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "warp_factor = 9\n")
    assert cli.main(["drift", "--config", cfg]) == 1
    assert "warp_factor" in capsys.readouterr().err


def test_cli_runtime_failure_exits_2(tmp_path, capsys):
    # too few samples per UI for the pulse response
    cfg = _write_cfg(tmp_path, "samples_per_ui = 8\nsettle_ui = 5000\nber_bits = 5000\n")
    assert cli.main(["ber", "--config", cfg]) == 2
    assert "ber failed" in capsys.readouterr().err
