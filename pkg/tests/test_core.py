"""Configuration model: numerology timing, subband placement, validation,
scenario (de)serialization, and seeded randomness."""

import json
import math

import numpy as np
import pytest

from waveform_lab.core import (
    ConfigError,
    ImpairmentConfig,
    Numerology,
    RappConfig,
    ResourceGrid,
    ScenarioConfig,
    SignalBuffer,
    SubbandSpec,
    derive_timing,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_hash,
    scenario_to_dict,
    seeded_rng,
    validate_scenario,
)

DESK = Numerology(scs_hz=15e3, fft_size=512, cp_samples=36, symbols_per_tti=14)
FS = 7.68e6


def _scenario(subbands, fs=FS, bw=6.5e6, seed=1):
    return ScenarioConfig(
        sample_rate_hz=fs,
        total_bandwidth_hz=bw,
        subbands=tuple(subbands),
        impairments=ImpairmentConfig(),
        seed=seed,
    )


def _subband(start, width, **kw):
    args = dict(
        start_tone=start,
        width_tones=width,
        guard_tones_left=0,
        guard_tones_right=0,
        numerology=DESK,
        modulation="qpsk",
    )
    args.update(kw)
    return SubbandSpec(**args)


# ---------------------------------------------------------------------------
# Numerology / timing
# ---------------------------------------------------------------------------

def test_numerology_symbol_timing():
    t = derive_timing(DESK, FS)
    assert t.symbol_duration_s == pytest.approx(1 / 15e3)
    assert t.cp_duration_s == pytest.approx(36 / FS)
    assert t.samples_per_symbol == 548


def test_timing_narrow_spacing():
    # 3.75 kHz spacing at the same rate: four times the symbol duration.
    n = Numerology(scs_hz=3.75e3, fft_size=2048, cp_samples=20, symbols_per_tti=14)
    t = derive_timing(n, FS)
    assert t.symbol_duration_s == pytest.approx(266.67e-6, rel=1e-4)


def test_timing_rate_mismatch_rejected():
    with pytest.raises(ConfigError):
        derive_timing(DESK, 7.69e6)


def test_timing_cp_exceeding_symbol_rejected():
    bad = Numerology(scs_hz=15e3, fft_size=512, cp_samples=512, symbols_per_tti=14)
    with pytest.raises(ConfigError):
        derive_timing(bad, FS)


def test_numerology_sample_rate_property():
    assert DESK.sample_rate_hz == pytest.approx(FS)
    assert DESK.samples_per_symbol == 548


# ---------------------------------------------------------------------------
# Subband placement
# ---------------------------------------------------------------------------

def test_subband_edges_and_center():
    sb = _subband(-24, 48)
    assert sb.occupied_low_hz == pytest.approx(-360e3)
    assert sb.occupied_high_hz == pytest.approx(360e3)
    assert sb.center_hz == pytest.approx(0.0)
    assert sb.data_tones == 48


def test_subband_half_tone_symmetry():
    # Data tone d sits at occupied_low + (d + 0.5) * scs; the DC of the
    # baseband grid (bin 0 = tone d = data_tones//2) is the shift frequency.
    sb = _subband(-24, 48)
    d = sb.data_tones // 2
    assert sb.shift_hz == pytest.approx(sb.occupied_low_hz + (d + 0.5) * 15e3)
    # Symmetric occupancy: first and last tone equidistant from the edges.
    first = sb.occupied_low_hz + 0.5 * 15e3
    last = sb.occupied_low_hz + (sb.data_tones - 1 + 0.5) * 15e3
    assert (first - sb.occupied_low_hz) == pytest.approx(sb.occupied_high_hz - last)


def test_subband_reserved_span_includes_guards():
    sb = _subband(-24, 48, guard_tones_left=2, guard_tones_right=3)
    assert sb.reserved_span == (-26, 27)


def test_data_tones_at_wider_spacing():
    n = Numerology(scs_hz=30e3, fft_size=256, cp_samples=18, symbols_per_tti=28)
    sb = _subband(0, 48, numerology=n)
    assert sb.data_tones == 24


# ---------------------------------------------------------------------------
# Scenario validation
# ---------------------------------------------------------------------------

def test_validate_accepts_disjoint_layout():
    cfg = _scenario([_subband(-100, 48), _subband(0, 48)])
    assert validate_scenario(cfg).ok


def test_validate_rejects_overlap():
    cfg = _scenario([_subband(-24, 48), _subband(20, 48)])
    report = validate_scenario(cfg)
    assert not report.ok
    assert any("overlap" in v.message for v in report.violations)


def test_validate_guard_overlap_counts():
    # Adjacent but guard tones collide.
    cfg = _scenario([
        _subband(-48, 48, guard_tones_right=2),
        _subband(1, 48),
    ])
    assert not validate_scenario(cfg).ok


def test_validate_rejects_rate_mismatch():
    n = Numerology(scs_hz=15e3, fft_size=1024, cp_samples=36, symbols_per_tti=14)
    cfg = _scenario([_subband(0, 48, numerology=n)])
    assert not validate_scenario(cfg).ok


def test_validate_rejects_band_overflow():
    cfg = _scenario([_subband(200, 48)], bw=6.5e6)
    assert not validate_scenario(cfg).ok


def test_validate_rejects_fractional_width():
    # Width not a whole number of the subband's own subcarriers.
    n = Numerology(scs_hz=30e3, fft_size=256, cp_samples=18, symbols_per_tti=28)
    cfg = _scenario([_subband(0, 47, numerology=n)])
    assert not validate_scenario(cfg).ok


def test_validate_reports_subband_index():
    cfg = _scenario([_subband(-100, 48), _subband(200, 48)])
    report = validate_scenario(cfg)
    assert not report.ok
    assert report.violations[0].subband == 1


# ---------------------------------------------------------------------------
# Buffers and grids
# ---------------------------------------------------------------------------

def test_resource_grid_immutable():
    g = ResourceGrid.zeros(4, 2)
    with pytest.raises(ValueError):
        g.cells[0, 0] = 1.0


def test_signal_buffer_power():
    s = SignalBuffer(np.array([3.0 + 4.0j, 0.0]), FS)
    assert s.power() == pytest.approx(12.5)


def test_signal_buffer_immutable():
    s = SignalBuffer(np.ones(4, dtype=complex), FS)
    with pytest.raises(ValueError):
        s.samples[0] = 0.0


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_scenario_round_trip(tmp_path):
    cfg = _scenario([_subband(-24, 48, guard_tones_right=2, power_offset_db=3.0)])
    path = tmp_path / "s.json"
    save_scenario(cfg, path)
    again = load_scenario(path)
    assert again == cfg
    assert scenario_hash(again) == scenario_hash(cfg)


def test_scenario_unknown_key_rejected():
    d = scenario_to_dict(_scenario([_subband(-24, 48)]))
    d["extra"] = 1
    with pytest.raises(ConfigError):
        scenario_from_dict(d)


def test_scenario_unknown_subband_key_rejected():
    d = scenario_to_dict(_scenario([_subband(-24, 48)]))
    d["subbands"][0]["bogus"] = True
    with pytest.raises(ConfigError):
        scenario_from_dict(d)


def test_scenario_hash_tracks_content():
    a = _scenario([_subband(-24, 48)])
    b = _scenario([_subband(-24, 48)], seed=2)
    assert scenario_hash(a) != scenario_hash(b)


def test_impairments_serialization():
    cfg = _scenario([_subband(-24, 48)])
    cfg = ScenarioConfig(
        sample_rate_hz=cfg.sample_rate_hz,
        total_bandwidth_hz=cfg.total_bandwidth_hz,
        subbands=cfg.subbands,
        impairments=ImpairmentConfig(snr_db=20.0, channel="epa",
                                     pa=RappConfig(9.6, 2.0)),
        seed=1,
    )
    again = scenario_from_dict(scenario_to_dict(cfg))
    assert again.impairments.snr_db == 20.0
    assert again.impairments.channel == "epa"
    assert again.impairments.pa.input_backoff_db == pytest.approx(9.6)


def test_validate_rejects_unknown_channel_profile():
    cfg = _scenario([_subband(-24, 48)])
    cfg = ScenarioConfig(
        sample_rate_hz=cfg.sample_rate_hz,
        total_bandwidth_hz=cfg.total_bandwidth_hz,
        subbands=cfg.subbands,
        impairments=ImpairmentConfig(channel="no-such-profile"),
        seed=1,
    )
    assert not validate_scenario(cfg).ok


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

def test_seeded_rng_deterministic():
    a = seeded_rng(7, "x").standard_normal(8)
    b = seeded_rng(7, "x").standard_normal(8)
    assert np.array_equal(a, b)


def test_seeded_rng_label_separation():
    a = seeded_rng(7, "x").standard_normal(8)
    b = seeded_rng(7, "y").standard_normal(8)
    assert not np.array_equal(a, b)


def test_seeded_rng_seed_separation():
    a = seeded_rng(7, "x").standard_normal(8)
    b = seeded_rng(8, "x").standard_normal(8)
    assert not np.array_equal(a, b)
