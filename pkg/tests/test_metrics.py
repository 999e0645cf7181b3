"""PSD estimation, out-of-band emission windows, and throughput arithmetic."""

import numpy as np
import pytest

from waveform_lab.core import ConfigError, SignalBuffer, seeded_rng
from waveform_lab.metrics import (
    THROUGHPUT_CAVEAT,
    ThroughputInput,
    normalized_throughput,
    oobe,
    psd_welch,
)

FS = 7.68e6


def _tone(freq_hz, n=1 << 15, fs=FS):
    t = np.arange(n) / fs
    return SignalBuffer(np.exp(2j * np.pi * freq_hz * t), fs)


def _bandlimited(rng, half_hz, n=1 << 15, fs=FS):
    spectrum = np.zeros(n, dtype=complex)
    half = int(half_hz / fs * n)
    occupied = np.arange(-half, half) % n
    spectrum[occupied] = np.exp(2j * np.pi * rng.uniform(size=2 * half))
    return SignalBuffer(np.fft.ifft(spectrum) * np.sqrt(n), fs)


# ---------------------------------------------------------------------------
# psd_welch
# ---------------------------------------------------------------------------

def test_psd_tone_peak_location():
    est = psd_welch(_tone(1.0e6), segment_size=4096)
    peak = est.freqs_hz[int(np.argmax(est.power_dbr))]
    assert peak == pytest.approx(1.0e6, abs=FS / 4096)


def test_psd_in_band_reference_is_0dbr():
    rng = seeded_rng(9, "metrics/ref")
    sig = _bandlimited(rng, 1.0e6)
    est = psd_welch(sig, segment_size=4096, in_band_hz=(-1.0e6, 1.0e6))
    mask = (est.freqs_hz >= -1.0e6) & (est.freqs_hz <= 1.0e6)
    lin = 10.0 ** (est.power_dbr[mask] / 10.0)
    assert 10 * np.log10(np.mean(lin)) == pytest.approx(0.0, abs=1e-9)


def test_psd_axis_covers_complex_band():
    est = psd_welch(_tone(-2.0e6), segment_size=1024)
    assert est.freqs_hz[0] < -3.5e6 and est.freqs_hz[-1] > 3.5e6
    assert np.all(np.diff(est.freqs_hz) > 0)
    peak = est.freqs_hz[int(np.argmax(est.power_dbr))]
    assert peak == pytest.approx(-2.0e6, abs=FS / 1024)


def test_psd_short_signal_rejected():
    with pytest.raises(ConfigError):
        psd_welch(SignalBuffer(np.ones(1000, dtype=complex), FS), segment_size=1024)


def test_psd_zero_power_rejected():
    with pytest.raises(ConfigError):
        psd_welch(SignalBuffer(np.zeros(1 << 13, dtype=complex), FS))


# ---------------------------------------------------------------------------
# oobe
# ---------------------------------------------------------------------------

def test_oobe_monotone_for_bandlimited_signal():
    rng = seeded_rng(9, "metrics/oobe")
    sig = _bandlimited(rng, 0.5e6)
    est = psd_welch(sig, segment_size=4096, in_band_hz=(-0.5e6, 0.5e6))
    vals = oobe(est, (-0.5e6, 0.5e6), [0.2e6, 0.6e6, 1.5e6])
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < -40.0


def test_oobe_offset_must_be_positive():
    est = psd_welch(_tone(0.0), segment_size=1024)
    with pytest.raises(ConfigError):
        oobe(est, (-1e6, 1e6), [0.0])


def test_oobe_window_beyond_nyquist_rejected():
    est = psd_welch(_tone(0.0), segment_size=1024)
    with pytest.raises(ConfigError):
        oobe(est, (-1e6, 1e6), [3.5e6])


# ---------------------------------------------------------------------------
# normalized throughput
# ---------------------------------------------------------------------------

def _baseline():
    # Worst-case reference: extended CP and 10% reserved tones.
    return ThroughputInput(name="baseline", symbol_duration_s=66.6667e-6,
                           cp_duration_s=16.6667e-6, data_tone_fraction=0.9,
                           bandwidth_weight=1.0)


def test_baseline_efficiency():
    rep = normalized_throughput([_baseline()], _baseline())
    assert rep.ofdm_total == pytest.approx(0.72, abs=1e-6)


def test_long_symbol_short_cp_efficiency():
    entry = ThroughputInput(name="pedestrian", symbol_duration_s=266.67e-6,
                            cp_duration_s=2.6e-6, data_tone_fraction=1.0,
                            bandwidth_weight=1.0)
    rep = normalized_throughput([entry], _baseline())
    assert rep.subbands[0].normalized_throughput == pytest.approx(0.99035, abs=1e-4)


def test_bandwidth_weighted_total():
    a = ThroughputInput("a", 266.67e-6, 2.6e-6, 1.0, bandwidth_weight=3.0)
    b = ThroughputInput("b", 16.67e-6, 1.95e-6, 1.0, bandwidth_weight=1.0)
    rep = normalized_throughput([a, b], _baseline())
    ea = 1 - 2.6 / (266.67 + 2.6)
    eb = 1 - 1.95 / (16.67 + 1.95)
    assert rep.fofdm_total == pytest.approx((3 * ea + eb) / 4, rel=1e-9)
    assert rep.gain_percent == pytest.approx(
        (rep.fofdm_total / rep.ofdm_total - 1) * 100, rel=1e-9)


def test_throughput_validation():
    with pytest.raises(ConfigError):
        normalized_throughput([], _baseline())
    bad = ThroughputInput("bad", 0.0, 1e-6, 1.0, 1.0)
    with pytest.raises(ConfigError):
        normalized_throughput([bad], _baseline())
    over = ThroughputInput("over", 1e-6, 1e-6, 1.5, 1.0)
    with pytest.raises(ConfigError):
        normalized_throughput([over], _baseline())


def test_caveat_mentions_link_adaptation():
    assert "link adaptation" in THROUGHPUT_CAVEAT
