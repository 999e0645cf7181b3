"""Per-subband OFDM baseband: QAM mapping, IFFT/CP modulation, equalization.

Constellations follow the LTE Gray convention: bits are interleaved onto the
I and Q axes (even-index bits to I, odd to Q) and each axis is Gray-coded
over levels {+/-1}, {+/-1, +/-3}, or {+/-1 .. +/-7}, scaled to unit average
power by sqrt(2), sqrt(10), sqrt(42).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, Numerology, ResourceGrid, SignalBuffer

BITS_PER_SYMBOL = {"qpsk": 2, "16qam": 4, "64qam": 6}

EVM_FLOOR_DB = -100.0


def _axis_level(bits: np.ndarray) -> np.ndarray:
    """LTE per-axis Gray mapping; `bits` has shape (n, bits_per_axis)."""
    k = bits.shape[1]
    sign = 1 - 2 * bits[:, 0]
    if k == 1:
        return sign.astype(float)
    if k == 2:
        return sign * (2 - (1 - 2 * bits[:, 1]))
    if k == 3:
        return sign * (4 - (1 - 2 * bits[:, 1]) * (2 - (1 - 2 * bits[:, 2])))
    raise ConfigError(f"unsupported bits per axis: {k}")


def _build_constellation(modulation: str) -> np.ndarray:
    bps = BITS_PER_SYMBOL[modulation]
    labels = np.arange(2 ** bps)
    bits = ((labels[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.int64)
    i_level = _axis_level(bits[:, 0::2])
    q_level = _axis_level(bits[:, 1::2])
    norm = {"qpsk": 2.0, "16qam": 10.0, "64qam": 42.0}[modulation]
    return (i_level + 1j * q_level) / math.sqrt(norm)


CONSTELLATIONS = {mod: _build_constellation(mod) for mod in BITS_PER_SYMBOL}


def qam_map(bits, modulation: str) -> np.ndarray:
    """Map a 0/1 bit vector to Gray-labeled unit-average-power symbols."""
    if modulation not in BITS_PER_SYMBOL:
        raise ConfigError(f"unknown modulation {modulation!r}")
    bits = np.asarray(bits, dtype=np.int64)
    bps = BITS_PER_SYMBOL[modulation]
    if bits.ndim != 1 or len(bits) % bps != 0:
        raise ConfigError(f"bit count {bits.size} is not a multiple of {bps}")
    groups = bits.reshape(-1, bps)
    labels = groups @ (1 << np.arange(bps - 1, -1, -1))
    return CONSTELLATIONS[modulation][labels]


def qam_demap(symbols, modulation: str) -> np.ndarray:
    """Hard minimum-distance decisions; ties resolve to the lowest label."""
    if modulation not in BITS_PER_SYMBOL:
        raise ConfigError(f"unknown modulation {modulation!r}")
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    points = CONSTELLATIONS[modulation]
    dist = np.abs(symbols[:, None] - points[None, :])
    labels = np.argmin(dist, axis=1)  # first occurrence == lowest label
    bps = BITS_PER_SYMBOL[modulation]
    return ((labels[:, None] >> np.arange(bps - 1, -1, -1)) & 1).astype(np.int64).ravel()


def _tone_bins(tones: int, fft_size: int) -> np.ndarray:
    if tones > fft_size:
        raise ConfigError(f"grid of {tones} tones does not fit fft size {fft_size}")
    return (np.arange(tones) - tones // 2) % fft_size


def ofdm_modulate(grid: ResourceGrid, n: Numerology) -> SignalBuffer:
    """Centered tone mapping, unitary IFFT, cyclic prefix; symbols concatenated."""
    bins = _tone_bins(grid.tones, n.fft_size)
    spectrum = np.zeros((n.fft_size, grid.symbols), dtype=np.complex128)
    spectrum[bins, :] = grid.cells
    body = np.fft.ifft(spectrum, axis=0, norm="ortho")
    with_cp = np.concatenate([body[n.fft_size - n.cp_samples:, :], body], axis=0)
    return SignalBuffer(with_cp.reshape(-1, order="F"), n.sample_rate_hz)


def ofdm_demodulate(
    sig: SignalBuffer, n: Numerology, window_advance_samples: int, tones: int
) -> ResourceGrid:
    """Unitary FFT per symbol with the window advanced into the cyclic prefix.

    The advance-induced per-tone phase ramp is left in place for the
    equalizer to absorb.
    """
    if window_advance_samples < 0 or (
        window_advance_samples > 0 and window_advance_samples >= n.cp_samples
    ):
        raise ConfigError(
            f"window advance {window_advance_samples} must lie in [0, cp={n.cp_samples})"
        )
    sps = n.samples_per_symbol
    n_sym = len(sig) // sps
    if n_sym < 1:
        raise ConfigError(f"signal of {len(sig)} samples is shorter than one symbol ({sps})")
    x = np.asarray(sig.samples)
    starts = np.arange(n_sym) * sps + n.cp_samples - window_advance_samples
    windows = x[starts[None, :] + np.arange(n.fft_size)[:, None]]
    spectrum = np.fft.fft(windows, axis=0, norm="ortho")
    return ResourceGrid(spectrum[_tone_bins(tones, n.fft_size), :])


def equalize(grid: ResourceGrid, estimates: np.ndarray) -> tuple[ResourceGrid, np.ndarray]:
    """One-tap division by genie channel estimates.

    `estimates` is per-tone (shape (tones,)) or per-cell (tones, symbols).
    Returns the corrected grid and a boolean erasure mask marking tones whose
    estimate had zero magnitude (left undivided at zero).
    """
    est = np.asarray(estimates, dtype=np.complex128)
    if est.ndim == 1:
        est = est[:, None]
    if est.shape[0] != grid.tones or (est.shape[1] not in (1, grid.symbols)):
        raise ConfigError(
            f"estimate shape {est.shape} does not match grid {grid.cells.shape}"
        )
    est = np.broadcast_to(est, grid.cells.shape)
    erased = np.abs(est) == 0.0
    safe = np.where(erased, 1.0, est)
    cells = np.where(erased, 0.0, grid.cells / safe)
    return ResourceGrid(cells), erased


def evm_db(reference: ResourceGrid, received: ResourceGrid) -> float:
    """10*log10(error power / reference power) over nonzero reference cells."""
    if reference.cells.shape != received.cells.shape:
        raise ConfigError("reference and received grids differ in shape")
    mask = reference.cells != 0
    ref_power = np.sum(np.abs(reference.cells[mask]) ** 2)
    if ref_power == 0.0:
        raise ConfigError("reference grid has no nonzero cells")
    err_power = np.sum(np.abs(received.cells[mask] - reference.cells[mask]) ** 2)
    if err_power == 0.0:
        return EVM_FLOOR_DB
    return max(10.0 * math.log10(err_power / ref_power), EVM_FLOOR_DB)


@dataclass(frozen=True)
class BerResult:
    errors: int
    total: int

    @property
    def ratio(self) -> float:
        return self.errors / self.total if self.total else 0.0


def ber(tx_bits, rx_bits) -> BerResult:
    tx = np.asarray(tx_bits, dtype=np.int64)
    rx = np.asarray(rx_bits, dtype=np.int64)
    if tx.shape != rx.shape:
        raise ConfigError(f"bit vectors differ in length: {tx.size} vs {rx.size}")
    return BerResult(errors=int(np.sum(tx != rx)), total=int(tx.size))
