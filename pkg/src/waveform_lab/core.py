"""Scenario configuration, numerology arithmetic, and common signal containers.

All spectral placement is accounted on a fixed 15 kHz reference lattice:
tone index ``i`` denotes the frequency interval ``[i*15e3, (i+1)*15e3)`` Hz,
with the scenario band centered at 0 Hz. A resource block (RB) is 12
reference tones.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import Optional

import numpy as np

REFERENCE_TONE_HZ = 15_000.0
TONES_PER_RB = 12

MODULATIONS = ("qpsk", "16qam", "64qam")


class ConfigError(ValueError):
    """Raised for parameter combinations that cannot be built or run."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Numerology:
    """OFDM parameter set of one subband.

    ``scs_hz * fft_size`` must equal the scenario sample rate; this is
    checked by :func:`validate_scenario`, not at construction time, so that
    arbitrary configs can be loaded and reported on.
    """

    scs_hz: float
    fft_size: int
    cp_samples: int
    symbols_per_tti: int

    @property
    def symbol_duration_s(self) -> float:
        return 1.0 / self.scs_hz

    @property
    def samples_per_symbol(self) -> int:
        return self.fft_size + self.cp_samples

    @property
    def sample_rate_hz(self) -> float:
        return self.scs_hz * self.fft_size


@dataclass(frozen=True)
class TimingInfo:
    symbol_duration_s: float
    cp_duration_s: float
    samples_per_symbol: int


def derive_timing(n: Numerology, sample_rate_hz: float) -> TimingInfo:
    """Symbol/CP durations of a numerology under a given sample rate."""
    if n.scs_hz <= 0 or n.fft_size <= 0 or n.symbols_per_tti <= 0:
        raise ConfigError(f"invalid numerology: {n}")
    if not 0 <= n.cp_samples < n.fft_size:
        raise ConfigError(f"cp_samples {n.cp_samples} out of range for fft {n.fft_size}")
    if sample_rate_hz <= 0:
        raise ConfigError("sample rate must be positive")
    if not _rates_consistent(n, sample_rate_hz):
        raise ConfigError(f"scs {n.scs_hz} x fft {n.fft_size} != sample rate {sample_rate_hz}")
    return TimingInfo(
        symbol_duration_s=1.0 / n.scs_hz,
        cp_duration_s=n.cp_samples / sample_rate_hz,
        samples_per_symbol=n.fft_size + n.cp_samples,
    )


@dataclass(frozen=True)
class SubbandSpec:
    """Spectral placement and per-subband configuration.

    ``start_tone``/``width_tones`` count occupied 15 kHz reference tones;
    guard tones are empty reference tones reserved on either side and are
    included in the disjointness accounting.
    """

    start_tone: int
    width_tones: int
    guard_tones_left: int
    guard_tones_right: int
    numerology: Numerology
    modulation: str
    power_offset_db: float = 0.0
    timing_offset_samples: int = 0

    @property
    def data_tones(self) -> int:
        """Number of data subcarriers at the subband's own spacing."""
        return int(round(self.width_tones * REFERENCE_TONE_HZ / self.numerology.scs_hz))

    @property
    def reserved_span(self) -> tuple[int, int]:
        """Half-open reference-tone interval including guard tones."""
        return (
            self.start_tone - self.guard_tones_left,
            self.start_tone + self.width_tones + self.guard_tones_right,
        )

    @property
    def occupied_low_hz(self) -> float:
        return self.start_tone * REFERENCE_TONE_HZ

    @property
    def occupied_high_hz(self) -> float:
        return (self.start_tone + self.width_tones) * REFERENCE_TONE_HZ

    @property
    def center_hz(self) -> float:
        return 0.5 * (self.occupied_low_hz + self.occupied_high_hz)

    @property
    def shift_hz(self) -> float:
        """Upconversion frequency: DC of the baseband resource grid.

        Data subcarrier ``d`` (0-based, ascending) lands at
        ``occupied_low_hz + (d + 0.5) * scs``, symmetric inside the
        occupied interval.
        """
        d = self.data_tones
        return self.occupied_low_hz + (d // 2 + 0.5) * self.numerology.scs_hz


@dataclass(frozen=True)
class RappConfig:
    input_backoff_db: float
    smoothness: float = 2.0


@dataclass(frozen=True)
class ImpairmentConfig:
    snr_db: Optional[float] = None  # None == noise off
    channel: str = "ideal"          # "ideal" or a TDL profile name
    pa: Optional[RappConfig] = None


@dataclass(frozen=True)
class ScenarioConfig:
    sample_rate_hz: float
    total_bandwidth_hz: float
    subbands: tuple[SubbandSpec, ...]
    impairments: ImpairmentConfig = ImpairmentConfig()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subbands", tuple(self.subbands))


class ResourceGrid:
    """Immutable tones x symbols matrix of constellation points (or zeros)."""

    def __init__(self, cells: np.ndarray):
        cells = np.asarray(cells, dtype=np.complex128)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ConfigError("resource grid must be a 2-D tones x symbols array")
        cells = cells.copy()
        cells.flags.writeable = False
        self._cells = cells

    @classmethod
    def zeros(cls, tones: int, symbols: int) -> "ResourceGrid":
        return cls(np.zeros((tones, symbols), dtype=np.complex128))

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def tones(self) -> int:
        return self._cells.shape[0]

    @property
    def symbols(self) -> int:
        return self._cells.shape[1]

    def __eq__(self, other):
        return isinstance(other, ResourceGrid) and np.array_equal(self._cells, other._cells)


@dataclass(frozen=True)
class SignalBuffer:
    """Complex baseband sample stream tagged with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.complex128).view()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if len(self.samples) else 0.0


def require_matching_rates(*buffers: SignalBuffer) -> float:
    rates = {b.sample_rate_hz for b in buffers}
    if len(rates) != 1:
        raise ConfigError(f"sample rate mismatch: {sorted(rates)}")
    return rates.pop()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    subband: Optional[int]  # None for scenario-level problems
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _frac(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


def _rates_consistent(n: Numerology, sample_rate_hz: float) -> bool:
    try:
        return _frac(n.scs_hz) * n.fft_size == _frac(sample_rate_hz)
    except (ValueError, ZeroDivisionError, OverflowError):
        return False


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """Check every scenario invariant; violations are data, not exceptions."""
    out: list[Violation] = []

    def bad(idx, msg):
        out.append(Violation(idx, msg))

    if not (isinstance(cfg.sample_rate_hz, (int, float)) and cfg.sample_rate_hz > 0):
        bad(None, "sample_rate_hz must be positive")
    if not (isinstance(cfg.total_bandwidth_hz, (int, float)) and cfg.total_bandwidth_hz > 0):
        bad(None, "total_bandwidth_hz must be positive")
    if not (isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64):
        bad(None, "seed must be an unsigned 64-bit integer")

    imp = cfg.impairments
    if imp.snr_db is not None and not isinstance(imp.snr_db, (int, float)):
        bad(None, "snr_db must be a number or off")
    if imp.pa is not None and not imp.pa.smoothness > 0:
        bad(None, "pa smoothness must be positive")
    if imp.channel != "ideal":
        from . import impairments as _imp  # local import; avoids module cycle
        if imp.channel not in _imp.available_profiles():
            bad(None, f"unknown channel profile {imp.channel!r}")

    half_bw = cfg.total_bandwidth_hz / 2.0 if cfg.total_bandwidth_hz > 0 else None
    for i, sb in enumerate(cfg.subbands):
        if sb.width_tones <= 0:
            bad(i, "width_tones must be positive")
            continue
        if sb.guard_tones_left < 0 or sb.guard_tones_right < 0:
            bad(i, "guard tone counts must be nonnegative")
        if sb.modulation not in MODULATIONS:
            bad(i, f"unknown modulation {sb.modulation!r}")
        n = sb.numerology
        if n.scs_hz <= 0 or n.fft_size <= 0:
            bad(i, "numerology scs_hz and fft_size must be positive")
            continue
        if n.symbols_per_tti <= 0:
            bad(i, "symbols_per_tti must be positive")
        if not 0 <= n.cp_samples < n.fft_size:
            bad(i, f"cp_samples {n.cp_samples} must lie in [0, fft_size)")
        if cfg.sample_rate_hz > 0 and not _rates_consistent(n, cfg.sample_rate_hz):
            bad(i, f"scs x fft != sample rate ({n.scs_hz} x {n.fft_size} != {cfg.sample_rate_hz})")
        width_hz = _frac(REFERENCE_TONE_HZ) * sb.width_tones
        if (width_hz % _frac(n.scs_hz)) != 0:
            bad(i, f"width {sb.width_tones} tones is not a whole number of {n.scs_hz} Hz subcarriers")
        if half_bw is not None:
            lo, hi = sb.reserved_span
            if lo * REFERENCE_TONE_HZ < -half_bw or hi * REFERENCE_TONE_HZ > half_bw:
                bad(i, "subband (including guard tones) exceeds total bandwidth")

    spans = sorted(
        (sb.reserved_span, i)
        for i, sb in enumerate(cfg.subbands)
        if sb.width_tones > 0
    )
    for (span_a, ia), (span_b, ib) in zip(spans, spans[1:]):
        if span_b[0] < span_a[1]:
            bad(ib, f"reserved tone span overlaps subband {ia}")

    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# Deterministic randomness
# ---------------------------------------------------------------------------

def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Deterministic, platform-stable random stream keyed by (seed, label)."""
    digest = hashlib.sha256(stream_label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *words]))


# ---------------------------------------------------------------------------
# Scenario file I/O (strict JSON schema, unknown keys rejected)
# ---------------------------------------------------------------------------

def _take(d: dict, allowed: set[str], ctx: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {ctx}: {sorted(unknown)}")


def _numerology_from_dict(d: dict) -> Numerology:
    _take(d, {"scs_hz", "fft_size", "cp_samples", "symbols_per_tti"}, "numerology")
    return Numerology(
        scs_hz=float(d["scs_hz"]),
        fft_size=int(d["fft_size"]),
        cp_samples=int(d["cp_samples"]),
        symbols_per_tti=int(d["symbols_per_tti"]),
    )


def _subband_from_dict(d: dict) -> SubbandSpec:
    _take(d, {
        "start_tone", "width_tones", "guard_tones_left", "guard_tones_right",
        "numerology", "modulation", "power_offset_db", "timing_offset_samples",
    }, "subband")
    return SubbandSpec(
        start_tone=int(d["start_tone"]),
        width_tones=int(d["width_tones"]),
        guard_tones_left=int(d.get("guard_tones_left", 0)),
        guard_tones_right=int(d.get("guard_tones_right", 0)),
        numerology=_numerology_from_dict(d["numerology"]),
        modulation=str(d["modulation"]),
        power_offset_db=float(d.get("power_offset_db", 0.0)),
        timing_offset_samples=int(d.get("timing_offset_samples", 0)),
    )


def _impairments_from_dict(d: dict) -> ImpairmentConfig:
    _take(d, {"snr_db", "channel", "pa"}, "impairments")
    snr = d.get("snr_db", "off")
    snr_db = None if snr == "off" or snr is None else float(snr)
    pa_raw = d.get("pa", "off")
    if pa_raw == "off" or pa_raw is None:
        pa = None
    else:
        _take(pa_raw, {"input_backoff_db", "smoothness"}, "pa")
        pa = RappConfig(
            input_backoff_db=float(pa_raw["input_backoff_db"]),
            smoothness=float(pa_raw.get("smoothness", 2.0)),
        )
    return ImpairmentConfig(snr_db=snr_db, channel=str(d.get("channel", "ideal")), pa=pa)


def scenario_from_dict(d: dict) -> ScenarioConfig:
    _take(d, {"sample_rate_hz", "total_bandwidth_hz", "subbands", "impairments", "seed"},
          "scenario")
    return ScenarioConfig(
        sample_rate_hz=float(d["sample_rate_hz"]),
        total_bandwidth_hz=float(d["total_bandwidth_hz"]),
        subbands=tuple(_subband_from_dict(s) for s in d["subbands"]),
        impairments=_impairments_from_dict(d.get("impairments", {})),
        seed=int(d.get("seed", 0)),
    )


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    imp = cfg.impairments
    return {
        "sample_rate_hz": cfg.sample_rate_hz,
        "total_bandwidth_hz": cfg.total_bandwidth_hz,
        "seed": cfg.seed,
        "impairments": {
            "snr_db": "off" if imp.snr_db is None else imp.snr_db,
            "channel": imp.channel,
            "pa": "off" if imp.pa is None else {
                "input_backoff_db": imp.pa.input_backoff_db,
                "smoothness": imp.pa.smoothness,
            },
        },
        "subbands": [
            {
                "start_tone": sb.start_tone,
                "width_tones": sb.width_tones,
                "guard_tones_left": sb.guard_tones_left,
                "guard_tones_right": sb.guard_tones_right,
                "modulation": sb.modulation,
                "power_offset_db": sb.power_offset_db,
                "timing_offset_samples": sb.timing_offset_samples,
                "numerology": {
                    "scs_hz": sb.numerology.scs_hz,
                    "fft_size": sb.numerology.fft_size,
                    "cp_samples": sb.numerology.cp_samples,
                    "symbols_per_tti": sb.numerology.symbols_per_tti,
                },
            }
            for sb in cfg.subbands
        ],
    }


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario file {path} is not valid JSON: {e}") from e
    return scenario_from_dict(raw)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def scenario_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(scenario_to_dict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
