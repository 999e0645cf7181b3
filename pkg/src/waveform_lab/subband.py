"""Subband composition: per-subband transmit/receive chains and sweeps.

Transmit: map bits onto the subband grid, OFDM-modulate (CP extended per
tail policy), upconvert to the subband center, bandpass-filter with the
subband-shifted windowed sinc, apply the power offset. Receive: matched
filter, downconvert, strip the two filter group delays, demodulate with the
receiver window advanced per policy, then divide out the genie estimate
(filter cascade response, window-advance phase ramp, power offset, and the
known channel snapshot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    REFERENCE_TONE_HZ,
    TONES_PER_RB,
    ConfigError,
    ResourceGrid,
    ScenarioConfig,
    SignalBuffer,
    SubbandSpec,
    require_matching_rates,
    seeded_rng,
    validate_scenario,
)
from .filters import (
    FilterSpec,
    FirFilter,
    _overlap_save,
    default_block_size,
    design_windowed_sinc,
    response_at,
)
from .impairments import ChannelRealization
from .modem import (
    BITS_PER_SYMBOL,
    ber,
    equalize,
    evm_db,
    ofdm_demodulate,
    ofdm_modulate,
    qam_demap,
    qam_map,
)

# Passband equal to the occupied width: every data tone sits inside the flat
# region of the response, so the genie equalizer never has to boost a tone in
# the filter transition. Leakage confinement comes from the filter skirts and,
# where needed, from guard tones between subbands.
DEFAULT_EDGE_BACKOFF_TONES = 0.0

# Passband pulled in by one reference tone per edge for subbands that share
# the band with neighbors: the outermost tones ride the filter transition
# (the equalizer boosts them back at a noise cost), and in exchange the
# skirts cut into neighboring allocations far more steeply.
PACKED_EDGE_BACKOFF_TONES = 1.0

# Mainlobe-to-CP ratio above which the receiver window is advanced (and the
# CP extended once the mainlobe outgrows it). The engine applies the advance
# for any filter whose mainlobe is non-negligible against the CP: the filter
# cascade is symmetric in time, so splitting the protected window around the
# slicing point suppresses the pre-cursor half of the tails.
DEFAULT_TAIL_THRESHOLD = 0.1


@dataclass(frozen=True)
class TailPolicy:
    mode: str  # "none" | "extended_cp"
    extra_cp_samples: int = 0
    rx_advance_samples: int = 0


TAIL_NONE = TailPolicy(mode="none")


@dataclass(frozen=True)
class SubbandTxArtifacts:
    fir: FirFilter
    grid: ResourceGrid
    bits: np.ndarray
    filter_delay_samples: int  # group delay of one filter pass


def default_filter_order(sample_rate_hz: float, passband_hz: float) -> int:
    """Order scaled to the subband's own bandwidth: ~6 sinc mainlobes of taps.

    Short relative to the symbol (well under the half-symbol cap): the window
    then soft-truncates the sinc tails close to the peak, which keeps the
    post-equalization inter-symbol leakage of the tx+rx filter cascade below
    the CP protection at every subband width. Narrow subbands get longer
    filters (their sinc decays slowly); wide subbands need only a few dozen
    taps. Clipped to [32, half-symbol cap].
    """
    if passband_hz <= 0:
        raise ConfigError(f"passband {passband_hz} Hz must be positive")
    order = int(6.0 * sample_rate_hz / passband_hz)
    order = max(32, min(order, packed_filter_order(sample_rate_hz)))
    return order - (order % 2)


def packed_filter_order(sample_rate_hz: float) -> int:
    """Half the 15 kHz symbol duration in samples, rounded down to even.

    The longest order whose tap count stays within half a symbol. Subbands
    that coexist with close neighbors take the sharpest affordable skirts;
    the extra self-interference this costs shows up on their own edge tones,
    where neighbor leakage dominates anyway.
    """
    order = int(sample_rate_hz / REFERENCE_TONE_HZ) // 2
    return order - (order % 2)


def scenario_filter_profile(scenario: ScenarioConfig) -> tuple[int | None, float]:
    """(order, edge backoff) for a scenario's subband filters.

    Isolated subbands favor low self-interference: a short filter (width-aware
    default, order None) with the passband covering every data tone. Packed
    scenarios favor confinement: the longest affordable filter with the
    passband pulled in at the edges.
    """
    if len(scenario.subbands) > 1:
        return packed_filter_order(scenario.sample_rate_hz), PACKED_EDGE_BACKOFF_TONES
    return None, DEFAULT_EDGE_BACKOFF_TONES


def design_subband_filter(
    spec: SubbandSpec,
    sample_rate_hz: float,
    order: int | None = None,
    window: str = "hann",
    rrc_rolloff: float = 0.6,
    edge_backoff_tones: float = DEFAULT_EDGE_BACKOFF_TONES,
) -> FirFilter:
    """Windowed-sinc bandpass centered on the subband's occupied interval."""
    passband = (spec.width_tones - 2.0 * edge_backoff_tones) * REFERENCE_TONE_HZ
    if passband <= 0:
        raise ConfigError(
            f"edge backoff {edge_backoff_tones} leaves no passband for "
            f"{spec.width_tones} tones"
        )
    if order is None:
        order = default_filter_order(sample_rate_hz, passband)
    return design_windowed_sinc(
        FilterSpec(
            order=order,
            passband_width_hz=passband,
            center_offset_hz=spec.center_hz,
            window=window,
            rrc_rolloff=rrc_rolloff,
        ),
        sample_rate_hz,
    )


def derive_tail_policy(f: FirFilter, n, threshold: float = 1.0) -> TailPolicy:
    """Extended-CP policy when the filter mainlobe exceeds the nominal CP."""
    lobe = f.mainlobe_samples
    if lobe <= n.cp_samples * threshold:
        return TAIL_NONE
    return TailPolicy(
        mode="extended_cp",
        extra_cp_samples=max(lobe - n.cp_samples, 0),
        rx_advance_samples=lobe // 2,
    )


def _extended_numerology(spec: SubbandSpec, policy: TailPolicy):
    n = spec.numerology
    if policy.mode == "none":
        return n
    return replace(n, cp_samples=n.cp_samples + policy.extra_cp_samples)


def build_grid(spec: SubbandSpec, bits) -> ResourceGrid:
    """Symbol-major fill of the subband grid; empty bits give an empty grid."""
    d = spec.data_tones
    s = spec.numerology.symbols_per_tti
    if bits is None or len(bits) == 0:
        return ResourceGrid.zeros(d, s)
    bps = BITS_PER_SYMBOL[spec.modulation]
    if len(bits) != d * s * bps:
        raise ConfigError(
            f"payload of {len(bits)} bits does not fill {d} tones x {s} symbols "
            f"at {bps} bits/symbol"
        )
    symbols = qam_map(bits, spec.modulation)
    return ResourceGrid(symbols.reshape(s, d).T)


def payload_bits(spec: SubbandSpec, rng: np.random.Generator) -> np.ndarray:
    count = spec.data_tones * spec.numerology.symbols_per_tti * BITS_PER_SYMBOL[spec.modulation]
    return rng.integers(0, 2, size=count, dtype=np.int64)


def tx_subband(
    spec: SubbandSpec,
    sample_rate_hz: float,
    bits,
    policy: TailPolicy = TAIL_NONE,
    fir: FirFilter | None = None,
) -> tuple[SignalBuffer, SubbandTxArtifacts]:
    """Modulate, upconvert, filter, and scale one subband."""
    if fir is None:
        fir = design_subband_filter(spec, sample_rate_hz)
    grid = build_grid(spec, bits)
    n_ext = _extended_numerology(spec, policy)
    baseband = ofdm_modulate(grid, n_ext)
    t = np.arange(len(baseband))
    up = baseband.samples * np.exp(2j * np.pi * spec.shift_hz * t / sample_rate_hz)
    filtered = _overlap_save(up, fir.taps, default_block_size(len(fir.taps)))
    amp = 10.0 ** (spec.power_offset_db / 20.0)
    signal = SignalBuffer(amp * filtered, sample_rate_hz)
    artifacts = SubbandTxArtifacts(
        fir=fir,
        grid=grid,
        bits=np.asarray(bits, dtype=np.int64) if bits is not None else np.empty(0, np.int64),
        filter_delay_samples=(len(fir.taps) - 1) // 2,
    )
    return signal, artifacts


def tx_subband_unfiltered(
    spec: SubbandSpec,
    sample_rate_hz: float,
    bits,
    policy: TailPolicy = TAIL_NONE,
) -> tuple[SignalBuffer, SubbandTxArtifacts]:
    """Plain-OFDM reference chain: same grid and upconversion, no filter."""
    grid = build_grid(spec, bits)
    n_ext = _extended_numerology(spec, policy)
    baseband = ofdm_modulate(grid, n_ext)
    t = np.arange(len(baseband))
    up = baseband.samples * np.exp(2j * np.pi * spec.shift_hz * t / sample_rate_hz)
    amp = 10.0 ** (spec.power_offset_db / 20.0)
    unit = FirFilter(
        taps=np.ones(1, dtype=np.complex128),
        spec=FilterSpec(order=0, passband_width_hz=sample_rate_hz / 2,
                        center_offset_hz=0.0, window="external"),
        sample_rate_hz=sample_rate_hz,
        mainlobe_samples=1,
    )
    artifacts = SubbandTxArtifacts(
        fir=unit,
        grid=grid,
        bits=np.asarray(bits, dtype=np.int64) if bits is not None else np.empty(0, np.int64),
        filter_delay_samples=0,
    )
    return SignalBuffer(amp * up, sample_rate_hz), artifacts


def genie_estimates(
    spec: SubbandSpec,
    fir: FirFilter,
    policy: TailPolicy = TAIL_NONE,
    channel: ChannelRealization | None = None,
) -> np.ndarray:
    """Per-tone complex gain of the full known chain (both filter passes,
    delay-compensated group delay, window-advance phase ramp, power offset,
    and channel snapshot)."""
    n = spec.numerology
    d = spec.data_tones
    bins = np.arange(d) - d // 2
    tone_freqs = spec.shift_hz + bins * n.scs_hz
    cascade = response_at(fir, tone_freqs) ** 2
    total_delay = len(fir.taps) - 1
    advance = policy.rx_advance_samples
    ramp = np.exp(2j * np.pi * bins * (total_delay - advance) / n.fft_size)
    est = 10.0 ** (spec.power_offset_db / 20.0) * cascade * ramp
    if channel is not None:
        est = est * channel.frequency_response(tone_freqs)
    return est


@dataclass(frozen=True)
class SubbandRxResult:
    grid: ResourceGrid
    bits: np.ndarray
    evm_db: float
    erased: np.ndarray


def rx_subband(
    composite: SignalBuffer,
    spec: SubbandSpec,
    artifacts: SubbandTxArtifacts,
    policy: TailPolicy = TAIL_NONE,
    channel: ChannelRealization | None = None,
) -> SubbandRxResult:
    """Recover one subband from the assembled stream; EVM is against the
    transmitted grid after genie equalization."""
    fs = composite.sample_rate_hz
    fir = artifacts.fir
    filtered = _overlap_save(composite.samples, fir.taps, default_block_size(len(fir.taps)))
    offset = spec.timing_offset_samples
    t = np.arange(len(filtered))
    baseband = filtered * np.exp(-2j * np.pi * spec.shift_hz * (t - offset) / fs)
    n_ext = _extended_numerology(spec, policy)
    total_delay = len(fir.taps) - 1
    start = offset + total_delay
    seg_len = n_ext.symbols_per_tti * n_ext.samples_per_symbol
    if start < 0 or start + seg_len > len(baseband):
        raise ConfigError("composite buffer too short for the subband frame")
    seg = SignalBuffer(baseband[start:start + seg_len], fs)
    raw = ofdm_demodulate(seg, n_ext, policy.rx_advance_samples, spec.data_tones)
    est = genie_estimates(spec, fir, policy, channel)
    eq, erased = equalize(raw, est)
    bits_hat = qam_demap(eq.cells.T.ravel(), spec.modulation)
    if np.any(artifacts.grid.cells != 0):
        evm = evm_db(artifacts.grid, eq)
    else:
        evm = float("nan")
    return SubbandRxResult(grid=eq, bits=bits_hat, evm_db=evm, erased=erased)


def assemble(signals: list[SignalBuffer], offsets: list[int]) -> SignalBuffer:
    """Shift each stream by its sample offset, zero-pad, and sum."""
    if len(signals) != len(offsets):
        raise ConfigError("one offset per signal is required")
    if not signals:
        raise ConfigError("nothing to assemble")
    fs = require_matching_rates(*signals)
    if any(o < 0 for o in offsets):
        raise ConfigError("offsets must be nonnegative")
    length = max(o + len(s) for s, o in zip(signals, offsets))
    out = np.zeros(length, dtype=np.complex128)
    for s, o in zip(signals, offsets):
        out[o:o + len(s)] += s.samples
    return SignalBuffer(out, fs)


# ---------------------------------------------------------------------------
# Guard-tone sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    guard_tones: int
    power_offset_db: float
    modulation: str
    snr_db: float
    evm_db_edge: float
    evm_db_inner: float
    ber: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    baselines: dict  # modulation -> SweepRow (guard_tones == -1 marker unused in CSV)

    def csv_lines(self) -> list[str]:
        lines = ["guard_tones,power_offset_db,modulation,snr_db,evm_db_edge,evm_db_inner,ber"]
        for r in self.rows:
            lines.append(
                f"{r.guard_tones},{r.power_offset_db:.6g},{r.modulation},{r.snr_db:.6g},"
                f"{r.evm_db_edge:.6f},{r.evm_db_inner:.6f},{r.ber:.8g}"
            )
        return lines


def _edge_tone_count(spec: SubbandSpec) -> int:
    per_rb = int(round(TONES_PER_RB * REFERENCE_TONE_HZ / spec.numerology.scs_hz))
    return min(max(per_rb, 1), spec.data_tones)


def _sweep_geometry(base: ScenarioConfig, guard: int, power_db: float, modulation: str):
    """Reposition the base subbands with `guard` empty tones between neighbors.

    The second subband (interferer) stays put and carries the power offset and
    a half-symbol delay; the first (victim) and optional third move outward.
    """
    subs = list(base.subbands)
    interferer = subs[1]
    half_symbol = interferer.numerology.samples_per_symbol // 2
    out = []
    victim = replace(
        subs[0],
        start_tone=interferer.start_tone - guard - subs[0].width_tones,
        guard_tones_left=0,
        guard_tones_right=guard,
        modulation=modulation,
        power_offset_db=0.0,
        timing_offset_samples=0,
    )
    out.append(victim)
    out.append(replace(
        interferer,
        guard_tones_left=0,
        guard_tones_right=0,
        modulation=modulation,
        power_offset_db=power_db,
        timing_offset_samples=half_symbol,
    ))
    if len(subs) > 2:
        out.append(replace(
            subs[2],
            start_tone=interferer.start_tone + interferer.width_tones + guard,
            guard_tones_left=guard,
            guard_tones_right=0,
            modulation=modulation,
            power_offset_db=0.0,
            timing_offset_samples=2 * half_symbol,
        ))
    return out


class _ErrorAccumulator:
    def __init__(self):
        self.err_edge = 0.0
        self.ref_edge = 0.0
        self.err_inner = 0.0
        self.ref_inner = 0.0
        self.bit_errors = 0
        self.bits_total = 0

    def add(self, reference: ResourceGrid, received: ResourceGrid,
            edge_tones: np.ndarray, tx_bits, rx_bits):
        err = np.abs(received.cells - reference.cells) ** 2
        ref = np.abs(reference.cells) ** 2
        inner = np.ones(reference.tones, dtype=bool)
        inner[edge_tones] = False
        self.err_edge += float(err[edge_tones, :].sum())
        self.ref_edge += float(ref[edge_tones, :].sum())
        self.err_inner += float(err[inner, :].sum())
        self.ref_inner += float(ref[inner, :].sum())
        r = ber(tx_bits, rx_bits)
        self.bit_errors += r.errors
        self.bits_total += r.total

    def row(self, guard: int, power_db: float, modulation: str, snr_db: float) -> SweepRow:
        def _db(err, ref):
            if ref == 0.0:
                return float("nan")
            if err == 0.0:
                return -100.0
            return max(10.0 * math.log10(err / ref), -100.0)

        return SweepRow(
            guard_tones=guard,
            power_offset_db=power_db,
            modulation=modulation,
            snr_db=snr_db,
            evm_db_edge=_db(self.err_edge, self.ref_edge),
            evm_db_inner=_db(self.err_inner, self.ref_inner),
            ber=self.bit_errors / self.bits_total if self.bits_total else float("nan"),
        )


def _sweep_noise(length: int, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    scale = math.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(length) + 1j * rng.standard_normal(length))


def guardtone_sweep(
    base: ScenarioConfig,
    guard_counts: list[int],
    power_offsets_db: list[float],
    snr_db: float,
    trials: int,
    modulations: tuple[str, ...] = ("qpsk", "16qam", "64qam"),
    filter_order: int | None = None,
) -> SweepResult:
    """Full factorial (guard, power offset, modulation) interference sweep.

    The victim is the first subband; its RB adjacent to the interferer is the
    edge measurement. Noise is calibrated so the victim's per-tone SNR equals
    `snr_db` (per-sample variance 10^(-snr/10) under the unit-power
    constellation and unitary FFT scaling), identically in the isolated
    baselines, so baseline deltas isolate inter-subband interference.
    """
    if trials < 1:
        raise ConfigError("at least one trial is required")
    if not base.subbands:
        raise ConfigError("base scenario has no subbands")
    report = validate_scenario(base)
    if not report.ok:
        raise ConfigError(f"base scenario invalid: {report.violations[0].message}")
    fs = base.sample_rate_hz
    sigma2 = 10.0 ** (-snr_db / 10.0)
    single = len(base.subbands) == 1

    profile_order, edge_backoff = scenario_filter_profile(base)
    if filter_order is None:
        filter_order = profile_order

    victim_template = base.subbands[0]
    edge_count = _edge_tone_count(victim_template)

    # Baselines: isolated victim, one per modulation, same noise calibration.
    baselines = {}
    for mod in modulations:
        spec = replace(victim_template, modulation=mod, power_offset_db=0.0,
                       timing_offset_samples=0)
        fir = design_subband_filter(spec, fs, order=filter_order,
                                    edge_backoff_tones=edge_backoff)
        policy = derive_tail_policy(fir, spec.numerology, DEFAULT_TAIL_THRESHOLD)
        acc = _ErrorAccumulator()
        edge = np.arange(spec.data_tones - edge_count, spec.data_tones)
        for trial in range(trials):
            bits = payload_bits(spec, seeded_rng(base.seed, f"bits/baseline/{mod}/{trial}"))
            sig, art = tx_subband(spec, fs, bits, policy=policy, fir=fir)
            noise = _sweep_noise(len(sig), sigma2,
                                 seeded_rng(base.seed, f"noise/baseline/{mod}/{trial}"))
            noisy = SignalBuffer(sig.samples + noise, fs)
            res = rx_subband(noisy, spec, art, policy=policy)
            acc.add(art.grid, res.grid, edge, bits, res.bits)
        baselines[mod] = acc.row(-1, 0.0, mod, snr_db)

    rows = []
    for guard in guard_counts:
        for power_db in power_offsets_db:
            for mod in modulations:
                if single:
                    rows.append(replace(baselines[mod], guard_tones=guard,
                                        power_offset_db=power_db))
                    continue
                subs = _sweep_geometry(base, guard, power_db, mod)
                scn = replace(base, subbands=tuple(subs))
                rep = validate_scenario(scn)
                if not rep.ok:
                    raise ConfigError(
                        f"sweep cell guard={guard} invalid: {rep.violations[0].message}"
                    )
                firs = [design_subband_filter(s, fs, order=filter_order,
                                              edge_backoff_tones=edge_backoff)
                        for s in subs]
                policies = [derive_tail_policy(f, s.numerology, DEFAULT_TAIL_THRESHOLD)
                            for s, f in zip(subs, firs)]
                victim = subs[0]
                edge = np.arange(victim.data_tones - edge_count, victim.data_tones)
                acc = _ErrorAccumulator()
                cell = f"g{guard}/p{power_db:g}/{mod}"
                for trial in range(trials):
                    signals, artifacts = [], []
                    for i, (s, f, p) in enumerate(zip(subs, firs, policies)):
                        bits = (
                            payload_bits(s, seeded_rng(base.seed,
                                                       f"bits/baseline/{mod}/{trial}"))
                            if i == 0 else
                            payload_bits(s, seeded_rng(base.seed,
                                                       f"bits/{cell}/{trial}/s{i}"))
                        )
                        sig, art = tx_subband(s, fs, bits, policy=p, fir=f)
                        signals.append(sig)
                        artifacts.append(art)
                    comp = assemble(signals, [s.timing_offset_samples for s in subs])
                    noise = _sweep_noise(
                        len(comp), sigma2,
                        seeded_rng(base.seed, f"noise/baseline/{mod}/{trial}"),
                    )
                    noisy = SignalBuffer(comp.samples + noise[:len(comp)], fs)
                    res = rx_subband(noisy, victim, artifacts[0], policy=policies[0])
                    acc.add(artifacts[0].grid, res.grid, edge, artifacts[0].bits, res.bits)
                rows.append(acc.row(guard, power_db, mod, snr_db))

    rows.sort(key=lambda r: (r.guard_tones, r.power_offset_db, r.modulation))
    return SweepResult(rows=tuple(rows), baselines=baselines)
