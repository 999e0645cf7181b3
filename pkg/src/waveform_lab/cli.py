"""Batch command-line front end.

Verbs: psd | guardtone | throughput | selftest. Every command writes a run
manifest before any data file, then finalizes it with output hashes and wall
clock, so partial runs are detectable. All CSVs use "." decimals and "\\n"
line endings; identical (scenario, seed, version) reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ConfigError,
    ScenarioConfig,
    SignalBuffer,
    load_scenario,
    scenario_hash,
    seeded_rng,
    validate_scenario,
)
from .filters import (
    FilterSpec,
    design_windowed_sinc,
    direct_convolve,
    overlap_save_convolve,
)
from .impairments import awgn, pa_rapp
from .metrics import ThroughputInput, normalized_throughput, oobe, psd_welch
from .modem import evm_db, ofdm_demodulate, ofdm_modulate
from .subband import (
    DEFAULT_TAIL_THRESHOLD,
    assemble,
    derive_tail_policy,
    design_subband_filter,
    guardtone_sweep,
    payload_bits,
    rx_subband,
    scenario_filter_profile,
    tx_subband,
    tx_subband_unfiltered,
)

PRESET_ENV = "WAVEFORM_LAB_PRESETS"
FULL_SCALE_RATE_HZ = 30.72e6


def preset_dir() -> Path:
    override = os.environ.get(PRESET_ENV)
    if override:
        return Path(override)
    return Path(resources.files("waveform_lab")) / "data" / "presets"


def resolve_scenario_path(name_or_path: str) -> tuple[Path, str]:
    """Return (path, preset name). Bare names resolve in the preset directory."""
    p = Path(name_or_path)
    if p.is_file():
        return p, p.stem
    candidate = preset_dir() / f"{name_or_path}.json"
    if candidate.is_file():
        return candidate, name_or_path
    raise ConfigError(f"scenario {name_or_path!r} is neither a file nor a known preset")


def _write_csv(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ln in lines:
            fh.write(ln + "\n")


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class ManifestWriter:
    def __init__(self, out_dir: Path, command: str, scn_hash: str, seed: int, preset: str):
        self.path = out_dir / "manifest.json"
        self.started = time.monotonic()
        self.doc = {
            "command": command,
            "scenario_hash": scn_hash,
            "seed": seed,
            "preset": preset,
            "library_version": __version__,
            "status": "running",
            "outputs": {},
            "wall_clock_s": None,
        }
        self._flush()

    def _flush(self):
        with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finalize(self, outputs: dict[str, Path]):
        self.doc["outputs"] = {
            name: {"path": str(p), "sha256": _file_hash(p)} for name, p in outputs.items()
        }
        self.doc["status"] = "complete"
        self.doc["wall_clock_s"] = round(time.monotonic() - self.started, 3)
        self._flush()


def _load_and_check(args) -> tuple[ScenarioConfig, Path, str]:
    path, preset = resolve_scenario_path(args.scenario)
    cfg = load_scenario(path)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = validate_scenario(cfg)
    if not report.ok:
        msgs = "; ".join(
            f"subband {v.subband}: {v.message}" if v.subband is not None else v.message
            for v in report.violations
        )
        raise ConfigError(f"invalid scenario: {msgs}")
    if not cfg.subbands:
        raise ConfigError("scenario has no subbands")
    return cfg, path, preset


# ---------------------------------------------------------------------------
# psd
# ---------------------------------------------------------------------------

def _scale_ttis(cfg: ScenarioConfig, n_ttis: int) -> ScenarioConfig:
    subs = tuple(
        replace(sb, numerology=replace(
            sb.numerology, symbols_per_tti=sb.numerology.symbols_per_tti * n_ttis))
        for sb in cfg.subbands
    )
    return replace(cfg, subbands=subs)


def cmd_psd(args) -> int:
    cfg, _, preset = _load_and_check(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "psd", scenario_hash(cfg), cfg.seed, preset)

    long_cfg = _scale_ttis(cfg, args.ttis)
    fs = cfg.sample_rate_hz
    offsets = [sb.timing_offset_samples for sb in long_cfg.subbands]

    order, backoff = scenario_filter_profile(cfg)
    filtered_parts, plain_parts = [], []
    for i, sb in enumerate(long_cfg.subbands):
        bits = payload_bits(sb, seeded_rng(cfg.seed, f"psd/bits/{i}"))
        fir = design_subband_filter(sb, fs, order=order, edge_backoff_tones=backoff)
        policy = derive_tail_policy(fir, sb.numerology, DEFAULT_TAIL_THRESHOLD)
        sig_f, _ = tx_subband(sb, fs, bits, policy=policy, fir=fir)
        sig_p, _ = tx_subband_unfiltered(sb, fs, bits, policy=policy)
        filtered_parts.append(sig_f)
        plain_parts.append(sig_p)
    fofdm = assemble(filtered_parts, offsets)
    ofdm = assemble(plain_parts, offsets)

    pa_cfg = cfg.impairments.pa
    if args.pa_on and pa_cfg is None:
        from .core import RappConfig
        pa_cfg = RappConfig(input_backoff_db=9.6, smoothness=2.0)
    if args.pa_on and pa_cfg is not None:
        fofdm = pa_rapp(fofdm, pa_cfg.input_backoff_db, pa_cfg.smoothness)
        ofdm = pa_rapp(ofdm, pa_cfg.input_backoff_db, pa_cfg.smoothness)

    lo = min(sb.occupied_low_hz for sb in cfg.subbands)
    hi = max(sb.occupied_high_hz for sb in cfg.subbands)
    segment = min(4096, 1 << (len(fofdm) // 2).bit_length() - 1)
    psd_f = psd_welch(fofdm, segment_size=segment, in_band_hz=(lo, hi))
    psd_o = psd_welch(ofdm, segment_size=segment, in_band_hz=(lo, hi))

    scale = fs / FULL_SCALE_RATE_HZ
    offsets_hz = [mhz * 1e6 * scale for mhz in (0.5, 1.0, 2.0)]
    summary = ["waveform,offset_hz,oobe_dbr"]
    for name, est in (("ofdm", psd_o), ("fofdm", psd_f)):
        for off, val in zip(offsets_hz, oobe(est, (lo, hi), offsets_hz)):
            summary.append(f"{name},{off:.6g},{val:.6f}")

    outputs = {}
    for name, est in (("ofdm", psd_o), ("fofdm", psd_f)):
        path = out_dir / f"{name}_psd.csv"
        _write_csv(path, ["freq_hz,power_dbr"] + [
            f"{f:.6f},{p:.6f}" for f, p in zip(est.freqs_hz, est.power_dbr)
        ])
        outputs[f"{name}_psd"] = path
    summary_path = out_dir / "oobe_summary.csv"
    _write_csv(summary_path, summary)
    outputs["oobe_summary"] = summary_path
    manifest.finalize(outputs)
    print(f"psd: wrote {len(outputs)} files to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# guardtone
# ---------------------------------------------------------------------------

def cmd_guardtone(args) -> int:
    cfg, _, preset = _load_and_check(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "guardtone", scenario_hash(cfg), cfg.seed, preset)

    guards = [int(g) for g in args.guards.split(",")]
    offsets = [float(o) for o in args.offsets_db.split(",")]
    mods = tuple(m.strip() for m in args.modulations.split(","))
    from .modem import BITS_PER_SYMBOL
    for m in mods:
        if m not in BITS_PER_SYMBOL:
            raise ConfigError(f"unknown modulation flag {m!r}")

    result = guardtone_sweep(cfg, guards, offsets, args.snr_db, args.trials,
                             modulations=mods)
    sweep_path = out_dir / "guardtone_sweep.csv"
    _write_csv(sweep_path, result.csv_lines())
    base_lines = ["modulation,snr_db,evm_db_edge,evm_db_inner,ber"]
    for mod in mods:
        b = result.baselines[mod]
        base_lines.append(
            f"{mod},{b.snr_db:.6g},{b.evm_db_edge:.6f},{b.evm_db_inner:.6f},{b.ber:.8g}"
        )
    base_path = out_dir / "guardtone_baseline.csv"
    _write_csv(base_path, base_lines)
    manifest.finalize({"sweep": sweep_path, "baseline": base_path})
    print(f"guardtone: {len(result.rows)} rows -> {sweep_path}")
    return 0


# ---------------------------------------------------------------------------
# throughput
# ---------------------------------------------------------------------------

def load_throughput_preset(path: Path) -> tuple[list[ThroughputInput], ThroughputInput]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"throughput preset {path} is not valid JSON: {e}") from e
    if set(raw) != {"baseline", "subbands"}:
        raise ConfigError(f"throughput preset {path} must define 'baseline' and 'subbands'")

    def entry(d: dict) -> ThroughputInput:
        allowed = {"name", "symbol_duration_us", "cp_duration_us",
                   "data_tone_fraction", "bandwidth_weight"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in throughput entry: {sorted(unknown)}")
        return ThroughputInput(
            name=str(d["name"]),
            symbol_duration_s=float(d["symbol_duration_us"]) * 1e-6,
            cp_duration_s=float(d["cp_duration_us"]) * 1e-6,
            data_tone_fraction=float(d["data_tone_fraction"]),
            bandwidth_weight=float(d.get("bandwidth_weight", 1.0)),
        )

    return [entry(d) for d in raw["subbands"]], entry(raw["baseline"])


def cmd_throughput(args) -> int:
    path, preset = resolve_scenario_path(args.scenario)
    subbands, baseline = load_throughput_preset(path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    blob = path.read_bytes()
    manifest = ManifestWriter(out_dir, "throughput",
                              hashlib.sha256(blob).hexdigest(), args.seed or 0, preset)
    report = normalized_throughput(subbands, baseline)
    lines = ["name,data_tone_fraction,cp_overhead_fraction,normalized_throughput,bandwidth_weight"]
    for s in report.subbands:
        lines.append(
            f"{s.name},{s.data_tone_fraction:.9f},{s.cp_overhead_fraction:.9f},"
            f"{s.normalized_throughput:.9f},{s.bandwidth_weight:.6g}"
        )
    lines.append(f"total_fofdm,,,{report.fofdm_total:.9f},")
    lines.append(f"total_ofdm,,,{report.ofdm_total:.9f},")
    lines.append(f"gain_percent,,,{report.gain_percent:.9f},")
    out_path = out_dir / "throughput.csv"
    _write_csv(out_path, lines)
    manifest.finalize({"throughput": out_path})
    print(f"throughput: OFDM {report.ofdm_total:.4f}, f-OFDM {report.fofdm_total:.4f}, "
          f"gain {report.gain_percent:.1f}%")
    print(f"note: {report.caveat}")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def run_selftest(corrupt_taps: bool = False, verbose: bool = True) -> list[tuple[str, bool, str]]:
    """Oracle suite; returns (name, passed, detail) per check."""
    from .core import Numerology, ResourceGrid, SubbandSpec
    from .modem import BITS_PER_SYMBOL, ber as _ber, qam_demap, qam_map

    results = []
    rng = seeded_rng(2024, "selftest")
    fs = 7.68e6

    # Overlap-save vs direct convolution.
    worst = 0.0
    for k in range(20):
        n = int(rng.integers(256, 4097))
        order = int(rng.integers(8, 256)) * 2
        spec = FilterSpec(order=order, passband_width_hz=float(rng.uniform(0.02, 0.4)) * fs)
        fir = design_windowed_sinc(spec, fs)
        if corrupt_taps:
            taps = fir.taps.copy()
            taps.flags.writeable = True
            taps[order // 2] *= 1.001
            fir = replace(fir, taps=taps)
        x = SignalBuffer(rng.standard_normal(n) + 1j * rng.standard_normal(n), fs)
        block = 1 << (2 * len(fir.taps) - 1).bit_length()
        ref = direct_convolve(x, fir) if not corrupt_taps else direct_convolve(
            x, design_windowed_sinc(spec, fs))
        got = overlap_save_convolve(x, fir, block)
        err = np.linalg.norm(got.samples - ref.samples) / np.linalg.norm(ref.samples)
        worst = max(worst, err)
    results.append(("overlap_save_vs_direct", worst < 1e-9, f"max rel L2 {worst:.3e}"))

    # Plain OFDM loopback, all modulations.
    n = Numerology(scs_hz=15e3, fft_size=512, cp_samples=36, symbols_per_tti=14)
    ok, detail = True, []
    for mod in BITS_PER_SYMBOL:
        bits = rng.integers(0, 2, 48 * 14 * BITS_PER_SYMBOL[mod])
        grid = ResourceGrid(qam_map(bits, mod).reshape(14, 48).T)
        sig = ofdm_modulate(grid, n)
        back = ofdm_demodulate(sig, n, 0, 48)
        evm = evm_db(grid, back)
        bits_hat = qam_demap(back.cells.T.ravel(), mod)
        r = _ber(bits, bits_hat)
        ok = ok and r.errors == 0 and evm <= -90.0
        detail.append(f"{mod}: ber {r.ratio:.0e} evm {evm:.0f} dB")
    results.append(("plain_ofdm_loopback", ok, "; ".join(detail)))

    # f-OFDM single-subband loopback.
    spec = SubbandSpec(start_tone=-24, width_tones=48, guard_tones_left=0,
                       guard_tones_right=0, numerology=n, modulation="16qam")
    bits = rng.integers(0, 2, 48 * 14 * 4)
    fir = design_subband_filter(spec, fs)
    policy = derive_tail_policy(fir, n, DEFAULT_TAIL_THRESHOLD)
    sig, art = tx_subband(spec, fs, bits, policy=policy, fir=fir)
    res = rx_subband(sig, spec, art, policy=policy)
    r = _ber(bits, res.bits)
    results.append(("fofdm_loopback",
                    r.errors == 0 and res.evm_db <= -35.0,
                    f"ber {r.ratio:.0e} evm {res.evm_db:.1f} dB"))

    # Parseval through the modulator (CP excluded).
    grid = ResourceGrid(qam_map(rng.integers(0, 2, 48 * 14 * 2), "qpsk").reshape(14, 48).T)
    sig = ofdm_modulate(grid, replace(n, cp_samples=0))
    e_time = float(np.sum(np.abs(sig.samples) ** 2))
    e_grid = float(np.sum(np.abs(grid.cells) ** 2))
    results.append(("parseval", abs(e_time - e_grid) < 1e-12 * e_grid,
                    f"|dE| {abs(e_time - e_grid):.2e}"))

    # AWGN power calibration at 1e6 samples.
    x = SignalBuffer(rng.standard_normal(10**6) + 1j * rng.standard_normal(10**6), fs)
    y = awgn(x, 10.0, seeded_rng(2024, "selftest/noise"))
    measured = 10.0 * np.log10(x.power() / np.mean(np.abs(y.samples - x.samples) ** 2))
    results.append(("awgn_calibration", abs(measured - 10.0) < 0.05,
                    f"measured snr {measured:.3f} dB"))

    # Assembly linearity.
    a = SignalBuffer(rng.standard_normal(2048) + 1j * rng.standard_normal(2048), fs)
    b = SignalBuffer(rng.standard_normal(1024) + 1j * rng.standard_normal(1024), fs)
    both = assemble([a, b], [0, 100])
    only_a = assemble([a], [0])
    diff = both.samples.copy()
    diff[:len(only_a)] -= only_a.samples
    expected = assemble([b], [100])
    err = np.linalg.norm(diff[:len(expected)] - expected.samples)
    results.append(("assembly_linearity", err < 1e-9, f"residual {err:.2e}"))

    # Guard-count EVM monotonicity and deterministic rerun (tiny sweep).
    from .subband import guardtone_sweep as _sweep
    base = load_scenario(preset_dir() / "three-subband-desk.json")
    small = replace(base, subbands=tuple(
        replace(sb, numerology=replace(sb.numerology, symbols_per_tti=4))
        for sb in base.subbands))
    res1 = _sweep(small, [0, 2], [0.0], 40.0, 2, modulations=("qpsk",))
    res2 = _sweep(small, [0, 2], [0.0], 40.0, 2, modulations=("qpsk",))
    by_guard = {r.guard_tones: r.evm_db_edge for r in res1.rows}
    results.append(("guard_monotonicity", by_guard[2] <= by_guard[0] + 1e-9,
                    f"edge evm g0 {by_guard[0]:.1f} dB, g2 {by_guard[2]:.1f} dB"))
    same = res1.csv_lines() == res2.csv_lines()
    results.append(("deterministic_rerun", same, "byte-identical sweep CSV"))

    if verbose:
        width = max(len(name) for name, _, _ in results)
        for name, passed, detail in results:
            print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    return results


def cmd_selftest(args) -> int:
    t0 = time.monotonic()
    results = run_selftest(corrupt_taps=getattr(args, "corrupt_taps", False))
    elapsed = time.monotonic() - t0
    failed = [name for name, passed, _ in results if not passed]
    print(f"selftest: {len(results) - len(failed)}/{len(results)} passed "
          f"in {elapsed:.1f} s")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waveform-lab",
                                description="Batch f-OFDM waveform experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True,
                            help="scenario file path or preset name")
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override scenario seed")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker count (reserved; runs are sequential)")

    sp = sub.add_parser("psd", help="PSD and OOBE of OFDM vs f-OFDM")
    common(sp)
    sp.add_argument("--pa-on", action="store_true",
                    help="apply the Rapp PA (9.6 dB backoff unless the scenario sets one)")
    sp.add_argument("--ttis", type=int, default=8, help="TTIs to average over")
    sp.set_defaults(func=cmd_psd)

    sp = sub.add_parser("guardtone", help="guard-tone / power-offset interference sweep")
    common(sp)
    sp.add_argument("--guards", default="0,1,2", help="comma list of guard tone counts")
    sp.add_argument("--offsets-db", default="0,10", help="comma list of interferer power offsets")
    sp.add_argument("--snr-db", type=float, default=30.0)
    sp.add_argument("--trials", type=int, default=50)
    sp.add_argument("--modulations", default="qpsk,16qam,64qam")
    sp.set_defaults(func=cmd_guardtone)

    sp = sub.add_parser("throughput", help="normalized throughput report")
    common(sp)
    sp.set_defaults(func=cmd_throughput)

    sp = sub.add_parser("selftest", help="run the built-in oracle suite")
    common(sp, scenario=False)
    sp.add_argument("--corrupt-taps", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
