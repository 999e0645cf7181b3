"""Filtered-OFDM link-level waveform simulator."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
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
    seeded_rng,
    validate_scenario,
)
