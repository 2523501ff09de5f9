"""Synthetic baseband signal chain: clean preamble, transmitter impairments, channels.

The simulated capture is a ZigBee-like preamble burst: a fixed O-QPSK
half-sine-shaped chip sequence repeated for several symbols, passed through a
per-device impairment chain and a per-record propagation channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DegenerateSignalError, ShapeError

DEFAULT_SAMPLE_RATE = 1e7

# 2.4 GHz O-QPSK chip sequence for data symbol 0; all preamble symbols use it.
ZERO_SYMBOL_CHIPS = np.array(
    [1, 1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1,
     0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0],
    dtype=np.int8,
)

CHANNEL_KINDS = ("awgn", "rician_flat", "multipath_fir")


@dataclass
class ComplexSignal:
    """A complex baseband record: 1-D complex samples plus the sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ShapeError(f"samples must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise DegenerateSignalError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return self.samples.size


@dataclass
class DeviceProfile:
    """Transmitter impairment parameters for one simulated device.

    iq_gain_mismatch and iq_phase_mismatch (radians) describe the quadrature
    modulator error, cfo is the carrier frequency offset in Hz, pa_a1/pa_a3 the
    linear and cubic power-amplifier coefficients, dc_offset an additive bias.
    """

    device_id: int
    iq_gain_mismatch: float = 0.0
    iq_phase_mismatch: float = 0.0
    cfo: float = 0.0
    dc_offset: complex = 0.0
    pa_a1: complex = 1.0
    pa_a3: complex = 0.0

    def __post_init__(self):
        if self.device_id < 0:
            raise ConfigurationError(f"device_id must be >= 0, got {self.device_id}")
        if abs(self.pa_a1) == 0:
            raise ConfigurationError("pa_a1 must be nonzero")


@dataclass
class ChannelSpec:
    """Propagation channel description.

    kind is one of "awgn", "rician_flat", "multipath_fir". snr_db may be
    math.inf to disable noise. rician_k is the Rician K-factor, num_taps the
    FIR length, pdp_decay the exponential power-delay-profile rate.
    """

    kind: str
    snr_db: float = math.inf
    rician_k: float = 10.0
    num_taps: int = 1
    pdp_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ConfigurationError(f"kind must be one of {CHANNEL_KINDS}, got {self.kind!r}")
        if self.num_taps < 1:
            raise ConfigurationError(f"num_taps must be >= 1, got {self.num_taps}")
        if self.rician_k < 0:
            raise ConfigurationError(f"rician_k must be >= 0, got {self.rician_k}")
        if self.pdp_decay < 0:
            raise ConfigurationError(f"pdp_decay must be >= 0, got {self.pdp_decay}")


@dataclass
class ProfileSpread:
    """Distribution widths used when drawing random device profiles."""

    gain_std: float = 0.05
    phase_std_deg: float = 2.0
    cfo_max_hz: float = 30e3
    pa_a3_range: tuple = (0.01, 0.05)
    dc_max: float = 0.01


def gen_preamble(sample_rate: float = DEFAULT_SAMPLE_RATE,
                 chips_per_symbol: int = 32,
                 samples_per_chip: int = 5,
                 num_symbols: int = 8) -> ComplexSignal:
    """Build the deterministic clean preamble.

    Each symbol spreads the fixed 32-chip zero-symbol sequence onto offset I/Q
    branches with half-sine pulse shaping; the Q branch lags by one chip
    period, and the per-symbol waveform is wrapped cyclically so all symbols
    are sample-identical and the envelope is constant at unit amplitude.
    """
    if chips_per_symbol != ZERO_SYMBOL_CHIPS.size:
        raise ConfigurationError(
            f"chips_per_symbol must be {ZERO_SYMBOL_CHIPS.size} (fixed chip sequence), "
            f"got {chips_per_symbol}")
    if samples_per_chip < 1:
        raise ConfigurationError(f"samples_per_chip must be >= 1, got {samples_per_chip}")
    if num_symbols < 1:
        raise ConfigurationError(f"num_symbols must be >= 1, got {num_symbols}")

    bipolar = 2.0 * ZERO_SYMBOL_CHIPS - 1.0
    i_chips = bipolar[0::2]
    q_chips = bipolar[1::2]

    sym_len = chips_per_symbol * samples_per_chip
    branch_len = 2 * samples_per_chip  # one branch chip spans two chip periods
    k = np.arange(sym_len)

    i_branch = i_chips[k // branch_len] * np.sin(np.pi * (k % branch_len) / branch_len)
    kq = (k - samples_per_chip) % sym_len  # Q lags by half a branch chip, wrapped
    q_branch = q_chips[kq // branch_len] * np.sin(np.pi * (kq % branch_len) / branch_len)

    symbol = i_branch + 1j * q_branch
    return ComplexSignal(np.tile(symbol, num_symbols), sample_rate)


def apply_device(signal: ComplexSignal, profile: DeviceProfile) -> ComplexSignal:
    """Pass a signal through one device's impairment chain.

    Order: CFO rotation, IQ imbalance, memoryless third-order PA, DC offset.
    A default-constructed profile (zero mismatches, pa_a1 = 1) is an exact
    identity map.
    """
    x = signal.samples
    k = np.arange(x.size)
    u = x * np.exp(2j * np.pi * profile.cfo * k / signal.sample_rate)

    i_part = (1.0 + profile.iq_gain_mismatch) * u.real
    q_part = u.imag * math.cos(profile.iq_phase_mismatch) + u.real * math.sin(profile.iq_phase_mismatch)
    w = i_part + 1j * q_part

    v = profile.pa_a1 * w + profile.pa_a3 * (np.abs(w) ** 2) * w
    return ComplexSignal(v + profile.dc_offset, signal.sample_rate)


def _complex_normal(rng: np.random.Generator, size=None) -> np.ndarray:
    """Circularly symmetric complex Gaussian, unit variance per sample."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def draw_fir_taps(rng: np.random.Generator, num_taps: int, pdp_decay: float = 0.0) -> np.ndarray:
    """Draw a random FIR channel with exponential power-delay profile.

    Tap l is complex Gaussian with variance exp(-l * pdp_decay); the vector is
    rescaled to unit total power. num_taps = 1 returns the exact identity tap.
    """
    if num_taps < 1:
        raise ConfigurationError(f"num_taps must be >= 1, got {num_taps}")
    if num_taps == 1:
        return np.ones(1, dtype=np.complex128)
    powers = np.exp(-pdp_decay * np.arange(num_taps))
    taps = _complex_normal(rng, num_taps) * np.sqrt(powers)
    return taps / np.linalg.norm(taps)


def apply_channel(signal: ComplexSignal, spec: ChannelSpec,
                  rng: np.random.Generator) -> ComplexSignal:
    """Pass a signal through a freshly drawn channel realization.

    Noise power is set relative to the mean power of the post-channel signal.
    With snr_db = inf no noise is added; multipath_fir with num_taps = 1
    degenerates to an identity gain (tap forced to 1).
    """
    x = signal.samples
    if spec.kind == "awgn":
        y = x
    elif spec.kind == "rician_flat":
        k_fac = spec.rician_k
        h = math.sqrt(k_fac / (k_fac + 1.0)) + math.sqrt(1.0 / (k_fac + 1.0)) * _complex_normal(rng)
        y = h * x
    else:  # multipath_fir
        if spec.num_taps == 1:
            y = x
        else:
            taps = draw_fir_taps(rng, spec.num_taps, spec.pdp_decay)
            y = np.convolve(x, taps)[: x.size]

    if np.isfinite(spec.snr_db):
        sig_power = float(np.mean(np.abs(y) ** 2))
        if sig_power == 0.0:
            raise DegenerateSignalError("cannot set an SNR for an all-zero signal")
        noise_power = sig_power / (10.0 ** (spec.snr_db / 10.0))
        y = y + math.sqrt(noise_power) * _complex_normal(rng, y.size)
    return ComplexSignal(y, signal.sample_rate)


def draw_device_profiles(count: int, rng: np.random.Generator,
                         spread: ProfileSpread | None = None,
                         first_id: int = 0) -> list[DeviceProfile]:
    """Draw `count` random device profiles with ids first_id..first_id+count-1."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    spread = spread or ProfileSpread()
    profiles = []
    for d in range(count):
        a3_lo, a3_hi = spread.pa_a3_range
        a3 = rng.uniform(a3_lo, a3_hi) * np.exp(2j * np.pi * rng.uniform())
        dc = rng.uniform(0.0, spread.dc_max) * np.exp(2j * np.pi * rng.uniform())
        profiles.append(DeviceProfile(
            device_id=first_id + d,
            iq_gain_mismatch=rng.normal(0.0, spread.gain_std),
            iq_phase_mismatch=rng.normal(0.0, math.radians(spread.phase_std_deg)),
            cfo=rng.uniform(-spread.cfo_max_hz, spread.cfo_max_hz),
            dc_offset=complex(dc),
            pa_a1=1.0,
            pa_a3=complex(a3),
        ))
    return profiles
