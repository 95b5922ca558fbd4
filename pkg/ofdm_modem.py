"""
OFDM modem module for the OSSDM simulator
5G-NR-style numerologies, CP-OFDM modulation and equalized demodulation
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

import config
from errors import ConfigurationError, FramingError, InfeasibleError
from utils import is_power_of_two

logger = logging.getLogger('ossdm.ofdm')

EQUALIZERS = ("none", "zf", "mmse")


@dataclass(frozen=True)
class OfdmNumerology:
    name: str
    scs: float
    bandwidth: float
    num_rb: int
    fft_size: int
    cp_duration: float

    def __post_init__(self):
        if not is_power_of_two(self.fft_size):
            raise ConfigurationError(f"FFT size must be a power of two, got {self.fft_size}")
        if self.subcarriers > self.fft_size:
            raise InfeasibleError(f"{self.subcarriers} subcarriers do not fit a {self.fft_size}-point FFT")
        if self.cp_duration < 0 or self.scs <= 0:
            raise ConfigurationError("Subcarrier spacing must be positive and CP duration non-negative")

    @classmethod
    def from_preset(cls, name: str) -> "OfdmNumerology":
        try:
            preset = config.NUMEROLOGY_PRESETS[name]
        except KeyError:
            raise ConfigurationError(f"Unknown numerology '{name}', expected one of {list(config.NUMEROLOGY_PRESETS)}")
        return cls(name=name, **preset)

    @property
    def subcarriers(self) -> int:
        return self.num_rb * config.SUBCARRIERS_PER_RB

    @property
    def sample_rate(self) -> float:
        return self.scs * self.fft_size

    @property
    def cp_samples(self) -> int:
        return int(round(self.cp_duration * self.sample_rate))

    @property
    def symbol_samples(self) -> int:
        return self.fft_size + self.cp_samples

    @property
    def symbol_duration(self) -> float:
        return self.symbol_samples / self.sample_rate

    @property
    def active_bins(self) -> np.ndarray:
        """FFT bins of the subcarriers, centered on DC"""
        return (np.arange(self.subcarriers) - self.subcarriers // 2) % self.fft_size

    def ofdm_symbols_for(self, count: int) -> int:
        return math.ceil(count / self.subcarriers)

    def duration_for(self, count: int) -> float:
        """Air time of `count` data symbols including padding of the last OFDM symbol"""
        return self.ofdm_symbols_for(count) * self.symbol_duration


def ofdm_modulate(symbols: np.ndarray, numerology: OfdmNumerology) -> np.ndarray:
    """Map symbols onto active subcarriers, IFFT (orthonormal) and prepend the cyclic prefix"""
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    if symbols.size == 0:
        return np.zeros(0, dtype=np.complex128)
    num_ofdm = numerology.ofdm_symbols_for(symbols.size)
    grid = np.zeros((num_ofdm, numerology.subcarriers), dtype=np.complex128)
    grid.ravel()[:symbols.size] = symbols

    spectrum = np.zeros((num_ofdm, numerology.fft_size), dtype=np.complex128)
    spectrum[:, numerology.active_bins] = grid
    useful = np.fft.ifft(spectrum, axis=-1, norm="ortho")
    cp = numerology.cp_samples
    with_cp = np.concatenate([useful[:, numerology.fft_size - cp:], useful], axis=-1) if cp else useful
    return with_cp.reshape(-1)


def ofdm_demodulate(received: np.ndarray, numerology: OfdmNumerology,
                    channel_estimate: Optional[np.ndarray] = None, equalizer: str = "mmse",
                    noise_var: float = 0.0, symbol_power: float = 1.0,
                    count: Optional[int] = None) -> np.ndarray:
    """
    Remove the CP, FFT each OFDM symbol and extract the active subcarriers.

    Args:
        channel_estimate: per-subcarrier complex gains (length = subcarriers), perfect CSI
        equalizer: 'none', 'zf' or 'mmse'
        noise_var: noise variance per time sample
        symbol_power: mean power of the data symbols on each subcarrier
        count: number of data symbols to return (drops padding)

    Returns:
        Equalized complex symbols
    """
    received = np.asarray(received, dtype=np.complex128).ravel()
    if received.size == 0 or received.size % numerology.symbol_samples:
        raise FramingError(
            f"Received {received.size} samples, not a whole number of {numerology.symbol_samples}-sample OFDM symbols"
        )
    if equalizer not in EQUALIZERS:
        raise ConfigurationError(f"Unknown equalizer '{equalizer}', expected one of {EQUALIZERS}")

    blocks = received.reshape(-1, numerology.symbol_samples)[:, numerology.cp_samples:]
    bins = np.fft.fft(blocks, axis=-1, norm="ortho")[:, numerology.active_bins]

    if channel_estimate is not None and equalizer != "none":
        h = np.asarray(channel_estimate, dtype=np.complex128)
        if h.shape[-1] != numerology.subcarriers:
            raise FramingError(f"Channel estimate has {h.shape[-1]} gains for {numerology.subcarriers} subcarriers")
        # orthonormal FFT: per-bin noise variance equals the per-sample one
        regularizer = noise_var / symbol_power if equalizer == "mmse" else 0.0
        bins = bins * np.conj(h) / (np.abs(h) ** 2 + regularizer)

    symbols = bins.reshape(-1)
    return symbols[:count] if count is not None else symbols


def channel_estimate_from_taps(taps: np.ndarray, numerology: OfdmNumerology) -> np.ndarray:
    """Per-subcarrier gains of a time-domain tap vector"""
    return np.fft.fft(np.asarray(taps, dtype=np.complex128), n=numerology.fft_size)[numerology.active_bins]
