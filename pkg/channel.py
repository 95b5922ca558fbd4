"""
Channel module for the OSSDM simulator
Seeded AWGN, TDL-B-like and flat Rayleigh channels plus time-domain MMSE equalization
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

import config
from errors import ConfigurationError, FramingError, SingularChannelError, SnrError
from utils import derive_rng, mean_power

logger = logging.getLogger('ossdm.channel')


class ChannelKind(Enum):
    AWGN = "AWGN"
    TDLB = "TDLB"
    RAYLEIGH = "RAYLEIGH"

    @classmethod
    def parse(cls, name: str) -> "ChannelKind":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ConfigurationError(f"Unknown channel '{name}', expected one of {[k.value for k in cls]}")


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap delays in samples with mean powers normalized to sum 1"""

    delays: Tuple[int, ...]
    powers: Tuple[float, ...]

    def __post_init__(self):
        if not self.delays or len(self.delays) != len(self.powers):
            raise ConfigurationError("Power-delay profile needs one power per delay")
        if any(d < 0 for d in self.delays) or len(set(self.delays)) != len(self.delays):
            raise ConfigurationError("Tap delays must be distinct and non-negative")
        total = float(sum(self.powers))
        if any(p < 0 for p in self.powers) or total <= 0:
            raise ConfigurationError("Tap powers must be non-negative with a positive sum")
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        object.__setattr__(self, "powers", tuple(float(p) / total for p in self.powers))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]]) -> "PowerDelayProfile":
        return cls(tuple(int(d) for d, _ in pairs), tuple(float(p) for _, p in pairs))

    @property
    def max_delay(self) -> int:
        return max(self.delays)


def default_profile(kind: ChannelKind) -> Optional[PowerDelayProfile]:
    if kind is ChannelKind.TDLB:
        return PowerDelayProfile.from_pairs(config.TDLB_PDP)
    if kind is ChannelKind.RAYLEIGH:
        return PowerDelayProfile.from_pairs(config.RAYLEIGH_PDP)
    return None


@dataclass
class ChannelRealization:
    kind: ChannelKind
    snr_db: float
    profile: Optional[PowerDelayProfile] = None
    noise_seed: int = 0
    fading_seed: int = 0
    taps: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.profile is None:
            self.profile = default_profile(self.kind)
        if self.taps is None:
            self.taps = draw_taps(self.profile, derive_rng(self.fading_seed)) if self.profile else np.ones(1, complex)

    @property
    def delay_spread(self) -> int:
        return len(self.taps) - 1


@dataclass
class ChannelOutput:
    signal: np.ndarray
    taps: np.ndarray
    noise_var: float
    signal_power: float


def draw_taps(profile: PowerDelayProfile, rng: np.random.Generator) -> np.ndarray:
    """Dense tap vector; tap at each delay is CN(0, mean power)"""
    taps = np.zeros(profile.max_delay + 1, dtype=np.complex128)
    powers = np.asarray(profile.powers)
    gains = (rng.standard_normal(len(powers)) + 1j * rng.standard_normal(len(powers))) * np.sqrt(powers / 2.0)
    taps[list(profile.delays)] = gains
    return taps


def noise_variance(signal: np.ndarray, snr_db: float) -> float:
    """sigma^2 = P_in / 10^(snr/10); shared by every scheme"""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    power = mean_power(signal)
    if power <= 0.0:
        raise SnrError("Signal has zero power, SNR is undefined")
    return power / 10.0 ** (snr_db / 10.0)


def add_noise(signal: np.ndarray, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    if noise_var == 0.0:
        return np.array(signal, copy=True)
    if np.iscomplexobj(signal):
        noise = (rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape)) * math.sqrt(noise_var / 2)
    else:
        noise = rng.standard_normal(signal.shape) * math.sqrt(noise_var)
    return signal + noise


def apply_awgn(signal: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """Real noise for real signals, circularly symmetric noise for complex ones"""
    signal = np.asarray(signal)
    return add_noise(signal, noise_variance(signal, snr_db), derive_rng(seed))


def apply_tdlb(signal: np.ndarray, realization: ChannelRealization,
               frame_len: Optional[int] = None) -> ChannelOutput:
    """Block-static multipath convolution truncated to the input length, then AWGN at the input-referred SNR"""
    signal = np.asarray(signal)
    taps = realization.taps
    frame_len = frame_len or signal.size
    if realization.delay_spread >= frame_len:
        raise ConfigurationError(
            f"Delay spread of {realization.delay_spread} samples reaches the frame length {frame_len}"
        )
    nv = noise_variance(signal, realization.snr_db)
    faded = np.convolve(signal.astype(np.complex128), taps)[:signal.size]
    received = add_noise(faded, nv, derive_rng(realization.noise_seed))
    return ChannelOutput(received, taps, nv, mean_power(signal))


def transmit(signal: np.ndarray, realization: ChannelRealization, frame_len: Optional[int] = None) -> ChannelOutput:
    """Run any channel kind; AWGN keeps the signal's real/complex type"""
    signal = np.asarray(signal)
    if realization.kind is ChannelKind.AWGN:
        nv = noise_variance(signal, realization.snr_db)
        received = add_noise(signal, nv, derive_rng(realization.noise_seed))
        return ChannelOutput(received, np.ones(1, dtype=np.complex128), nv, mean_power(signal))
    return apply_tdlb(signal, realization, frame_len)


def frequency_response(taps: np.ndarray, n_fft: int) -> np.ndarray:
    if len(taps) > n_fft:
        raise FramingError(f"Channel of {len(taps)} taps does not fit a {n_fft}-point transform")
    return np.fft.fft(taps, n=n_fft)


def mmse_equalize_time(received: np.ndarray, taps: np.ndarray, noise_var: float,
                       frame_len: Optional[int] = None, signal_power: float = 1.0) -> np.ndarray:
    """
    Per-frame circular MMSE deconvolution.

    Each frame of `frame_len` samples is equalized in the frequency domain with
    H* / (|H|^2 + noise_var / signal_power). A frame length of None uses the whole
    signal as one frame.
    """
    received = np.asarray(received, dtype=np.complex128)
    taps = np.asarray(taps, dtype=np.complex128)
    if not np.any(np.abs(taps) > 0):
        raise SingularChannelError("All channel taps are zero")
    frame_len = frame_len or received.size
    if received.size % frame_len:
        raise FramingError(f"Signal of {received.size} samples is not a whole number of {frame_len}-sample frames")
    if signal_power <= 0:
        raise SnrError("Signal power must be positive for MMSE equalization")

    h = frequency_response(taps, frame_len)
    weights = np.conj(h) / (np.abs(h) ** 2 + noise_var / signal_power)
    if not np.all(np.isfinite(weights)):
        raise SingularChannelError("Channel has spectral nulls and no noise regularization")
    frames = np.fft.fft(received.reshape(-1, frame_len), axis=-1)
    return np.fft.ifft(frames * weights, axis=-1).reshape(-1)
