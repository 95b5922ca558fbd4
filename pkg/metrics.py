"""
Metrics module for the OSSDM simulator
Triplet F1, effective semantic spectral efficiency, PSD estimation and emission-mask checks
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal as sps

import config
from errors import ArgumentError, ConfigurationError
from utils import is_power_of_two

logger = logging.getLogger('ossdm.metrics')

Triplet = Tuple[int, int, int]


@dataclass(frozen=True)
class EmissionMask:
    """Relative (dBr) piecewise-linear emission mask over the one-sided baseband span"""

    breakpoints: Tuple[Tuple[float, float], ...]
    reference_bandwidth: float = config.MASK_REFERENCE_BANDWIDTH

    def __post_init__(self):
        points = tuple((float(f), float(limit)) for f, limit in self.breakpoints)
        if len(points) < 2:
            raise ConfigurationError("Emission mask needs at least two breakpoints")
        freqs = [f for f, _ in points]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigurationError("Emission mask breakpoints must be strictly increasing in frequency")
        if not all(math.isfinite(limit) for _, limit in points):
            raise ConfigurationError("Emission mask limits must be finite")
        object.__setattr__(self, "breakpoints", points)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.breakpoints])

    @property
    def limits(self) -> np.ndarray:
        return np.array([limit for _, limit in self.breakpoints])

    @property
    def passband(self) -> Tuple[float, float]:
        """Span of the breakpoints sitting at the highest limit"""
        limits = self.limits
        in_band = self.frequencies[limits == limits.max()]
        return float(in_band.min()), float(in_band.max())

    @property
    def passband_width(self) -> float:
        low, high = self.passband
        return high - low

    def limit_at(self, freqs: np.ndarray) -> np.ndarray:
        return np.interp(freqs, self.frequencies, self.limits)


def default_mask() -> EmissionMask:
    return EmissionMask(tuple(config.MASK_BREAKPOINTS))


@dataclass(frozen=True)
class EsseRecord:
    interpreted_count: int
    bandwidth: float
    duration: float
    esse: float


@dataclass(frozen=True)
class MaskReport:
    passed: bool
    worst_margin_db: float
    offending_frequency: float


@dataclass(frozen=True)
class F1Score:
    precision: float
    recall: float
    f1: float


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def triplet_f1(reference: Iterable[Triplet], inferred: Iterable[Triplet]) -> F1Score:
    """Exact-match triplet precision, recall and F1"""
    reference = set(map(tuple, reference))
    inferred = set(map(tuple, inferred))
    correct = len(reference & inferred)
    precision = correct / len(inferred) if inferred else 0.0
    recall = correct / len(reference) if reference else 0.0
    return F1Score(precision, recall, harmonic_f1(precision, recall))


def count_interpreted_symbols(reference_slots: Sequence[Triplet], decoded_slots: Sequence[Triplet],
                              symbols_per_triplet: int) -> int:
    """A symbol counts iff the triplet slot it belongs to is exactly reconstructed"""
    if len(reference_slots) != len(decoded_slots):
        raise ArgumentError("Reference and decoded slot lists differ in length")
    exact = sum(1 for ref, dec in zip(reference_slots, decoded_slots) if tuple(ref) == tuple(dec))
    return exact * symbols_per_triplet


def esse(interpreted_count: int, bandwidth: float, duration: float,
         transmitted_count: Optional[int] = None) -> EsseRecord:
    """E-SSE = |S*| / (B x T) in symbols/s/Hz"""
    if bandwidth <= 0 or duration <= 0:
        raise ArgumentError(f"Bandwidth and duration must be positive (got {bandwidth}, {duration})")
    if interpreted_count < 0 or (transmitted_count is not None and interpreted_count > transmitted_count):
        raise ArgumentError(f"Interpreted count {interpreted_count} out of range")
    return EsseRecord(int(interpreted_count), float(bandwidth), float(duration),
                      interpreted_count / (bandwidth * duration))


def esse_gain(ossdm: EsseRecord, ofdm: EsseRecord) -> float:
    if ofdm.esse == 0:
        raise ArgumentError("Reference E-SSE is zero, gain undefined")
    return ossdm.esse / ofdm.esse


def ossdm_duration(symbol_count: int, walsh_order: int, refresh_rate: float) -> float:
    """Each semantic symbol occupies N / F_refresh seconds"""
    return symbol_count * (2 ** walsh_order) / refresh_rate


def esse_gain_table(orders: Sequence[int], numerology_names: Sequence[str], refresh_rate: float,
                    bandwidth: float, symbol_count: Optional[int] = None) -> List[Dict[str, float]]:
    """E-SSE gain of OSSDM over each OFDM numerology, every symbol interpreted"""
    from ofdm_modem import OfdmNumerology

    rows = []
    for name in numerology_names:
        numerology = OfdmNumerology.from_preset(name)
        count = symbol_count or numerology.subcarriers
        ofdm_record = esse(count, numerology.bandwidth, numerology.duration_for(count))
        for order in orders:
            ossdm_record = esse(count, bandwidth, ossdm_duration(count, order, refresh_rate))
            rows.append({
                "order": order,
                "numerology": name,
                "esse_ossdm": ossdm_record.esse,
                "esse_ofdm": ofdm_record.esse,
                "gain": esse_gain(ossdm_record, ofdm_record),
            })
    return rows


def calibrate_refresh_rate(target_gain: float, order: int, numerology_name: str, bandwidth: float,
                           symbol_count: Optional[int] = None) -> float:
    """F_refresh giving `target_gain` at `order` against the named numerology"""
    from ofdm_modem import OfdmNumerology

    numerology = OfdmNumerology.from_preset(numerology_name)
    count = symbol_count or numerology.subcarriers
    ofdm_record = esse(count, numerology.bandwidth, numerology.duration_for(count))
    refresh = target_gain * ofdm_record.esse * bandwidth * (2 ** order)
    logger.info(f"Calibrated F_refresh = {refresh:.6g} Hz for gain {target_gain} at order {order} vs {numerology_name}")
    return refresh


def estimate_psd(signal: np.ndarray, sample_rate: float, segment_len: int = config.PSD_SEGMENT_LEN,
                 overlap: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Averaged Hann-windowed periodogram (Welch).

    Returns (frequencies, power densities); one-sided for real input, two-sided
    and frequency-sorted for complex input. Integrates to the mean power.
    """
    x = np.asarray(signal)
    if not is_power_of_two(int(segment_len)):
        raise ArgumentError(f"Segment length must be a power of two, got {segment_len}")
    if x.size < segment_len:
        raise ArgumentError(f"Signal of {x.size} samples is shorter than one segment ({segment_len})")
    if overlap is None:
        overlap = segment_len // 2
    real = not np.iscomplexobj(x)
    freqs, psd = sps.welch(x, fs=sample_rate, window="hann", nperseg=segment_len, noverlap=overlap,
                           detrend=False, return_onesided=real, scaling="density")
    if not real:
        freqs, psd = np.fft.fftshift(freqs), np.fft.fftshift(psd)
    return freqs, psd


def mask_segment_len(length: int) -> int:
    """Largest power-of-two segment not exceeding the default or the signal length"""
    return int(min(config.PSD_SEGMENT_LEN, 2 ** int(np.floor(np.log2(max(length, 1))))))


def mask_check(signal: np.ndarray, sample_rate: float, mask: EmissionMask,
               segment_len: Optional[int] = None) -> MaskReport:
    """Compare the in-band-normalized PSD of a real waveform against the relative mask"""
    x = np.asarray(signal)
    if np.iscomplexobj(x):
        raise ArgumentError("Mask check expects a real baseband waveform")
    segment_len = segment_len or mask_segment_len(x.size)
    freqs, psd = estimate_psd(x, sample_rate, segment_len)
    mask_freqs = mask.frequencies
    if mask_freqs[0] > freqs[0] + 1e-9 or mask_freqs[-1] < freqs[-1] - 1e-9:
        raise ConfigurationError(
            f"Mask spans [{mask_freqs[0]:.4g}, {mask_freqs[-1]:.4g}] Hz but the PSD spans "
            f"[{freqs[0]:.4g}, {freqs[-1]:.4g}] Hz"
        )
    low, high = mask.passband
    in_band = (freqs >= low) & (freqs <= high)
    reference = float(psd[in_band].max()) if in_band.any() else 0.0
    if reference <= 0.0:
        raise ArgumentError("No in-band power to reference the mask against")
    level_db = 10.0 * np.log10(np.maximum(psd / reference, 1e-30))
    margin = mask.limit_at(freqs) - level_db
    worst = int(np.argmin(margin))
    return MaskReport(bool(margin[worst] >= 0.0), float(margin[worst]), float(freqs[worst]))
