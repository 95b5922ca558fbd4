"""
Chart module for the OSSDM simulator
Renders result curves and spectrum-vs-mask figures as deterministic SVG files
"""
import logging
import math
from collections import OrderedDict
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

import config  # noqa: E402
from data_manager import DataManager  # noqa: E402
from errors import FormatError  # noqa: E402
from metrics import EmissionMask, estimate_psd, mask_segment_len  # noqa: E402

logger = logging.getLogger('ossdm.charts')

plt.rcParams["svg.hashsalt"] = config.SVG_HASH_SALT

AXIS_LABELS = {
    "snr_db": "SNR (dB)",
    "f1": "Triplet F1",
    "precision": "Precision",
    "recall": "Recall",
    "ber": "Bit error rate",
    "esse": "E-SSE (symbols/s/Hz)",
    "gain": "E-SSE gain (OSSDM / OFDM)",
    "esse_gain": "E-SSE gain (OSSDM / OFDM)",
    "order": "Walsh order n",
    "wall_time_s": "Wall time (s)",
}


def _save(fig, out_path: str) -> None:
    DataManager.ensure_dir(out_path)
    fig.savefig(out_path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Chart saved to {out_path}")


def _as_float(value: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return math.nan


def plot_curves(csv_path: str, out_path: str, x: str = "snr_db", y: str = "f1", group: str = "scheme") -> str:
    """One polyline per group: mean over seeds with min/max whiskers"""
    rows = DataManager.read_rows(csv_path, required=[x, y, group])
    series: Dict[str, Dict[float, List[float]]] = OrderedDict()
    for row in rows:
        xv, yv = _as_float(row[x]), _as_float(row[y])
        if math.isnan(xv) or math.isnan(yv):
            continue
        series.setdefault(row[group], OrderedDict()).setdefault(xv, []).append(yv)
    if not series:
        raise FormatError(f"{csv_path} has no plottable rows for {y} over {x}")

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, points in series.items():
        xs = sorted(points)
        values = [np.asarray(points[k]) for k in xs]
        means = np.array([v.mean() for v in values])
        lower = means - np.array([v.min() for v in values])
        upper = np.array([v.max() for v in values]) - means
        ax.errorbar(xs, means, yerr=[lower, upper], marker="o", capsize=3, label=name)

    ax.set_xlabel(AXIS_LABELS.get(x, x))
    ax.set_ylabel(AXIS_LABELS.get(y, y))
    ax.grid(True)
    ax.legend()
    _save(fig, out_path)
    return out_path


def plot_esse_gain(rows: Sequence[Dict[str, float]], out_path: str) -> str:
    """Gain against Walsh order, one line per numerology"""
    if not rows:
        raise FormatError("E-SSE table is empty")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name in OrderedDict.fromkeys(r["numerology"] for r in rows):
        selected = sorted((r["order"], r["gain"]) for r in rows if r["numerology"] == name)
        ax.plot([o for o, _ in selected], [g for _, g in selected], marker="o", label=name)
    ax.set_yscale("log")
    ax.set_xlabel(AXIS_LABELS["order"])
    ax.set_ylabel(AXIS_LABELS["gain"])
    ax.grid(True, which="both")
    ax.legend()
    _save(fig, out_path)
    return out_path


def plot_spectrum(signal: np.ndarray, sample_rate: float, mask: EmissionMask, out_path: str) -> str:
    """Waveform PSD in dB relative to its in-band peak with the mask overlaid"""
    freqs, psd = estimate_psd(signal, sample_rate, mask_segment_len(np.asarray(signal).size))
    low, high = mask.passband
    in_band = (freqs >= low) & (freqs <= high)
    reference = psd[in_band].max() if in_band.any() else psd.max()
    level = 10.0 * np.log10(np.maximum(psd / max(reference, 1e-300), 1e-30))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(freqs / 1e6, level, linewidth=0.8, label="Waveform PSD")
    ax.plot(mask.frequencies / 1e6, mask.limits, color="red", linestyle="--", label="Emission mask")
    ax.set_xlabel("Frequency (MHz)")
    ax.set_ylabel("Relative PSD (dBr)")
    ax.set_ylim(max(level.min(), -120.0) - 5.0, 10.0)
    ax.grid(True)
    ax.legend()
    _save(fig, out_path)
    return out_path
