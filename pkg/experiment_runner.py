"""
Experiment runner module for the OSSDM simulator
Parses experiment configs, sweeps schemes over SNR and seeds, and writes result rows
"""
import configparser
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import config
from channel import ChannelKind, ChannelRealization, PowerDelayProfile, default_profile, mmse_equalize_time, transmit
from classic_chain import ClassicChain, HuffmanCode, build_frequency_table, build_ldpc_code, qam64_soft_demap
from codebook import Codebook
from data_manager import DataManager
from errors import ConfigurationError, LaunchError
from metrics import count_interpreted_symbols, esse, triplet_f1
from ofdm_modem import OfdmNumerology, channel_estimate_from_taps, ofdm_demodulate, ofdm_modulate
from ossdm_modem import OsdmAssignment, OssdmConfig, osdm_decode, osdm_modulate, ossdm_demodulate, ossdm_modulate
from semantic_codec import SemanticSymbolFrame, Triplet, canonical_order, decode_symbols, encode_graph, generate_dataset
from utils import derive_seed, id_to_triplet
from walsh_core import build_walsh_basis

logger = logging.getLogger('ossdm.runner')

SCHEME_PATTERN = re.compile(r"^OSSDM\((\d+)\)(-untrained)?$")
FIXED_SCHEMES = ("S-OFDM", "NS-OFDM", "OSDM")
MISSING_SLOT = (-1, -1, -1)


def parse_scheme(name: str) -> Tuple[str, Optional[int]]:
    """('OSSDM', N) for OSSDM(N)[-untrained], (name, None) for the fixed schemes"""
    match = SCHEME_PATTERN.match(name)
    if match:
        block_len = int(match.group(1))
        if block_len < 2 or block_len & (block_len - 1):
            raise ConfigurationError(f"OSSDM block length must be a power of two >= 2, got {block_len}")
        return "OSSDM", block_len
    if name in FIXED_SCHEMES:
        return name, None
    raise ConfigurationError(f"Unknown scheme '{name}', expected OSSDM(N) or one of {FIXED_SCHEMES}")


def format_snr(snr_db: float) -> str:
    return f"{snr_db:g}"


def _floats(text: str) -> List[float]:
    return [float(item) for item in text.replace(",", " ").split()]


@dataclass
class DatasetSettings:
    concepts: int = config.CONCEPT_VOCAB
    relations: int = config.RELATION_VOCAB
    graphs: int = config.GRAPH_COUNT
    triplets_per_graph: int = config.TRIPLETS_PER_GRAPH
    seed: int = config.DATASET_SEED
    split: str = "heldout"
    file: Optional[str] = None


@dataclass
class ExperimentConfig:
    name: str
    schemes: List[str]
    snr_grid: List[float]
    seeds: List[int]
    channel: ChannelKind = ChannelKind.AWGN
    numerology: str = config.DEFAULT_NUMEROLOGY
    output_dir: str = config.OUTPUT_DIR
    workers: int = config.WORKERS
    pdp_file: Optional[str] = None
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    refresh_rate: float = config.REFRESH_RATE
    bandwidth: float = config.OSSDM_BANDWIDTH
    symbols_per_node: int = config.SYMBOLS_PER_NODE
    hard_projection: bool = False
    models: Dict[str, str] = field(default_factory=dict)
    codebooks: Dict[str, str] = field(default_factory=dict)

    @property
    def csv_path(self) -> str:
        return os.path.join(self.output_dir, f"{self.name}.csv")

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        if not parser.read(path, encoding="utf-8"):
            raise ConfigurationError(f"Cannot read experiment config {path}")
        try:
            exp = parser["experiment"]
            ds = parser["dataset"] if parser.has_section("dataset") else {}
            ossdm = parser["ossdm"] if parser.has_section("ossdm") else {}
            dataset = DatasetSettings(
                concepts=int(ds.get("concepts", config.CONCEPT_VOCAB)),
                relations=int(ds.get("relations", config.RELATION_VOCAB)),
                graphs=int(ds.get("graphs", config.GRAPH_COUNT)),
                triplets_per_graph=int(ds.get("triplets_per_graph", config.TRIPLETS_PER_GRAPH)),
                seed=int(ds.get("seed", config.DATASET_SEED)),
                split=ds.get("split", "heldout"),
                file=ds.get("file") or None,
            )
            experiment = cls(
                name=exp.get("name", os.path.splitext(os.path.basename(path))[0]),
                schemes=[s.strip() for s in exp["schemes"].split(",") if s.strip()],
                snr_grid=_floats(exp["snr_db"]),
                seeds=[int(s) for s in _floats(exp["seeds"])],
                channel=ChannelKind.parse(exp.get("channel", "AWGN")),
                numerology=exp.get("numerology", config.DEFAULT_NUMEROLOGY),
                output_dir=exp.get("output_dir", config.OUTPUT_DIR),
                workers=int(exp.get("workers", config.WORKERS)),
                pdp_file=exp.get("pdp_file") or None,
                dataset=dataset,
                refresh_rate=float(ossdm.get("refresh_rate", config.REFRESH_RATE)),
                bandwidth=float(ossdm.get("bandwidth", config.OSSDM_BANDWIDTH)),
                symbols_per_node=int(ossdm.get("symbols_per_node", config.SYMBOLS_PER_NODE)),
                hard_projection=ossdm.get("hard_projection", "false").strip().lower() in ("1", "true", "yes", "on"),
                models=dict(parser["models"]) if parser.has_section("models") else {},
                codebooks=dict(parser["codebooks"]) if parser.has_section("codebooks") else {},
            )
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"Invalid experiment config {path}: {e}")
        experiment.validate()
        return experiment

    def validate(self) -> None:
        if not self.schemes:
            raise ConfigurationError("No schemes configured")
        for scheme in self.schemes:
            parse_scheme(scheme)
        if not self.snr_grid:
            raise ConfigurationError("SNR grid is empty")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigurationError(f"Seeds must be distinct and nonempty, got {self.seeds}")
        if self.dataset.split not in ("heldout", "train"):
            raise ConfigurationError(f"Dataset split must be 'heldout' or 'train', got '{self.dataset.split}'")
        OfdmNumerology.from_preset(self.numerology)

    def check_files(self) -> None:
        """Every referenced file must exist before a run starts"""
        for scheme in self.schemes:
            kind, _ = parse_scheme(scheme)
            if kind in ("OSSDM", "S-OFDM"):
                path = self.models.get(scheme)
                if not path or not os.path.exists(path):
                    raise LaunchError(f"No trained model for learned scheme {scheme} (got {path!r})")
            if kind == "OSDM" and not os.path.exists(self.codebooks.get("osdm", "")):
                raise LaunchError("OSDM needs an existing [codebooks] osdm file")
        if self.hard_projection and not os.path.exists(self.codebooks.get("projection", "")):
            raise LaunchError("Hard projection needs an existing [codebooks] projection file")
        for path in (self.pdp_file, self.dataset.file):
            if path and not os.path.exists(path):
                raise LaunchError(f"Referenced file {path} does not exist")


@dataclass
class ExperimentResult:
    rows: List[Dict[str, str]]
    csv_path: str

    def completed(self) -> List[Dict[str, str]]:
        return [row for row in self.rows if row["f1"] != ""]


@dataclass
class TrialScore:
    f1: float
    precision: float
    recall: float
    ber: Optional[float]
    interpreted: int
    bandwidth: float
    duration: float


class ExperimentContext:
    """Everything a worker needs to run trials, loaded once per process"""

    def __init__(self, experiment: ExperimentConfig):
        self.experiment = experiment
        ds = experiment.dataset
        if ds.file:
            self.dataset = DataManager.load_dataset(ds.file)
        else:
            self.dataset = generate_dataset(ds.concepts, ds.relations, ds.graphs, ds.triplets_per_graph, ds.seed)
        self.graphs = self.dataset.heldout_graphs if ds.split == "heldout" else self.dataset.train_graphs
        if not self.graphs:
            raise ConfigurationError(f"The {ds.split} split of the dataset is empty")
        self.numerology = OfdmNumerology.from_preset(experiment.numerology)
        self.profile = DataManager.load_pdp(experiment.pdp_file) if experiment.pdp_file else default_profile(experiment.channel)
        self.models = {}
        self.projection: Optional[Codebook] = None
        self.osdm_codebook: Optional[Codebook] = None
        self.osdm_assignment: Optional[OsdmAssignment] = None
        self.classic: Optional[ClassicChain] = None

        kinds = {parse_scheme(s)[0] for s in experiment.schemes}
        for scheme in experiment.schemes:
            kind, block_len = parse_scheme(scheme)
            if kind not in ("OSSDM", "S-OFDM"):
                continue
            model = DataManager.load_model(experiment.models[scheme])
            if model.scheme.value != kind:
                raise ConfigurationError(f"Model for {scheme} was trained on the {model.scheme.value} link")
            if kind == "OSSDM" and model.block_len != block_len:
                raise ConfigurationError(f"Model for {scheme} has block length {model.block_len}")
            self.models[scheme] = model
        if experiment.hard_projection:
            self.projection = DataManager.load_codebook(experiment.codebooks["projection"])
        if "OSDM" in kinds:
            self.osdm_codebook = DataManager.load_codebook(experiment.codebooks["osdm"])
            self.osdm_assignment = OsdmAssignment.build(self.dataset.vocabulary_size, self.osdm_codebook.size,
                                                        derive_seed(ds.seed, 17))
        if "NS-OFDM" in kinds:
            table = build_frequency_table(self.dataset.train_graphs, self.dataset.concepts, self.dataset.relations)
            self.classic = ClassicChain(HuffmanCode.from_frequencies(table), build_ldpc_code())

    def realization(self, snr_db: float, seed: int, graph_index: int) -> ChannelRealization:
        return ChannelRealization(self.experiment.channel, snr_db, self.profile,
                                  noise_seed=derive_seed(seed, graph_index, 0),
                                  fading_seed=derive_seed(seed, graph_index, 1))

    def _real_through_channel(self, waveform: np.ndarray, realization: ChannelRealization) -> np.ndarray:
        """Real Walsh waveform through the channel; fading is equalized and the real part kept"""
        out = transmit(waveform, realization)
        if realization.kind is ChannelKind.AWGN:
            return out.signal
        return mmse_equalize_time(out.signal, out.taps, out.noise_var, None, out.signal_power).real

    def _ofdm_through_channel(self, symbols: np.ndarray, realization: ChannelRealization,
                              symbol_power: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """Returns (equalized symbols, per-subcarrier gains, per-bin noise variance)"""
        waveform = ofdm_modulate(symbols, self.numerology)
        out = transmit(waveform, realization)
        gains = channel_estimate_from_taps(out.taps, self.numerology)
        equalizer = "none" if realization.kind is ChannelKind.AWGN else "mmse"
        received = ofdm_demodulate(out.signal, self.numerology, gains, equalizer, out.noise_var, symbol_power,
                                   count=len(symbols))
        return received, gains, out.noise_var

    def run_trial(self, scheme: str, snr_db: float, seed: int) -> TrialScore:
        kind, block_len = parse_scheme(scheme)
        spn = self.experiment.symbols_per_node
        scores, interpreted, duration, bit_errors, bit_count = [], 0, 0.0, 0, 0
        bandwidth = self.experiment.bandwidth if kind in ("OSSDM", "OSDM") else self.numerology.bandwidth

        for index, graph in enumerate(self.graphs):
            reference = canonical_order(graph)
            realization = self.realization(snr_db, seed, index)
            if kind == "OSSDM":
                model = self.models[scheme]
                spn = model.codec_spec.symbols_per_node
                decoded, used = self._run_ossdm(model, reference, realization)
                duration += used
            elif kind == "S-OFDM":
                model = self.models[scheme]
                spn = model.codec_spec.symbols_per_node
                frame = encode_graph(reference, model.codec.encoder)
                power = config.TX_POWER_PER_SYMBOL
                received, _, _ = self._ofdm_through_channel(frame.symbols * math.sqrt(power), realization, power)
                estimate = SemanticSymbolFrame(received / math.sqrt(power), frame.node_ids, power_normalized=False)
                decoded = decode_symbols(estimate, model.codec.decoder).triplets
                duration += self.numerology.duration_for(frame.count)
            elif kind == "NS-OFDM":
                decoded, errors, bits, symbols = self._run_classic(reference, realization)
                bit_errors += errors
                bit_count += bits
                duration += self.numerology.duration_for(symbols)
            else:
                decoded, used = self._run_osdm(reference, realization)
                duration += used

            score = triplet_f1(reference, decoded)
            scores.append(score)
            slots = list(decoded) + [MISSING_SLOT] * (len(reference) - len(decoded))
            interpreted += count_interpreted_symbols(reference, slots[:len(reference)], 2 * spn)

        precision = float(np.mean([s.precision for s in scores]))
        recall = float(np.mean([s.recall for s in scores]))
        ber = bit_errors / bit_count if kind == "NS-OFDM" and bit_count else None
        return TrialScore(float(np.mean([s.f1 for s in scores])), precision, recall, ber, interpreted,
                          bandwidth, duration)

    def _run_ossdm(self, model, reference: List[Triplet], realization: ChannelRealization):
        order = model.walsh_order
        basis = build_walsh_basis(order)
        ossdm_config = OssdmConfig(order, self.experiment.refresh_rate, model.codec_spec.symbols_per_node,
                                   config.TX_POWER_PER_SYMBOL, self.experiment.hard_projection)
        frame = encode_graph(reference, model.codec.encoder)
        waveform = ossdm_modulate(frame, model, basis, ossdm_config, self.projection)
        received = self._real_through_channel(waveform, realization)
        estimate = ossdm_demodulate(received, model, basis, ossdm_config, frame.node_ids)
        return decode_symbols(estimate, model.codec.decoder).triplets, ossdm_config.duration_for(frame.count)

    def _run_osdm(self, reference: List[Triplet], realization: ChannelRealization):
        codebook = self.osdm_codebook
        basis = build_walsh_basis(codebook.config.walsh_order)
        ids = [self.dataset.triplet_id(t) for t in reference]
        waveform = osdm_modulate(ids, self.osdm_assignment, codebook, basis)
        received = self._real_through_channel(waveform, realization)
        decoded_ids = osdm_decode(received, self.osdm_assignment, codebook, basis)
        decoded = [Triplet(*id_to_triplet(i, self.dataset.concepts, self.dataset.relations)) for i in decoded_ids]
        return decoded, len(ids) * codebook.config.codeword_len / self.experiment.refresh_rate

    def _run_classic(self, reference: List[Triplet], realization: ChannelRealization):
        encoded = self.classic.encode(reference)
        received, gains, noise_var = self._ofdm_through_channel(encoded.symbols, realization, 1.0)
        if realization.kind is ChannelKind.AWGN:
            effective_var = np.full(received.shape, max(noise_var, 1e-12))
        else:
            # undo the MMSE shrinkage, leaving noise of variance nv / |h|^2
            h2 = np.abs(np.resize(gains, received.shape)) ** 2
            shrink = h2 / (h2 + noise_var)
            received = received / np.maximum(shrink, 1e-12)
            effective_var = np.maximum(noise_var, 1e-12) / np.maximum(h2, 1e-12)
        llrs = qam64_soft_demap(received, effective_var)
        decoded, bits, _ = self.classic.decode(llrs, encoded)
        errors = int(np.count_nonzero(bits != encoded.payload))
        return decoded, errors, encoded.payload.size, encoded.symbols.size


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _score_row(scheme: str, snr_db: float, seed: int, score: Optional[TrialScore], wall_time: float) -> Dict[str, str]:
    row = {"scheme": scheme, "snr_db": format_snr(snr_db), "seed": str(seed), "wall_time_s": f"{wall_time:.3f}"}
    if score is None:
        row.update({"f1": "", "precision": "", "recall": "", "ber": "", "esse": ""})
        return row
    record = esse(score.interpreted, score.bandwidth, score.duration)
    row.update({
        "f1": _format(score.f1),
        "precision": _format(score.precision),
        "recall": _format(score.recall),
        "ber": _format(score.ber),
        "esse": _format(record.esse),
    })
    return row


_WORKER_CONTEXT: Optional[ExperimentContext] = None


def _init_worker(experiment: ExperimentConfig) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ExperimentContext(experiment)


def _run_point(point: Tuple[str, float, int]) -> Dict[str, str]:
    scheme, snr_db, seed = point
    start = time.perf_counter()
    try:
        score = _WORKER_CONTEXT.run_trial(scheme, snr_db, seed)
    except Exception as e:
        logger.error(f"Trial {scheme} @ {snr_db} dB seed {seed} failed: {e}", exc_info=True)
        score = None
    return _score_row(scheme, snr_db, seed, score, time.perf_counter() - start)


class ExperimentManager:
    """Class to drive a full sweep described by an ExperimentConfig"""

    @classmethod
    def run_experiment(cls, experiment: ExperimentConfig, progress: bool = False) -> ExperimentResult:
        """
        Run every (scheme, SNR, seed) point without a successful row in the results CSV.

        Failed rows from an earlier run are removed first and their points retried.
        Rows are appended per scheme in grid order, so a rerun of the same config
        reproduces the file apart from the wall-time column.
        """
        experiment.validate()
        experiment.check_files()
        csv_path = experiment.csv_path
        dropped = DataManager.drop_failed_rows(csv_path)
        if dropped:
            logger.info(f"Retrying {dropped} failed trials from {csv_path}")
        done = DataManager.completed_keys(csv_path)
        if done:
            logger.info(f"Resuming {experiment.name}: {len(done)} rows already in {csv_path}")

        global _WORKER_CONTEXT
        _WORKER_CONTEXT = ExperimentContext(experiment) if experiment.workers <= 1 else None

        written: List[Dict[str, str]] = []
        for scheme in experiment.schemes:
            points = [(scheme, snr, seed) for snr in experiment.snr_grid for seed in experiment.seeds
                      if (scheme, format_snr(snr), str(seed)) not in done]
            if not points:
                continue
            if experiment.workers > 1:
                with ProcessPoolExecutor(max_workers=experiment.workers, initializer=_init_worker,
                                         initargs=(experiment,)) as pool:
                    rows = list(tqdm(pool.map(_run_point, points), total=len(points), desc=scheme,
                                     disable=not progress))
            else:
                rows = [_run_point(p) for p in tqdm(points, desc=scheme, disable=not progress)]
            DataManager.append_rows(csv_path, rows)
            written.extend(rows)
            failures = sum(1 for r in rows if r["f1"] == "")
            logger.info(f"{scheme}: {len(rows)} rows written ({failures} failed)")

        all_rows = DataManager.read_rows(csv_path, config.CSV_HEADER) if os.path.exists(csv_path) else written
        return ExperimentResult(all_rows, csv_path)


def summarize(rows: Sequence[Dict[str, str]], column: str = "f1") -> Dict[Tuple[str, str], float]:
    """Mean of a column per (scheme, snr_db) over completed rows"""
    groups: Dict[Tuple[str, str], List[float]] = {}
    for row in rows:
        if row.get(column, "") != "":
            groups.setdefault((row["scheme"], row["snr_db"]), []).append(float(row[column]))
    return {key: float(np.mean(values)) for key, values in groups.items()}
