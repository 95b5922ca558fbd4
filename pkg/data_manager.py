"""
Data management module for the OSSDM simulator
Handles every on-disk format: codebooks, trained models, datasets, masks, power-delay profiles, waveforms and result CSVs
"""
import csv
import json
import logging
import os
import struct
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch

import config
from codebook import Codebook, CodebookConfig
from errors import FormatError
from metrics import EmissionMask
from channel import PowerDelayProfile
from semantic_codec import ToyKgDataset, Triplet, canonical_order

logger = logging.getLogger('ossdm.data')

# magic, version, N, B, M, seed, sample_rate, f_min, f_max, power_variance
CODEBOOK_HEADER = struct.Struct("<4sHIIIqdddd")
# magic, version, metadata length
MODEL_HEADER = struct.Struct("<4sHI")


class DataManager:
    """Class to handle all data loading and saving operations"""

    @staticmethod
    def ensure_dir(path: str) -> None:
        """Ensure the parent directory of a file exists"""
        directory = os.path.dirname(os.path.abspath(path))
        if not os.path.exists(directory):
            os.makedirs(directory, exist_ok=True)
            logger.info(f"Created directory {directory}")

    @staticmethod
    def _read_bytes(filename: str) -> bytes:
        try:
            with open(filename, "rb") as f:
                return f.read()
        except FileNotFoundError as e:
            logger.error(f"Error loading {filename}: {e}")
            raise FormatError(f"File not found: {filename}")

    @staticmethod
    def save_codebook(filename: str, codebook: Codebook) -> None:
        cfg = codebook.config
        DataManager.ensure_dir(filename)
        header = CODEBOOK_HEADER.pack(config.CODEBOOK_MAGIC, config.CODEBOOK_VERSION, cfg.block_len, cfg.num_blocks,
                                      codebook.size, cfg.seed, cfg.sample_rate, cfg.freq_range[0], cfg.freq_range[1],
                                      cfg.power_variance)
        with open(filename, "wb") as f:
            f.write(header)
            f.write(np.asarray(codebook.source_freqs, dtype="<f8").tobytes())
            f.write(np.asarray(codebook.entries, dtype="<f8").tobytes())
        logger.info(f"Codebook saved to {filename}")

    @staticmethod
    def load_codebook(filename: str) -> Codebook:
        raw = DataManager._read_bytes(filename)
        if len(raw) < CODEBOOK_HEADER.size:
            raise FormatError(f"{filename} is too short to be a codebook")
        magic, version, n, b, m, seed, rate, f_min, f_max, variance = CODEBOOK_HEADER.unpack_from(raw)
        if magic != config.CODEBOOK_MAGIC or version != config.CODEBOOK_VERSION:
            raise FormatError(f"{filename} is not a version {config.CODEBOOK_VERSION} codebook")
        expected = CODEBOOK_HEADER.size + 8 * (m + m * b * n)
        if len(raw) != expected:
            raise FormatError(f"{filename} holds {len(raw)} bytes, expected {expected}")
        body = np.frombuffer(raw, dtype="<f8", offset=CODEBOOK_HEADER.size)
        cb_config = CodebookConfig(block_len=n, num_blocks=b, num_entries=m, freq_range=(f_min, f_max),
                                   sample_rate=rate, power_variance=variance, seed=seed)
        entries = body[m:].reshape(m, b, n).astype(np.float64)
        logger.debug(f"Loaded codebook N={n} B={b} M={m} from {filename}")
        return Codebook(entries, cb_config, body[:m].astype(np.float64))

    @staticmethod
    def save_model(filename: str, model) -> None:
        """Header (scheme, Walsh order, widths, seed, log) followed by float64 weights in state_dict order"""
        from neural_mapper import training_metadata

        meta = json.dumps(training_metadata(model), sort_keys=True).encode("utf-8")
        weights = [t.detach().cpu().numpy().astype("<f8").ravel() for t in model.state_dict().values()]
        DataManager.ensure_dir(filename)
        with open(filename, "wb") as f:
            f.write(MODEL_HEADER.pack(config.MODEL_MAGIC, config.MODEL_VERSION, len(meta)))
            f.write(meta)
            f.write(np.concatenate(weights).tobytes() if weights else b"")
        logger.info(f"Model saved to {filename}")

    @staticmethod
    def load_model(filename: str):
        from neural_mapper import model_from_metadata

        raw = DataManager._read_bytes(filename)
        if len(raw) < MODEL_HEADER.size:
            raise FormatError(f"{filename} is too short to be a model file")
        magic, version, meta_len = MODEL_HEADER.unpack_from(raw)
        if magic != config.MODEL_MAGIC or version != config.MODEL_VERSION:
            raise FormatError(f"{filename} is not a version {config.MODEL_VERSION} model file")
        try:
            meta = json.loads(raw[MODEL_HEADER.size:MODEL_HEADER.size + meta_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            logger.error(f"Error loading {filename}: {e}")
            raise FormatError(f"Corrupt model header in {filename}")

        model = model_from_metadata(meta)
        weights = np.frombuffer(raw, dtype="<f8", offset=MODEL_HEADER.size + meta_len)
        state = model.state_dict()
        total = sum(t.numel() for t in state.values())
        if weights.size != total:
            raise FormatError(f"{filename} holds {weights.size} weights, the model needs {total}")
        offset = 0
        for key, tensor in state.items():
            chunk = weights[offset:offset + tensor.numel()].reshape(tensor.shape)
            state[key] = torch.from_numpy(chunk.astype(np.float64))
            offset += tensor.numel()
        model.load_state_dict(state)
        model.eval()
        logger.debug(f"Loaded {meta['scheme']} model (order {meta['walsh_order']}) from {filename}")
        return model

    @staticmethod
    def save_dataset(filename: str, dataset: ToyKgDataset) -> None:
        """Line-delimited graph_id,head,relation,tail with '#' metadata lines"""
        DataManager.ensure_dir(filename)
        with open(filename, "w", encoding="utf-8", newline="") as f:
            f.write(f"# concepts={dataset.concepts} relations={dataset.relations} seed={dataset.seed}\n")
            f.write(f"# heldout={','.join(map(str, dataset.heldout_ids))}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["graph_id", "head", "relation", "tail"])
            for graph_id, graph in enumerate(dataset.graphs):
                for head, relation, tail in graph:
                    writer.writerow([graph_id, head, relation, tail])
        logger.info(f"Dataset with {len(dataset.graphs)} graphs saved to {filename}")

    @staticmethod
    def load_dataset(filename: str) -> ToyKgDataset:
        meta: Dict[str, str] = {}
        rows: List[List[str]] = []
        try:
            with open(filename, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    if line.startswith("#"):
                        for item in line[1:].split():
                            key, _, value = item.partition("=")
                            meta[key] = value
                    elif not line.startswith("graph_id"):
                        rows.append(line.split(","))
        except FileNotFoundError as e:
            logger.error(f"Error loading {filename}: {e}")
            raise FormatError(f"File not found: {filename}")

        try:
            concepts, relations = int(meta["concepts"]), int(meta["relations"])
            graphs: Dict[int, List[Triplet]] = {}
            for graph_id, head, relation, tail in rows:
                graphs.setdefault(int(graph_id), []).append(Triplet(int(head), int(relation), int(tail)))
            heldout = [int(i) for i in meta.get("heldout", "").split(",") if i]
        except (KeyError, ValueError) as e:
            raise FormatError(f"Malformed dataset file {filename}: {e}")
        count = max(graphs) + 1 if graphs else 0
        ordered = [canonical_order(graphs.get(i, [])) for i in range(count)]
        held = set(heldout)
        train = [i for i in range(count) if i not in held]
        return ToyKgDataset(concepts, relations, ordered, train, heldout, int(meta.get("seed", 0)))

    @staticmethod
    def _read_pairs(filename: str) -> List[Tuple[float, float]]:
        pairs = []
        try:
            with open(filename, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    first, second = line.split(",")
                    pairs.append((float(first), float(second)))
        except FileNotFoundError as e:
            logger.error(f"Error loading {filename}: {e}")
            raise FormatError(f"File not found: {filename}")
        except ValueError as e:
            raise FormatError(f"Malformed line in {filename}: {e}")
        return pairs

    @staticmethod
    def load_mask(filename: str) -> EmissionMask:
        """Lines of freq_offset_hz,limit_dbr"""
        return EmissionMask(tuple(DataManager._read_pairs(filename)))

    @staticmethod
    def save_mask(filename: str, mask: EmissionMask) -> None:
        DataManager.ensure_dir(filename)
        with open(filename, "w", encoding="utf-8") as f:
            f.write("# freq_offset_hz,limit_dbr\n")
            for freq, limit in mask.breakpoints:
                f.write(f"{freq!r},{limit!r}\n")

    @staticmethod
    def load_pdp(filename: str) -> PowerDelayProfile:
        """Lines of delay_samples,power_linear"""
        return PowerDelayProfile.from_pairs(DataManager._read_pairs(filename))

    @staticmethod
    def save_waveform(filename: str, signal: np.ndarray) -> None:
        """Float64 little-endian binary, or CSV when the name ends in .csv"""
        DataManager.ensure_dir(filename)
        signal = np.asarray(signal)
        if filename.endswith(".csv"):
            columns = [signal.real, signal.imag] if np.iscomplexobj(signal) else [signal]
            np.savetxt(filename, np.column_stack(columns), delimiter=",", fmt="%.17g")
        else:
            with open(filename, "wb") as f:
                f.write(np.asarray(signal, dtype="<f8" if not np.iscomplexobj(signal) else "<c16").tobytes())
        logger.info(f"Waveform of {signal.size} samples saved to {filename}")

    @staticmethod
    def read_rows(filename: str, required: Optional[Sequence[str]] = None) -> List[Dict[str, str]]:
        try:
            with open(filename, "r", encoding="utf-8", newline="") as f:
                reader = csv.DictReader(f)
                rows = list(reader)
                fields = reader.fieldnames or []
        except FileNotFoundError as e:
            logger.error(f"Error loading {filename}: {e}")
            raise FormatError(f"File not found: {filename}")
        missing = [c for c in (required or []) if c not in fields]
        if missing:
            raise FormatError(f"{filename} is missing columns {missing}")
        return rows

    @staticmethod
    def append_rows(filename: str, rows: Iterable[Dict[str, object]], header: Sequence[str] = config.CSV_HEADER) -> None:
        """Append rows, writing the header when the file is new"""
        DataManager.ensure_dir(filename)
        new_file = not os.path.exists(filename) or os.path.getsize(filename) == 0
        with open(filename, "a", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(header), lineterminator="\n")
            if new_file:
                writer.writeheader()
            for row in rows:
                writer.writerow(row)

    @staticmethod
    def completed_keys(filename: str) -> Set[Tuple[str, str, str]]:
        """(scheme, snr_db, seed) of successful rows in a results CSV; failed rows have an empty f1"""
        if not os.path.exists(filename) or os.path.getsize(filename) == 0:
            return set()
        return {(row["scheme"], row["snr_db"], row["seed"])
                for row in DataManager.read_rows(filename, config.CSV_HEADER) if row["f1"] != ""}

    @staticmethod
    def drop_failed_rows(filename: str) -> int:
        """Rewrite a results CSV without its failed rows; returns how many were dropped"""
        if not os.path.exists(filename) or os.path.getsize(filename) == 0:
            return 0
        rows = DataManager.read_rows(filename, config.CSV_HEADER)
        kept = [row for row in rows if row["f1"] != ""]
        if len(kept) == len(rows):
            return 0
        with open(filename, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(config.CSV_HEADER), lineterminator="\n")
            writer.writeheader()
            writer.writerows(kept)
        return len(rows) - len(kept)
