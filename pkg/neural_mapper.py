"""
Neural mapper module for the OSSDM simulator
Feed-forward symbol <-> Walsh-coefficient mappers, the composite training loss and end-to-end training
"""
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from tqdm import tqdm

import config
from codebook import Codebook
from errors import ArgumentError, ConfigurationError, DimensionError, EstimatorError, TrainingError
from semantic_codec import (CodecSpec, SemanticCodec, ToyKgDataset, codec_losses,
                            graph_tensor)
from utils import derive_rng, derive_seed
from walsh_core import build_walsh_basis

logger = logging.getLogger('ossdm.mapper')

ACTIVATIONS: Dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "tanh": torch.tanh,
    "relu": torch.relu,
    "sigmoid": torch.sigmoid,
}


class TrainingLink(Enum):
    OSSDM = "OSSDM"
    SOFDM = "S-OFDM"


@dataclass(frozen=True)
class FfnSpec:
    layer_widths: Tuple[int, ...]
    activation: str = "tanh"
    seed: int = config.TRAIN_SEED

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 3:
            raise ConfigurationError(f"FFN needs at least one hidden layer, got widths {self.layer_widths}")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigurationError("Layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"Unknown activation '{self.activation}', expected one of {list(ACTIVATIONS)}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]


def default_mapper_specs(walsh_order: int, seed: int = config.TRAIN_SEED) -> Tuple[FfnSpec, FfnSpec]:
    """Two hidden layers of width 4N on both sides"""
    n = 2 ** walsh_order
    hidden = config.HIDDEN_MULTIPLIER * n
    return (FfnSpec((2, hidden, hidden, n), seed=derive_seed(seed, 1)),
            FfnSpec((n, hidden, hidden, 2), seed=derive_seed(seed, 2)))


class Ffn(nn.Module):
    """Affine layers with the configured activation between them; the final layer is linear"""

    def __init__(self, spec: FfnSpec):
        super().__init__()
        self.spec = spec
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(spec.seed)
            self.layers = nn.ModuleList(
                nn.Linear(w_in, w_out) for w_in, w_out in zip(spec.layer_widths, spec.layer_widths[1:])
            )
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.spec.in_width:
            raise DimensionError(f"FFN expects input width {self.spec.in_width}, got {x.shape[-1]}")
        activation = ACTIVATIONS[self.spec.activation]
        for layer in self.layers[:-1]:
            x = activation(layer(x))
        return self.layers[-1](x)


def ffn_forward(ffn: Ffn, inputs) -> np.ndarray:
    """Inference pass on numpy input"""
    with torch.no_grad():
        return ffn(torch.as_tensor(np.asarray(inputs, dtype=np.float64))).numpy()


@dataclass
class LossBreakdown:
    ce_concept: float
    ce_relation: float
    mi_estimate: float
    codebook_penalty: float
    total: float
    alpha: float = config.ALPHA
    lambda_: float = config.LAMBDA

    def is_consistent(self, tolerance: float = 1e-10) -> bool:
        expected = self.ce_concept + self.ce_relation - self.alpha * self.mi_estimate + self.lambda_ * self.codebook_penalty
        return abs(expected - self.total) <= tolerance


def compose_loss(ce_concept, ce_relation, mi_estimate, penalty, alpha: float, lambda_: float):
    return ce_concept + ce_relation - alpha * mi_estimate + lambda_ * penalty


def project_power(coefficients: torch.Tensor, energy: float) -> torch.Tensor:
    """Scale each row to the given energy; all-zero rows go to the sequency-0 direction"""
    norm = coefficients.norm(dim=-1, keepdim=True)
    fallback = torch.zeros_like(coefficients)
    fallback[..., 0] = 1.0
    safe = torch.where(norm > 1e-150, coefficients / norm.clamp_min(1e-150), fallback)
    return safe * math.sqrt(energy)


def codebook_penalty(a_norm: torch.Tensor, codebook) -> torch.Tensor:
    """
    Squared distance to the nearest codebook element, argmin treated as constant.

    `codebook` is a Codebook or a (P, N) tensor of blocks. A (B, N) input that
    matches a Codebook entry shape is scored against whole entries; any other
    (K, N) input is scored row by row against the block pool and averaged.
    """
    if isinstance(codebook, Codebook):
        entries = torch.as_tensor(codebook.entries, dtype=a_norm.dtype)
        if tuple(a_norm.shape) == tuple(entries.shape[1:]):
            flat = entries.reshape(len(entries), -1)
            return _nearest_sq_distance(a_norm.reshape(1, -1), flat).sum()
        pool = entries.reshape(-1, entries.shape[-1])
    else:
        pool = torch.as_tensor(codebook, dtype=a_norm.dtype)
    if a_norm.shape[-1] != pool.shape[-1]:
        raise DimensionError(f"Coefficient width {a_norm.shape[-1]} does not match codebook block length {pool.shape[-1]}")
    rows = a_norm.reshape(-1, pool.shape[-1])
    return _nearest_sq_distance(rows, pool).mean()


def _nearest_sq_distance(rows: torch.Tensor, pool: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        scores = (pool * pool).sum(dim=-1)[None, :] - 2.0 * rows @ pool.T
        nearest = pool[torch.argmin(scores, dim=-1)]
    return (rows - nearest).pow(2).sum(dim=-1)


def mi_lower_bound(clean: torch.Tensor, noisy: torch.Tensor) -> torch.Tensor:
    """
    Contrastive (InfoNCE) lower bound on I(S; S~) in nats.

    Critic f(x, y) = -||x - y||^2 / (2 tau) with tau the mean paired squared
    distance (plus a tiny floor scaled by the clean power). The estimate never
    exceeds log(batch size).
    """
    if clean.shape != noisy.shape:
        raise DimensionError(f"Paired batches differ in shape: {tuple(clean.shape)} vs {tuple(noisy.shape)}")
    clean = clean.reshape(len(clean), -1)
    noisy = noisy.reshape(len(noisy), -1)
    batch = len(clean)
    if batch < 2:
        raise EstimatorError(f"Contrastive estimate needs a batch of at least 2, got {batch}")
    distances = (clean[:, None, :] - noisy[None, :, :]).pow(2).sum(dim=-1)
    tau = torch.diagonal(distances).mean() + config.MI_TEMPERATURE_FLOOR * clean.pow(2).sum(dim=-1).mean()
    scores = -distances / (2.0 * tau)
    return (torch.diagonal(scores) - torch.logsumexp(scores, dim=1)).mean() + math.log(batch)


def awgn_noise(shape, power: torch.Tensor, snr_db: float, noise_seed: int, complex_valued: bool = False) -> torch.Tensor:
    """Reparameterized channel noise: std from the detached measured power, draw from (seed) only"""
    if math.isinf(snr_db) and snr_db > 0:
        return torch.zeros(shape, dtype=torch.float64)
    generator = torch.Generator().manual_seed(int(noise_seed))
    variance = power.detach() / 10.0 ** (snr_db / 10.0)
    scale = torch.sqrt(variance / 2.0) if complex_valued else torch.sqrt(variance)
    return torch.randn(shape, generator=generator, dtype=torch.float64) * scale


def ossdm_link(iq: torch.Tensor, tx: Ffn, rx: Ffn, snr_db: float, noise_seed: int,
               energy: float = config.TX_POWER_PER_SYMBOL) -> Tuple[torch.Tensor, torch.Tensor]:
    """tx mapper -> power projection -> IWT -> AWGN -> WT -> rx mapper; returns (a_norm, iq estimate)"""
    order = int(round(math.log2(tx.spec.out_width)))
    walsh = torch.as_tensor(build_walsh_basis(order).matrix(normalized=True))
    a_norm = project_power(tx(iq), energy)
    signal = a_norm @ walsh
    received = signal + awgn_noise(signal.shape, signal.pow(2).mean(), snr_db, noise_seed)
    return a_norm, rx(received @ walsh.T)


def sofdm_link(iq: torch.Tensor, snr_db: float, noise_seed: int, numerology_name: str = config.DEFAULT_NUMEROLOGY,
               power: float = config.TX_POWER_PER_SYMBOL) -> torch.Tensor:
    """Semantic symbols on OFDM subcarriers through AWGN; the CP carries no information under AWGN and is skipped"""
    from ofdm_modem import OfdmNumerology

    numerology = OfdmNumerology.from_preset(numerology_name)
    count = len(iq)
    num_ofdm = max(1, numerology.ofdm_symbols_for(count))
    symbols = torch.complex(iq[:, 0], iq[:, 1]) * math.sqrt(power)
    padded = torch.cat([symbols, torch.zeros(num_ofdm * numerology.subcarriers - count, dtype=symbols.dtype)])
    bins = torch.as_tensor(numerology.active_bins)
    spectrum = torch.zeros(num_ofdm, numerology.fft_size, dtype=symbols.dtype)
    spectrum[:, bins] = padded.reshape(num_ofdm, numerology.subcarriers)
    signal = torch.fft.ifft(spectrum, dim=-1, norm="ortho")
    noise = awgn_noise((2,) + tuple(signal.shape), signal.abs().pow(2).mean(), snr_db, noise_seed, complex_valued=True)
    received = torch.fft.fft(signal + torch.complex(noise[0], noise[1]), dim=-1, norm="ortho")
    estimate = received[:, bins].reshape(-1)[:count] / math.sqrt(power)
    return torch.stack([estimate.real, estimate.imag], dim=-1)


class TrainedMapper(nn.Module):
    """Semantic codec plus (for OSSDM) the transmit and receive mappers, with the training log"""

    def __init__(self, codec_spec: CodecSpec, scheme: TrainingLink = TrainingLink.OSSDM, walsh_order: int = 6,
                 tx_spec: Optional[FfnSpec] = None, rx_spec: Optional[FfnSpec] = None, seed: int = config.TRAIN_SEED):
        super().__init__()
        self.scheme = scheme
        self.walsh_order = walsh_order if scheme is TrainingLink.OSSDM else 0
        self.seed = seed
        self.codec = SemanticCodec(codec_spec)
        self.tx: Optional[Ffn] = None
        self.rx: Optional[Ffn] = None
        self.training_log: List[LossBreakdown] = []
        self.epochs_trained = 0
        if scheme is TrainingLink.OSSDM:
            default_tx, default_rx = default_mapper_specs(walsh_order, seed)
            tx_spec, rx_spec = tx_spec or default_tx, rx_spec or default_rx
            n = 2 ** walsh_order
            if tx_spec.in_width != 2 or tx_spec.out_width != n or rx_spec.in_width != n or rx_spec.out_width != 2:
                raise ConfigurationError(
                    f"Mapper widths {tx_spec.layer_widths} / {rx_spec.layer_widths} do not fit Walsh order {walsh_order}"
                )
            self.tx = Ffn(tx_spec)
            self.rx = Ffn(rx_spec)

    @property
    def codec_spec(self) -> CodecSpec:
        return self.codec.spec

    @property
    def block_len(self) -> int:
        return 2 ** self.walsh_order

    def to_coefficients(self, iq: np.ndarray) -> np.ndarray:
        """(K, 2) I/Q rows -> (K, N) raw Walsh coefficients"""
        return ffn_forward(self.tx, iq)

    def to_symbols(self, coefficients: np.ndarray) -> np.ndarray:
        """(K, N) received Walsh coefficients -> (K, 2) I/Q estimates"""
        return ffn_forward(self.rx, coefficients)

    def weights_finite(self) -> bool:
        return all(torch.isfinite(p).all() for p in self.parameters())


@dataclass
class TrainingConfig:
    link: TrainingLink = TrainingLink.OSSDM
    walsh_order: int = 6
    snr_db: float = config.TRAIN_SNR_DB
    epochs: int = config.TRAIN_EPOCHS
    seed: int = config.TRAIN_SEED
    alpha: float = config.ALPHA
    lambda_: float = config.LAMBDA
    learning_rate: float = config.LEARNING_RATE
    batch_graphs: int = config.BATCH_GRAPHS
    numerology: str = config.DEFAULT_NUMEROLOGY
    tx_spec: Optional[FfnSpec] = None
    rx_spec: Optional[FfnSpec] = None
    progress: bool = False


def batch_loss(model: TrainedMapper, triplets: torch.Tensor, train_config: TrainingConfig, pool: Optional[torch.Tensor],
               noise_seed: int) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Forward pass of one mini-batch through the full chain; returns (total, components)"""
    spec = model.codec_spec
    iq = model.codec.encoder(triplets)
    if train_config.link is TrainingLink.OSSDM:
        a_norm, estimate = ossdm_link(iq, model.tx, model.rx, train_config.snr_db, noise_seed)
        penalty = codebook_penalty(a_norm, pool) if pool is not None else torch.zeros((), dtype=torch.float64)
    else:
        estimate = sofdm_link(iq, train_config.snr_db, noise_seed, train_config.numerology)
        penalty = torch.zeros((), dtype=torch.float64)

    concept_logits, relation_logits = model.codec.decoder(estimate)
    ce_concept, ce_relation = codec_losses(concept_logits, relation_logits, triplets)
    node_width = 2 * spec.symbols_per_node
    mi = mi_lower_bound(iq.reshape(-1, node_width), estimate.reshape(-1, node_width))
    total = compose_loss(ce_concept, ce_relation, mi, penalty, train_config.alpha, train_config.lambda_)
    return total, {"ce_concept": ce_concept, "ce_relation": ce_relation, "mi_estimate": mi, "codebook_penalty": penalty}


def _smoothed_tail_is_monotone(totals: Sequence[float]) -> bool:
    tail = np.asarray(totals[len(totals) - max(2, len(totals) // 4):])
    if tail.size < 3:
        return True
    smoothed = np.convolve(tail, np.ones(3) / 3.0, mode="valid")
    return bool(np.all(np.diff(smoothed) <= 1e-12))


def train_end_to_end(dataset: ToyKgDataset, train_config: TrainingConfig, codec_spec: Optional[CodecSpec] = None,
                     codebook: Optional[Codebook] = None) -> TrainedMapper:
    """
    Train codec (and mappers for OSSDM) with Adam on the composite loss.

    Args:
        dataset: toy knowledge-graph dataset; only the training split is used
        train_config: link, Walsh order, SNR, epochs, seed and loss weights
        codec_spec: codec shape; defaults to the dataset vocabulary
        codebook: codebook whose blocks the penalty term pulls toward (OSSDM, lambda > 0)

    Returns:
        TrainedMapper with per-epoch LossBreakdown entries in training_log
    """
    graphs = dataset.train_graphs
    if not graphs:
        raise ArgumentError("Training split is empty")
    codec_spec = codec_spec or CodecSpec(dataset.concepts, dataset.relations, seed=train_config.seed)
    model = TrainedMapper(codec_spec, train_config.link, train_config.walsh_order,
                          train_config.tx_spec, train_config.rx_spec, train_config.seed)

    pool = None
    if train_config.link is TrainingLink.OSSDM and train_config.lambda_ != 0:
        if codebook is None:
            raise ConfigurationError("Codebook penalty is enabled but no codebook was given")
        if codebook.config.block_len != model.block_len:
            raise ConfigurationError(
                f"Codebook block length {codebook.config.block_len} does not match mapper N={model.block_len}"
            )
        pool = torch.as_tensor(codebook.block_pool())

    batches = [graph_tensor(g, codec_spec) for g in graphs]
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        epochs = tqdm(range(train_config.epochs), desc=f"train {train_config.link.value}",
                      disable=not train_config.progress)
        for epoch in epochs:
            order = derive_rng(train_config.seed, epoch).permutation(len(batches))
            sums = {"ce_concept": 0.0, "ce_relation": 0.0, "mi_estimate": 0.0, "codebook_penalty": 0.0}
            steps = 0
            for step, start in enumerate(range(0, len(order), train_config.batch_graphs)):
                triplets = torch.cat([batches[i] for i in order[start:start + train_config.batch_graphs]])
                total, parts = batch_loss(model, triplets, train_config, pool,
                                          derive_seed(train_config.seed, epoch, step))
                if not torch.isfinite(total):
                    raise TrainingError("Loss became non-finite", epoch=epoch)
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                if not model.weights_finite():
                    raise TrainingError("Weights became non-finite", epoch=epoch)
                for key, value in parts.items():
                    sums[key] += float(value.detach())
                steps += 1

            means = {key: value / steps for key, value in sums.items()}
            breakdown = LossBreakdown(
                **means,
                total=compose_loss(means["ce_concept"], means["ce_relation"], means["mi_estimate"],
                                   means["codebook_penalty"], train_config.alpha, train_config.lambda_),
                alpha=train_config.alpha, lambda_=train_config.lambda_,
            )
            model.training_log.append(breakdown)
            logger.debug(f"Epoch {epoch}: total {breakdown.total:.4f} (CE {means['ce_concept']:.4f}/"
                         f"{means['ce_relation']:.4f}, MI {means['mi_estimate']:.4f}, "
                         f"penalty {means['codebook_penalty']:.3e})")
    finally:
        torch.set_num_threads(threads)

    model.epochs_trained = train_config.epochs
    if model.training_log:
        totals = [entry.total for entry in model.training_log]
        if not _smoothed_tail_is_monotone(totals):
            logger.warning("Smoothed training loss is not monotone over the final quartile of epochs")
        logger.info(f"Trained {train_config.link.value} (order {model.walsh_order}) for {train_config.epochs} "
                    f"epochs at {train_config.snr_db} dB: loss {totals[0]:.4f} -> {totals[-1]:.4f}")
    else:
        logger.info(f"Returning untrained {train_config.link.value} model (epochs=0)")
    model.eval()
    return model


def training_metadata(model: TrainedMapper) -> dict:
    """Header fields stored with the model weights"""
    return {
        "scheme": model.scheme.value,
        "walsh_order": model.walsh_order,
        "seed": model.seed,
        "epochs": model.epochs_trained,
        "codec": asdict(model.codec_spec),
        "tx": asdict(model.tx.spec) if model.tx is not None else None,
        "rx": asdict(model.rx.spec) if model.rx is not None else None,
        "training_log": [asdict(entry) for entry in model.training_log],
    }


def model_from_metadata(meta: dict) -> TrainedMapper:
    tx = FfnSpec(**meta["tx"]) if meta.get("tx") else None
    rx = FfnSpec(**meta["rx"]) if meta.get("rx") else None
    model = TrainedMapper(CodecSpec(**meta["codec"]), TrainingLink(meta["scheme"]), meta["walsh_order"],
                          tx, rx, meta["seed"])
    model.epochs_trained = meta.get("epochs", 0)
    model.training_log = [LossBreakdown(**entry) for entry in meta.get("training_log", [])]
    return model
