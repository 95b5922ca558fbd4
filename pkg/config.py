"""
Configuration file for the OSSDM semantic waveform simulator
Contains all constant values, defaults, presets and environment overrides
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Runtime settings from environment variables
LOG_LEVEL = os.getenv("OSSDM_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("OSSDM_LOG_FILE", "ossdm.log")
OUTPUT_DIR = os.getenv("OSSDM_OUTPUT_DIR", "results")
WORKERS = int(os.getenv("OSSDM_WORKERS", "1"))

# Walsh transform
WALSH_ORDER_MIN = 1
WALSH_ORDER_MAX = 16  # desk-scale cap
TRANSFORM_TOLERANCE = 1e-12

# Codebook (full scale: N=64, B=64, L=4096, M=10^4)
CODEBOOK_BLOCK_LEN = 64
CODEBOOK_NUM_BLOCKS = 64
CODEBOOK_NUM_ENTRIES = 10_000
CODEBOOK_VARIANCE_SCALE = 0.25  # sigma^2 = 0.25 / B, relative to mu^2
CODEBOOK_POWER_FLOOR = 0.1  # truncation, fraction of mu
CODEBOOK_SEED = 2024
CODEBOOK_PASSBAND_FRACTION = 0.8  # default freq_range = central 80% of passband
CODEBOOK_MAX_ATTEMPTS = 1000
CODEBOOK_MAX_REJECTION = 0.99
CODEBOOK_MAGIC = b"WCBK"
CODEBOOK_VERSION = 1

# OSDM baseline uses single 64-coefficient vectors per triplet
OSDM_NUM_BLOCKS = 1
OSDM_BLOCK_LEN = 64

# Waveform generator
REFRESH_RATE = 61.44e6  # Hz, F_refresh
TX_POWER_PER_SYMBOL = 1 / 64  # watts per semantic symbol
OSSDM_BANDWIDTH = 10e6  # Hz, default E-SSE bandwidth (mask passband width)

# Semantic codec (toy knowledge graphs)
CONCEPT_VOCAB = 32
RELATION_VOCAB = 8
GRAPH_COUNT = 200
TRIPLETS_PER_GRAPH = 6
DATASET_SEED = 7
HELDOUT_FRACTION = 0.1
LATENT_WIDTH = 16
SYMBOLS_PER_NODE = 4

# Training
ALPHA = 0.1  # mutual information weight
LAMBDA = 1.0  # codebook penalty weight
TRAIN_SNR_DB = 14.0
BATCH_GRAPHS = 2
LEARNING_RATE = 1e-3
TRAIN_EPOCHS = 60
TRAIN_SEED = 11
HIDDEN_MULTIPLIER = 4  # hidden width = 4N
MI_TEMPERATURE_FLOOR = 1e-9
TRAIN_CODEBOOK_ENTRIES = 256
MODEL_MAGIC = b"OSSM"
MODEL_VERSION = 1

# OFDM numerologies (5G NR FR1)
NUMEROLOGY_PRESETS = {
    "nr30k10M": {"scs": 30e3, "bandwidth": 10e6, "num_rb": 24, "fft_size": 512, "cp_duration": 2.3e-6},
    "nr60k10M": {"scs": 60e3, "bandwidth": 10e6, "num_rb": 11, "fft_size": 256, "cp_duration": 1.17e-6},
    "nr60k100M": {"scs": 60e3, "bandwidth": 100e6, "num_rb": 135, "fft_size": 2048, "cp_duration": 1.17e-6},
}
DEFAULT_NUMEROLOGY = "nr30k10M"
SUBCARRIERS_PER_RB = 12

# Classic (non-semantic) chain
LDPC_N = 1024
LDPC_COLUMN_WEIGHT = 3
LDPC_ROW_WEIGHT = 6
LDPC_SEED = 5
LDPC_MAX_ITERATIONS = 50
LDPC_CONSTRUCTION_RETRIES = 50
LLR_CLIP = 30.0
QAM_BITS = 6

# Channel
TDLB_PDP = [(0, 1.0), (1, 0.6065), (2, 0.3679), (4, 0.1353), (8, 0.0183)]  # exp(-d/2), normalized at load
RAYLEIGH_PDP = [(0, 1.0)]

# Emission mask (relative dBr, one-sided baseband at REFRESH_RATE)
MASK_BREAKPOINTS = [
    (0.0, -45.0),
    (3.0e6, -45.0),
    (4.0e6, -30.0),
    (4.9e6, -30.0),
    (5.0e6, 0.0),
    (15.0e6, 0.0),
    (15.1e6, -30.0),
    (16.0e6, -30.0),
    (17.0e6, -45.0),
    (30.72e6, -45.0),
]
MASK_REFERENCE_BANDWIDTH = 100e3
PSD_SEGMENT_LEN = 1024
PSD_OVERLAP = 0.5

# Experiments
CSV_HEADER = ["scheme", "snr_db", "seed", "f1", "precision", "recall", "ber", "esse", "wall_time_s"]
ESSE_HEADER = ["order", "numerology", "esse_ossdm", "esse_ofdm", "gain"]
ESSE_TARGET_GAIN = 409.6
SVG_HASH_SALT = "ossdm"

# Exit codes per error category
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_RUNTIME = 6
