"""
Commands module for the OSSDM simulator
Argument parsing and one handler per CLI subcommand
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

import config
from charts import plot_curves, plot_esse_gain, plot_spectrum
from codebook import CodebookConfig, CodebookManager, default_freq_range
from data_manager import DataManager
from errors import ArgumentError
from experiment_runner import ExperimentConfig, ExperimentManager, summarize
from metrics import calibrate_refresh_rate, default_mask, esse_gain_table, mask_check
from neural_mapper import TrainingConfig, TrainingLink, train_end_to_end
from semantic_codec import CodecSpec, generate_dataset
from utils import derive_rng
from walsh_core import build_walsh_basis

logger = logging.getLogger('ossdm.commands')

# Export the process_command function at the module level
__all__ = ['process_command', 'build_parser']


def _load_mask(args):
    return DataManager.load_mask(args.mask) if args.mask else default_mask()


def _load_dataset(args):
    if args.dataset:
        return DataManager.load_dataset(args.dataset)
    return generate_dataset(seed=config.DATASET_SEED)


def codebook_build(args) -> int:
    """Build a codebook and write it in the binary codebook format"""
    mask = _load_mask(args)
    if (args.freq_min is None) != (args.freq_max is None):
        raise ArgumentError("--freq-min and --freq-max go together")
    freq_range = (args.freq_min, args.freq_max) if args.freq_min is not None else default_freq_range(mask)
    cb_config = CodebookConfig(
        block_len=args.block_len,
        num_blocks=args.num_blocks,
        num_entries=args.entries,
        freq_range=freq_range,
        sample_rate=args.sample_rate,
        power_variance=args.variance,
        seed=args.seed if args.seed is not None else config.CODEBOOK_SEED,
    )
    codebook = CodebookManager.build_codebook(cb_config, mask, workers=args.workers, progress=sys.stderr.isatty())
    out = args.out or os.path.join(config.OUTPUT_DIR, "codebook.wcbk")
    DataManager.save_codebook(out, codebook)
    print(f"Codebook with {codebook.size} entries of {cb_config.codeword_len} samples written to {out}")
    return config.EXIT_OK


def train(args) -> int:
    """Train a codec (and mappers for OSSDM) and save the model file"""
    dataset = _load_dataset(args)
    link = TrainingLink(args.scheme)
    seed = args.seed if args.seed is not None else config.TRAIN_SEED
    codebook = DataManager.load_codebook(args.codebook) if args.codebook else None
    lambda_ = args.lambda_ if link is TrainingLink.OSSDM and codebook is not None else 0.0
    if link is TrainingLink.OSSDM and codebook is None and args.lambda_:
        logger.warning("No --codebook given, training without the codebook penalty")
    train_config = TrainingConfig(
        link=link,
        walsh_order=args.order,
        snr_db=args.snr_db,
        epochs=args.epochs,
        seed=seed,
        alpha=args.alpha,
        lambda_=lambda_,
        learning_rate=args.learning_rate,
        batch_graphs=args.batch_graphs,
        numerology=args.numerology,
        progress=sys.stderr.isatty(),
    )
    codec_spec = CodecSpec(dataset.concepts, dataset.relations, symbols_per_node=args.symbols_per_node, seed=seed)
    model = train_end_to_end(dataset, train_config, codec_spec, codebook)
    name = f"ossdm_n{2 ** args.order}" if link is TrainingLink.OSSDM else "sofdm"
    out = args.out or os.path.join(config.OUTPUT_DIR, f"{name}.ossm")
    DataManager.save_model(out, model)
    print(f"{link.value} model ({model.epochs_trained} epochs) written to {out}")
    return config.EXIT_OK


def run(args) -> int:
    """Run an experiment config and print the mean F1 per scheme and SNR"""
    if not args.config:
        raise ArgumentError("run needs --config")
    experiment = ExperimentConfig.from_file(args.config)
    if args.out:
        experiment.output_dir = args.out
    if args.workers is not None:
        experiment.workers = args.workers
    result = ExperimentManager.run_experiment(experiment, progress=sys.stderr.isatty())
    for (scheme, snr), value in summarize(result.rows).items():
        print(f"{scheme:>20} {snr:>6} dB  F1 {value:.4f}")
    failed = len(result.rows) - len(result.completed())
    if failed:
        logger.warning(f"{failed} trials failed, see the log for details")
    print(f"Results in {result.csv_path}")
    return config.EXIT_OK


def plot(args) -> int:
    """Render a result CSV as an SVG curve chart"""
    csv_path = args.csv
    if not csv_path and args.config:
        csv_path = ExperimentConfig.from_file(args.config).csv_path
    if not csv_path:
        raise ArgumentError("plot needs --csv or --config")
    out = args.out or os.path.splitext(csv_path)[0] + f"_{args.y}.svg"
    plot_curves(csv_path, out, x=args.x, y=args.y, group=args.group)
    print(f"Chart written to {out}")
    return config.EXIT_OK


def mask_check_command(args) -> int:
    """Check a codeword (or a random blockwise assembly) against the emission mask"""
    if not args.codebook:
        raise ArgumentError("mask-check needs --codebook")
    codebook = DataManager.load_codebook(args.codebook)
    mask = _load_mask(args)
    basis = build_walsh_basis(codebook.config.walsh_order)
    if args.entry is not None:
        if not 0 <= args.entry < codebook.size:
            raise ArgumentError(f"Entry {args.entry} is outside the codebook (size {codebook.size})")
        label = f"entry {args.entry}"
        waveform = CodebookManager.codeword_waveform(codebook, args.entry, basis)
    else:
        label = "random assembly"
        seed = args.seed if args.seed is not None else codebook.config.seed
        _, waveform = CodebookManager.random_assembly(codebook, basis, derive_rng(seed))
    report = mask_check(waveform, codebook.config.sample_rate, mask)
    status = "PASS" if report.passed else "FAIL"
    print(f"{label}: {status} (worst margin {report.worst_margin_db:.2f} dB at {report.offending_frequency / 1e6:.3f} MHz)")
    if args.save_waveform:
        DataManager.save_waveform(args.save_waveform, waveform)
    if args.plot:
        out = args.out or os.path.join(config.OUTPUT_DIR, "spectrum_mask.svg")
        plot_spectrum(waveform, codebook.config.sample_rate, mask, out)
        print(f"Spectrum chart written to {out}")
    return config.EXIT_OK if report.passed else config.EXIT_NUMERIC


def esse_table(args) -> int:
    """E-SSE gain of OSSDM over the OFDM numerologies, per Walsh order"""
    refresh_rate = args.refresh_rate
    if args.calibrate_gain is not None:
        refresh_rate = calibrate_refresh_rate(args.calibrate_gain, min(args.orders), args.numerologies[0],
                                              args.bandwidth)
    rows = esse_gain_table(args.orders, args.numerologies, refresh_rate, args.bandwidth)
    out = args.out or os.path.join(config.OUTPUT_DIR, "esse_table.csv")
    if os.path.exists(out):
        os.remove(out)
    DataManager.append_rows(out, rows, header=config.ESSE_HEADER)
    for row in rows:
        print(f"{row['numerology']:>10} n={row['order']}  gain {row['gain']:.2f}")
    if args.plot:
        plot_esse_gain(rows, os.path.splitext(out)[0] + ".svg")
    print(f"Table written to {out} (F_refresh {refresh_rate:.6g} Hz)")
    return config.EXIT_OK


def dataset_generate(args) -> int:
    dataset = generate_dataset(args.concepts, args.relations, args.graphs, args.triplets_per_graph,
                               args.seed if args.seed is not None else config.DATASET_SEED)
    out = args.out or os.path.join(config.OUTPUT_DIR, "dataset.csv")
    DataManager.save_dataset(out, dataset)
    print(f"{len(dataset.graphs)} graphs written to {out}")
    return config.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", default=None, help="experiment config file (INI)")
    common.add_argument("--out", default=None, help="output file or directory")

    parser = argparse.ArgumentParser(prog="ossdm", description="OSSDM semantic waveform simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    codebook_parser = sub.add_parser("codebook", help="codebook tools")
    codebook_sub = codebook_parser.add_subparsers(dest="action", required=True)
    build = codebook_sub.add_parser("build", parents=[common], help="build a mask-compliant codebook")
    build.add_argument("--block-len", type=int, default=config.CODEBOOK_BLOCK_LEN)
    build.add_argument("--num-blocks", type=int, default=config.CODEBOOK_NUM_BLOCKS)
    build.add_argument("--entries", type=int, default=config.CODEBOOK_NUM_ENTRIES)
    build.add_argument("--freq-min", type=float, default=None)
    build.add_argument("--freq-max", type=float, default=None)
    build.add_argument("--sample-rate", type=float, default=config.REFRESH_RATE)
    build.add_argument("--variance", type=float, default=None, help="block power variance (default 0.25/B)")
    build.add_argument("--mask", default=None, help="mask file of freq_offset_hz,limit_dbr lines")
    build.add_argument("--workers", type=int, default=config.WORKERS)
    build.set_defaults(handler=codebook_build)

    train_parser = sub.add_parser("train", parents=[common], help="train a semantic codec and mapper")
    train_parser.add_argument("--scheme", choices=[link.value for link in TrainingLink], default="OSSDM")
    train_parser.add_argument("--order", type=int, default=6)
    train_parser.add_argument("--epochs", type=int, default=config.TRAIN_EPOCHS)
    train_parser.add_argument("--snr-db", type=float, default=config.TRAIN_SNR_DB)
    train_parser.add_argument("--codebook", default=None)
    train_parser.add_argument("--dataset", default=None)
    train_parser.add_argument("--symbols-per-node", type=int, default=config.SYMBOLS_PER_NODE)
    train_parser.add_argument("--alpha", type=float, default=config.ALPHA)
    train_parser.add_argument("--lambda", dest="lambda_", type=float, default=config.LAMBDA)
    train_parser.add_argument("--learning-rate", type=float, default=config.LEARNING_RATE)
    train_parser.add_argument("--batch-graphs", type=int, default=config.BATCH_GRAPHS)
    train_parser.add_argument("--numerology", default=config.DEFAULT_NUMEROLOGY,
                              choices=sorted(config.NUMEROLOGY_PRESETS))
    train_parser.set_defaults(handler=train)

    run_parser = sub.add_parser("run", parents=[common], help="run an experiment config")
    run_parser.add_argument("--workers", type=int, default=None)
    run_parser.set_defaults(handler=run)

    plot_parser = sub.add_parser("plot", parents=[common], help="plot a result CSV")
    plot_parser.add_argument("--csv", default=None)
    plot_parser.add_argument("--x", default="snr_db")
    plot_parser.add_argument("--y", default="f1")
    plot_parser.add_argument("--group", default="scheme")
    plot_parser.set_defaults(handler=plot)

    mask_parser = sub.add_parser("mask-check", parents=[common], help="check a codeword against the mask")
    mask_parser.add_argument("--codebook", default=None)
    mask_parser.add_argument("--entry", type=int, default=None)
    mask_parser.add_argument("--mask", default=None)
    mask_parser.add_argument("--plot", action="store_true")
    mask_parser.add_argument("--save-waveform", default=None, help=".csv for text, anything else for float64 binary")
    mask_parser.set_defaults(handler=mask_check_command)

    esse_parser = sub.add_parser("esse-table", parents=[common], help="E-SSE gain table")
    esse_parser.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3, 4, 5, 6])
    esse_parser.add_argument("--numerologies", nargs="+", default=sorted(config.NUMEROLOGY_PRESETS))
    esse_parser.add_argument("--refresh-rate", type=float, default=config.REFRESH_RATE)
    esse_parser.add_argument("--bandwidth", type=float, default=config.OSSDM_BANDWIDTH)
    esse_parser.add_argument("--calibrate-gain", type=float, default=None,
                             help="solve F_refresh for this gain at the lowest order vs the first numerology")
    esse_parser.add_argument("--plot", action="store_true")
    esse_parser.set_defaults(handler=esse_table)

    dataset_parser = sub.add_parser("dataset", help="toy knowledge-graph datasets")
    dataset_sub = dataset_parser.add_subparsers(dest="action", required=True)
    generate = dataset_sub.add_parser("generate", parents=[common], help="generate and save a dataset")
    generate.add_argument("--concepts", type=int, default=config.CONCEPT_VOCAB)
    generate.add_argument("--relations", type=int, default=config.RELATION_VOCAB)
    generate.add_argument("--graphs", type=int, default=config.GRAPH_COUNT)
    generate.add_argument("--triplets-per-graph", type=int, default=config.TRIPLETS_PER_GRAPH)
    generate.set_defaults(handler=dataset_generate)

    return parser


def process_command(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch to the subcommand handler; returns the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return config.EXIT_OK if e.code == 0 else config.EXIT_USAGE

    logger.info(f"Processing command: {args.command} {getattr(args, 'action', '') or ''}".rstrip())
    return args.handler(args)
