#!/usr/bin/env python3
"""
Caption Engine - Main Entry Point

Train an LSTM caption generator on image feature vectors, decode captions,
and run the automatic evaluations (BLEU, perplexity, ranking, embeddings).
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from caption_project import settings
from cli import commands
from core.exceptions import CaptionEngineError, UsageError
from core.utils.logging_utils import setup_logger

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


def _add_decoding_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--mode",
        choices=["beam", "greedy", "sample"],
        default="beam",
        help="Decoding strategy (default: beam)",
    )
    parser.add_argument(
        "--beam",
        type=int,
        default=settings.BEAM_WIDTH,
        help=f"Beam width (default: {settings.BEAM_WIDTH})",
    )
    parser.add_argument(
        "--max-len",
        type=int,
        default=settings.MAX_CAPTION_LEN,
        help=f"Maximum words per caption (default: {settings.MAX_CAPTION_LEN})",
    )


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64) (got {seed})")
    return seed


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed", type=_seed, default=settings.SEED, help=f"Run seed (default: {settings.SEED})"
    )



def _add_out(parser: argparse.ArgumentParser, required: bool = False) -> None:
    parser.add_argument(
        "--out", "-o",
        type=Path,
        required=required,
        default=None,
        help="Output file"
        + ("" if required else " (default: stdout); a manifest is written next to it"),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caption-engine",
        description="Neural image caption engine",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  caption-engine synth --num-images 8 --feature-dim 8 --seed 7 --out data/train.jsonl
  caption-engine train --data data/train.jsonl --hidden 32 --embed 32 --lr 0.2 \\
      --epochs 500 --seed 7 --out m.ckpt
  caption-engine caption --model m.ckpt --features data/train.jsonl --beam 20
  caption-engine evaluate --model m.ckpt --data data/test.jsonl --max-n 4
        """,
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=settings.LOG_LEVEL,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help=f"Logging level (default: {settings.LOG_LEVEL})",
    )
    parser.add_argument(
        "--log-dir",
        type=Path,
        default=settings.LOG_DIR,
        help="Also append the log to run.log in this directory",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    synth = subparsers.add_parser("synth", help="Generate a synthetic dataset")
    synth.add_argument("--num-images", type=int, required=True)
    synth.add_argument("--feature-dim", type=int, required=True)
    synth.add_argument("--captions-per-image", type=int, default=1)
    synth.add_argument("--min-words", type=int, default=3)
    synth.add_argument("--max-words", type=int, default=6)
    synth.add_argument(
        "--swap", nargs=2, metavar=("A", "B"), help="Make token B substitutable for A"
    )
    synth.add_argument("--noise", type=float, default=0.5)
    _add_seed(synth)
    _add_out(synth, required=True)
    synth.set_defaults(handler=commands.synth_command)

    train = subparsers.add_parser("train", help="Train a caption model")
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--embed", type=int, default=settings.EMBED_DIM)
    train.add_argument("--hidden", type=int, default=settings.HIDDEN_DIM)
    train.add_argument("--lr", type=float, default=settings.LEARNING_RATE)
    train.add_argument("--epochs", type=int, default=settings.EPOCHS)
    train.add_argument("--dropout", type=float, default=settings.DROPOUT_RATE)
    train.add_argument("--batch-size", type=int, default=settings.BATCH_SIZE)
    train.add_argument("--grad-clip", type=float, default=settings.GRAD_CLIP)
    train.add_argument("--init-scale", type=float, default=settings.INIT_SCALE)
    train.add_argument("--min-count", type=int, default=settings.MIN_COUNT)
    train.add_argument("--no-shuffle", action="store_true")
    _add_seed(train)
    _add_out(train, required=True)
    train.set_defaults(handler=commands.train_command)

    caption = subparsers.add_parser("caption", help="Generate captions for feature vectors")
    caption.add_argument(
        "--model", type=Path, action="append", required=True, help="Repeat to ensemble"
    )
    caption.add_argument("--features", type=Path, required=True)
    caption.add_argument("--nbest", type=int, default=1)
    _add_decoding_args(caption)
    _add_seed(caption)
    _add_out(caption)
    caption.set_defaults(handler=commands.caption_command)

    evaluate = subparsers.add_parser("evaluate", help="BLEU and perplexity on a captioned dataset")
    evaluate.add_argument(
        "--model", type=Path, action="append", required=True, help="Repeat to ensemble"
    )
    evaluate.add_argument("--data", type=Path, required=True)
    evaluate.add_argument("--max-n", type=int, default=settings.MAX_BLEU_N)
    _add_decoding_args(evaluate)
    _add_seed(evaluate)
    _add_out(evaluate)
    evaluate.set_defaults(handler=commands.evaluate_command)

    rank = subparsers.add_parser("rank", help="Image annotation and image search recall")
    rank.add_argument("--model", type=Path, required=True)
    rank.add_argument("--data", type=Path, required=True)
    rank.add_argument(
        "--raw-annotation", action="store_true", help="Do not normalize annotation scores per word"
    )
    rank.add_argument(
        "--normalize-search", action="store_true", help="Normalize search scores per word"
    )
    rank.add_argument(
        "--scores-out", type=Path, default=None, help="Write both score matrices as CSV"
    )
    _add_out(rank)
    rank.set_defaults(handler=commands.rank_command)

    neighbors = subparsers.add_parser("neighbors", help="Nearest words in the embedding space")
    neighbors.add_argument("--model", type=Path, required=True)
    neighbors.add_argument("--word", type=str, required=True)
    neighbors.add_argument("--k", type=int, default=10)
    _add_out(neighbors)
    neighbors.set_defaults(handler=commands.neighbors_command)

    human = subparsers.add_parser(
        "human-baseline", help="Leave-one-out BLEU of the human references"
    )
    human.add_argument("--data", type=Path, required=True)
    human.add_argument("--max-n", type=int, default=settings.MAX_BLEU_N)
    _add_out(human)
    human.set_defaults(handler=commands.human_baseline_command)

    diversity = subparsers.add_parser(
        "diversity", help="N-best agreement and novelty of generated captions"
    )
    diversity.add_argument(
        "--model", type=Path, action="append", required=True, help="Repeat to ensemble"
    )
    diversity.add_argument("--features", type=Path, required=True)
    diversity.add_argument("--train-data", type=Path, default=None)
    diversity.add_argument("--nbest", type=int, default=15)
    diversity.add_argument("--max-n", type=int, default=settings.MAX_BLEU_N)
    _add_decoding_args(diversity)
    _add_seed(diversity)
    _add_out(diversity)
    diversity.set_defaults(handler=commands.diversity_command)

    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, dispatch to a subcommand and map every failure to an exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    logger = setup_logger(output_dir=args.log_dir, level=args.log_level)

    # Validate settings
    try:
        settings.validate()
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_ERROR

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        logger.error("Interrupted by user")
        return EXIT_INTERRUPTED
    except (UsageError, ValidationError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except CaptionEngineError as e:
        logger.error(f"{e.error_code}: {e.message}")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
