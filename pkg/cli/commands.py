"""
Subcommand implementations.

Each handler receives the parsed argparse namespace, writes its primary output
to --out (or stdout when the command allows it) and returns an exit status.
"""

import sys
from argparse import Namespace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from captioner.models import Parameters
from captioner.serializers import load_checkpoint, vocab_path_for
from cli.manifest import write_manifest
from core.exceptions import CheckpointError, UsageError
from core.reports import TextReport
from core.utils.file_utils import write_text
from core.utils.logging_utils import get_logger
from dataset.models import CaptionDataset, to_examples
from dataset.serializers import load_dataset, write_dataset
from dataset.synth import SynthConfig, synth_from_config
from dataset.tokenizer import detokenize
from dataset.vocabulary import Vocabulary, decode
from embeddings.services import nearest_neighbors
from inference.decoders import decode as decode_caption
from inference.decoders import ensemble_log_prob
from inference.models import BeamHypothesis, DecodeConfig, DecodeMode
from metrics.bleu import bleu_report
from metrics.models import EvalPair
from metrics.ranking import (
    annotation_matrix,
    first_caption_per_image,
    log_prob_table,
    ranking_report,
    search_matrix,
)
from metrics.serializers import write_score_matrix
from metrics.services import human_baseline_bleu, nbest_agreement_bleu, novelty_rate, perplexity
from numerics.rng import RngState
from training.models import TrainConfig
from training.trainer import Trainer

logger = get_logger(__name__)


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        write_text(text, out)
        logger.info(f"Wrote {out}")


def _model_inputs(model_paths: Sequence[Path]) -> Dict[str, Path]:
    inputs = {}
    for index, path in enumerate(model_paths):
        inputs[f"model.{index}"] = path
        inputs[f"vocab.{index}"] = vocab_path_for(path)
    return inputs


def load_models(model_paths: Sequence[Path]) -> Tuple[Tuple[Parameters, ...], Vocabulary]:
    """Load one or more checkpoints that must share a single vocabulary."""
    if not model_paths:
        raise UsageError("At least one --model is required")
    vocab = Vocabulary.load(vocab_path_for(model_paths[0]))
    members = []
    for path in model_paths:
        member_vocab = Vocabulary.load(vocab_path_for(path))
        if member_vocab != vocab:
            raise CheckpointError(f"{path} uses a different vocabulary than {model_paths[0]}")
        members.append(load_checkpoint(path, vocab))
    return tuple(members), vocab


def decode_config_from(args: Namespace, nbest: int = 1) -> DecodeConfig:
    return DecodeConfig(
        beam_width=args.beam,
        max_len=args.max_len,
        mode=DecodeMode(args.mode),
        seed=args.seed,
        nbest=nbest,
    )


def generate(
    dataset: CaptionDataset,
    members: Tuple[Parameters, ...],
    config: DecodeConfig,
) -> List[List[BeamHypothesis]]:
    """Decode every record in file order; sampling uses one forked stream per image."""
    rng = RngState(config.seed)
    results = []
    for index, record in enumerate(dataset.records):
        results.append(decode_caption(record.feature_vector, members, config, rng.fork(index)))
    return results


def caption_text(hypothesis: BeamHypothesis, vocab: Vocabulary) -> str:
    return detokenize(decode(hypothesis.tokens, vocab))


def synth_command(args: Namespace) -> int:
    config = SynthConfig(
        num_images=args.num_images,
        feature_dim=args.feature_dim,
        sentence_len_range=(args.min_words, args.max_words),
        captions_per_image=args.captions_per_image,
        swap_pair=tuple(args.swap) if args.swap else None,
        noise=args.noise,
    )
    dataset = synth_from_config(config, RngState(args.seed))
    write_dataset(dataset, args.out)
    write_manifest(
        "synth", args.out, config.model_dump(mode="json"), {}, {"dataset": args.out}, seed=args.seed
    )
    return 0


def train_command(args: Namespace) -> int:
    config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        dropout_rate=args.dropout,
        grad_clip=args.grad_clip,
        seed=args.seed,
        shuffle=not args.no_shuffle,
        batch_size=args.batch_size,
        init_scale=args.init_scale,
    )
    artifacts = Trainer(
        data_path=args.data,
        checkpoint_path=args.out,
        config=config,
        embed_dim=args.embed,
        hidden_dim=args.hidden,
        min_count=args.min_count,
    ).run()
    write_manifest(
        "train",
        args.out,
        {**config.model_dump(mode="json"), "embed_dim": args.embed, "hidden_dim": args.hidden,
         "min_count": args.min_count},
        {"data": args.data},
        {
            "checkpoint": artifacts.checkpoint_path,
            "vocab": artifacts.vocab_path,
            "loss_log": artifacts.loss_log_path,
        },
        seed=args.seed,
    )
    return 0


def caption_command(args: Namespace) -> int:
    members, vocab = load_models(args.model)
    config = decode_config_from(args, nbest=args.nbest)
    dataset = load_dataset(args.features, require_captions=False)

    rows = []
    for record, hypotheses in zip(dataset.records, generate(dataset, members, config)):
        if args.nbest > 1:
            for rank, hypothesis in enumerate(hypotheses, start=1):
                text = caption_text(hypothesis, vocab)
                rows.append((record.image_id, rank, hypothesis.log_prob, text))
        else:
            rows.append((record.image_id, caption_text(hypotheses[0], vocab)))

    _emit(TextReport.tsv(rows), args.out)
    if args.out is not None:
        write_manifest(
            "caption",
            args.out,
            config.model_dump(mode="json"),
            {**_model_inputs(args.model), "features": args.features},
            {"captions": args.out},
            seed=args.seed,
        )
    return 0


def evaluate_command(args: Namespace) -> int:
    """Decode the dataset, then report corpus BLEU-1..n and the perplexity of its references."""
    members, vocab = load_models(args.model)
    config = decode_config_from(args)
    dataset = load_dataset(args.data)

    pairs = []
    for record, hypotheses in zip(dataset.records, generate(dataset, members, config)):
        candidate = decode(hypotheses[0].tokens, vocab)
        references = record.tokenized_captions()
        pairs.append(EvalPair(candidate=candidate, references=references, allow_empty=True))

    total_log_prob = 0.0
    word_count = 0
    for example in to_examples(dataset, vocab):
        total_log_prob += ensemble_log_prob(example.feature_vector, members, example.tokens)
        word_count += len(example.tokens) - 1

    report = dict(bleu_report(pairs, args.max_n))
    report["perplexity"] = perplexity(total_log_prob, word_count)
    report["images"] = len(pairs)
    report["words"] = word_count

    _emit(TextReport.key_values(report), args.out)
    if args.out is not None:
        write_manifest(
            "evaluate",
            args.out,
            {**config.model_dump(mode="json"), "max_n": args.max_n},
            {**_model_inputs(args.model), "data": args.data},
            {"report": args.out},
            seed=args.seed,
        )
    return 0


def rank_command(args: Namespace) -> int:
    """Image annotation (rank captions per image) and image search (rank images per caption)."""
    members, vocab = load_models([args.model])
    dataset = load_dataset(args.data)
    captions = first_caption_per_image(to_examples(dataset, vocab))

    table = log_prob_table(captions, captions, members[0])
    annotation = annotation_matrix(table, captions, normalize=not args.raw_annotation)
    search = search_matrix(table, captions, normalize=args.normalize_search)

    report = {}
    for direction, matrix in (("annotation", annotation), ("search", search)):
        for key, value in ranking_report(matrix).items():
            report[f"{direction}_{key}"] = value
    _emit(TextReport.key_values(report), args.out)

    outputs = {}
    if args.scores_out is not None:
        for direction, matrix in (("annotation", annotation), ("search", search)):
            path = score_path_for(args.scores_out, direction)
            write_score_matrix(matrix, path)
            outputs[f"{direction}_scores"] = path
    if args.out is not None:
        write_manifest(
            "rank",
            args.out,
            {"raw_annotation": args.raw_annotation, "normalize_search": args.normalize_search},
            {**_model_inputs([args.model]), "data": args.data},
            {"report": args.out, **outputs},
        )
    return 0


def score_path_for(base: Path, direction: str) -> Path:
    """`scores.csv` -> `scores.annotation.csv` / `scores.search.csv`."""
    base = Path(base)
    return base.with_name(f"{base.stem}.{direction}{base.suffix or '.csv'}")


def neighbors_command(args: Namespace) -> int:
    members, vocab = load_models([args.model])
    report = nearest_neighbors(args.word, args.k, members[0], vocab)
    _emit(TextReport.tsv(report.rows()), args.out)
    if args.out is not None:
        write_manifest(
            "neighbors",
            args.out,
            {"word": args.word, "k": args.k},
            _model_inputs([args.model]),
            {"neighbors": args.out},
        )
    return 0


def human_baseline_command(args: Namespace) -> int:
    dataset = load_dataset(args.data)
    groups = dataset.references()
    report = {f"bleu{n}": human_baseline_bleu(groups, n) for n in range(1, args.max_n + 1)}
    report["images"] = len(groups)
    _emit(TextReport.key_values(report), args.out)
    if args.out is not None:
        inputs, outputs = {"data": args.data}, {"report": args.out}
        write_manifest("human-baseline", args.out, {"max_n": args.max_n}, inputs, outputs)
    return 0


def diversity_command(args: Namespace) -> int:
    """Agreement among each image's N-best captions, and novelty of the top caption."""
    if args.nbest < 2:
        raise UsageError("--nbest must be at least 2 to measure agreement")
    members, vocab = load_models(args.model)
    config = decode_config_from(args, nbest=args.nbest)
    if config.mode is not DecodeMode.BEAM:
        raise UsageError("diversity needs beam decoding")
    dataset = load_dataset(args.features, require_captions=False)

    nbest_lists = []
    for hypotheses in generate(dataset, members, config):
        if len(hypotheses) < args.nbest:
            raise UsageError(
                f"Beam returned {len(hypotheses)} captions, fewer than --nbest {args.nbest}"
            )
        nbest_lists.append([decode(hypothesis.tokens, vocab) for hypothesis in hypotheses])

    report = {f"agreement_bleu{args.max_n}": nbest_agreement_bleu(nbest_lists, args.max_n)}
    top_captions = [captions[0] for captions in nbest_lists]
    report["distinct_top"] = len({tuple(caption) for caption in top_captions}) / len(top_captions)
    if args.train_data is not None:
        report["novelty"] = novelty_rate(top_captions, load_dataset(args.train_data).corpus())

    _emit(TextReport.key_values(report), args.out)
    if args.out is not None:
        inputs = {**_model_inputs(args.model), "features": args.features}
        if args.train_data is not None:
            inputs["train_data"] = args.train_data
        write_manifest(
            "diversity",
            args.out,
            {**config.model_dump(mode="json"), "max_n": args.max_n},
            inputs,
            {"report": args.out},
            seed=args.seed,
        )
    return 0
