"""Training run orchestrator: dataset file in, checkpoint + vocabulary + loss log out."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from captioner.models import Dims
from captioner.serializers import save_checkpoint, vocab_path_for
from core.utils.file_utils import ensure_dir
from core.utils.logging_utils import get_logger
from dataset.models import CaptionDataset, to_examples
from dataset.serializers import load_dataset
from dataset.vocabulary import Vocabulary, build_vocab
from training.models import TrainConfig, TrainReport
from training.services import train


@dataclass(frozen=True)
class TrainArtifacts:
    checkpoint_path: Path
    vocab_path: Path
    loss_log_path: Path
    report: TrainReport
    vocab: Vocabulary


def loss_log_path_for(checkpoint_path: Path) -> Path:
    return checkpoint_path.with_name(checkpoint_path.name + ".loss.tsv")


class Trainer:
    """Builds the vocabulary, trains, and writes every artifact of one run."""

    def __init__(
        self,
        data_path: Path,
        checkpoint_path: Path,
        config: TrainConfig,
        embed_dim: int,
        hidden_dim: int,
        min_count: int = 5,
        dataset: Optional[CaptionDataset] = None,
    ):
        self.data_path = Path(data_path)
        self.checkpoint_path = Path(checkpoint_path)
        self.config = config
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.min_count = min_count
        self.dataset = dataset
        self.logger = get_logger(__name__)

    def run(self) -> TrainArtifacts:
        """Execute the complete training run."""
        self.logger.info("Starting training run")
        self.logger.info(f"Data: {self.data_path}")
        self.logger.info(f"Checkpoint: {self.checkpoint_path}")

        dataset = self.dataset or load_dataset(self.data_path)
        vocab = build_vocab(dataset.corpus(), self.min_count)
        self.logger.info(f"Vocabulary: {vocab.size} ids (min_count={self.min_count})")

        examples = to_examples(dataset, vocab)
        dims = Dims(
            feature_dim=dataset.feature_dim,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            vocab_size=vocab.size,
        )

        ensure_dir(self.checkpoint_path.parent)
        loss_log_path = loss_log_path_for(self.checkpoint_path)
        loss_log_path.write_text("", encoding="utf-8")

        def append_loss(epoch: int, loss: float) -> None:
            with open(loss_log_path, "a", encoding="utf-8", newline="\n") as handle:
                handle.write(f"{epoch}\t{loss!r}\n")

        report = train(examples, dims, self.config, on_epoch=append_loss)

        save_checkpoint(report.params, vocab, self.checkpoint_path)
        vocab_path = vocab_path_for(self.checkpoint_path)
        vocab.save(vocab_path)

        self.logger.info(
            f"Training completed in {report.wall_time_seconds:.1f}s, "
            f"final loss/word={report.final_loss:.6f}"
        )
        return TrainArtifacts(
            checkpoint_path=self.checkpoint_path,
            vocab_path=vocab_path,
            loss_log_path=loss_log_path,
            report=report,
            vocab=vocab,
        )
