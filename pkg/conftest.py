from dataclasses import dataclass
from typing import List

import numpy as np
import pytest

from captioner.models import Dims, Parameters
from captioner.network import init_parameters
from dataset.models import CaptionDataset, TrainingExample, to_examples
from dataset.synth import synth_dataset
from dataset.vocabulary import START_ID, STOP_ID, Vocabulary, build_vocab
from numerics.rng import RngState
from training.models import TrainConfig, TrainReport
from training.services import train


@dataclass(frozen=True)
class MemorizedModel:
    dataset: CaptionDataset
    vocab: Vocabulary
    examples: List[TrainingExample]
    params: Parameters
    report: TrainReport


@pytest.fixture
def tiny_dims():
    return Dims(feature_dim=3, embed_dim=4, hidden_dim=5, vocab_size=6)


@pytest.fixture
def make_params():
    """Factory for random parameters; a larger scale than training uses so gradients are not tiny."""

    def _make(dims, seed=0, scale=0.5):
        return init_parameters(dims, scale, RngState(seed))

    return _make


@pytest.fixture
def tiny_params(tiny_dims, make_params):
    return make_params(tiny_dims, seed=1)


@pytest.fixture
def tiny_features():
    return np.array([0.3, -0.7, 1.1])


@pytest.fixture
def three_word_sentence():
    return (START_ID, 3, 4, 5, STOP_ID)


@pytest.fixture(scope="session")
def memorized():
    """Eight synthetic images trained until every caption is memorized (hidden = embed = 32, lr 0.2, seed 7)."""
    dataset = synth_dataset(num_images=8, feature_dim=8, rng=RngState(7))
    vocab = build_vocab(dataset.corpus(), min_count=1)
    examples = to_examples(dataset, vocab)
    dims = Dims(feature_dim=8, embed_dim=32, hidden_dim=32, vocab_size=vocab.size)
    report = train(examples, dims, TrainConfig(learning_rate=0.2, epochs=500, seed=7))
    return MemorizedModel(dataset=dataset, vocab=vocab, examples=examples, params=report.params, report=report)
