import numpy as np
import pytest

from captioner.models import Dims, Parameters
from core.exceptions import DegenerateEmbeddingError, InvalidInputError, InvalidTokenError
from dataset.models import to_examples
from dataset.synth import synth_dataset
from dataset.vocabulary import RESERVED_TOKENS, Vocabulary, build_vocab
from embeddings.services import cosine_similarities, nearest_neighbors
from numerics.rng import RngState
from training.models import TrainConfig
from training.services import train

WORDS = ["a", "b", "c", "d", "e"]


def with_embeddings(columns):
    """Parameters whose non-reserved W_e columns are `columns`; reserved columns stay zero."""
    columns = np.asarray(columns, dtype=np.float64)
    embed_dim, count = columns.shape
    dims = Dims(feature_dim=1, embed_dim=embed_dim, hidden_dim=1, vocab_size=count + len(RESERVED_TOKENS))
    w_e = np.zeros((embed_dim, dims.vocab_size))
    w_e[:, len(RESERVED_TOKENS):] = columns
    return Parameters.zeros(dims).replace(w_e=w_e)


@pytest.fixture
def vocab():
    return Vocabulary(WORDS)


class TestNearestNeighbors:
    def test_identical_columns(self, vocab):
        params = with_embeddings(np.array([[1.0, 1.0, 0.0, -1.0, 0.2], [2.0, 2.0, 1.0, 0.5, -3.0]]))
        report = nearest_neighbors("a", 1, params, vocab)
        assert report.tokens == ["b"]
        assert report.neighbors[0][1] == pytest.approx(1.0)
        assert nearest_neighbors("b", 1, params, vocab).tokens == ["a"]

    def test_orthogonal_columns_tie_by_id(self, vocab):
        params = with_embeddings(np.eye(5))
        report = nearest_neighbors("c", 4, params, vocab)
        assert report.tokens == ["a", "b", "d", "e"]
        assert all(similarity == 0.0 for _, similarity in report.neighbors)

    def test_sorted_and_excludes_query_and_reserved(self, vocab):
        params = with_embeddings(RngState(3).uniform(-1.0, 1.0, (3, 5)))
        report = nearest_neighbors("d", 6, params, vocab)
        assert "d" not in report.tokens
        assert not set(report.tokens) & set(RESERVED_TOKENS)
        assert len(report.tokens) == 4
        similarities = [similarity for _, similarity in report.neighbors]
        assert similarities == sorted(similarities, reverse=True)
        assert all(-1.0 <= similarity <= 1.0 for similarity in similarities)

    def test_symmetric(self, vocab):
        params = with_embeddings(RngState(4).uniform(-1.0, 1.0, (3, 5)))
        for i in range(3, 8):
            for j in range(3, 8):
                assert cosine_similarities(params, vocab, i)[j] == pytest.approx(
                    cosine_similarities(params, vocab, j)[i], abs=1e-12
                )

    def test_scale_invariant(self, vocab):
        columns = RngState(5).uniform(-1.0, 1.0, (3, 5))
        scaled = columns * np.array([1.0, 7.5, 0.01, 3.0, 100.0])
        before = nearest_neighbors("a", 4, with_embeddings(columns), vocab)
        after = nearest_neighbors("a", 4, with_embeddings(scaled), vocab)
        assert before.tokens == after.tokens

    def test_unknown_word(self, vocab):
        with pytest.raises(InvalidTokenError):
            nearest_neighbors("zebra", 2, with_embeddings(np.eye(5)), vocab)

    def test_zero_norm_names_token(self, vocab):
        columns = np.eye(5)
        columns[:, 2] = 0.0
        with pytest.raises(DegenerateEmbeddingError) as excinfo:
            nearest_neighbors("a", 2, with_embeddings(columns), vocab)
        assert excinfo.value.token == "c"

    @pytest.mark.parametrize("k", [0, 8])
    def test_k_range(self, vocab, k):
        with pytest.raises(InvalidInputError):
            nearest_neighbors("a", k, with_embeddings(np.eye(5)), vocab)


class TestSubstitutableTokens:
    @pytest.mark.slow
    def test_swapped_tokens_are_mutual_neighbors(self):
        dataset = synth_dataset(
            num_images=100,
            feature_dim=8,
            rng=RngState(11),
            sentence_len_range=(4, 6),
            captions_per_image=5,
            swap_pair=("cat", "kitten"),
        )
        corpus = dataset.corpus()
        assert sum(tokens.count("cat") for tokens in corpus) >= 200
        assert sum(tokens.count("kitten") for tokens in corpus) >= 200

        vocab = build_vocab(corpus, min_count=1)
        examples = to_examples(dataset, vocab)
        dims = Dims(feature_dim=8, embed_dim=16, hidden_dim=16, vocab_size=vocab.size)

        outcomes = []
        for seed in (1, 2, 3):
            config = TrainConfig(learning_rate=0.1, epochs=15, seed=seed, init_scale=0.01)
            params = train(examples, dims, config).params
            cat = nearest_neighbors("cat", 3, params, vocab).tokens
            kitten = nearest_neighbors("kitten", 3, params, vocab).tokens
            outcomes.append("kitten" in cat and "cat" in kitten)
            if outcomes[-1]:
                break
        assert any(outcomes)
