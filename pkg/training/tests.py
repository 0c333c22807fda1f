import numpy as np
import numpy.testing as npt
import pytest
from pydantic import ValidationError

from captioner.models import Dims, Gradients
from captioner.network import backward_sequence, forward_sequence, sequence_log_prob
from captioner.serializers import load_checkpoint
from core.exceptions import DivergenceError, InconsistentTraceError, InvalidInputError
from dataset.models import TrainingExample, to_examples
from dataset.serializers import write_dataset
from dataset.synth import synth_dataset
from dataset.vocabulary import START_ID, STOP_ID, Vocabulary, build_vocab
from inference.decoders import greedy_caption
from numerics.rng import RngState
from training.models import TrainConfig
from training.services import apply_dropout, caption_loss, clip_gradients, sgd_step, train
from training.trainer import Trainer, loss_log_path_for


@pytest.fixture
def tiny_examples():
    return [
        TrainingExample(image_id="a", features=(1.0, 0.0, 0.0), tokens=(START_ID, 3, 4, STOP_ID)),
        TrainingExample(image_id="b", features=(0.0, 1.0, 0.0), tokens=(START_ID, 5, STOP_ID)),
        TrainingExample(image_id="c", features=(0.0, 0.0, 1.0), tokens=(START_ID, 4, 3, 5, STOP_ID)),
    ]


class TestCaptionLoss:
    def test_is_negative_log_prob(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        assert caption_loss(trace, three_word_sentence) == pytest.approx(
            -sequence_log_prob(tiny_features, three_word_sentence, tiny_params)
        )
        assert caption_loss(trace, three_word_sentence) > 0.0

    def test_rejects_foreign_tokens(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        with pytest.raises(InconsistentTraceError):
            caption_loss(trace, (START_ID, 3, STOP_ID))


class TestUpdates:
    def test_sgd_step(self, tiny_params):
        grads = Gradients.from_mapping(
            tiny_params.dims, {name: np.ones_like(matrix) for name, matrix in tiny_params.items()}
        )
        updated = sgd_step(tiny_params, grads, 0.5)
        for name, matrix in tiny_params.items():
            npt.assert_allclose(getattr(updated, name), matrix - 0.5)

    def test_clip_gradients(self, tiny_dims):
        grads = Gradients.zeros(tiny_dims).replace(w_d=np.full((6, 5), 2.0))
        assert grads.global_norm() == pytest.approx(np.sqrt(30 * 4.0))
        clipped = clip_gradients(grads, 1.0)
        assert clipped.global_norm() == pytest.approx(1.0)
        assert clip_gradients(grads, 100.0) is grads
        assert clip_gradients(grads, None) is grads

    def test_apply_dropout_rate_zero(self):
        x = np.array([1.0, -2.0, 3.0])
        npt.assert_array_equal(apply_dropout(x, 0.0, RngState(0)), x)

    def test_apply_dropout_statistics(self):
        dropped = apply_dropout(np.ones(100_000), 0.5, RngState(0))
        assert 0.49 <= np.mean(dropped == 0.0) <= 0.51
        assert dropped.mean() == pytest.approx(1.0, rel=0.02)
        assert set(np.unique(dropped)) <= {0.0, 2.0}

    def test_small_step_along_gradient_descends(self, tiny_dims, make_params):
        descended = 0
        for trial in range(100):
            rng = RngState(trial)
            params = make_params(tiny_dims, seed=1000 + trial)
            features = rng.uniform(-1.0, 1.0, tiny_dims.feature_dim)
            words = [2 + rng.below(tiny_dims.vocab_size - 2) for _ in range(1 + rng.below(4))]
            tokens = (START_ID, *words, STOP_ID)

            trace = forward_sequence(features, tokens, params)
            before = caption_loss(trace, tokens)
            updated = sgd_step(params, backward_sequence(trace, tokens, params), 1e-3)
            after = caption_loss(forward_sequence(features, tokens, updated), tokens)
            descended += after < before
        assert descended >= 95


class TestTrain:
    def test_zero_learning_rate_leaves_parameters(self, tiny_dims, make_params, tiny_examples):
        params = make_params(tiny_dims, seed=3, scale=0.1)
        report = train(
            tiny_examples,
            tiny_dims,
            TrainConfig(learning_rate=0.0, epochs=3, shuffle=False),
            initial_params=params,
        )
        for name, matrix in params.items():
            npt.assert_array_equal(getattr(report.params, name), matrix)
        assert len(set(report.epoch_losses)) == 1

    def test_loss_decreases(self, tiny_dims, tiny_examples):
        report = train(tiny_examples, tiny_dims, TrainConfig(learning_rate=0.3, epochs=40, seed=1))
        assert report.epoch_losses[-1] < report.epoch_losses[0]
        assert report.words_per_epoch == 3 + 2 + 4
        assert report.examples_per_epoch == 3

    def test_single_example_loss_never_rises(self, tiny_dims, tiny_examples):
        report = train(tiny_examples[:1], tiny_dims, TrainConfig(learning_rate=0.01, epochs=10, seed=5))
        losses = report.epoch_losses
        assert len(losses) == 10
        assert all(later <= earlier for earlier, later in zip(losses, losses[1:]))

    def test_same_seed_same_parameters(self, tiny_dims, tiny_examples):
        config = TrainConfig(learning_rate=0.2, epochs=4, seed=11, dropout_rate=0.2)
        first = train(tiny_examples, tiny_dims, config)
        second = train(tiny_examples, tiny_dims, config)
        assert first.epoch_losses == second.epoch_losses
        for name, matrix in first.params.items():
            npt.assert_array_equal(getattr(second.params, name), matrix)

    def test_one_batch_is_one_summed_step(self, tiny_dims, make_params, tiny_examples):
        params = make_params(tiny_dims, seed=4, scale=0.2)
        config = TrainConfig(learning_rate=0.1, epochs=1, shuffle=False, batch_size=len(tiny_examples))
        report = train(tiny_examples, tiny_dims, config, initial_params=params)

        total = Gradients.zeros(tiny_dims)
        for example in tiny_examples:
            trace = forward_sequence(example.feature_vector, example.tokens, params)
            total = total + backward_sequence(trace, example.tokens, params)
        expected = sgd_step(params, total, 0.1)
        for name, matrix in expected.items():
            npt.assert_allclose(getattr(report.params, name), matrix, atol=1e-14)

    def test_epoch_callback(self, tiny_dims, tiny_examples):
        seen = []
        report = train(
            tiny_examples, tiny_dims, TrainConfig(learning_rate=0.1, epochs=3), on_epoch=lambda e, loss: seen.append(e)
        )
        assert seen == [1, 2, 3]
        assert len(report.epoch_losses) == 3

    def test_divergence(self, tiny_dims, tiny_examples):
        with pytest.raises(DivergenceError):
            train(tiny_examples, tiny_dims, TrainConfig(learning_rate=1e300, epochs=5, seed=2))

    def test_empty_dataset(self, tiny_dims):
        with pytest.raises(InvalidInputError):
            train([], tiny_dims, TrainConfig(learning_rate=0.1, epochs=1))

    @pytest.mark.parametrize(
        "overrides",
        [{"learning_rate": -0.1}, {"epochs": 0}, {"dropout_rate": 1.0}, {"batch_size": 0}, {"grad_clip": 0.0}],
    )
    def test_config_validation(self, overrides):
        values = {"learning_rate": 0.1, "epochs": 1, **overrides}
        with pytest.raises(ValidationError):
            TrainConfig(**values)


class TestMemorization:
    @pytest.mark.slow
    def test_overfits_eight_images(self, memorized):
        assert memorized.report.final_loss < 0.1
        for example in memorized.examples:
            assert greedy_caption(example.feature_vector, memorized.params, max_len=30) == example.tokens


class TestTrainer:
    def test_run_writes_artifacts(self, tmp_path):
        dataset = synth_dataset(num_images=4, feature_dim=4, rng=RngState(5))
        data_path = tmp_path / "train.jsonl"
        write_dataset(dataset, data_path)

        artifacts = Trainer(
            data_path=data_path,
            checkpoint_path=tmp_path / "out" / "m.ckpt",
            config=TrainConfig(learning_rate=0.1, epochs=3, seed=1),
            embed_dim=6,
            hidden_dim=7,
            min_count=1,
        ).run()

        assert artifacts.checkpoint_path.is_file()
        assert Vocabulary.load(artifacts.vocab_path) == build_vocab(dataset.corpus(), min_count=1)
        params = load_checkpoint(artifacts.checkpoint_path, artifacts.vocab)
        assert params.dims == Dims(feature_dim=4, embed_dim=6, hidden_dim=7, vocab_size=artifacts.vocab.size)

        lines = loss_log_path_for(artifacts.checkpoint_path).read_text(encoding="utf-8").splitlines()
        assert [line.split("\t")[0] for line in lines] == ["1", "2", "3"]
        assert float(lines[-1].split("\t")[1]) == artifacts.report.final_loss

    def test_rerun_is_byte_identical(self, tmp_path):
        dataset = synth_dataset(num_images=3, feature_dim=3, rng=RngState(6))
        blobs = []
        for run in ("first", "second"):
            artifacts = Trainer(
                data_path=tmp_path / "unused.jsonl",
                checkpoint_path=tmp_path / run / "m.ckpt",
                config=TrainConfig(learning_rate=0.1, epochs=2, seed=9),
                embed_dim=4,
                hidden_dim=4,
                min_count=1,
                dataset=dataset,
            ).run()
            blobs.append(artifacts.checkpoint_path.read_bytes())
        assert blobs[0] == blobs[1]
        assert len(to_examples(dataset, artifacts.vocab)) == 3
