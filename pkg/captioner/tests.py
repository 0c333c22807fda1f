import math

import numpy as np
import numpy.testing as npt
import orjson
import pytest

from captioner.models import PARAMETER_NAMES, Dims, LstmState, Parameters
from captioner.network import (
    backward_sequence,
    embed_word,
    encode_image,
    forward_sequence,
    init_parameters,
    initial_state,
    lstm_step,
    prefix_log_prob,
    sequence_log_prob,
    word_distribution,
)
from captioner.serializers import MAGIC, checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint
from core.exceptions import (
    CheckpointError,
    InconsistentTraceError,
    InvalidConfigError,
    InvalidTokenError,
    MalformedSequenceError,
    ShapeError,
)
from dataset.vocabulary import START_ID, STOP_ID, Vocabulary
from numerics.kernels import matvec, one_hot
from numerics.rng import RngState
from training.services import caption_loss

EPSILON = 1e-5


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-5)


def numeric_gradient(params, name, loss_fn):
    matrix = getattr(params, name)
    grad = np.zeros_like(matrix)
    for index in np.ndindex(matrix.shape):
        plus = matrix.copy()
        minus = matrix.copy()
        plus[index] += EPSILON
        minus[index] -= EPSILON
        grad[index] = (
            loss_fn(params.replace(**{name: plus})) - loss_fn(params.replace(**{name: minus}))
        ) / (2 * EPSILON)
    return grad


def random_sentence(rng, vocab_size, length):
    return (START_ID,) + tuple(2 + rng.below(vocab_size - 2) for _ in range(length)) + (STOP_ID,)


class TestDims:
    def test_parameter_shapes(self, tiny_dims):
        shapes = tiny_dims.parameter_shapes()
        assert list(shapes) == list(PARAMETER_NAMES)
        assert shapes["w_ix"] == (5, 4)
        assert shapes["w_im"] == (5, 5)
        assert shapes["w_e"] == (4, 6)
        assert shapes["w_enc"] == (4, 3)
        assert shapes["w_d"] == (6, 5)

    @pytest.mark.parametrize("field", ["feature_dim", "embed_dim", "hidden_dim", "vocab_size"])
    def test_rejects_non_positive(self, field):
        values = {"feature_dim": 3, "embed_dim": 4, "hidden_dim": 5, "vocab_size": 6, field: 0}
        with pytest.raises(InvalidConfigError):
            Dims(**values)

    def test_weight_shapes_checked(self, tiny_params):
        with pytest.raises(ShapeError):
            tiny_params.replace(w_d=np.zeros((5, 6)))


class TestForward:
    def test_init_is_deterministic_and_bounded(self, tiny_dims):
        first = init_parameters(tiny_dims, 0.08, RngState(3))
        second = init_parameters(tiny_dims, 0.08, RngState(3))
        for name, matrix in first.items():
            npt.assert_array_equal(matrix, getattr(second, name))
            assert np.all(np.abs(matrix) <= 0.08)

    def test_image_enters_once_from_zero_state(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        assert trace.encoder_calls == 1
        npt.assert_array_equal(trace.image_step.c_prev, np.zeros(5))
        npt.assert_array_equal(trace.image_step.m_prev, np.zeros(5))
        npt.assert_allclose(trace.image_step.x, tiny_params.w_enc @ tiny_features)
        assert trace.length == 4
        assert [step.token for step in trace.steps] == list(three_word_sentence[:-1])

    def test_cell_update_rules(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        for step in (trace.image_step, *trace.steps):
            npt.assert_allclose(step.c, step.f * step.c_prev + step.i * step.g)
            npt.assert_allclose(step.m, step.o * step.c)
        for step in trace.steps:
            assert step.p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_step_matches_trace(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        state = initial_state(tiny_params, tiny_features)
        for record, token in zip(trace.steps, three_word_sentence[:-1]):
            state = lstm_step(embed_word(token, tiny_params), state, tiny_params)
            npt.assert_allclose(state.m, record.m)
            npt.assert_allclose(word_distribution(state, tiny_params), record.p)

    def test_zero_weights_give_uniform_distribution(self, tiny_dims, tiny_features, three_word_sentence):
        params = init_parameters(tiny_dims, 0.0, RngState(0))
        trace = forward_sequence(tiny_features, three_word_sentence, params)
        for step in trace.steps:
            npt.assert_allclose(step.p, np.full(6, 1 / 6))
        assert sequence_log_prob(tiny_features, three_word_sentence, params) == pytest.approx(4 * np.log(1 / 6))

    def test_encode_image_by_hand(self):
        dims = Dims(feature_dim=2, embed_dim=2, hidden_dim=1, vocab_size=3)
        params = Parameters.zeros(dims).replace(w_enc=np.array([[1.0, 1.0], [0.0, 2.0]]))
        npt.assert_array_equal(encode_image([3.0, 4.0], params), [7.0, 8.0])

    def test_embed_word_is_one_hot_product(self, tiny_params):
        for token in range(tiny_params.dims.vocab_size):
            npt.assert_allclose(
                embed_word(token, tiny_params),
                matvec(tiny_params.w_e, one_hot(token, tiny_params.dims.vocab_size)),
            )

    def test_zero_weights_halve_the_cell(self):
        params = Parameters.zeros(Dims(feature_dim=1, embed_dim=3, hidden_dim=2, vocab_size=3))
        prev = LstmState(c=np.array([1.0, -2.0]), m=np.array([0.3, 0.9]))
        state = lstm_step(np.array([0.7, -1.2, 4.0]), prev, params)
        npt.assert_array_equal(state.c, [0.5, -1.0])
        npt.assert_array_equal(state.m, [0.25, -0.5])

    def test_lstm_step_matches_scalar_equations(self):
        dims = Dims(feature_dim=1, embed_dim=2, hidden_dim=2, vocab_size=3)
        params = init_parameters(dims, 1.0, RngState(8))
        x = [0.4, -0.9]
        c_prev = [0.2, -0.6]
        m_prev = [-0.1, 0.5]

        def pre(w_x, w_m, row):
            from_input = sum(w_x[row][k] * x[k] for k in range(2))
            return from_input + sum(w_m[row][k] * m_prev[k] for k in range(2))

        def sigma(value):
            return 1.0 / (1.0 + math.exp(-value))

        expected_c, expected_m = [], []
        for row in range(2):
            i = sigma(pre(params.w_ix, params.w_im, row))
            f = sigma(pre(params.w_fx, params.w_fm, row))
            o = sigma(pre(params.w_ox, params.w_om, row))
            c = f * c_prev[row] + i * math.tanh(pre(params.w_cx, params.w_cm, row))
            expected_c.append(c)
            expected_m.append(o * c)

        state = lstm_step(np.array(x), LstmState(c=np.array(c_prev), m=np.array(m_prev)), params)
        npt.assert_allclose(state.c, expected_c, atol=1e-14)
        npt.assert_allclose(state.m, expected_m, atol=1e-14)

    def test_gates_strictly_inside_unit_interval(
        self, tiny_dims, make_params, tiny_features, three_word_sentence
    ):
        for seed in range(5):
            params = make_params(tiny_dims, seed=seed, scale=1.0)
            trace = forward_sequence(tiny_features, three_word_sentence, params)
            for step in (trace.image_step, *trace.steps):
                for gate in (step.i, step.f, step.o):
                    assert np.all((gate > 0.0) & (gate < 1.0))

    def test_dominant_logit_saturates(self):
        dims = Dims(feature_dim=1, embed_dim=1, hidden_dim=1, vocab_size=4)
        params = Parameters.zeros(dims).replace(w_d=np.array([[0.0], [0.0], [50.0], [0.0]]))
        dist = word_distribution(LstmState(c=np.ones(1), m=np.ones(1)), params)
        assert dist[2] > 1.0 - 1e-15
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)

    def test_vocabulary_permutation(self, tiny_params, tiny_features, three_word_sentence):
        # START and STOP keep their ids; the ordinary words are relabeled
        perm = np.array([0, 1, 4, 5, 2, 3])
        w_e = np.zeros_like(tiny_params.w_e)
        w_d = np.zeros_like(tiny_params.w_d)
        w_e[:, perm] = tiny_params.w_e
        w_d[perm, :] = tiny_params.w_d
        permuted = tiny_params.replace(w_e=w_e, w_d=w_d)
        relabeled = tuple(int(perm[token]) for token in three_word_sentence)

        assert sequence_log_prob(tiny_features, relabeled, permuted) == pytest.approx(
            sequence_log_prob(tiny_features, three_word_sentence, tiny_params), abs=1e-12
        )
        original = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        moved = forward_sequence(tiny_features, relabeled, permuted)
        for a, b in zip(original.steps, moved.steps):
            npt.assert_allclose(b.p[perm], a.p, atol=1e-12)

    def test_log_prob_survives_saturated_logits(self):
        # STOP sits about 1900 logits below the rest, so its probability underflows to 0
        dims = Dims(feature_dim=1, embed_dim=1, hidden_dim=1, vocab_size=3)
        params = Parameters.zeros(dims).replace(
            w_enc=np.array([[1.0]]),
            w_cx=np.array([[10.0]]),
            w_cm=np.array([[100.0]]),
            w_d=np.array([[0.0], [-5000.0], [0.0]]),
        )
        log_prob = sequence_log_prob(np.array([1.0]), (START_ID, STOP_ID), params)
        assert np.isfinite(log_prob)
        assert log_prob < -700.0

    def test_chain_rule_identity(self):
        rng = RngState(2024)
        for instance in range(100):
            dims = Dims(
                feature_dim=1 + rng.below(4),
                embed_dim=1 + rng.below(4),
                hidden_dim=1 + rng.below(4),
                vocab_size=3 + rng.below(5),
            )
            params = init_parameters(dims, 0.5 + rng.random(), rng.fork(instance))
            features = rng.uniform(-1.0, 1.0, dims.feature_dim)
            tokens = random_sentence(rng, dims.vocab_size, rng.below(4))

            state = initial_state(params, features)
            product = 1.0
            for position, token in enumerate(tokens[:-1]):
                state = lstm_step(embed_word(token, params), state, params)
                product *= word_distribution(state, params)[tokens[position + 1]]

            assert np.exp(sequence_log_prob(features, tokens, params)) == pytest.approx(product, rel=1e-9, abs=1e-300)

    def test_prefix_log_prob_accepts_unterminated(self, tiny_params, tiny_features, three_word_sentence):
        full = sequence_log_prob(tiny_features, three_word_sentence, tiny_params)
        assert prefix_log_prob(tiny_features, three_word_sentence, tiny_params) == pytest.approx(full)
        truncated = prefix_log_prob(tiny_features, three_word_sentence[:-1], tiny_params)
        assert truncated > full
        assert prefix_log_prob(tiny_features, (START_ID,), tiny_params) == 0.0

    def test_dropout_rate_zero_matches_plain_forward(self, tiny_params, tiny_features, three_word_sentence):
        plain = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        dropped = forward_sequence(tiny_features, three_word_sentence, tiny_params, dropout_rate=0.0, rng=RngState(0))
        for a, b in zip(plain.steps, dropped.steps):
            npt.assert_array_equal(a.p, b.p)

    def test_dropout_needs_rng(self, tiny_params, tiny_features, three_word_sentence):
        with pytest.raises(InvalidConfigError):
            forward_sequence(tiny_features, three_word_sentence, tiny_params, dropout_rate=0.5)

    @pytest.mark.parametrize(
        "tokens",
        [(START_ID,), (3, 4, STOP_ID), (START_ID, 3, 4)],
    )
    def test_malformed_sequences(self, tiny_params, tiny_features, tokens):
        with pytest.raises(MalformedSequenceError):
            forward_sequence(tiny_features, tokens, tiny_params)

    def test_token_out_of_range(self, tiny_params, tiny_features):
        with pytest.raises(InvalidTokenError):
            forward_sequence(tiny_features, (START_ID, 6, STOP_ID), tiny_params)

    def test_feature_dim_mismatch(self, tiny_params):
        with pytest.raises(ShapeError):
            encode_image(np.ones(4), tiny_params)

    def test_lstm_step_rejects_wrong_state(self, tiny_params):
        with pytest.raises(ShapeError):
            lstm_step(np.zeros(4), LstmState.zeros(3), tiny_params)


class TestBackward:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_finite_differences(self, tiny_dims, make_params, tiny_features, three_word_sentence, seed):
        params = make_params(tiny_dims, seed=seed)
        features = tiny_features + 0.1 * seed

        def loss_fn(candidate: Parameters) -> float:
            return caption_loss(forward_sequence(features, three_word_sentence, candidate), three_word_sentence)

        trace = forward_sequence(features, three_word_sentence, params)
        grads = backward_sequence(trace, three_word_sentence, params)
        for name in PARAMETER_NAMES:
            numeric = numeric_gradient(params, name, loss_fn)
            error = relative_error(getattr(grads, name), numeric).max()
            assert error < 1e-4, f"{name}: max relative error {error}"

    def test_matches_finite_differences_with_dropout(self, tiny_dims, make_params, tiny_features, three_word_sentence):
        params = make_params(tiny_dims, seed=5)

        def run(candidate):
            return forward_sequence(
                tiny_features, three_word_sentence, candidate, dropout_rate=0.3, rng=RngState(17)
            )

        grads = backward_sequence(run(params), three_word_sentence, params)
        for name in ("w_ix", "w_e", "w_enc", "w_d"):
            numeric = numeric_gradient(params, name, lambda p: caption_loss(run(p), three_word_sentence))
            assert relative_error(getattr(grads, name), numeric).max() < 1e-4

    def test_unused_embedding_columns_get_zero_gradient(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        grads = backward_sequence(trace, three_word_sentence, tiny_params)
        npt.assert_array_equal(grads.w_e[:, STOP_ID], 0.0)
        npt.assert_array_equal(grads.w_e[:, 2], 0.0)

    def test_inconsistent_trace(self, tiny_params, tiny_features, three_word_sentence):
        trace = forward_sequence(tiny_features, three_word_sentence, tiny_params)
        with pytest.raises(InconsistentTraceError):
            backward_sequence(trace, (START_ID, 3, STOP_ID), tiny_params)


class TestCheckpoint:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(["a", "b", "c"])

    def test_save_and_load(self, tmp_path, tiny_params, vocab):
        path = tmp_path / "model.ckpt"
        save_checkpoint(tiny_params, vocab, path)
        loaded = load_checkpoint(path, vocab)
        assert loaded.dims == tiny_params.dims
        for name, matrix in tiny_params.items():
            npt.assert_array_equal(getattr(loaded, name), matrix)

    def test_bytes_are_deterministic(self, tiny_params, vocab):
        assert checkpoint_bytes(tiny_params, vocab.content_hash) == checkpoint_bytes(tiny_params, vocab.content_hash)

    def test_vocabulary_mismatch(self, tmp_path, tiny_params, vocab):
        path = tmp_path / "model.ckpt"
        save_checkpoint(tiny_params, vocab, path)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, Vocabulary(["a", "b", "d"]))

    def test_size_mismatch_on_save(self, tmp_path, tiny_params):
        with pytest.raises(CheckpointError):
            save_checkpoint(tiny_params, Vocabulary(["a"]), tmp_path / "model.ckpt")

    def test_corrupt_files(self, tiny_params, vocab):
        blob = checkpoint_bytes(tiny_params, vocab.content_hash)
        with pytest.raises(CheckpointError):
            parse_checkpoint(b"XXXX" + blob[4:])
        with pytest.raises(CheckpointError):
            parse_checkpoint(blob[:-8])
        with pytest.raises(CheckpointError):
            parse_checkpoint(blob + b"\x00")

    @pytest.mark.parametrize(
        "header",
        [
            [1, 2, 3],
            {"format_version": 1},
            {"format_version": 1, "dims": {"feature_dim": 3, "embed_dim": 4, "hidden_dim": 5, "vocab_size": 6}},
            {
                "format_version": 1,
                "dims": {"feature_dim": 3, "embed_dim": 4, "hidden_dim": 5, "vocab_size": 6},
                "vocab_hash": "abc",
                "matrices": [{"name": "w_ix", "rows": "five"}],
            },
            {
                "format_version": 1,
                "dims": {"feature_dim": 3, "embed_dim": 4, "hidden_dim": 5, "vocab_size": 6},
                "vocab_hash": 7,
                "matrices": [],
            },
        ],
    )
    def test_malformed_header(self, header):
        header_bytes = orjson.dumps(header)
        with pytest.raises(CheckpointError):
            parse_checkpoint(MAGIC + len(header_bytes).to_bytes(8, "little") + header_bytes)
