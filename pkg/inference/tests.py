from itertools import product

import numpy as np
import numpy.testing as npt
import pytest
from pydantic import ValidationError

from captioner.models import Dims, Parameters
from captioner.network import init_parameters, prefix_log_prob, sequence_log_prob
from core.exceptions import InvalidInputError, ShapeError
from dataset.vocabulary import START_ID, STOP_ID, UNK_ID
from inference import decoders
from inference.decoders import (
    beam_search,
    decode,
    ensemble_distribution,
    ensemble_log_distribution,
    ensemble_log_prob,
    greedy_caption,
    sample_caption,
)
from inference.models import DecodeConfig, DecodeMode
from numerics.rng import RngState


def first_word_model(logit_column):
    """
    One hidden unit held positive by a strong cell recurrence; logits are
    w_d[:, 0] * m, so the first word distribution is softmax(0.375 * logit_column).
    """
    dims = Dims(feature_dim=1, embed_dim=1, hidden_dim=1, vocab_size=len(logit_column))
    weights = {name: np.zeros(shape) for name, shape in dims.parameter_shapes().items()}
    weights["w_enc"] = np.array([[1.0]])
    weights["w_cx"] = np.array([[10.0]])
    weights["w_cm"] = np.array([[100.0]])
    weights["w_d"] = np.array(logit_column, dtype=np.float64).reshape(-1, 1)
    return Parameters.from_mapping(dims, weights)


def chain_model(successor, vocab_size=6, strength=np.log(495.0)):
    """Each step puts ~0.99 probability on successor[current token]."""
    dims = Dims(feature_dim=2, embed_dim=vocab_size, hidden_dim=vocab_size, vocab_size=vocab_size)
    weights = {name: np.zeros(shape) for name, shape in dims.parameter_shapes().items()}
    weights["w_e"] = np.eye(vocab_size)
    weights["w_ix"] = np.full((vocab_size, vocab_size), 20.0)
    weights["w_fx"] = np.full((vocab_size, vocab_size), -20.0)
    weights["w_ox"] = np.full((vocab_size, vocab_size), 20.0)
    weights["w_cx"] = 10.0 * np.eye(vocab_size)
    for token, following in successor.items():
        weights["w_d"][following, token] = strength
    return Parameters.from_mapping(dims, weights)


def exhaustive(features, params, max_len):
    """Every framed or max_len-truncated sequence with its log-probability, best first."""
    words = [token for token in range(params.dims.vocab_size) if token != STOP_ID]
    scored = []
    for length in range(max_len):
        for middle in product(words, repeat=length):
            tokens = (START_ID, *middle, STOP_ID)
            scored.append((sequence_log_prob(features, tokens, params), tokens))
    for middle in product(words, repeat=max_len):
        tokens = (START_ID, *middle)
        scored.append((prefix_log_prob(features, tokens, params), tokens))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return scored


@pytest.fixture
def five_word_dims():
    return Dims(feature_dim=3, embed_dim=4, hidden_dim=5, vocab_size=5)


class TestEnsembleDistribution:
    def test_single_is_identity(self):
        dist = np.array([0.2, 0.8])
        npt.assert_array_equal(ensemble_distribution([dist]), dist)

    def test_symmetric_pair(self):
        npt.assert_allclose(ensemble_distribution([np.array([1.0, 0.0]), np.array([0.0, 1.0])]), [0.5, 0.5])

    def test_mean_is_normalized(self):
        rng = RngState(3)
        dists = []
        for _ in range(3):
            raw = rng.random(7)
            dists.append(raw / raw.sum())
        assert ensemble_distribution(dists).sum() == pytest.approx(1.0, abs=1e-12)

    def test_mixed_dims(self):
        with pytest.raises(ShapeError):
            ensemble_distribution([np.array([1.0]), np.array([0.5, 0.5])])

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            ensemble_distribution([])

    def test_log_mean_matches_mean(self):
        dists = [np.array([0.7, 0.2, 0.1]), np.array([0.1, 0.3, 0.6])]
        npt.assert_allclose(
            ensemble_log_distribution([np.log(dist) for dist in dists]),
            np.log(ensemble_distribution(dists)),
            atol=1e-14,
        )

    def test_log_mean_keeps_underflowed_words(self):
        log_dists = [np.array([0.0, -1500.0]), np.array([0.0, -1600.0])]
        combined = ensemble_log_distribution(log_dists)
        assert np.all(np.isfinite(combined))
        assert combined[1] == pytest.approx(-1500.0 - np.log(2.0))

    def test_identical_members_match_single_model(self, tiny_params, tiny_features):
        single = beam_search(tiny_features, tiny_params, DecodeConfig(beam_width=3, max_len=5))
        doubled = beam_search(tiny_features, [tiny_params, tiny_params], DecodeConfig(beam_width=3, max_len=5))
        assert [h.tokens for h in single] == [h.tokens for h in doubled]
        npt.assert_allclose([h.log_prob for h in single], [h.log_prob for h in doubled], atol=1e-12)

    def test_ensemble_log_prob_of_one_model(self, tiny_params, tiny_features, three_word_sentence):
        assert ensemble_log_prob(tiny_features, tiny_params, three_word_sentence) == pytest.approx(
            sequence_log_prob(tiny_features, three_word_sentence, tiny_params), abs=1e-12
        )


class TestSampling:
    def test_certain_stop(self):
        params = first_word_model([0.0, 1000.0, 0.0, 0.0, 0.0, 0.0])
        for seed in range(20):
            assert sample_caption(np.array([1.0]), params, 10, RngState(seed)) == (START_ID, STOP_ID)

    def test_same_seed_same_caption(self, tiny_params, tiny_features):
        first = sample_caption(tiny_features, tiny_params, 8, RngState(5))
        second = sample_caption(tiny_features, tiny_params, 8, RngState(5))
        assert first == second
        assert first[0] == START_ID
        assert first[-1] == STOP_ID or len(first) == 9

    def test_uniform_first_word(self):
        # START and UNK are pushed to probability ~0, leaving STOP and three words
        params = first_word_model([-1000.0, 0.0, -1000.0, 0.0, 0.0, 0.0])
        rng = RngState(2024)
        draws = [sample_caption(np.array([1.0]), params, 1, rng)[1] for _ in range(10_000)]
        counts = np.bincount(draws, minlength=6)
        assert counts[START_ID] == 0
        assert counts[UNK_ID] == 0
        for token in (STOP_ID, 3, 4, 5):
            assert 0.22 <= counts[token] / 10_000 <= 0.28

    def test_max_len_validated(self, tiny_params, tiny_features):
        with pytest.raises(InvalidInputError):
            sample_caption(tiny_features, tiny_params, 0, RngState(0))


class TestBeamSearch:
    def test_width_one_is_greedy(self, five_word_dims):
        for seed in range(20):
            params = init_parameters(five_word_dims, 1.0, RngState(seed))
            features = RngState(seed + 100).uniform(-1.0, 1.0, 3)
            beam = beam_search(features, params, DecodeConfig(beam_width=1, max_len=6))
            assert beam[0].tokens == greedy_caption(features, params, 6)

    def test_matches_exhaustive_enumeration(self, five_word_dims):
        params = init_parameters(five_word_dims, 1.0, RngState(42))
        features = np.array([0.5, -1.0, 0.25])
        expected = exhaustive(features, params, max_len=4)
        beam = beam_search(features, params, DecodeConfig(beam_width=5**4, max_len=4))

        assert beam[0].tokens == expected[0][1]
        assert beam[0].log_prob == pytest.approx(expected[0][0], abs=1e-9)
        assert len(beam) == len(expected)
        expected_scores = {tokens: score for score, tokens in expected}
        for hypothesis in beam:
            assert hypothesis.log_prob == pytest.approx(expected_scores[hypothesis.tokens], abs=1e-9)

    def test_wider_beam_never_scores_lower(self, five_word_dims):
        for seed in range(20):
            params = init_parameters(five_word_dims, 1.5, RngState(seed))
            features = RngState(seed + 7).uniform(-1.0, 1.0, 3)
            wide = beam_search(features, params, DecodeConfig(beam_width=20, max_len=3))
            narrow = beam_search(features, params, DecodeConfig(beam_width=1, max_len=3))
            assert wide[0].log_prob >= narrow[0].log_prob - 1e-12
            assert wide[0].tokens == exhaustive(features, params, max_len=3)[0][1]

    def test_results_sorted_and_verified(self, tiny_params, tiny_features):
        beam = beam_search(tiny_features, tiny_params, DecodeConfig(beam_width=6, max_len=5))
        assert 1 <= len(beam) <= 6
        keys = [hypothesis.sort_key for hypothesis in beam]
        assert keys == sorted(keys)
        for hypothesis in beam:
            assert hypothesis.finished
            assert hypothesis.tokens[0] == START_ID
            assert len(hypothesis.tokens) <= 6
            if hypothesis.tokens[-1] == STOP_ID:
                expected = sequence_log_prob(tiny_features, hypothesis.tokens, tiny_params)
            else:
                assert len(hypothesis.tokens) == 6
                expected = prefix_log_prob(tiny_features, hypothesis.tokens, tiny_params)
            assert hypothesis.log_prob == pytest.approx(expected, abs=1e-9)

    def test_stoppable_parent_still_fills_the_beam(self, monkeypatch, tiny_params):
        # A=3, B=4; B almost surely stops next, A is uniform afterwards
        table = {
            (START_ID,): {STOP_ID: 0.5, 3: 0.3, 4: 0.2},
            (START_ID, 4): {STOP_ID: 0.99, 3: 0.005, 4: 0.005},
        }

        def log_distribution(members, states):
            probs = np.full(5, 1e-12)
            for token, p in table.get(states, {0: 0.2, STOP_ID: 0.2, 2: 0.2, 3: 0.2, 4: 0.2}).items():
                probs[token] = p
            return np.log(probs)

        monkeypatch.setattr(decoders, "_start_states", lambda members, features: (START_ID,))
        monkeypatch.setattr(decoders, "_next_log_distribution", log_distribution)
        monkeypatch.setattr(decoders, "_advance", lambda members, states, token: states + (token,))

        beam = beam_search(np.zeros(3), tiny_params, DecodeConfig(beam_width=2, max_len=4))
        assert [hypothesis.tokens for hypothesis in beam] == [(START_ID, STOP_ID), (START_ID, 4, STOP_ID)]
        npt.assert_allclose([hypothesis.log_prob for hypothesis in beam], np.log([0.5, 0.2 * 0.99]))

    def test_nbest_matches_exhaustive_ranking(self, five_word_dims):
        for seed in range(10):
            params = init_parameters(five_word_dims, 1.0, RngState(seed))
            features = RngState(seed + 50).uniform(-1.0, 1.0, 3)
            expected = exhaustive(features, params, max_len=2)
            beam = beam_search(features, params, DecodeConfig(beam_width=4, max_len=2))
            assert [hypothesis.tokens for hypothesis in beam] == [tokens for _, tokens in expected[:4]]

    def test_recovers_designated_chain(self):
        params = chain_model({START_ID: 3, 3: 4, 4: 5, 5: STOP_ID})
        beam = beam_search(np.zeros(2), params, DecodeConfig(beam_width=2, max_len=10))
        assert beam[0].tokens == (START_ID, 3, 4, 5, STOP_ID)
        assert beam[0].log_prob == pytest.approx(4 * np.log(0.99), abs=1e-3)


class TestDecode:
    def test_greedy_mode(self, tiny_params, tiny_features):
        [hypothesis] = decode(tiny_features, tiny_params, DecodeConfig(mode=DecodeMode.GREEDY, max_len=5))
        assert hypothesis.tokens == greedy_caption(tiny_features, tiny_params, 5)
        assert hypothesis.log_prob == pytest.approx(prefix_log_prob(tiny_features, hypothesis.tokens, tiny_params))

    def test_sample_mode_uses_seed(self, tiny_params, tiny_features):
        config = DecodeConfig(mode=DecodeMode.SAMPLE, max_len=5, seed=3)
        assert decode(tiny_features, tiny_params, config)[0].tokens == sample_caption(
            tiny_features, tiny_params, 5, RngState(3)
        )

    def test_nbest(self, tiny_params, tiny_features):
        hypotheses = decode(tiny_features, tiny_params, DecodeConfig(beam_width=5, max_len=5, nbest=3))
        assert len(hypotheses) == 3

    def test_nbest_cannot_exceed_width(self):
        with pytest.raises(ValidationError):
            DecodeConfig(beam_width=2, nbest=3)
