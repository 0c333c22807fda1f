import math

import numpy as np
import pytest

from captioner.network import forward_sequence, sequence_log_prob
from core.exceptions import InvalidInputError, ShapeError
from dataset.vocabulary import decode
from inference.decoders import greedy_caption
from metrics.bleu import bleu, bleu_report, brevity_penalty, corpus_bleu, modified_precision, sentence_bleu
from metrics.models import EvalPair, ScoreMatrix
from metrics.ranking import (
    annotation_matrix,
    first_caption_per_image,
    ground_truth_ranks,
    log_prob_table,
    median_rank,
    ranking_report,
    recall_at_k,
    search_matrix,
)
from metrics.serializers import read_score_matrix, write_score_matrix
from metrics.services import human_baseline_bleu, nbest_agreement_bleu, novelty_rate, perplexity
from numerics.rng import RngState
from training.services import caption_loss


def pair(candidate, *references):
    return EvalPair(candidate=candidate.split(), references=[reference.split() for reference in references])


def matrix_with_ranks(ranks, cols):
    """Rows whose ground truth (column 0) sits at the given 1-based rank."""
    scores = np.zeros((len(ranks), cols))
    for row, rank in enumerate(ranks):
        # column j scores cols - j; column 0 is slotted between columns rank - 1 and rank
        scores[row] = np.arange(cols, 0, -1, dtype=np.float64)
        scores[row, 0] = cols - rank + 0.5
    return ScoreMatrix(scores, np.zeros(len(ranks), dtype=np.int64))


def random_corpus(rng, size):
    words = ["w%d" % index for index in range(6)]
    pairs = []
    for _ in range(size):
        candidate = [words[rng.below(6)] for _ in range(1 + rng.below(6))]
        references = [[words[rng.below(6)] for _ in range(1 + rng.below(6))] for _ in range(1 + rng.below(4))]
        pairs.append(EvalPair(candidate=candidate, references=references))
    return pairs


class TestEvalPair:
    def test_reference_count(self):
        with pytest.raises(InvalidInputError):
            EvalPair(candidate=["a"], references=[])
        with pytest.raises(InvalidInputError):
            EvalPair(candidate=["a"], references=[["a"]] * 6)

    def test_empty_candidate_must_be_allowed(self):
        with pytest.raises(InvalidInputError):
            EvalPair(candidate=[], references=[["a"]])
        empty = EvalPair(candidate=[], references=[["a"]], allow_empty=True)
        assert bleu([empty], 1) == 0.0


class TestModifiedPrecision:
    def test_clipped_unigrams(self):
        assert modified_precision([pair("the the the the", "the cat is here")], 1) == (1, 4)

    def test_self_match(self):
        sentence = "a dog runs on the grass"
        for n in range(1, 7):
            matches, total = modified_precision([pair(sentence, sentence)], n)
            assert matches == total

    def test_bigram_in_any_reference(self):
        assert modified_precision([pair("a b", "a b", "b a")], 2) == (1, 1)

    def test_short_candidate(self):
        assert modified_precision([pair("a", "a b c")], 3) == (0, 0)


class TestBleu:
    def test_identical(self):
        pairs = [pair("a man rides a horse", "a man rides a horse"), pair("two dogs", "a cat", "two dogs")]
        assert bleu(pairs, 2) == pytest.approx(1.0, abs=1e-9)
        assert bleu([pair("one two three four", "one two three four")], 4) == pytest.approx(1.0, abs=1e-9)

    def test_clipped_unigram_score(self):
        assert bleu([pair("the the the the", "the cat is here")], 1) == pytest.approx(0.25, abs=1e-9)

    def test_brevity_penalty(self):
        assert bleu([pair("a b", "a b c d")], 1) == pytest.approx(math.exp(-1.0), abs=1e-9)
        assert brevity_penalty(4, 2) == 1.0
        assert brevity_penalty(0, 2) == 0.0

    def test_closest_reference_ties_to_shorter(self):
        # references of length 2 and 4 are both 1 away from a 3-word candidate
        score = bleu([pair("a b c", "a b", "a b c d")], 1)
        assert score == pytest.approx(1.0)

    def test_zero_precision_gives_zero(self):
        assert bleu([pair("a b c", "a b x c")], 2) == pytest.approx(math.exp(1 - 4 / 3) * math.sqrt(0.5))
        assert bleu([pair("a b c", "c b a")], 2) == 0.0

    def test_empty_corpus(self):
        with pytest.raises(InvalidInputError):
            bleu([], 4)

    def test_reference_order_invariance(self):
        rng = RngState(5)
        for _ in range(50):
            pairs = random_corpus(rng, 1 + rng.below(5))
            reordered = [EvalPair(candidate=p.candidate, references=p.references[::-1]) for p in pairs]
            assert bleu(pairs, 2) == pytest.approx(bleu(reordered, 2), abs=1e-12)

    def test_relabeling_invariance(self):
        rng = RngState(6)
        for _ in range(50):
            pairs = random_corpus(rng, 1 + rng.below(5))
            rename = {"w%d" % index: "z%d" % ((index * 5 + 1) % 6) for index in range(6)}
            relabeled = [
                EvalPair(
                    candidate=[rename[token] for token in p.candidate],
                    references=[[rename[token] for token in reference] for reference in p.references],
                )
                for p in pairs
            ]
            assert bleu(pairs, 2) == pytest.approx(bleu(relabeled, 2), abs=1e-12)

    def test_range(self):
        rng = RngState(8)
        for _ in range(50):
            assert 0.0 <= bleu(random_corpus(rng, 3), 2) <= 1.0

    def test_corpus_is_not_mean_of_sentences(self):
        pairs = [pair("a b c d", "a b c d"), pair("x y", "x z")]
        corpus = bleu(pairs, 1)
        mean = (sentence_bleu(pairs[0], 1) + sentence_bleu(pairs[1], 1)) / 2
        assert corpus == pytest.approx(5 / 6)
        assert mean == pytest.approx(0.75)
        assert corpus != pytest.approx(mean)

    def test_sentence_smoothing(self):
        candidate = pair("a b c", "c b a")
        assert sentence_bleu(candidate, 2) == 0.0
        assert sentence_bleu(candidate, 2, smooth=True) == pytest.approx(math.sqrt(1.0 * (1 / 3)))

    def test_report_keys(self):
        report = bleu_report([pair("a b", "a b")], 4)
        assert [key for key, _ in report] == ["bleu1", "bleu2", "bleu3", "bleu4"]

    def test_mismatched_lists(self):
        with pytest.raises(InvalidInputError):
            corpus_bleu([["a"]], [], 1)


class TestPerplexity:
    def test_uniform_model(self):
        assert perplexity(12 * math.log(1 / 7), 12) == pytest.approx(7.0)

    def test_perfect_model(self):
        assert perplexity(0.0, 5) == 1.0

    def test_algebraic_identity(self):
        assert perplexity(-10 * math.log(8), 10) == pytest.approx(8.0, rel=1e-12)

    def test_zero_words(self):
        with pytest.raises(InvalidInputError):
            perplexity(-1.0, 0)

    def test_matches_caption_loss(self, make_params, tiny_dims):
        rng = RngState(12)
        for seed in range(20):
            params = make_params(tiny_dims, seed=seed)
            tokens = (0,) + tuple(2 + rng.below(4) for _ in range(rng.below(5))) + (1,)
            features = rng.uniform(-1.0, 1.0, 3)
            words = len(tokens) - 1
            loss = caption_loss(forward_sequence(features, tokens, params), tokens)
            assert perplexity(sequence_log_prob(features, tokens, params), words) == pytest.approx(
                math.exp(loss / words), rel=1e-12
            )


class TestScoreMatrix:
    def test_validation(self):
        with pytest.raises(ShapeError):
            ScoreMatrix(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ShapeError):
            ScoreMatrix(np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(InvalidInputError):
            ScoreMatrix(np.zeros((2, 2)), np.array([0, 2]))


class TestRanking:
    def test_rank_construction(self):
        assert ground_truth_ranks(matrix_with_ranks([1, 2, 3], 3)).tolist() == [1, 2, 3]

    def test_strict_best(self):
        scores = np.eye(4) + 0.1
        assert recall_at_k(ScoreMatrix(scores, np.arange(4)), 1) == 1.0

    def test_strict_worst(self):
        scores = np.ones((3, 10))
        scores[:, 4] = -1.0
        assert recall_at_k(ScoreMatrix(scores, np.full(3, 4)), 9) == 0.0

    def test_hand_ranked(self):
        assert recall_at_k(matrix_with_ranks([1, 2, 3], 3), 2) == pytest.approx(2 / 3)

    def test_ties_favor_lower_column(self):
        scores = np.zeros((2, 3))
        matrix = ScoreMatrix(scores, np.array([0, 2]))
        assert ground_truth_ranks(matrix).tolist() == [1, 3]

    def test_k_out_of_range(self):
        matrix = matrix_with_ranks([1], 3)
        with pytest.raises(InvalidInputError):
            recall_at_k(matrix, 0)
        with pytest.raises(InvalidInputError):
            recall_at_k(matrix, 4)

    def test_recall_nondecreasing_and_complete(self):
        rng = RngState(10)
        for _ in range(20):
            rows, cols = 1 + rng.below(6), 1 + rng.below(8)
            matrix = ScoreMatrix(rng.uniform(-1, 1, (rows, cols)), [rng.below(cols) for _ in range(rows)])
            recalls = [recall_at_k(matrix, k) for k in range(1, cols + 1)]
            assert recalls == sorted(recalls)
            assert recalls[-1] == 1.0
            assert 1 <= median_rank(matrix) <= cols

    @pytest.mark.parametrize(
        "ranks, expected",
        [([1, 1, 1], 1.0), ([1, 5, 9], 5.0), ([2, 4, 6, 8], 4.0)],
    )
    def test_median_rank(self, ranks, expected):
        assert median_rank(matrix_with_ranks(ranks, 10)) == expected

    def test_report_clips_k(self):
        report = ranking_report(matrix_with_ranks([1, 2], 3))
        assert report == {"r@1": 0.5, "r@10": 1.0, "medr": 1.0}

    def test_csv_round_trip_preserves_metrics(self, tmp_path):
        rng = RngState(4)
        ids = ("img-a", "img-b", "img-c")
        matrix = ScoreMatrix(rng.uniform(-5, 0, (3, 3)), np.arange(3), row_ids=ids, col_ids=ids)
        write_score_matrix(matrix, tmp_path / "scores.csv")
        loaded = read_score_matrix(tmp_path / "scores.csv")
        np.testing.assert_array_equal(loaded.scores, matrix.scores)
        assert loaded.ground_truth.tolist() == [0, 1, 2]
        assert ranking_report(loaded) == ranking_report(matrix)


class TestMemorizedModel:
    @pytest.mark.slow
    def test_greedy_captions_score_full_bleu1(self, memorized):
        pairs = []
        for record, example in zip(memorized.dataset.records, memorized.examples):
            tokens = greedy_caption(example.feature_vector, memorized.params, max_len=30)
            pairs.append(EvalPair(candidate=decode(tokens, memorized.vocab), references=record.tokenized_captions()))
        assert bleu(pairs, 1) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.slow
    def test_annotation_ranks_own_caption_first(self, memorized):
        captions = first_caption_per_image(memorized.examples)
        table = log_prob_table(captions, captions, memorized.params)
        annotation = annotation_matrix(table, captions)
        assert recall_at_k(annotation, 1) == 1.0
        assert median_rank(annotation) == 1.0
        search = search_matrix(table, captions)
        assert recall_at_k(search, search.cols) == 1.0


class TestHumanBaseline:
    def test_identical_references(self):
        groups = [[["a", "dog", "runs"]] * 5, [["two", "cats"]] * 5]
        assert human_baseline_bleu(groups, 2) == pytest.approx(1.0)

    def test_one_alien_reference(self):
        common = ["a", "dog", "runs", "on", "grass"]
        alien = ["zebras", "eat", "hay", "at", "noon"]
        score = human_baseline_bleu([[common] * 4 + [alien]], 1)
        assert 0.0 < score < 1.0
        assert score == pytest.approx(4 / 5)

    def test_order_invariance(self):
        rng = RngState(1)
        words = ["a", "b", "c", "d"]
        group = [[words[rng.below(4)] for _ in range(3)] for _ in range(5)]
        permuted = [group[index] for index in (3, 0, 4, 1, 2)]
        assert human_baseline_bleu([group], 1) == pytest.approx(human_baseline_bleu([permuted], 1))

    def test_group_size(self):
        with pytest.raises(InvalidInputError):
            human_baseline_bleu([[["a"]] * 4], 1)
        with pytest.raises(InvalidInputError):
            human_baseline_bleu([], 1)


class TestDiversity:
    def test_identical_nbest_lists_agree_fully(self):
        assert nbest_agreement_bleu([[["a", "b"]] * 3], 2) == pytest.approx(1.0)

    def test_disjoint_nbest_lists(self):
        assert nbest_agreement_bleu([[["a"], ["b"], ["c"]]], 1) == 0.0

    def test_nbest_validation(self):
        with pytest.raises(InvalidInputError):
            nbest_agreement_bleu([[["a"]]], 1)
        with pytest.raises(InvalidInputError):
            nbest_agreement_bleu([[["a"], ["b"]], [["a"]]], 1)

    def test_novelty_rate(self):
        training = [["a", "dog"], ["a", "cat"]]
        assert novelty_rate([["a", "dog"], ["a", "bird"]], training) == 0.5
        assert novelty_rate([["a", "cat"]], training) == 0.0

    def test_novelty_of_nothing(self):
        with pytest.raises(InvalidInputError):
            novelty_rate([], [["a"]])
