import orjson
import pytest

from core.exceptions import InvalidInputError, InvalidTokenError, ParseError, SchemaError
from dataset.models import CaptionDataset, CaptionRecord, to_examples
from dataset.serializers import load_dataset, write_dataset
from dataset.synth import DEFAULT_WORDS, SynthConfig, branch_of, synth_dataset, synth_from_config
from dataset.tokenizer import detokenize, tokenize
from dataset.vocabulary import (
    START_ID,
    STOP_ID,
    UNK_ID,
    UNK_TOKEN,
    Vocabulary,
    build_vocab,
    decode,
    encode,
)
from numerics.rng import RngState


def write_lines(path, payloads):
    path.write_bytes(b"".join(orjson.dumps(payload) + b"\n" for payload in payloads))
    return path


class TestTokenizer:
    def test_sentence(self):
        assert tokenize("A man throwing a frisbee in a park.") == [
            "a", "man", "throwing", "a", "frisbee", "in", "a", "park", ".",
        ]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_detached(self):
        assert tokenize("Hello,world") == ["hello", ",", "world"]
        assert tokenize('(a "b")!') == ["(", "a", '"', "b", '"', ")", "!"]

    def test_whitespace_collapsed(self):
        assert tokenize("  two \t words\n") == ["two", "words"]

    def test_detokenize(self):
        assert detokenize(["a", "dog", "."]) == "a dog ."


class TestVocabulary:
    def test_min_count_boundary(self):
        corpus = [["cat"]] * 5 + [["dog"]] * 4
        vocab = build_vocab(corpus, min_count=5)
        assert "cat" in vocab
        assert "dog" not in vocab
        assert vocab.size == 4

    def test_min_count_one_keeps_everything(self):
        vocab = build_vocab([["b", "a"], ["c"]], min_count=1)
        assert set(vocab.words) == {"a", "b", "c"}

    def test_ids_by_frequency_then_lexicographic(self):
        vocab = build_vocab([["zebra", "apple", "zebra", "mango", "apple", "kiwi"]], min_count=1)
        assert vocab.words == ["apple", "zebra", "kiwi", "mango"]
        assert vocab.lookup("apple") == 3

    def test_reserved_ids(self):
        vocab = Vocabulary(["a"])
        assert vocab.token_of(START_ID) == "<start>"
        assert vocab.token_of(STOP_ID) == "<stop>"
        assert vocab.token_of(UNK_ID) == UNK_TOKEN

    def test_reserved_spelling_in_corpus_is_skipped(self):
        vocab = build_vocab([["<unk>", "a"]], min_count=1)
        assert vocab.words == ["a"]

    def test_empty_corpus(self):
        with pytest.raises(InvalidInputError):
            build_vocab([], min_count=1)

    def test_lookup_unknown(self):
        with pytest.raises(InvalidTokenError):
            Vocabulary(["a"]).lookup("b")

    def test_hash_tracks_content(self):
        assert Vocabulary(["a", "b"]).content_hash == Vocabulary(["a", "b"]).content_hash
        assert Vocabulary(["a", "b"]).content_hash != Vocabulary(["b", "a"]).content_hash

    def test_save_and_load(self, tmp_path):
        vocab = Vocabulary(["dog", "cat", ","])
        vocab.save(tmp_path / "v.vocab")
        assert (tmp_path / "v.vocab").read_text(encoding="utf-8") == "dog\ncat\n,\n"
        assert Vocabulary.load(tmp_path / "v.vocab") == vocab

    def test_load_rejects_blank_and_duplicate_lines(self, tmp_path):
        (tmp_path / "blank.vocab").write_text("a\n\nb\n", encoding="utf-8")
        with pytest.raises(ParseError):
            Vocabulary.load(tmp_path / "blank.vocab")
        (tmp_path / "dup.vocab").write_text("a\na\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            Vocabulary.load(tmp_path / "dup.vocab")


class TestEncodeDecode:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(["a", "dog"])

    def test_empty(self, vocab):
        assert encode([], vocab) == [START_ID, STOP_ID]
        assert decode([START_ID, STOP_ID], vocab) == []

    def test_unknown_maps_to_unk(self, vocab):
        assert encode(["a", "cat", "dog"], vocab) == [START_ID, 3, UNK_ID, 4, STOP_ID]
        assert decode([START_ID, 3, UNK_ID, STOP_ID], vocab) == ["a", UNK_TOKEN]

    def test_truncated_sequence(self, vocab):
        assert decode([START_ID, 3, 4], vocab) == ["a", "dog"]

    def test_interior_sentinels_rendered(self, vocab):
        assert decode([START_ID, 3, STOP_ID, 4, STOP_ID], vocab) == ["a", "<stop>", "dog"]

    def test_out_of_range(self, vocab):
        with pytest.raises(InvalidTokenError):
            decode([START_ID, 9, STOP_ID], vocab)


class TestLoadDataset:
    def test_two_records(self, tmp_path):
        path = write_lines(
            tmp_path / "d.jsonl",
            [
                {"image_id": "x", "features": [1.0, 2.0], "captions": ["A dog."]},
                {"image_id": "y", "features": [0.0, -1.0], "captions": ["A cat.", "Two cats."]},
            ],
        )
        dataset = load_dataset(path)
        assert len(dataset) == 2
        assert dataset.feature_dim == 2
        assert dataset.references()[1] == [["a", "cat", "."], ["two", "cats", "."]]

    def test_empty_file(self, tmp_path):
        (tmp_path / "empty.jsonl").write_bytes(b"")
        with pytest.raises(InvalidInputError):
            load_dataset(tmp_path / "empty.jsonl")

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_bytes(b'{"image_id": "x", "features": [1.0], "captions": ["a"]}\n{oops\n')
        with pytest.raises(ParseError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line_number == 2

    def test_six_captions(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [{"image_id": "x", "features": [1.0], "captions": ["a"] * 6}])
        with pytest.raises(SchemaError):
            load_dataset(path)

    def test_dim_mismatch(self, tmp_path):
        path = write_lines(
            tmp_path / "d.jsonl",
            [
                {"image_id": "x", "features": [1.0, 2.0], "captions": ["a"]},
                {"image_id": "y", "features": [1.0], "captions": ["b"]},
            ],
        )
        with pytest.raises(SchemaError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line_number == 2

    def test_duplicate_image_id(self, tmp_path):
        payload = {"image_id": "x", "features": [1.0], "captions": ["a"]}
        with pytest.raises(SchemaError):
            load_dataset(write_lines(tmp_path / "d.jsonl", [payload, payload]))

    def test_captions_optional_for_feature_files(self, tmp_path):
        path = write_lines(tmp_path / "f.jsonl", [{"image_id": "x", "features": [1.0]}])
        with pytest.raises(SchemaError):
            load_dataset(path)
        assert load_dataset(path, require_captions=False).records[0].captions == ()

    def test_write_then_load(self, tmp_path):
        dataset = synth_dataset(num_images=3, feature_dim=4, rng=RngState(1))
        write_dataset(dataset, tmp_path / "s.jsonl")
        assert load_dataset(tmp_path / "s.jsonl") == dataset


class TestExamples:
    def test_one_example_per_caption(self):
        dataset = CaptionDataset(
            records=(
                CaptionRecord(image_id="x", features=(1.0,), captions=("a dog", "a cat")),
                CaptionRecord(image_id="y", features=(2.0,), captions=("a dog",)),
            ),
            feature_dim=1,
        )
        vocab = Vocabulary(["a", "dog"])
        examples = to_examples(dataset, vocab)
        assert [example.image_id for example in examples] == ["x", "x", "y"]
        assert examples[1].tokens == (START_ID, 3, UNK_ID, STOP_ID)
        assert len(to_examples(dataset, vocab, image_ids=["y"])) == 1


class TestSynth:
    def test_same_seed_same_dataset(self):
        first = synth_dataset(num_images=8, feature_dim=8, rng=RngState(7))
        second = synth_dataset(num_images=8, feature_dim=8, rng=RngState(7))
        assert first == second

    def test_record_count_and_shape(self):
        dataset = synth_dataset(num_images=8, feature_dim=10, rng=RngState(0), captions_per_image=3)
        assert len(dataset) == 8
        assert all(len(record.features) == 10 for record in dataset.records)
        assert all(len(record.captions) == 3 for record in dataset.records)

    def test_captions_follow_designated_coordinate(self):
        dataset = synth_dataset(num_images=12, feature_dim=4, rng=RngState(3))
        by_branch = {}
        for record in dataset.records:
            by_branch.setdefault(branch_of(record.features), set()).add(record.captions[0])
        assert len(by_branch) == 4
        assert all(len(captions) == 1 for captions in by_branch.values())
        assert len({next(iter(captions)) for captions in by_branch.values()}) == 4

    def test_words_come_from_vocabulary(self):
        dataset = synth_dataset(num_images=5, feature_dim=5, rng=RngState(2), sentence_len_range=(2, 4))
        for tokens in dataset.corpus():
            assert 2 <= len(tokens) <= 4
            assert set(tokens) <= set(DEFAULT_WORDS)

    def test_swap_pair_appears_in_every_caption(self):
        dataset = synth_dataset(
            num_images=10, feature_dim=10, rng=RngState(4), captions_per_image=5, swap_pair=("cat", "kitten")
        )
        corpus = dataset.corpus()
        assert all(("cat" in tokens) or ("kitten" in tokens) for tokens in corpus)
        assert any("kitten" in tokens for tokens in corpus)
        assert any("cat" in tokens for tokens in corpus)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(num_images=2, feature_dim=2, sentence_len_range=(4, 2))
        with pytest.raises(ValueError):
            SynthConfig(num_images=2, feature_dim=2, swap_pair=("a", "a"))

    def test_config_and_function_agree(self):
        config = SynthConfig(num_images=4, feature_dim=3)
        assert synth_from_config(config, RngState(9)) == synth_dataset(num_images=4, feature_dim=3, rng=RngState(9))
