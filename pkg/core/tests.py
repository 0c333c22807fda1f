import logging

import orjson
import pytest

from caption_project import settings
from core.exceptions import (
    CaptionEngineError,
    DegenerateEmbeddingError,
    DivergenceError,
    ParseError,
    SchemaError,
    ShapeError,
)
from core.reports import TextReport
from core.utils.file_utils import load_json, save_json, sha256_file, write_text
from core.utils.logging_utils import ROOT_LOGGER_NAME, get_logger, setup_logger


class TestExceptions:
    def test_error_code_from_class_name(self):
        assert ShapeError("bad").error_code == "SHAPE_ERROR"
        assert DegenerateEmbeddingError("cat").error_code == "DEGENERATE_EMBEDDING_ERROR"

    def test_to_dict(self):
        assert ShapeError("dims differ").to_dict() == {
            "success": False,
            "message": "dims differ",
            "error_code": "SHAPE_ERROR",
        }

    def test_divergence_carries_epoch(self):
        error = DivergenceError(epoch=3)
        assert error.epoch == 3
        assert "epoch 3" in error.message
        assert error.to_dict()["epoch"] == 3

    def test_line_numbers_in_message(self):
        assert ParseError(7, "not JSON").message == "line 7: not JSON"
        assert SchemaError("missing id", line_number=2).message == "line 2: missing id"
        assert SchemaError("missing id").line_number is None

    def test_hierarchy(self):
        assert issubclass(DivergenceError, CaptionEngineError)
        assert str(CaptionEngineError()) == "An error occurred"


class TestTextReport:
    def test_floats_keep_full_precision(self):
        assert TextReport.format_value(0.1 + 0.2) == "0.30000000000000004"
        assert TextReport.format_value(3) == "3"

    def test_key_values_keeps_order(self):
        assert TextReport.key_values({"bleu1": 0.5, "images": 2}) == "bleu1=0.5\nimages=2\n"

    def test_tsv(self):
        assert TextReport.tsv([("img", 1, -0.25, "a dog")]) == "img\t1\t-0.25\ta dog\n"
        assert TextReport.tsv([]) == ""


class TestFileUtils:
    def test_json_is_sorted_and_indented(self, tmp_path):
        path = tmp_path / "nested" / "doc.json"
        save_json({"b": 1, "a": [1, 2]}, path)
        assert path.read_bytes() == orjson.dumps({"a": [1, 2], "b": 1}, option=orjson.OPT_INDENT_2)
        assert load_json(path) == {"a": [1, 2], "b": 1}

    def test_write_text_uses_unix_newlines(self, tmp_path):
        path = tmp_path / "out" / "report.txt"
        write_text("a\nb\n", path)
        assert path.read_bytes() == b"a\nb\n"

    def test_sha256(self, tmp_path):
        path = tmp_path / "empty"
        path.write_bytes(b"")
        assert sha256_file(path) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


class TestLogging:
    def test_setup_replaces_handlers(self, tmp_path):
        logger = setup_logger(level="DEBUG")
        logger = setup_logger(output_dir=tmp_path, level="WARNING")
        assert logger.name == ROOT_LOGGER_NAME
        assert logger.level == logging.WARNING
        assert len(logger.handlers) == 2
        logger.warning("hello")
        for handler in logger.handlers:
            handler.flush()
        assert "hello" in (tmp_path / "run.log").read_text(encoding="utf-8")
        setup_logger()

    def test_module_loggers_are_children(self):
        assert get_logger("metrics.bleu").name == f"{ROOT_LOGGER_NAME}.metrics.bleu"


class TestSettings:
    def test_defaults_are_valid(self):
        settings.validate()

    @pytest.mark.parametrize(
        "name, value",
        [("BEAM_WIDTH", 0), ("DROPOUT_RATE", 1.0), ("LEARNING_RATE", -1.0), ("SEED", -1), ("LOG_LEVEL", "LOUD")],
    )
    def test_out_of_range(self, monkeypatch, name, value):
        monkeypatch.setattr(settings, name, value)
        with pytest.raises(ValueError, match=f"NIC_{name}"):
            settings.validate()
