from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dataset.tokenizer import tokenize
from dataset.vocabulary import Vocabulary, encode
from numerics.kernels import Vector

MAX_CAPTIONS = 5


class CaptionRecord(BaseModel):
    """One image: its feature vector and up to five reference captions."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    image_id: str = Field(min_length=1)
    features: Tuple[float, ...] = Field(min_length=1)
    captions: Tuple[str, ...] = Field(default=(), max_length=MAX_CAPTIONS)

    @field_validator("features")
    @classmethod
    def _finite_features(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not np.all(np.isfinite(value)):
            raise ValueError("features must be finite")
        return value

    @property
    def feature_vector(self) -> Vector:
        return np.asarray(self.features, dtype=np.float64)

    def tokenized_captions(self) -> List[List[str]]:
        return [tokenize(caption) for caption in self.captions]


class CaptionDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    records: Tuple[CaptionRecord, ...]
    feature_dim: int = Field(ge=1)

    def __len__(self) -> int:
        return len(self.records)

    def corpus(self) -> List[List[str]]:
        """Every caption of every record, tokenized."""
        return [tokens for record in self.records for tokens in record.tokenized_captions()]

    def references(self) -> List[List[List[str]]]:
        """Tokenized reference captions per record."""
        return [record.tokenized_captions() for record in self.records]


class TrainingExample(BaseModel):
    """One (image, encoded caption) pair; each reference caption is its own example."""

    model_config = ConfigDict(frozen=True)

    image_id: str
    features: Tuple[float, ...]
    tokens: Tuple[int, ...]

    @property
    def feature_vector(self) -> Vector:
        return np.asarray(self.features, dtype=np.float64)


def to_examples(
    dataset: CaptionDataset,
    vocab: Vocabulary,
    image_ids: Optional[Sequence[str]] = None,
) -> List[TrainingExample]:
    """Encode every (record, caption) pair in dataset order."""
    wanted = set(image_ids) if image_ids is not None else None
    examples = []
    for record in dataset.records:
        if wanted is not None and record.image_id not in wanted:
            continue
        for tokens in record.tokenized_captions():
            examples.append(
                TrainingExample(
                    image_id=record.image_id,
                    features=record.features,
                    tokens=tuple(encode(tokens, vocab)),
                )
            )
    return examples
