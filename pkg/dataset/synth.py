"""
Synthetic desk-scale caption data.

Each image belongs to a grammar branch; the branch's designated feature
coordinate carries a +1 bump over uniform noise in [0, noise), so the branch is
recoverable as argmax(features). A branch owns one caption template; extra
captions of an image are the template with one slot re-drawn. Everything is a
deterministic function of the RngState.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.exceptions import InvalidInputError
from dataset.models import MAX_CAPTIONS, CaptionDataset, CaptionRecord
from numerics.kernels import Vector
from numerics.rng import RngState

DEFAULT_WORDS: Tuple[str, ...] = (
    "a", "the", "man", "woman", "dog", "cat", "bird", "horse", "runs", "sits",
    "jumps", "eats", "on", "in", "near", "grass", "street", "beach", "water", "ball",
)

_TEMPLATE_ATTEMPTS = 1000


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_images: int = Field(ge=1)
    feature_dim: int = Field(ge=1)
    vocab_words: Tuple[str, ...] = DEFAULT_WORDS
    sentence_len_range: Tuple[int, int] = (3, 6)
    captions_per_image: int = Field(default=1, ge=1, le=MAX_CAPTIONS)
    swap_pair: Optional[Tuple[str, str]] = None
    noise: float = Field(default=0.5, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthConfig":
        low, high = self.sentence_len_range
        if not 1 <= low <= high:
            raise ValueError(
                f"sentence_len_range must satisfy 1 <= low <= high (got {low}, {high})"
            )
        if len(set(self.vocab_words)) != len(self.vocab_words) or not self.vocab_words:
            raise ValueError("vocab_words must be non-empty and distinct")
        if self.swap_pair is not None and self.swap_pair[0] == self.swap_pair[1]:
            raise ValueError("swap_pair must name two different tokens")
        return self


def branch_of(features: Sequence[float]) -> int:
    """Grammar branch of an image: its designated (largest) feature coordinate."""
    return int(np.argmax(np.asarray(features, dtype=np.float64)))


class SynthGrammar:
    """Per-branch caption templates drawn once from the grammar stream."""

    def __init__(self, config: SynthConfig, rng: RngState):
        self.config = config
        self.num_branches = min(config.num_images, config.feature_dim)
        excluded = set(config.swap_pair or ())
        self.pool: List[str] = [word for word in config.vocab_words if word not in excluded]
        if not self.pool:
            raise InvalidInputError("No vocabulary words left for the grammar")
        self.templates: List[Tuple[str, ...]] = self._draw_templates(rng)

    def _draw_templates(self, rng: RngState) -> List[Tuple[str, ...]]:
        low, high = self.config.sentence_len_range
        templates: List[Tuple[str, ...]] = []
        for _ in range(self.num_branches):
            for _ in range(_TEMPLATE_ATTEMPTS):
                length = low + rng.below(high - low + 1)
                words = [self.pool[rng.below(len(self.pool))] for _ in range(length)]
                if self.config.swap_pair is not None:
                    words[rng.below(length)] = self.config.swap_pair[0]
                if tuple(words) not in templates:
                    templates.append(tuple(words))
                    break
            else:
                raise InvalidInputError(
                    f"Cannot draw {self.num_branches} distinct templates "
                    f"from {len(self.pool)} words"
                )
        return templates

    def captions_for(self, branch: int, count: int, rng: RngState) -> List[str]:
        template = list(self.templates[branch])
        captions = []
        for index in range(count):
            words = list(template)
            if index > 0:
                slot = rng.below(len(words))
                if self.config.swap_pair is None or words[slot] != self.config.swap_pair[0]:
                    words[slot] = self.pool[rng.below(len(self.pool))]
            if self.config.swap_pair is not None:
                first, second = self.config.swap_pair
                words = [second if word == first and rng.random() < 0.5 else word for word in words]
            captions.append(" ".join(words))
        return captions

    def features_for(self, branch: int, rng: RngState) -> Vector:
        features = rng.uniform(0.0, self.config.noise, self.config.feature_dim)
        features[branch] += 1.0
        return features


def synth_dataset(
    num_images: int,
    feature_dim: int,
    vocab_words: Sequence[str] = DEFAULT_WORDS,
    sentence_len_range: Tuple[int, int] = (3, 6),
    rng: Optional[RngState] = None,
    captions_per_image: int = 1,
    swap_pair: Optional[Tuple[str, str]] = None,
    noise: float = 0.5,
) -> CaptionDataset:
    """Generate num_images records; image i uses branch i mod min(num_images, feature_dim)."""
    config = SynthConfig(
        num_images=num_images,
        feature_dim=feature_dim,
        vocab_words=tuple(vocab_words),
        sentence_len_range=tuple(sentence_len_range),
        captions_per_image=captions_per_image,
        swap_pair=swap_pair,
        noise=noise,
    )
    return synth_from_config(config, rng if rng is not None else RngState(0))


def synth_from_config(config: SynthConfig, rng: RngState) -> CaptionDataset:
    grammar = SynthGrammar(config, rng.fork(0))
    feature_rng = rng.fork(1)
    caption_rng = rng.fork(2)

    records = []
    width = len(str(config.num_images - 1))
    for index in range(config.num_images):
        branch = index % grammar.num_branches
        features = grammar.features_for(branch, feature_rng)
        captions = grammar.captions_for(branch, config.captions_per_image, caption_rng)
        records.append(
            CaptionRecord(
                image_id=f"synth-{index:0{width}d}",
                features=tuple(float(value) for value in features),
                captions=tuple(captions),
            )
        )
    return CaptionDataset(records=tuple(records), feature_dim=config.feature_dim)
