from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from captioner.models import LstmState


class DecodeMode(str, Enum):
    BEAM = "beam"
    GREEDY = "greedy"
    SAMPLE = "sample"


class DecodeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    beam_width: int = Field(default=20, ge=1)
    max_len: int = Field(default=30, ge=1)
    mode: DecodeMode = DecodeMode.BEAM
    seed: int = Field(default=0, ge=0, lt=2**64)
    nbest: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _nbest_within_beam(self) -> "DecodeConfig":
        if self.mode is DecodeMode.BEAM and self.nbest > self.beam_width:
            raise ValueError(f"nbest ({self.nbest}) cannot exceed beam_width ({self.beam_width})")
        return self


@dataclass(frozen=True)
class BeamHypothesis:
    """
    A partial or finished sentence.

    `states` holds one LSTM state per ensemble member, each having consumed
    every token except a final STOP.
    """

    tokens: Tuple[int, ...]
    log_prob: float
    states: Tuple[LstmState, ...]
    finished: bool = False

    @property
    def sort_key(self):
        return (-self.log_prob, self.tokens)
