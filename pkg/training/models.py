from dataclasses import dataclass
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from captioner.models import Parameters


class TrainConfig(BaseModel):
    """SGD with a fixed learning rate and no momentum."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Zero is allowed so a run can be replayed without updates
    learning_rate: float = Field(ge=0.0)
    epochs: int = Field(ge=1)
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    grad_clip: Optional[float] = Field(default=None, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    shuffle: bool = True
    batch_size: int = Field(default=1, ge=1)
    init_scale: float = Field(default=0.08, ge=0.0)


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: Tuple[float, ...]  # mean loss per predicted word, one per epoch
    params: Parameters
    wall_time_seconds: float
    words_per_epoch: int
    examples_per_epoch: int

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]
