from dataclasses import dataclass
from typing import List, Tuple


@dataclass(frozen=True)
class NeighborReport:
    """A query word and its nearest words, most similar first."""

    query: str
    neighbors: Tuple[Tuple[str, float], ...]

    @property
    def tokens(self) -> List[str]:
        return [token for token, _ in self.neighbors]

    def rows(self) -> List[Tuple[str, float]]:
        return list(self.neighbors)
