import hashlib
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from core.exceptions import InvalidInputError, InvalidTokenError, ParseError, SchemaError
from core.utils.file_utils import write_text

START_ID = 0
STOP_ID = 1
UNK_ID = 2

# Angle brackets never survive as a corpus token with these exact spellings:
# build_vocab skips them, so reserved surface forms cannot collide.
START_TOKEN = "<start>"
STOP_TOKEN = "<stop>"
UNK_TOKEN = "<unk>"
RESERVED_TOKENS: Tuple[str, ...] = (START_TOKEN, STOP_TOKEN, UNK_TOKEN)
NUM_RESERVED = len(RESERVED_TOKENS)


class Vocabulary:
    """Dense token <-> id map; ids 0, 1, 2 are START, STOP, UNK."""

    def __init__(self, words: Sequence[str]):
        words = list(words)
        seen = set()
        for word in words:
            if word in RESERVED_TOKENS:
                raise InvalidInputError(f"{word!r} is a reserved token")
            if not word or any(ch.isspace() for ch in word):
                raise InvalidInputError(f"{word!r} is not a valid vocabulary token")
            if word in seen:
                raise InvalidInputError(f"Duplicate vocabulary token {word!r}")
            seen.add(word)

        self._id_to_token: List[str] = list(RESERVED_TOKENS) + words
        self._token_to_id: Dict[str, int] = {
            word: index for index, word in enumerate(self._id_to_token) if index >= NUM_RESERVED
        }
        self.content_hash = hashlib.sha256("\n".join(self._id_to_token).encode("utf-8")).hexdigest()

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._id_to_token == other._id_to_token

    def __contains__(self, word: str) -> bool:
        return word in self._token_to_id

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)}, hash={self.content_hash[:12]})"

    @property
    def size(self) -> int:
        return len(self)

    @property
    def words(self) -> List[str]:
        """Non-reserved tokens in id order."""
        return self._id_to_token[NUM_RESERVED:]

    def id_of(self, word: str) -> int:
        """Id of a corpus token; unknown tokens (and reserved spellings) map to UNK."""
        return self._token_to_id.get(word, UNK_ID)

    def lookup(self, word: str) -> int:
        """Id of a corpus token, raising for unknown ones."""
        try:
            return self._token_to_id[word]
        except KeyError:
            raise InvalidTokenError(f"{word!r} is not in the vocabulary") from None

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._id_to_token):
            raise InvalidTokenError(f"Token id {token_id} outside vocabulary of size {len(self)}")
        return self._id_to_token[token_id]

    def save(self, path: Path) -> None:
        """One non-reserved token per line; line i holds id i + 3."""
        write_text("".join(f"{word}\n" for word in self.words), path)

    @classmethod
    def load(cls, path: Path) -> "Vocabulary":
        words = []
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                word = line.rstrip("\n")
                if not word:
                    raise ParseError(line_number, "empty vocabulary entry")
                words.append(word)
        try:
            return cls(words)
        except InvalidInputError as exc:
            raise SchemaError(f"{path}: {exc.message}") from exc


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 5) -> Vocabulary:
    """
    Keep tokens seen at least min_count times.

    Ids follow descending frequency, ties broken lexicographically, after the
    three reserved ids.
    """
    if min_count < 1:
        raise InvalidInputError(f"min_count must be at least 1 (got {min_count})")
    counts = Counter()
    sentences = 0
    for tokens in corpus:
        sentences += 1
        counts.update(tokens)
    if sentences == 0:
        raise InvalidInputError("Cannot build a vocabulary from an empty corpus")

    kept = [
        (word, count) for word, count in counts.items()
        if count >= min_count and word not in RESERVED_TOKENS
    ]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary([word for word, _ in kept])


def encode(tokens: Sequence[str], vocab: Vocabulary) -> List[int]:
    """[START] + ids (unknown -> UNK) + [STOP]."""
    return [START_ID] + [vocab.id_of(token) for token in tokens] + [STOP_ID]


def decode(ids: Sequence[int], vocab: Vocabulary) -> List[str]:
    """Surface tokens with one leading START and one trailing STOP stripped."""
    ids = [int(token_id) for token_id in ids]
    tokens = [vocab.token_of(token_id) for token_id in ids]
    if ids and ids[0] == START_ID:
        tokens = tokens[1:]
        ids = ids[1:]
    if ids and ids[-1] == STOP_ID:
        tokens = tokens[:-1]
    return tokens
