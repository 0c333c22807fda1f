"""
Caption tokenizer.

Lowercase, detach each of . , ! ? ; : " ( ) as a standalone token, split on
whitespace. Nothing else is normalized, so BLEU scores depend only on these
rules.
"""

import re
from typing import List

PUNCTUATION = '.,!?;:"()'
_PUNCTUATION_RE = re.compile("([" + re.escape(PUNCTUATION) + "])")


def tokenize(text: str) -> List[str]:
    return _PUNCTUATION_RE.sub(r" \1 ", text.lower()).split()


def detokenize(tokens: List[str]) -> str:
    """Join tokens with single spaces (the inverse used for caption output)."""
    return " ".join(tokens)
