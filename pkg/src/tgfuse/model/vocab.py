import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigurationError, TruncationError

logger = logging.getLogger(__name__)

DEFAULT_VOCAB_PATH = Path(__file__).resolve().parent.parent / "data" / "vocab.txt"


class Vocabulary:
    """Word-level vocabulary; ids 0-3 are reserved for PAD, SOS, EOS and UNK."""

    PAD = 0
    SOS = 1
    EOS = 2
    UNK = 3
    RESERVED = ("<pad>", "<sos>", "<eos>", "<unk>")

    def __init__(self, words: Iterable[str]):
        words = list(words)
        duplicates = sorted({w for w in words if words.count(w) > 1})
        if duplicates:
            raise ConfigurationError(f"vocabulary has duplicate words: {duplicates}")
        clash = sorted(set(words) & set(self.RESERVED))
        if clash:
            raise ConfigurationError(f"vocabulary uses reserved tokens: {clash}")
        self._id_to_token: List[str] = list(self.RESERVED) + words
        self._token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self._id_to_token)}

    @classmethod
    def from_file(cls, path: Optional[Union[str, Path]] = None) -> "Vocabulary":
        """One token per line; line k (0-based) gets id k + 4."""
        p = Path(path) if path else DEFAULT_VOCAB_PATH
        if not p.is_file():
            raise ConfigurationError(f"vocabulary file not found: {p}")
        lines = [line.strip() for line in p.read_text(encoding="utf-8").splitlines()]
        return cls(line for line in lines if line)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, word: str) -> bool:
        return word in self._token_to_id

    @property
    def words(self) -> List[str]:
        return self._id_to_token[len(self.RESERVED):]

    def id_of(self, word: str) -> int:
        token_id = self._token_to_id.get(word)
        if token_id is None:
            logger.warning("unknown token word=%s", word)
            return self.UNK
        return token_id

    def token(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def encode(self, words: Sequence[str]) -> List[int]:
        """Wrap the word ids in SOS ... EOS."""
        return [self.SOS] + [self.id_of(w) for w in words] + [self.EOS]

    def tokenize(self, text: str) -> List[int]:
        return self.encode(text.split())

    def decode(self, token_ids: Iterable[int]) -> List[str]:
        return [self._id_to_token[i] for i in token_ids if i >= len(self.RESERVED)]

    @classmethod
    def pad(cls, token_ids: Sequence[int], max_len: int) -> np.ndarray:
        """Right-pad with PAD to `max_len`."""
        if len(token_ids) > max_len:
            raise TruncationError(f"token sequence of length {len(token_ids)} exceeds max length {max_len}")
        out = np.full(max_len, cls.PAD, dtype=np.int64)
        out[:len(token_ids)] = token_ids
        return out
