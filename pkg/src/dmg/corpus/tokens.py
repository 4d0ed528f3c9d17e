"""Vocabularies, composite music tokens and syllabification."""

from __future__ import annotations

import unicodedata
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

START = "_START_"
EOS = "_EOS_"
SEP = "|"
UNK = "_UNK_"
RESERVED = (START, EOS, SEP, UNK)
STRUCTURAL = frozenset((SEP, EOS))


class TokenVocab:
    """Dense token <-> index map with the reserved tokens at indices 0-3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]]) -> "TokenVocab":
        """Vocabulary over all tokens seen, in sorted order (input-order independent)."""
        seen = {t for seq in sequences for t in seq if t not in RESERVED}
        return cls(sorted(seen, key=_token_sort_key))

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    def decode(self, index: int) -> str:
        return self.itos[index]

    def encode_seq(self, tokens: Sequence[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode_seq(self, indices: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in indices]

    @property
    def start(self) -> int:
        return self.stoi[START]

    @property
    def eos(self) -> int:
        return self.stoi[EOS]

    @property
    def sep(self) -> int:
        return self.stoi[SEP]

    @property
    def unk(self) -> int:
        return self.stoi[UNK]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "TokenVocab":
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary snapshot does not start with the reserved tokens")
        return cls(tokens[len(RESERVED):])

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenVocab) and self.itos == other.itos


def _token_sort_key(tok: str):
    # numeric composites sort numerically ("60,62" after "60"), everything else by text
    try:
        return (0, tuple(Fraction(p) for p in tok.split(",")), tok)
    except (ValueError, ZeroDivisionError):
        return (1, (), tok)


# -- composite music tokens ---------------------------------------------------

def format_duration(d: Fraction) -> str:
    return str(Fraction(d))


def build_music_tokens(group: Sequence[tuple[int, Fraction]]) -> tuple[str, str]:
    """All notes sung on one syllable as one pitch token and one duration token."""
    if not group:
        raise ValueError("a note group must hold at least one note")
    pitch = ",".join(str(int(p)) for p, _ in group)
    dur = ",".join(format_duration(d) for _, d in group)
    return pitch, dur


def parse_pitch_token(tok: str) -> list[int]:
    if tok in RESERVED:
        raise ValueError(f"{tok!r} is not a pitch token")
    return [int(p) for p in tok.split(",")]


def parse_duration_token(tok: str) -> list[Fraction]:
    if tok in RESERVED:
        raise ValueError(f"{tok!r} is not a duration token")
    return [Fraction(d) for d in tok.split(",")]


def parse_music_tokens(pitch_tok: str, dur_tok: str) -> list[tuple[int, Fraction]]:
    pitches, durs = parse_pitch_token(pitch_tok), parse_duration_token(dur_tok)
    if len(pitches) != len(durs):
        raise ValueError(f"arity mismatch between {pitch_tok!r} and {dur_tok!r}")
    return list(zip(pitches, durs))


# -- syllabification ----------------------------------------------------------

def strip_tone(syllable: str) -> str:
    """Drop tone digits and tone diacritics; keeps the umlaut of u."""
    s = syllable.strip().rstrip("012345")
    decomposed = unicodedata.normalize("NFD", s)
    kept = "".join(ch for ch in decomposed if not unicodedata.combining(ch) or ch == "\u0308")
    return unicodedata.normalize("NFC", kept).lower()


def load_dictionary(path: str | Path) -> dict[str, str]:
    """Read a ``character<TAB>syllable`` UTF-8 file; ``#`` lines are comments."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected character<TAB>syllable")
            table.setdefault(parts[0], strip_tone(parts[1]))
    return table


def syllabify(line: str, dictionary: Mapping[str, str]) -> list[str]:
    """Map each non-space character of ``line`` to its toneless syllable."""
    return [strip_tone(dictionary[ch]) if ch in dictionary else UNK for ch in line if not ch.isspace()]
