"""Songs, aligned line pairs, corpus splits and their JSON-lines files."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..fileio import atomic_write_text
from .keys import Key, normalize_key
from .tokens import EOS, SEP, STRUCTURAL, UNK, build_music_tokens, strip_tone

Note = tuple[int, Fraction]


@dataclass(frozen=True)
class Song:
    """Lyric lines with one note group per syllable.

    ``notes`` runs over the syllables of all lines in order.  ``style`` is
    the generating style of synthetic songs and is used for evaluation only.
    """

    id: str
    lines: list[list[str]]
    notes: list[list[Note]]
    key: Key | None = None
    style: int | None = None

    def __post_init__(self):
        n_syl = sum(len(line) for line in self.lines)
        if n_syl != len(self.notes):
            raise ValueError(
                f"song {self.id!r}: {n_syl} syllables but {len(self.notes)} note groups"
            )
        for i, group in enumerate(self.notes):
            if not group:
                raise ValueError(f"song {self.id!r}: empty note group at syllable {i}")
            for p, d in group:
                if not 0 <= p <= 127:
                    raise ValueError(f"song {self.id!r}: pitch {p} outside 0-127")
                if d <= 0:
                    raise ValueError(f"song {self.id!r}: non-positive duration {d}")

    @property
    def syllables(self) -> list[str]:
        return [s for line in self.lines for s in line]

    def line_groups(self) -> list[list[list[Note]]]:
        out, i = [], 0
        for line in self.lines:
            out.append(self.notes[i : i + len(line)])
            i += len(line)
        return out

    def replace(self, **changes) -> "Song":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class AlignedPair:
    src: list[str]
    tgt_pitch: list[str]
    tgt_dur: list[str]
    song_id: str = ""
    style: int | None = None

    def __post_init__(self):
        n = len(self.src)
        if len(self.tgt_pitch) != n or len(self.tgt_dur) != n:
            raise ValueError(
                f"misaligned pair from {self.song_id!r}: lengths "
                f"{n}/{len(self.tgt_pitch)}/{len(self.tgt_dur)}"
            )
        for i, s in enumerate(self.src):
            if (s in STRUCTURAL or self.tgt_pitch[i] in STRUCTURAL or self.tgt_dur[i] in STRUCTURAL) and not (
                s == self.tgt_pitch[i] == self.tgt_dur[i]
            ):
                raise ValueError(f"structural tokens disagree at position {i} in {self.song_id!r}")
        if n == 0 or self.src[-1] != EOS or self.src.count(EOS) != 1:
            raise ValueError(f"pair from {self.song_id!r} must end with exactly one {EOS}")

    def to_json(self) -> dict:
        d = {"song_id": self.song_id, "src": self.src, "tgt_pitch": self.tgt_pitch, "tgt_dur": self.tgt_dur}
        if self.style is not None:
            d["style"] = self.style
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "AlignedPair":
        return cls(list(d["src"]), list(d["tgt_pitch"]), list(d["tgt_dur"]), d.get("song_id", ""), d.get("style"))


@dataclass
class CorpusSplit:
    train: list[AlignedPair] = field(default_factory=list)
    valid: list[AlignedPair] = field(default_factory=list)
    test: list[AlignedPair] = field(default_factory=list)

    def items(self):
        return (("train", self.train), ("valid", self.valid), ("test", self.test))


def _join(lines_tokens: Sequence[Sequence[str]]) -> list[str]:
    out: list[str] = []
    for i, toks in enumerate(lines_tokens):
        if i:
            out.append(SEP)
        out.extend(toks)
    out.append(EOS)
    return out


def pair_lines(song: Song) -> list[AlignedPair]:
    """One aligned pair per pair of neighbouring lines, (1,2), (2,3), ..."""
    groups = song.line_groups()
    lines = [(song.lines[i], groups[i]) for i in range(len(song.lines)) if song.lines[i]]
    if not lines:
        return []
    windows = [lines] if len(lines) == 1 else [lines[i : i + 2] for i in range(len(lines) - 1)]
    pairs = []
    for window in windows:
        src = _join([syl for syl, _ in window])
        toks = [[build_music_tokens(g) for g in gs] for _, gs in window]
        pitch = _join([[p for p, _ in line] for line in toks])
        dur = _join([[d for _, d in line] for line in toks])
        pairs.append(AlignedPair(src, pitch, dur, song.id, song.style))
    return pairs


def split_corpus(pairs_by_song: Mapping[str, Sequence[AlignedPair]], seed: int) -> CorpusSplit:
    """Shuffle song ids with ``seed`` and cut 8:1:1; rounding favours train."""
    ids = sorted(pairs_by_song)
    if len(ids) < 10:
        raise ValueError(f"need at least 10 songs to split 8:1:1, got {len(ids)}")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_hold = len(ids) // 10
    n_train = len(ids) - 2 * n_hold
    parts = (shuffled[:n_train], shuffled[n_train : n_train + n_hold], shuffled[n_train + n_hold :])
    gather = lambda sel: [p for sid in sel for p in pairs_by_song[sid]]
    return CorpusSplit(*(gather(sel) for sel in parts))


# -- JSON lines ---------------------------------------------------------------

def line_syllables(line, dictionary: Mapping[str, str] | None) -> list[str]:
    if isinstance(line, str):
        line = [ch for ch in line if not ch.isspace()]
    if dictionary is None:
        return [str(t) for t in line]
    out = []
    for tok in line:
        if tok in dictionary:
            out.append(strip_tone(dictionary[tok]))
        elif tok.isascii():
            out.append(tok)
        else:
            out.append(UNK)
    return out


def song_from_json(d: Mapping, dictionary: Mapping[str, str] | None = None) -> Song:
    lines = [line_syllables(line, dictionary) for line in d["lines"]]
    notes = [[(int(p), Fraction(str(dur))) for p, dur in group] for group in d["notes"]]
    key = Key.parse(d["key"]) if d.get("key") else None
    return Song(str(d["id"]), lines, notes, key, d.get("style"))


def song_to_json(song: Song) -> dict:
    d = {
        "id": song.id,
        "lines": song.lines,
        "notes": [[[p, str(dur)] for p, dur in g] for g in song.notes],
        "key": str(song.key) if song.key is not None else None,
    }
    if song.style is not None:
        d["style"] = song.style
    return d


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def dumps_jsonl(records: Iterable[Mapping]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def read_songs(path: str | Path, dictionary: Mapping[str, str] | None = None) -> list[Song]:
    return [song_from_json(d, dictionary) for d in read_jsonl(path)]


def read_pairs(path: str | Path) -> list[AlignedPair]:
    return [AlignedPair.from_json(d) for d in read_jsonl(path)]


def preprocess(songs: Sequence[Song], seed: int) -> CorpusSplit:
    """Key-normalize every song, cut it into line pairs and split by song."""
    by_song: dict[str, list[AlignedPair]] = {}
    for song in songs:
        if song.id in by_song:
            raise ValueError(f"duplicate song id {song.id!r}")
        by_song[song.id] = pair_lines(normalize_key(song))
    return split_corpus(by_song, seed)


def write_split(split: CorpusSplit, out_dir: str | Path) -> list[Path]:
    """Write ``train/valid/test.jsonl`` under ``out_dir`` atomically per file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, pairs in split.items():
        path = out_dir / f"{name}.jsonl"
        atomic_write_text(path, dumps_jsonl(p.to_json() for p in pairs))
        paths.append(path)
    return paths


def read_split(directory: str | Path) -> CorpusSplit:
    d = Path(directory)
    return CorpusSplit(*(read_pairs(d / f"{name}.jsonl") for name in ("train", "valid", "test")))
