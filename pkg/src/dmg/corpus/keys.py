"""Key estimation (Krumhansl-Kessler profile correlation) and key normalisation."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])

PITCH_CLASS_NAMES = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"]
_NAME_TO_PC = {
    "C": 0, "B#": 0, "C#": 1, "DB": 1, "D": 2, "D#": 3, "EB": 3, "E": 4, "FB": 4, "F": 5,
    "E#": 5, "F#": 6, "GB": 6, "G": 7, "G#": 8, "AB": 8, "A": 9, "A#": 10, "BB": 10,
    "B": 11, "CB": 11,
}
_KEY_RE = re.compile(r"^\s*([A-Ga-g][#b]?)\s*:\s*(maj|min|major|minor)\s*$")


@dataclass(frozen=True, order=True)
class Key:
    tonic: int
    mode: str  # "maj" | "min"

    def __post_init__(self):
        if not 0 <= self.tonic < 12:
            raise ValueError(f"tonic pitch class out of range: {self.tonic}")
        if self.mode not in ("maj", "min"):
            raise ValueError(f"mode must be 'maj' or 'min', got {self.mode!r}")

    def __str__(self) -> str:
        return f"{PITCH_CLASS_NAMES[self.tonic]}:{self.mode}"

    @classmethod
    def parse(cls, text: str) -> "Key":
        m = _KEY_RE.match(text)
        if not m:
            raise ValueError(f"cannot parse key {text!r}; expected e.g. 'G:maj' or 'F#:min'")
        name = m.group(1)
        pc = _NAME_TO_PC[name[0].upper() + name[1:].upper()]
        return cls(pc, m.group(2)[:3])


C_MAJOR = Key(0, "maj")
A_MINOR = Key(9, "min")


def pitch_class_histogram(notes) -> np.ndarray:
    """Duration-weighted pitch-class histogram of ``(pitch, duration)`` pairs."""
    hist = np.zeros(12)
    for pitch, dur in notes:
        hist[pitch % 12] += float(dur)
    return hist


def key_correlations(hist: np.ndarray) -> list[tuple[Key, float]]:
    """Pearson correlation of ``hist`` with all 24 rotated profiles.

    Ordered by tonic, major before minor (the tie-break order).
    """
    out = []
    for tonic in range(12):
        for mode, prof in (("maj", KK_MAJOR), ("min", KK_MINOR)):
            out.append((Key(tonic, mode), _pearson(hist, np.roll(prof, tonic))))
    return out


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt((da * da).sum() * (db * db).sum())
    return 0.0 if den == 0 else float((da * db).sum() / den)


def estimate_key(song) -> Key:
    notes = [n for group in song.notes for n in group]
    if not notes:
        raise ValueError(f"song {getattr(song, 'id', '?')!r} has no notes")
    best, best_r = None, -np.inf
    for key, r in key_correlations(pitch_class_histogram(notes)):
        # strict improvement keeps the earliest key among (near-)ties
        if r > best_r + 1e-12:
            best, best_r = key, r
    return best


def transposition_offset(key: Key) -> int:
    """Semitone shift in (-6, +6] moving the tonic to C (major) or A (minor)."""
    target = 0 if key.mode == "maj" else 9
    off = (target - key.tonic) % 12
    return off - 12 if off > 6 else off


def _fit_range(pitch: int) -> int:
    while pitch < 0:
        pitch += 12
    while pitch > 127:
        pitch -= 12
    return pitch


def normalize_key(song):
    """Transpose ``song`` to C major / A minor; annotated key wins over estimation."""
    key = song.key if song.key is not None else estimate_key(song)
    off = transposition_offset(key)
    notes = [[(_fit_range(p + off), d) for p, d in group] for group in song.notes]
    return song.replace(notes=notes, key=C_MAJOR if key.mode == "maj" else A_MINOR)
