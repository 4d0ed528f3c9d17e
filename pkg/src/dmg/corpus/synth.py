"""Synthetic C-major lyric/melody corpus with register-separated styles.

Songs of style ``k`` random-walk over the C-major scale within a fifth of a
style-specific C (C4 for style 0, C5 for style 1 when K=2), so the style is
visible in the pitch register but not in the lyrics.  Lines lean on chord
tones at cadences and the song closes on the tonic, which keeps the key
unambiguous for profile-based estimation.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .dataset import Song

SYLLABLES = (
    "ai an ba bai bei bu chang chu da de di dong fei feng gao guang hai he hua jia "
    "jian jin kai lai lan li liang lu ma men ming ni qing ren ri shan shang shi shui "
    "tian wo xi xin xue yan ye yi yue yun zai zhi"
).split()

C_MAJOR_PCS = (0, 2, 4, 5, 7, 9, 11)
DURATIONS = (Fraction(1, 4), Fraction(1, 2), Fraction(1), Fraction(2))
# chord tones (C, E, G) sound longer than passing tones
_DUR_WEIGHTS_CHORD = (0.05, 0.3, 0.45, 0.2)
_DUR_WEIGHTS_PASSING = (0.35, 0.5, 0.15, 0.0)
_STEPS = (-2, -1, 0, 1, 2)
_STEP_WEIGHTS = (0.12, 0.3, 0.16, 0.3, 0.12)


def style_center(style: int, n_styles: int) -> int:
    """MIDI C around which style ``style`` is centred."""
    return 60 + 12 * style - 12 * ((n_styles - 1) // 2)


def _scale_window(center: int) -> list[int]:
    return [p for p in range(center - 7, center + 8) if p % 12 in C_MAJOR_PCS]


def _line(rng, scale: list[int], tonic_idx: int, idx: int, n: int, final: bool):
    chord = [i for i, p in enumerate(scale) if p % 12 in (0, 4, 7)]
    groups = []
    for j in range(n):
        last = j == n - 1
        if last:
            if final or rng.random() < 0.6:
                idx = tonic_idx
            else:
                idx = min((i for i in chord if i != tonic_idx), key=lambda i: abs(i - idx))
        elif j:
            if rng.random() < 0.3:
                step = int(np.sign(tonic_idx - idx))
            else:
                step = int(rng.choice(_STEPS, p=_STEP_WEIGHTS))
            idx = int(np.clip(idx + step, 0, len(scale) - 1))
        if last:
            dur = DURATIONS[3] if final else DURATIONS[int(rng.integers(2, 4))]
            groups.append([(scale[idx], dur)])
        elif rng.random() < 0.12:
            nxt = int(np.clip(idx + rng.choice((-1, 1)), 0, len(scale) - 1))
            half = DURATIONS[int(rng.integers(0, 2))]
            groups.append([(scale[idx], half), (scale[nxt], half)])
            idx = nxt
        else:
            w = _DUR_WEIGHTS_CHORD if scale[idx] % 12 in (0, 4, 7) else _DUR_WEIGHTS_PASSING
            groups.append([(scale[idx], DURATIONS[rng.choice(4, p=w)])])
    return groups, idx


def generate_synthetic_corpus(n_songs: int, n_styles: int, seed: int) -> list[Song]:
    if n_songs < 10:
        raise ValueError(f"need at least 10 songs, got {n_songs}")
    if n_styles < 1:
        raise ValueError(f"need at least one style, got {n_styles}")
    rng = np.random.Generator(np.random.PCG64(seed))
    songs = []
    for i in range(n_songs):
        style = i % n_styles
        scale = _scale_window(style_center(style, n_styles))
        tonic_idx = idx = scale.index(style_center(style, n_styles))
        n_lines = int(rng.integers(2, 7))
        lines, notes = [], []
        for li in range(n_lines):
            n_syl = int(rng.integers(4, 11))
            lines.append([SYLLABLES[k] for k in rng.integers(0, len(SYLLABLES), n_syl)])
            groups, idx = _line(rng, scale, tonic_idx, idx, n_syl, final=li == n_lines - 1)
            notes.extend(groups)
        songs.append(Song(f"synth-{i:05d}", lines, notes, None, style))
    return songs
