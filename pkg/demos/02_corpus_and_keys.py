"""
From songs to aligned pairs
===========================

Generate the synthetic corpus, look at key estimation and
normalization, then cut songs into training pairs.
"""

from collections import Counter

import numpy as np

from dmg.corpus import (
    Key,
    estimate_key,
    generate_synthetic_corpus,
    normalize_key,
    pair_lines,
    preprocess,
)

songs = generate_synthetic_corpus(200, n_styles=2, seed=7)
song = songs[0]
print(song.id, "style", song.style, "lines", len(song.lines))
print("first line:", " ".join(song.lines[0]))
print("first groups:", song.notes[:4])

# register is what separates the two styles
for k in (0, 1):
    pitches = [p for s in songs if s.style == k for g in s.notes for p, _ in g]
    print(f"style {k}: mean pitch {np.mean(pitches):.1f}")

print(Counter(str(estimate_key(s)) for s in songs).most_common(4))

# move a song to D major, estimate, and bring it back
moved = song.replace(notes=[[(p + 2, d) for p, d in g] for g in song.notes])
print("moved song reads as", estimate_key(moved))
back = normalize_key(moved)
print("normalized:", back.key, [g[0][0] for g in back.notes[:6]])
print("G major offset", normalize_key(song.replace(key=Key.parse("G:maj"))).notes[0][0][0] - song.notes[0][0][0])

# neighbouring lines become one source with "|" between them
pair = pair_lines(song)[0]
print(" ".join(pair.src))
print(" ".join(pair.tgt_pitch))
print(" ".join(pair.tgt_dur))

split = preprocess(songs, seed=0)
print({name: len(pairs) for name, pairs in split.items()})
