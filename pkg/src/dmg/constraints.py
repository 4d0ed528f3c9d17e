"""Force decoding: keep generated structure aligned with the source.

Where the source holds ``"|"`` or ``"_EOS_"`` the output must hold the same
token.  Everywhere else the output must be a music token, so a top choice
of ``"|"`` / ``"_EOS_"`` falls through to the best music token.  The other
reserved tokens (``"_START_"``, ``"_UNK_"``) are never emitted either,
since they do not parse as notes.
"""

from __future__ import annotations

import numpy as np

from .corpus.tokens import RESERVED, STRUCTURAL, TokenVocab


def music_mask(vocab: TokenVocab) -> np.ndarray:
    m = np.ones(len(vocab), dtype=bool)
    for tok in RESERVED:
        m[vocab.stoi[tok]] = False
    return m


def force_decode(scores: np.ndarray, forced: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Batched filter: ``scores`` [B, V], ``forced`` [B] (index or -1) -> indices [B]."""
    if not allowed.any():
        raise ValueError("vocabulary has no music tokens to choose from")
    best = np.where(allowed, scores, -np.inf).argmax(axis=-1)
    return np.where(forced >= 0, forced, best)


def force_decode_filter(x_j: str, p_j, vocab: TokenVocab) -> int:
    """Token index to emit at a position whose source token is ``x_j``."""
    if x_j in STRUCTURAL:
        return vocab.stoi[x_j]
    allowed = music_mask(vocab)
    p_j = np.asarray(p_j, dtype=np.float64)
    if p_j.shape != (len(vocab),):
        raise ValueError(f"distribution has shape {p_j.shape}, vocabulary size is {len(vocab)}")
    return int(force_decode(p_j[None, :], np.array([-1]), allowed)[0])
