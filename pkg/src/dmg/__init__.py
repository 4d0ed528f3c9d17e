"""Style-conditioned lyric-to-melody generation with a mutual-information regulariser."""

__version__ = "0.1.0"
