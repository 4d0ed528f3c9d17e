"""Songs, preprocessing, tokenisation, splitting and the synthetic corpus."""

from .dataset import (
    AlignedPair,
    CorpusSplit,
    Song,
    dumps_jsonl,
    line_syllables,
    preprocess,
    read_split,
    write_split,
    pair_lines,
    read_jsonl,
    read_pairs,
    read_songs,
    song_from_json,
    song_to_json,
    split_corpus,
)
from .keys import A_MINOR, C_MAJOR, Key, estimate_key, normalize_key, transposition_offset
from .synth import generate_synthetic_corpus
from .tokens import (
    EOS,
    RESERVED,
    SEP,
    START,
    STRUCTURAL,
    UNK,
    TokenVocab,
    build_music_tokens,
    load_dictionary,
    parse_duration_token,
    parse_music_tokens,
    parse_pitch_token,
    syllabify,
)
