"""Constrained greedy generation and Standard MIDI File export."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numcore as nc
from .constraints import force_decode
from .corpus.tokens import EOS, SEP, STRUCTURAL, parse_duration_token, parse_pitch_token
from .fileio import atomic_write_bytes, atomic_write_text
from .model import DmgNetwork, decode_step, encode, initial_state, make_batch

log = logging.getLogger(__name__)

PPQ = 480
TEMPO_US_PER_BEAT = 500_000  # 120 BPM
VELOCITY = 80


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    duration: Fraction
    syllable: int  # index into the source sequence


@dataclass
class Melody:
    events: list[NoteEvent] = field(default_factory=list)
    src: list[str] = field(default_factory=list)
    pitch_tokens: list[str] = field(default_factory=list)
    duration_tokens: list[str] = field(default_factory=list)
    style_id: int | None = None
    arity_mismatches: int = 0

    @property
    def pitches(self) -> list[int]:
        return [e.pitch for e in self.events]

    def to_json(self) -> dict:
        return {
            "style_id": self.style_id,
            "src": self.src,
            "pitch_tokens": self.pitch_tokens,
            "duration_tokens": self.duration_tokens,
            "events": [[e.pitch, str(e.duration), e.syllable] for e in self.events],
            "arity_mismatches": self.arity_mismatches,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Melody":
        events = [NoteEvent(int(p), Fraction(dur), int(s)) for p, dur, s in d["events"]]
        return cls(
            events,
            list(d.get("src", [])),
            list(d.get("pitch_tokens", [])),
            list(d.get("duration_tokens", [])),
            d.get("style_id"),
            int(d.get("arity_mismatches", 0)),
        )


def prepare_source(src: Sequence[str]) -> list[str]:
    """Append ``_EOS_`` if missing and check the structural layout."""
    src = list(src)
    if not src or src == [EOS]:
        raise ValueError("source has no syllables")
    if src[-1] != EOS:
        src.append(EOS)
    if EOS in src[:-1]:
        raise ValueError(f"{EOS} may only end the source")
    return src


def greedy_decode(net: DmgNetwork, sources: Sequence[Sequence[str]], style_ids, batch_size: int = 64) -> list[list[str]]:
    """Force-decoded greedy outputs, one token per source token."""
    style_ids = np.broadcast_to(np.asarray(style_ids, dtype=np.int64), (len(sources),))
    if np.any(style_ids < 0) or np.any(style_ids >= net.n_styles):
        raise ValueError(f"style id out of range 0..{net.n_styles - 1}")
    vocab = net.tgt_vocab
    out: list[list[str]] = []
    with nc.no_grad():
        for i in range(0, len(sources), batch_size):
            chunk = sources[i : i + batch_size]
            batch = make_batch(chunk, net.src_vocab, vocab)
            enc = encode(net.params, batch.src, style_ids[i : i + batch_size], batch.mask)
            state = initial_state(net.params, enc)
            inp = np.full(batch.size, vocab.start, dtype=np.int64)
            chosen = np.zeros(batch.src.shape, dtype=np.int64)
            for j in range(batch.steps):
                logp, state = decode_step(net.params, nc.take_rows(net.params["tgt_embed"], inp), state, enc)
                inp = force_decode(logp.data, batch.forced[:, j], batch.allowed)
                chosen[:, j] = inp
            for b, src in enumerate(chunk):
                out.append(vocab.decode_seq(chosen[b, : len(src)]))
    return out


def assemble(src: Sequence[str], pitch_tokens: Sequence[str], dur_tokens: Sequence[str] | None) -> tuple[list[NoteEvent], int]:
    """Zip pitch and duration groups per syllable; the shorter group cycles."""
    events, mismatches = [], 0
    for i, tok in enumerate(src):
        if tok in STRUCTURAL:
            continue
        pitches = parse_pitch_token(pitch_tokens[i])
        durs = parse_duration_token(dur_tokens[i]) if dur_tokens is not None else [Fraction(1)]
        n = max(len(pitches), len(durs))
        if dur_tokens is not None and len(pitches) != len(durs):
            mismatches += 1
        for k in range(n):
            events.append(NoteEvent(pitches[k % len(pitches)], durs[k % len(durs)], i))
    return events, mismatches


def _check_pair(pitch_net: DmgNetwork, duration_net: DmgNetwork | None) -> None:
    if pitch_net.stream != "pitch":
        raise ValueError(f"expected a pitch checkpoint, got stream {pitch_net.stream!r}")
    if duration_net is None:
        return
    if duration_net.stream != "duration":
        raise ValueError(f"expected a duration checkpoint, got stream {duration_net.stream!r}")
    if pitch_net.src_vocab != duration_net.src_vocab:
        raise ValueError("pitch and duration checkpoints were trained on different source vocabularies")
    if pitch_net.n_styles != duration_net.n_styles:
        raise ValueError("pitch and duration checkpoints disagree on the number of styles")


def generate_many(
    sources: Sequence[Sequence[str]],
    style_ids,
    pitch_net: DmgNetwork,
    duration_net: DmgNetwork | None = None,
) -> list[Melody]:
    """Melodies for many sources; without a duration net every note lasts one beat."""
    _check_pair(pitch_net, duration_net)
    sources = [prepare_source(s) for s in sources]
    style_ids = np.broadcast_to(np.asarray(style_ids, dtype=np.int64), (len(sources),))
    pitch = greedy_decode(pitch_net, sources, style_ids)
    durs = greedy_decode(duration_net, sources, style_ids) if duration_net is not None else [None] * len(sources)
    melodies = []
    for src, pt, dt, sid in zip(sources, pitch, durs, style_ids):
        events, mism = assemble(src, pt, dt)
        if mism:
            log.warning("%d syllables with pitch/duration arity mismatch", mism)
        melodies.append(Melody(events, src, pt, dt or [], int(sid), mism))
    return melodies


def generate(src: Sequence[str], style_id: int, pitch_net: DmgNetwork, duration_net: DmgNetwork) -> Melody:
    return generate_many([src], [style_id], pitch_net, duration_net)[0]


def lines_to_sources(lines: Sequence[Sequence[str]]) -> list[list[str]]:
    """Group lyric lines into consecutive two-line sources joined by ``|``."""
    lines = [list(l) for l in lines if l]
    out = []
    for i in range(0, len(lines), 2):
        pair = lines[i : i + 2]
        src = pair[0] + ([SEP] + pair[1] if len(pair) == 2 else [])
        out.append(src + [EOS])
    return out


def concat_melodies(parts: Sequence[Melody]) -> Melody:
    """Join melodies end to end; syllable indices keep counting across parts."""
    out = Melody(style_id=parts[0].style_id if parts else None)
    offset = 0
    for m in parts:
        out.events.extend(NoteEvent(e.pitch, e.duration, e.syllable + offset) for e in m.events)
        out.src.extend(m.src)
        out.pitch_tokens.extend(m.pitch_tokens)
        out.duration_tokens.extend(m.duration_tokens)
        out.arity_mismatches += m.arity_mismatches
        offset += len(m.src)
    return out


# -- MIDI ---------------------------------------------------------------------

def _vlq(n: int) -> bytes:
    if n < 0:
        raise ValueError("negative delta time")
    out = [n & 0x7F]
    n >>= 7
    while n:
        out.append(0x80 | (n & 0x7F))
        n >>= 7
    return bytes(reversed(out))


def _tick(beats: Fraction) -> int:
    return math.floor(beats * PPQ + Fraction(1, 2))


def midi_bytes(melody: Melody) -> bytes:
    """Format-0 SMF; note boundaries are rounded on the cumulative beat grid."""
    track = bytearray()
    if melody.events:
        track += b"\x00\xff\x51\x03" + TEMPO_US_PER_BEAT.to_bytes(3, "big")
        track += b"\x00\xc0\x00"
        onset = Fraction(0)
        last_tick = 0
        for e in melody.events:
            if not 0 <= e.pitch <= 127:
                raise ValueError(f"pitch {e.pitch} outside MIDI range")
            if e.duration <= 0:
                raise ValueError(f"non-positive duration {e.duration}")
            start, end = _tick(onset), _tick(onset + e.duration)
            track += _vlq(start - last_tick) + bytes([0x90, e.pitch, VELOCITY])
            track += _vlq(end - start) + bytes([0x80, e.pitch, 0])
            last_tick = end
            onset += e.duration
    track += b"\x00\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, PPQ)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


def to_midi(melody: Melody, path: str | Path) -> Path:
    atomic_write_bytes(path, midi_bytes(melody))
    return Path(path)


def write_melody_json(melody: Melody, path: str | Path) -> Path:
    atomic_write_text(path, json.dumps(melody.to_json(), ensure_ascii=False, sort_keys=True, indent=1) + "\n")
    return Path(path)


def read_melody_json(path: str | Path) -> Melody:
    return Melody.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
