"""Objective melody metrics: tonality, pitch histograms, style divergence,
alignment and posterior (style-recovery) accuracy."""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numcore as nc
from .corpus.tokens import STRUCTURAL
from .decode import Melody
from .model import DmgNetwork, ExpectedSequence, encode, make_batch, posterior, restyle, rollout_expected

C_MAJOR_PCS = frozenset((0, 2, 4, 5, 7, 9, 11))


def _pitches(melody) -> list[int]:
    return melody.pitches if isinstance(melody, Melody) else [int(p) for p in melody]


def tonality_score(melody) -> float:
    """Fraction of notes whose pitch class lies in C, D, E, F, G, A, B."""
    pitches = _pitches(melody)
    if not pitches:
        raise ValueError("tonality of an empty melody")
    return sum(p % 12 in C_MAJOR_PCS for p in pitches) / len(pitches)


def pitch_histogram(melodies: Sequence, style_id: int | None = None) -> np.ndarray:
    """128-bin MIDI pitch counts, optionally only melodies generated with ``style_id``."""
    hist = np.zeros(128, dtype=np.int64)
    for m in melodies:
        if style_id is not None and getattr(m, "style_id", None) != style_id:
            continue
        for p in _pitches(m):
            hist[p] += 1
    return hist


def histogram_csv(hist: np.ndarray) -> str:
    return "pitch,count\n" + "".join(f"{i},{int(c)}\n" for i, c in enumerate(hist))


def histogram_gnuplot(hist: np.ndarray) -> str:
    return "# pitch count\n" + "".join(f"{i} {int(c)}\n" for i, c in enumerate(hist))


def _entropy_terms(p: np.ndarray, q: np.ndarray) -> float:
    nz = p > 0
    return float((p[nz] * np.log2(p[nz] / q[nz])).sum())


def style_divergence(hist_a, hist_b) -> float:
    """Jensen-Shannon divergence (base 2, in [0, 1]) of two count histograms."""
    a = np.asarray(hist_a, dtype=np.float64)
    b = np.asarray(hist_b, dtype=np.float64)
    if a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("histogram with zero total count")
    a, b = a / a.sum(), b / b.sum()
    m = 0.5 * (a + b)
    return min(max(0.5 * _entropy_terms(a, m) + 0.5 * _entropy_terms(b, m), 0.0), 1.0)


def is_aligned(src: Sequence[str], out: Sequence[str]) -> bool:
    if len(src) != len(out):
        return False
    return all((s in STRUCTURAL or o in STRUCTURAL) <= (s == o) for s, o in zip(src, out))


def alignment_rate(melodies: Sequence[Melody]) -> float:
    """Share of melodies whose token streams line up with their sources."""
    if not melodies:
        return 0.0
    ok = 0
    for m in melodies:
        streams = [m.pitch_tokens] + ([m.duration_tokens] if m.duration_tokens else [])
        ok += all(is_aligned(m.src, s) for s in streams)
    return ok / len(melodies)


def posterior_predictions(net: DmgNetwork, melodies: Sequence[Melody], mode: str = "greedy") -> np.ndarray:
    """Q's style guess for each melody.

    ``mode="greedy"`` reads the embedding rows of the emitted pitch tokens;
    ``mode="expected"`` re-runs the differentiable expected-embedding rollout
    for the melody's source and style, as seen during training.
    """
    variant = net.config.get("q_variant", "gru")
    w = net.params["tgt_embed"]
    with nc.no_grad():
        if mode == "greedy":
            batch = make_batch([m.src for m in melodies], net.src_vocab, net.tgt_vocab, [m.pitch_tokens for m in melodies])
            embs = [nc.take_rows(w, batch.tgt[:, j]) for j in range(batch.steps)]
            seq = ExpectedSequence(embs, [], batch.mask)
        elif mode == "expected":
            batch = make_batch([m.src for m in melodies], net.src_vocab, net.tgt_vocab)
            styles = np.array([m.style_id for m in melodies], dtype=np.int64)
            enc = encode(net.params, batch.src, styles, batch.mask)
            enc = restyle(net.params, enc, np.arange(batch.size), styles)
            seq = rollout_expected(net.params, enc, net.tgt_vocab.start)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return posterior(net.params, seq, variant).data.argmax(axis=-1)


def posterior_accuracy(net: DmgNetwork, melodies: Sequence[Melody], mode: str = "greedy") -> float:
    """Fraction of generations whose Q-argmax equals the conditioning style."""
    if net.n_styles < 2:
        raise ValueError("posterior accuracy needs at least two styles")
    if not melodies:
        raise ValueError("no generations to score")
    truth = np.array([m.style_id for m in melodies])
    return float((posterior_predictions(net, melodies, mode) == truth).mean())


@dataclass
class MetricReport:
    tonality: float
    pitch_histogram: list[int]
    style_divergence: float
    alignment_rate: float
    posterior_accuracy: float
    per_style_histograms: dict[str, list[int]] = field(default_factory=dict)
    n_melodies: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"


def mean_pairwise_divergence(hists: Sequence[np.ndarray]) -> float:
    vals = [style_divergence(hists[i], hists[j]) for i in range(len(hists)) for j in range(i + 1, len(hists))]
    return float(np.mean(vals)) if vals else 0.0


def evaluate(net: DmgNetwork, melodies: Sequence[Melody]) -> MetricReport:
    """Full report for melodies generated by ``net`` (style ids attached)."""
    styles = sorted({m.style_id for m in melodies})
    hists = {s: pitch_histogram(melodies, s) for s in styles}
    nonempty = [h for h in hists.values() if h.sum() > 0]
    return MetricReport(
        tonality=float(np.mean([tonality_score(m) for m in melodies if m.events])),
        pitch_histogram=pitch_histogram(melodies).tolist(),
        style_divergence=mean_pairwise_divergence(nonempty),
        alignment_rate=alignment_rate(melodies),
        posterior_accuracy=posterior_accuracy(net, melodies) if net.n_styles >= 2 else float("nan"),
        per_style_histograms={str(s): h.tolist() for s, h in hists.items()},
        n_melodies=len(melodies),
    )


def report_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    buf.write("metric,value\n")
    for key in ("tonality", "style_divergence", "alignment_rate", "posterior_accuracy", "n_melodies"):
        buf.write(f"{key},{getattr(report, key)!r}\n")
    return buf.getvalue()
