"""``dmg`` command line: synth, preprocess, train, generate, eval, export-midi.

Every command writes to a temporary file or directory first and renames it
into place on success, so a failure never leaves partial output behind.
Set ``DMG_LOG`` to error, warn, info or debug to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .checkpoint import load_network
from .corpus import (
    CorpusSplit,
    dumps_jsonl,
    generate_synthetic_corpus,
    line_syllables,
    load_dictionary,
    preprocess,
    read_pairs,
    read_songs,
    read_split,
    song_to_json,
    write_split,
)
from .decode import (
    concat_melodies,
    generate_many,
    lines_to_sources,
    midi_bytes,
    read_melody_json,
    to_midi,
    write_melody_json,
)
from .evaluation import evaluate, histogram_csv, histogram_gnuplot, report_csv
from .fileio import atomic_write_bytes, atomic_write_text, replace_dir, temp_dir_beside
from .training import TrainConfig, fit

log = logging.getLogger("dmg")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
# keys a training config file may carry besides the TrainConfig fields
PATH_KEYS = ("data", "out")


class UsageError(Exception):
    """Bad combination of arguments; reported like an argparse error."""


def _configure_logging() -> None:
    name = os.environ.get("DMG_LOG", "warn").strip().lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"DMG_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


# -- subcommands --------------------------------------------------------------

def cmd_synth(args) -> None:
    songs = generate_synthetic_corpus(args.songs, args.styles, args.seed)
    atomic_write_text(args.out, dumps_jsonl(song_to_json(s) for s in songs))
    log.info("wrote %d songs to %s", len(songs), args.out)


def cmd_preprocess(args) -> None:
    dictionary = load_dictionary(args.dict) if args.dict else None
    split = preprocess(read_songs(args.input, dictionary), args.seed)
    for name, pairs in split.items():
        log.info("%s: %d pairs", name, len(pairs))
    write_split(split, args.out)


def train_config(args) -> tuple[TrainConfig, Path, Path]:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if not isinstance(raw, dict):
        raise UsageError("training config must be a JSON object")
    paths = {k: raw.pop(k) for k in PATH_KEYS if k in raw}
    for key in ("lam", "mu", "n_styles", "lr", "epochs", "batch_size", "seed", "q_variant"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    data = args.data or paths.get("data")
    out = args.out or paths.get("out")
    if not data or not out:
        raise UsageError("train needs --data and --out (or 'data'/'out' in the config file)")
    return TrainConfig.from_dict(raw), Path(data), Path(out)


def cmd_train(args) -> None:
    config, data, out = train_config(args)
    if data.is_dir():
        split = read_split(data)
    else:
        split = CorpusSplit(read_pairs(data))
    tmp = temp_dir_beside(out)
    try:
        result = fit(split, config, tmp, parallel=args.parallel)
        atomic_write_text(tmp / "config.json", json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n")
        replace_dir(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    for name, res in (("pitch", result.pitch), ("duration", result.duration)):
        log.info("%s: best epoch %d val_ce %.4f", name, res.best_epoch, res.history[res.best_epoch].val_ce)


def _networks(args):
    ckpt = Path(args.ckpt)
    return load_network(ckpt / "pitch"), load_network(ckpt / "duration")


def read_lyrics(path: str | Path, dictionary=None) -> list[list[str]]:
    """One lyric line per text line; whitespace-separated syllables or one per character."""
    lines = []
    for text in Path(path).read_text(encoding="utf-8").splitlines():
        text = text.strip()
        if not text:
            continue
        tokens = text.split() if any(ch.isspace() for ch in text) else list(text)
        lines.append(line_syllables(tokens, dictionary))
    if not lines:
        raise ValueError(f"{path}: no lyrics")
    return lines


def melody_sidecar(out: Path) -> Path:
    return out.with_suffix(".json")


def cmd_generate(args) -> None:
    pitch_net, dur_net = _networks(args)
    if not 0 <= args.style_id < pitch_net.n_styles:
        raise UsageError(f"--style-id must lie in 0..{pitch_net.n_styles - 1}")
    dictionary = load_dictionary(args.dict) if args.dict else None
    sources = lines_to_sources(read_lyrics(args.lyrics_file, dictionary))
    melody = concat_melodies(generate_many(sources, [args.style_id] * len(sources), pitch_net, dur_net))
    out = Path(args.out)
    data = midi_bytes(melody)  # validates events before anything is written
    write_melody_json(melody, melody_sidecar(out))
    atomic_write_bytes(out, data)
    log.info("wrote %d notes to %s", len(melody.events), out)


def cmd_eval(args) -> None:
    pitch_net, dur_net = _networks(args)
    pairs = read_pairs(args.data)
    if not pairs:
        raise ValueError(f"{args.data}: no pairs to evaluate")
    K = pitch_net.n_styles
    sources = [p.src for p in pairs for _ in range(K)]
    styles = [k for _ in pairs for k in range(K)]
    melodies = generate_many(sources, styles, pitch_net, dur_net)
    report = evaluate(pitch_net, melodies)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for key, hist in report.per_style_histograms.items():
        atomic_write_text(out / f"hist_style{key}.csv", histogram_csv(hist))
        atomic_write_text(out / f"hist_style{key}.dat", histogram_gnuplot(hist))
    atomic_write_text(out / "report.csv", report_csv(report))
    atomic_write_text(out / "report.json", report.to_json())
    print(report_csv(report), end="")


def cmd_export_midi(args) -> None:
    to_midi(read_melody_json(args.melody), args.out)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmg", description="Lyrics-to-melody generation with style ids.")
    parser.add_argument("--version", action="version", version=f"dmg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a synthetic register-separated corpus as JSONL")
    p.add_argument("--songs", type=int, default=200)
    p.add_argument("--styles", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="normalize keys, build aligned pairs and split 8:1:1")
    p.add_argument("--input", required=True, help="song JSONL")
    p.add_argument("--dict", help="character-to-pinyin TSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for train/valid/test.jsonl")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the pitch and duration networks")
    p.add_argument("--config", help="JSON file with training fields")
    p.add_argument("--data", help="split directory from preprocess, or a pairs JSONL")
    p.add_argument("--out", help="checkpoint directory")
    p.add_argument("--parallel", action="store_true", help="train both networks at once")
    p.add_argument("--lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--n-styles", dest="n_styles", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--q-variant", dest="q_variant", choices=("gru", "lp"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="compose a melody for a lyrics file")
    p.add_argument("--ckpt", required=True, help="directory holding pitch/ and duration/")
    p.add_argument("--style-id", type=int, required=True)
    p.add_argument("--lyrics-file", required=True)
    p.add_argument("--dict", help="character-to-pinyin TSV")
    p.add_argument("--out", required=True, help="MIDI path; the melody JSON goes next to it")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="generate for every test source and style, then score")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="pairs JSONL, usually test.jsonl")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-midi", help="convert a melody JSON to MIDI")
    p.add_argument("--melody", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_midi)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure_logging()
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dmg: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"dmg: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
