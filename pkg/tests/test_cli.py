import json

import mido
import pytest

from dmg.cli import run


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--songs", "20", "--styles", "2", "--seed", "7", "--out", str(d / "corpus.jsonl")]) == 0
    assert run(["preprocess", "--input", str(d / "corpus.jsonl"), "--seed", "1", "--out", str(d / "data")]) == 0
    cfg = {"epochs": 1, "embed": 8, "hidden": 8, "style_dim": 4, "data": str(d / "data"), "out": str(d / "ck")}
    (d / "cfg.json").write_text(json.dumps(cfg))
    assert run(["train", "--config", str(d / "cfg.json")]) == 0
    return d


def test_synth_line_count(tmp_path):
    out = tmp_path / "c.jsonl"
    assert run(["synth", "--songs", "200", "--styles", "2", "--seed", "7", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 200
    assert all(isinstance(json.loads(l)["notes"], list) for l in lines)


def test_preprocess_outputs(workdir):
    counts = {n: len((workdir / "data" / f"{n}.jsonl").read_text().splitlines()) for n in ("train", "valid", "test")}
    assert counts["train"] > counts["valid"] > 0 and counts["test"] > 0


def test_train_twice_identical(workdir, tmp_path):
    cfg = json.loads((workdir / "cfg.json").read_text())
    cfg["out"] = str(tmp_path / "again")
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run(["train", "--config", str(tmp_path / "cfg.json")]) == 0
    for rel in ("pitch/tensors.bin", "pitch/manifest.json", "duration/tensors.bin", "metrics_pitch.csv", "config.json"):
        assert (workdir / "ck" / rel).read_bytes() == (tmp_path / "again" / rel).read_bytes()


def test_flags_override_config(workdir, tmp_path):
    out = tmp_path / "ck2"
    assert run(["train", "--config", str(workdir / "cfg.json"), "--out", str(out), "--seed", "3", "--lam", "0"]) == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["seed"] == 3 and saved["lam"] == 0.0 and saved["hidden"] == 8
    assert (out / "pitch/tensors.bin").read_bytes() != (workdir / "ck/pitch/tensors.bin").read_bytes()


def test_generate_nine_syllables(workdir, tmp_path):
    lyrics = tmp_path / "l.txt"
    lyrics.write_text("ma ni hao yue liang ma ni hao yue\n")
    out = tmp_path / "song.mid"
    assert run(["generate", "--ckpt", str(workdir / "ck"), "--style-id", "1", "--lyrics-file", str(lyrics), "--out", str(out)]) == 0
    mel = json.loads(out.with_suffix(".json").read_text())
    assert len(mel["src"]) == len(mel["pitch_tokens"]) == len(mel["duration_tokens"]) == 10
    assert sorted({e[2] for e in mel["events"]}) == list(range(9))
    assert len([m for m in mido.MidiFile(str(out)).tracks[0] if m.type == "note_on"]) == len(mel["events"])


def test_generate_two_lines_and_characters(workdir, tmp_path):
    d = tmp_path / "dict.tsv"
    d.write_text("月\tyue4\n亮\tliang4\n")
    lyrics = tmp_path / "l.txt"
    lyrics.write_text("月亮\nma ni\n\n月\n")
    out = tmp_path / "s.mid"
    args = ["generate", "--ckpt", str(workdir / "ck"), "--style-id", "0", "--lyrics-file", str(lyrics), "--dict", str(d), "--out", str(out)]
    assert run(args) == 0
    mel = json.loads(out.with_suffix(".json").read_text())
    assert mel["src"] == ["yue", "liang", "|", "ma", "ni", "_EOS_", "yue", "_EOS_"]


def test_eval_and_export(workdir, tmp_path):
    rep = tmp_path / "rep"
    assert run(["eval", "--ckpt", str(workdir / "ck"), "--data", str(workdir / "data/test.jsonl"), "--out", str(rep)]) == 0
    report = json.loads((rep / "report.json").read_text())
    assert report["alignment_rate"] == 1.0
    assert (rep / "hist_style1.dat").exists()


def test_export_midi_matches_generate(workdir, tmp_path):
    lyrics = tmp_path / "l.txt"
    lyrics.write_text("ni hao\n")
    out = tmp_path / "a.mid"
    run(["generate", "--ckpt", str(workdir / "ck"), "--style-id", "0", "--lyrics-file", str(lyrics), "--out", str(out)])
    assert run(["export-midi", "--melody", str(out.with_suffix(".json")), "--out", str(tmp_path / "b.mid")]) == 0
    assert out.read_bytes() == (tmp_path / "b.mid").read_bytes()


def test_usage_errors_exit_2(capsys):
    assert run(["bogus"]) == 2
    assert run(["synth", "--nope"]) == 2
    assert run([]) == 2
    assert "usage" in capsys.readouterr().err


def test_failures_leave_nothing(workdir, tmp_path, capsys):
    lyrics = tmp_path / "l.txt"
    lyrics.write_text("ni hao\n")
    out = tmp_path / "x.mid"
    assert run(["generate", "--ckpt", str(workdir / "ck"), "--style-id", "9", "--lyrics-file", str(lyrics), "--out", str(out)]) != 0
    assert run(["generate", "--ckpt", str(tmp_path / "none"), "--style-id", "0", "--lyrics-file", str(lyrics), "--out", str(out)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("dmg: error:")
    bad = tmp_path / "bad.json"
    bad.write_text('{"lam": 2.0, "data": "%s", "out": "%s"}' % (workdir / "data", tmp_path / "ck"))
    assert run(["train", "--config", str(bad)]) == 1
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.json", "l.txt"]


def test_bad_log_level(monkeypatch, tmp_path):
    monkeypatch.setenv("DMG_LOG", "loud")
    assert run(["synth", "--songs", "10", "--out", str(tmp_path / "c.jsonl")]) == 2
    assert not (tmp_path / "c.jsonl").exists()
