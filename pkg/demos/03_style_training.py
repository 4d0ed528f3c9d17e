"""
Style ids that actually do something
====================================

Train two small pitch networks on the register-separated corpus,
one with the mutual-information term and one without, and compare
what they generate for each style id.  Takes a few minutes.
"""

import numpy as np

from dmg.corpus import generate_synthetic_corpus, pair_lines, split_corpus
from dmg.decode import concat_melodies, generate_many, to_midi
from dmg.evaluation import pitch_histogram, posterior_accuracy, style_divergence, tonality_score
from dmg.training import TrainConfig, train_network

songs = generate_synthetic_corpus(200, 2, 7)
split = split_corpus({s.id: pair_lines(s) for s in songs}, 0)
sources = [p.src for p in split.test]

for lam in (0.0, 0.5):
    cfg = TrainConfig(lam=lam, epochs=25, log_mim=False)
    res = train_network(split.train, split.valid, "pitch", cfg)
    net = res.network
    mel = generate_many(sources * 2, [0] * len(sources) + [1] * len(sources), net)
    h0, h1 = pitch_histogram(mel, 0), pitch_histogram(mel, 1)
    print(f"lambda={lam}: best epoch {res.best_epoch}, val CE {res.history[res.best_epoch].val_ce:.3f}")
    print(f"  posterior accuracy {posterior_accuracy(net, mel):.2f}")
    print(f"  JS(style 0, style 1) {style_divergence(h0, h1):.3f}")
    print(f"  mean pitch {h0 @ np.arange(128) / h0.sum():.1f} vs {h1 @ np.arange(128) / h1.sum():.1f}")
    print(f"  tonality {np.mean([tonality_score(m) for m in mel]):.3f}")

    for k in (0, 1):
        song = concat_melodies([m for m in mel if m.style_id == k][:4])
        to_midi(song, f"demo_lambda{lam}_style{k}.mid")
