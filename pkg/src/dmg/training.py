"""Training with scheduled sampling and force decoding.

At decode step ``j`` the next input is the ground-truth token with
probability ``p`` and otherwise the model's own force-decoded prediction.
``p`` decays with the epoch index as ``mu / (mu + exp(epoch / mu))``.
Each training pair is paired with a style id drawn uniformly per epoch;
the mutual-information term then rolls the decoder out under every style.
"""

from __future__ import annotations

import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numcore as nc
from .checkpoint import save_network
from .constraints import force_decode, force_decode_filter  # noqa: F401  (re-exported)
from .corpus.dataset import AlignedPair, CorpusSplit
from .corpus.tokens import TokenVocab
from .fileio import atomic_write_text
from .model import (
    Batch,
    DmgNetwork,
    DmgParams,
    ModelDims,
    Q_VARIANTS,
    make_batch,
    total_loss,
)

log = logging.getLogger(__name__)

STREAMS = ("pitch", "duration")
METRIC_COLUMNS = ("epoch", "p", "ce", "mim", "token_acc", "val_ce")


@dataclass
class TrainConfig:
    lam: float = 0.5
    mu: float = 12.0
    n_styles: int = 2
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    q_variant: str = "gru"
    max_len: int = 64
    embed: int = 32
    hidden: int = 64
    style_dim: int = 8
    clip_norm: float = 5.0
    # reported MIM for lam == 0 runs costs an extra forward rollout per batch
    log_mim: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must lie in [0, 1), got {self.lam}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.n_styles < 1:
            raise ValueError(f"n_styles must be >= 1, got {self.n_styles}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ValueError("epochs, batch_size and max_len must be >= 1")
        if self.q_variant not in Q_VARIANTS:
            raise ValueError(f"q_variant must be one of {Q_VARIANTS}, got {self.q_variant!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScheduleState:
    epoch: int
    p: float


def sampling_probability(mu: float, epoch: int) -> float:
    """Probability of feeding the ground-truth token at ``epoch`` (from 0)."""
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    x = epoch / mu
    if x > 700.0:  # exp would overflow; mu * exp(-x) is the same limit
        return mu * math.exp(-x) / (1.0 + mu * math.exp(-x))
    return mu / (mu + math.exp(x))


def choose_input_token(y_truth_prev, y_pred_prev, p: float, rng: np.random.Generator):
    """Ground truth with probability ``p``, else the prediction; one draw."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return y_truth_prev if rng.random() < p else y_pred_prev


def choose_input_tokens(truth: np.ndarray, pred: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Batched :func:`choose_input_token`; one draw per row."""
    return np.where(rng.random(truth.shape[0]) < p, truth, pred)


def scheduled_feedback(p: float, rng: np.random.Generator):
    def feedback(j: int, pred: np.ndarray, batch: Batch) -> np.ndarray:
        return choose_input_tokens(batch.tgt[:, j], pred, p, rng)

    return feedback


# -- data ---------------------------------------------------------------------

def targets_of(pair: AlignedPair, stream: str) -> list[str]:
    if stream == "pitch":
        return pair.tgt_pitch
    if stream == "duration":
        return pair.tgt_dur
    raise ValueError(f"unknown stream {stream!r}; expected one of {STREAMS}")


def build_vocabs(pairs: Sequence[AlignedPair], stream: str) -> tuple[TokenVocab, TokenVocab]:
    return TokenVocab.build(p.src for p in pairs), TokenVocab.build(targets_of(p, stream) for p in pairs)


def batches(pairs, order, size, src_vocab, tgt_vocab, stream):
    for i in range(0, len(order), size):
        chunk = [pairs[k] for k in order[i : i + size]]
        yield order[i : i + size], make_batch(
            [p.src for p in chunk], src_vocab, tgt_vocab, [targets_of(p, stream) for p in chunk]
        )


def validation_styles(n: int, n_styles: int) -> np.ndarray:
    return np.arange(n) % n_styles


# -- loop ---------------------------------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    p: float
    ce: float
    mim: float
    token_acc: float
    val_ce: float = float("nan")

    def row(self) -> list:
        return [self.epoch, self.p, self.ce, self.mim, self.token_acc, self.val_ce]


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        return grads
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm <= max_norm or not math.isfinite(norm):
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def train_epoch(
    net: DmgNetwork,
    pairs: Sequence[AlignedPair],
    schedule: ScheduleState,
    config: TrainConfig,
    rng: np.random.Generator,
    optimizer: nc.Adam,
) -> EpochMetrics:
    """One pass over ``pairs`` in an ``rng`` order; one optimizer step per batch."""
    if not pairs:
        raise ValueError("empty training set")
    params = net.params
    order = rng.permutation(len(pairs))
    styles_all = rng.integers(0, config.n_styles, size=len(pairs))
    ce_sum = mim_sum = 0.0
    tokens = correct = 0
    n_rows = 0
    feedback = scheduled_feedback(schedule.p, rng)
    for rows, batch in batches(pairs, order, config.batch_size, net.src_vocab, net.tgt_vocab, net.stream):
        terms = total_loss(
            params,
            batch,
            styles_all[rows],
            config.lam,
            net.tgt_vocab.start,
            config.q_variant,
            feedback,
            mim_always=config.log_mim,
        )
        grads = nc.backward(terms.total, dict(params.items()))
        optimizer.step(_clip(grads, config.clip_norm))
        ce_sum += terms.ce.loss.item() * terms.ce.tokens
        tokens += terms.ce.tokens
        correct += terms.ce.correct
        if terms.mim is not None:
            mim_sum += terms.mim.item() * batch.size
        n_rows += batch.size
    mim = mim_sum / n_rows if (config.lam > 0 or config.log_mim) else 0.0
    return EpochMetrics(schedule.epoch, schedule.p, ce_sum / tokens, mim, correct / tokens)


def evaluate_ce(net: DmgNetwork, pairs: Sequence[AlignedPair], batch_size: int = 64) -> float:
    """Teacher-forced mean token cross-entropy; style ids cycle 0..K-1."""
    if not pairs:
        return float("nan")
    styles = validation_styles(len(pairs), net.n_styles)
    total = 0.0
    tokens = 0
    order = np.arange(len(pairs))
    with nc.no_grad():
        for rows, batch in batches(pairs, order, batch_size, net.src_vocab, net.tgt_vocab, net.stream):
            terms = total_loss(net.params, batch, styles[rows], 0.0, net.tgt_vocab.start)
            total += terms.ce.loss.item() * terms.ce.tokens
            tokens += terms.ce.tokens
    return total / tokens


def stream_seed(seed: int, stream: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, STREAMS.index(stream)])


def new_network(train: Sequence[AlignedPair], stream: str, config: TrainConfig, rng) -> DmgNetwork:
    src_vocab, tgt_vocab = build_vocabs(train, stream)
    dims = ModelDims(
        len(src_vocab), len(tgt_vocab), config.n_styles, config.embed, config.hidden, config.style_dim
    )
    return DmgNetwork(DmgParams.init(dims, rng), src_vocab, tgt_vocab, stream, config.to_dict())


@dataclass
class TrainResult:
    network: DmgNetwork  # best-validation weights
    history: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def schedule(self) -> list[ScheduleState]:
        return [ScheduleState(m.epoch, m.p) for m in self.history]


def _usable(pairs: Sequence[AlignedPair], max_len: int) -> list[AlignedPair]:
    kept = [p for p in pairs if len(p.src) <= max_len]
    if len(kept) < len(pairs):
        log.warning("dropped %d pairs longer than max_len=%d", len(pairs) - len(kept), max_len)
    return kept


def train_network(
    train: Sequence[AlignedPair],
    valid: Sequence[AlignedPair],
    stream: str,
    config: TrainConfig,
) -> TrainResult:
    """Train one stream's network; keeps the weights with the lowest validation CE."""
    train = _usable(train, config.max_len)
    valid = _usable(valid, config.max_len)
    if not train:
        raise ValueError("empty training split")
    rng = np.random.Generator(np.random.PCG64(stream_seed(config.seed, stream)))
    net = new_network(train, stream, config, rng)
    optimizer = nc.Adam(dict(net.params.items()), lr=config.lr)
    result = TrainResult(net)
    best_val = math.inf
    best_params = net.params.copy()
    for epoch in range(config.epochs):
        schedule = ScheduleState(epoch, sampling_probability(config.mu, epoch))
        metrics = train_epoch(net, train, schedule, config, rng, optimizer)
        metrics.val_ce = evaluate_ce(net, valid) if valid else metrics.ce
        result.history.append(metrics)
        log.info(
            "%s epoch %d p=%.4f ce=%.4f mim=%.4f acc=%.3f val_ce=%.4f",
            stream, epoch, schedule.p, metrics.ce, metrics.mim, metrics.token_acc, metrics.val_ce,
        )
        if metrics.val_ce < best_val:
            best_val = metrics.val_ce
            best_params = net.params.copy()
            result.best_epoch = epoch
    result.network = DmgNetwork(best_params, net.src_vocab, net.tgt_vocab, stream, config.to_dict())
    return result


def metrics_csv(history: Sequence[EpochMetrics]) -> str:
    buf = io.StringIO()
    buf.write(",".join(METRIC_COLUMNS) + "\n")
    for m in history:
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in m.row()) + "\n")
    return buf.getvalue()


@dataclass
class FitResult:
    pitch: TrainResult
    duration: TrainResult


def _train_stream(args):
    split, stream, config = args
    return train_network(split.train, split.valid, stream, config)


def fit(split: CorpusSplit, config: TrainConfig, out_dir: str | Path | None = None, parallel: bool = False) -> FitResult:
    """Train the pitch and duration networks independently on the same sources.

    With ``out_dir`` the best checkpoints land in ``out_dir/pitch`` and
    ``out_dir/duration`` next to ``metrics_<stream>.csv``.
    """
    if not split.train:
        raise ValueError("empty training split")
    jobs = [(split, s, config) for s in STREAMS]
    if parallel:
        with ProcessPoolExecutor(max_workers=2) as pool:
            results = list(pool.map(_train_stream, jobs))
    else:
        results = [_train_stream(j) for j in jobs]
    fitted = FitResult(*results)
    if out_dir is not None:
        out = Path(out_dir)
        for stream, res in zip(STREAMS, results):
            save_network(res.network, out / stream)
            atomic_write_text(out / f"metrics_{stream}.csv", metrics_csv(res.history))
    return fitted
