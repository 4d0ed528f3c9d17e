"""Style-conditioned attention encoder-decoder with a style posterior.

All functions work on padded batches: ``src`` is an integer array
``[B, T]`` and ``mask`` marks real positions with 1.  A sequence of length
``n`` (``"_EOS_"`` included) decodes in exactly ``n`` steps, one output per
source token.

The regulariser feeds the decoder its own expected embeddings
(``P_j @ W_embed``) starting from the ``"_START_"`` row, once per style,
and asks a posterior network Q to recover the style from the resulting
sequence of expected embeddings.  Q is either a GRU read over the sequence
or a linear projection of its time average.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numcore as nc
from .constraints import force_decode, music_mask
from .corpus.tokens import STRUCTURAL, TokenVocab
from .numcore import GRUWeights, LSTMWeights, Tensor

MASK_NEG = -1e9
Q_VARIANTS = ("gru", "lp")


@dataclass(frozen=True)
class ModelDims:
    v_src: int
    v_tgt: int
    n_styles: int
    embed: int = 32
    hidden: int = 64
    style_dim: int = 8
    attn: int = 0  # 0 means "same as hidden"

    @property
    def attn_dim(self) -> int:
        return self.attn or self.hidden

    def shapes(self) -> dict[str, tuple[int, ...]]:
        E, H, S, A, K = self.embed, self.hidden, self.style_dim, self.attn_dim, self.n_styles
        shapes = {
            "src_embed": (self.v_src, E),
            "tgt_embed": (self.v_tgt, E),
            "style_embed": (K, S),
        }
        for d in ("enc_fwd", "enc_bwd"):
            shapes.update({f"{d}.wx": (E, 4 * H), f"{d}.wh": (H, 4 * H), f"{d}.b": (4 * H,)})
        shapes.update(
            {
                "init.w": (2 * H + S, 2 * H),
                "init.b": (2 * H,),
                "dec.wx": (E + 2 * H, 4 * H),
                "dec.wh": (H, 4 * H),
                "dec.b": (4 * H,),
                "att.wq": (H, A),
                "att.wk": (2 * H, A),
                "att.v": (A, 1),
                "out.w": (3 * H, self.v_tgt),
                "out.b": (self.v_tgt,),
                "q_gru.wx": (E, 3 * H),
                "q_gru.wh": (H, 3 * H),
                "q_gru.bx": (3 * H,),
                "q_gru.bh": (3 * H,),
                "q_out.w": (H, K),
                "q_out.b": (K,),
                "q_lp.w": (E, K),
                "q_lp.b": (K,),
            }
        )
        return shapes


Q_PARAMS = ("q_gru.wx", "q_gru.wh", "q_gru.bx", "q_gru.bh", "q_out.w", "q_out.b", "q_lp.w", "q_lp.b")


class DmgParams:
    """Named learnable tensors of one network, in a fixed order."""

    def __init__(self, dims: ModelDims, tensors: dict[str, Tensor]):
        expected = dims.shapes()
        if list(tensors) != list(expected):
            raise ValueError("parameter names do not match the model layout")
        for name, t in tensors.items():
            if t.shape != expected[name]:
                raise ValueError(f"parameter {name!r} has shape {t.shape}, expected {expected[name]}")
        self.dims = dims
        self.tensors = tensors

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator, scale: float = nc.rng.INIT_SCALE) -> "DmgParams":
        return cls(
            dims,
            {n: Tensor(nc.uniform_init(rng, s, scale), True, n) for n, s in dims.shapes().items()},
        )

    @classmethod
    def zeros(cls, dims: ModelDims) -> "DmgParams":
        return cls(dims, {n: Tensor(np.zeros(s), True, n) for n, s in dims.shapes().items()})

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def lstm(self, prefix: str) -> LSTMWeights:
        t = self.tensors
        return LSTMWeights(t[f"{prefix}.wx"], t[f"{prefix}.wh"], t[f"{prefix}.b"])

    def gru(self, prefix: str) -> GRUWeights:
        t = self.tensors
        return GRUWeights(t[f"{prefix}.wx"], t[f"{prefix}.wh"], t[f"{prefix}.bx"], t[f"{prefix}.bh"])

    def copy(self) -> "DmgParams":
        return DmgParams(self.dims, {n: Tensor(t.data.copy(), True, n) for n, t in self.tensors.items()})


@dataclass
class DmgNetwork:
    """One trained stream (pitch or duration): weights plus vocabularies."""

    params: DmgParams
    src_vocab: TokenVocab
    tgt_vocab: TokenVocab
    stream: str = "pitch"
    config: dict = field(default_factory=dict)

    @property
    def dims(self) -> ModelDims:
        return self.params.dims

    @property
    def n_styles(self) -> int:
        return self.params.dims.n_styles


# -- batches ------------------------------------------------------------------

@dataclass
class Batch:
    src: np.ndarray  # [B, T] int
    mask: np.ndarray  # [B, T] float
    forced: np.ndarray  # [B, T] int, structural target index or -1
    allowed: np.ndarray  # [V_tgt] bool, tokens allowed at syllable positions
    tgt: np.ndarray | None = None  # [B, T] int

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def steps(self) -> int:
        return self.src.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)


def forced_targets(src_tokens: Sequence[str], tgt_vocab: TokenVocab) -> list[int]:
    """Target index each structural source position must emit, else -1."""
    return [tgt_vocab.stoi[t] if t in STRUCTURAL else -1 for t in src_tokens]


def make_batch(
    src_tokens: Sequence[Sequence[str]],
    src_vocab: TokenVocab,
    tgt_vocab: TokenVocab,
    tgt_tokens: Sequence[Sequence[str]] | None = None,
) -> Batch:
    B = len(src_tokens)
    T = max(len(s) for s in src_tokens)
    src = np.full((B, T), src_vocab.eos, dtype=np.int64)
    forced = np.full((B, T), -1, dtype=np.int64)
    mask = np.zeros((B, T))
    tgt = np.full((B, T), tgt_vocab.eos, dtype=np.int64) if tgt_tokens is not None else None
    for b, toks in enumerate(src_tokens):
        n = len(toks)
        if n == 0:
            raise ValueError("empty source sequence")
        src[b, :n] = src_vocab.encode_seq(toks)
        forced[b, :n] = forced_targets(toks, tgt_vocab)
        mask[b, :n] = 1.0
        if tgt is not None:
            if len(tgt_tokens[b]) != n:
                raise ValueError(f"source/target length mismatch in batch row {b}")
            tgt[b, :n] = tgt_vocab.encode_seq(tgt_tokens[b])
    return Batch(src, mask, forced, music_mask(tgt_vocab), tgt)


# -- encoder ------------------------------------------------------------------

@dataclass
class EncoderOutput:
    states: Tensor  # [B, T, 2H]
    v: Tensor  # [B, 2H + S]
    keys: Tensor  # [B, T, A] attention keys
    mask_add: np.ndarray  # [B, T], 0 at real positions, MASK_NEG at padding
    mask: np.ndarray

    def tile(self, rows: np.ndarray, v: Tensor) -> "EncoderOutput":
        return EncoderOutput(
            nc.getitem(self.states, rows), v, nc.getitem(self.keys, rows), self.mask_add[rows], self.mask[rows]
        )


def _as_batch(src, mask):
    src = np.atleast_2d(np.asarray(src, dtype=np.int64))
    mask = np.ones(src.shape) if mask is None else np.atleast_2d(np.asarray(mask, dtype=np.float64))
    return src, mask


def _run_lstm(xs: list[Tensor], w: LSTMWeights, mask: np.ndarray, order) -> list[Tensor]:
    B, H = xs[0].shape[0], w.hidden
    h = c = Tensor(np.zeros((B, H)))
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        h2, c2 = nc.lstm_cell(xs[t], h, c, w)
        m = mask[:, t]
        if m.all():
            h, c = h2, c2
        else:
            h, c = nc.blend(m, h2, h), nc.blend(m, c2, c)
        out[t] = h
    return out


def encode(params: DmgParams, src, style, mask=None) -> EncoderOutput:
    """Bidirectional LSTM over ``src``; ``v`` is [fwd final; bwd final; style row]."""
    src, mask = _as_batch(src, mask)
    B, T = src.shape
    style = np.broadcast_to(np.asarray(style, dtype=np.int64), (B,))
    K = params.dims.n_styles
    if np.any(style < 0) or np.any(style >= K):
        raise ValueError(f"style id out of range 0..{K - 1}: {style.tolist()}")
    if T < 1:
        raise ValueError("empty source")
    emb = nc.take_rows(params["src_embed"], src)
    xs = [nc.getitem(emb, (slice(None), t)) for t in range(T)]
    fwd = _run_lstm(xs, params.lstm("enc_fwd"), mask, range(T))
    bwd = _run_lstm(xs, params.lstm("enc_bwd"), mask, range(T - 1, -1, -1))
    states = nc.concat([nc.stack(fwd, axis=1), nc.stack(bwd, axis=1)], axis=-1)
    last = mask.sum(axis=1).astype(np.int64) - 1
    rows = np.arange(B)
    h_fwd = nc.getitem(states, (rows, last, slice(0, params.dims.hidden)))
    h_bwd = bwd[0]
    v = nc.concat([h_fwd, h_bwd, nc.take_rows(params["style_embed"], style)], axis=-1)
    keys = nc.matmul(states, params["att.wk"])
    mask_add = np.where(mask > 0, 0.0, MASK_NEG)
    return EncoderOutput(states, v, keys, mask_add, mask)


def restyle(params: DmgParams, enc: EncoderOutput, rows: np.ndarray, styles: np.ndarray) -> EncoderOutput:
    """Encoder output for batch rows ``rows`` re-conditioned on ``styles``."""
    two_h = 2 * params.dims.hidden
    base = nc.getitem(enc.v, (rows, slice(0, two_h)))
    v = nc.concat([base, nc.take_rows(params["style_embed"], styles)], axis=-1)
    return enc.tile(rows, v)


# -- decoder ------------------------------------------------------------------

def initial_state(params: DmgParams, enc: EncoderOutput) -> tuple[Tensor, Tensor]:
    H = params.dims.hidden
    s = nc.tanh(nc.add(nc.matmul(enc.v, params["init.w"]), params["init.b"]))
    return nc.getitem(s, (slice(None), slice(0, H))), nc.getitem(s, (slice(None), slice(H, 2 * H)))


def attend(params: DmgParams, h: Tensor, enc: EncoderOutput) -> tuple[Tensor, Tensor]:
    """Additive attention; returns (context [B, 2H], weights [B, T])."""
    B, T, A = enc.keys.shape
    q = nc.reshape(nc.matmul(h, params["att.wq"]), (B, 1, A))
    scores = nc.reshape(nc.matmul(nc.tanh(nc.add(enc.keys, q)), params["att.v"]), (B, T))
    weights = nc.softmax(nc.add(scores, enc.mask_add), axis=-1)
    ctx = nc.reshape(nc.matmul(nc.reshape(weights, (B, 1, T)), enc.states), (B, enc.states.shape[-1]))
    return ctx, weights


def decode_step(params: DmgParams, prev_emb: Tensor, state, enc: EncoderOutput):
    """One decoder step; returns (log P_j [B, V], new (h, c))."""
    h, c = state
    ctx, _ = attend(params, h, enc)
    h, c = nc.lstm_cell(nc.concat([prev_emb, ctx], axis=-1), h, c, params.lstm("dec"))
    logits = nc.add(nc.matmul(nc.concat([h, ctx], axis=-1), params["out.w"]), params["out.b"])
    return nc.log_softmax(logits), (h, c)


def expected_embedding(p, w_embed) -> Tensor:
    """Probability-weighted average of embedding rows, ``P @ W_embed``."""
    p = nc.as_tensor(p)
    if p.ndim == 1:
        return nc.reshape(nc.matmul(nc.reshape(p, (1, -1)), w_embed), (w_embed.shape[-1],))
    return nc.matmul(p, w_embed)


# Feedback policy: (step j, force-decoded prediction at j, batch) -> next inputs.
Feedback = Callable[[int, np.ndarray, Batch], np.ndarray]


def teacher_forcing(j: int, pred: np.ndarray, batch: Batch) -> np.ndarray:
    return batch.tgt[:, j]


@dataclass
class CrossEntropy:
    loss: Tensor  # mean per-token negative log-likelihood
    correct: int
    tokens: int
    predictions: np.ndarray


def cross_entropy_term(
    params: DmgParams,
    enc: EncoderOutput,
    batch: Batch,
    start: int,
    feedback: Feedback = teacher_forcing,
) -> CrossEntropy:
    """Mean token cross-entropy of the targets, feeding inputs chosen by ``feedback``."""
    B, T = batch.src.shape
    state = initial_state(params, enc)
    inp = np.full(B, start, dtype=np.int64)
    logps = []
    preds = np.zeros((B, T), dtype=np.int64)
    for j in range(T):
        logp, state = decode_step(params, nc.take_rows(params["tgt_embed"], inp), state, enc)
        logps.append(logp)
        preds[:, j] = force_decode(logp.data, batch.forced[:, j], batch.allowed)
        if j + 1 < T:
            inp = feedback(j, preds[:, j], batch)
    picked = nc.pick(nc.stack(logps, axis=1), batch.tgt)
    n = batch.mask.sum()
    loss = nc.mul(nc.sum(nc.mul(picked, batch.mask)), -1.0 / n)
    correct = int(((preds == batch.tgt) & (batch.mask > 0)).sum())
    return CrossEntropy(loss, correct, int(n), preds)


@dataclass
class ExpectedSequence:
    embeddings: list[Tensor]  # one [B, E] per step: P_j @ W_embed for j = 1..T
    log_probs: list[Tensor]  # log P_j, [B, V]
    mask: np.ndarray  # [B, T]


def rollout_expected(params: DmgParams, enc: EncoderOutput, start: int, steps: int | None = None) -> ExpectedSequence:
    """Feed the decoder its previous expected embedding, beginning with ``_START_``."""
    B = enc.states.shape[0]
    steps = enc.states.shape[1] if steps is None else steps
    if steps < 1:
        raise ValueError("rollout needs at least one step")
    w_embed = params["tgt_embed"]
    e = nc.take_rows(w_embed, np.full(B, start, dtype=np.int64))
    state = initial_state(params, enc)
    embs, logps = [], []
    for _ in range(steps):
        logp, state = decode_step(params, e, state, enc)
        e = expected_embedding(nc.exp(logp), w_embed)
        embs.append(e)
        logps.append(logp)
    mask = enc.mask[:, :steps] if enc.mask.shape[1] >= steps else np.ones((B, steps))
    return ExpectedSequence(embs, logps, mask)


def posterior_gru(params: DmgParams, seq: ExpectedSequence) -> Tensor:
    """log Q(k | sequence) from a GRU read over the expected embeddings, [B, K]."""
    if not seq.embeddings:
        raise ValueError("empty expected sequence")
    w = params.gru("q_gru")
    B = seq.embeddings[0].shape[0]
    h = Tensor(np.zeros((B, params.dims.hidden)))
    for j, e in enumerate(seq.embeddings):
        h2 = nc.gru_cell(e, h, w)
        m = seq.mask[:, j]
        h = h2 if m.all() else nc.blend(m, h2, h)
    return nc.log_softmax(nc.add(nc.matmul(h, params["q_out.w"]), params["q_out.b"]))


def posterior_lp(params: DmgParams, seq: ExpectedSequence) -> Tensor:
    """log Q(k | sequence) from a linear projection of the time-averaged embedding."""
    if not seq.embeddings:
        raise ValueError("empty expected sequence")
    stacked = nc.stack(seq.embeddings, axis=1)  # [B, T, E]
    lengths = seq.mask.sum(axis=1, keepdims=True)
    # order-free sum: reordering the sequence leaves Q's output bit-identical
    avg = nc.mul(nc.sum_unordered(nc.mul(stacked, seq.mask[..., None]), axis=1), 1.0 / lengths)
    return nc.log_softmax(nc.add(nc.matmul(avg, params["q_lp.w"]), params["q_lp.b"]))


def posterior(params: DmgParams, seq: ExpectedSequence, variant: str) -> Tensor:
    if variant == "gru":
        return posterior_gru(params, seq)
    if variant == "lp":
        return posterior_lp(params, seq)
    raise ValueError(f"unknown posterior variant {variant!r}; expected one of {Q_VARIANTS}")


def mim_term(params: DmgParams, enc: EncoderOutput, start: int, variant: str = "gru") -> Tensor:
    """(1/K) sum_k of the batch mean of log Q(k | rollout conditioned on k)."""
    B = enc.states.shape[0]
    K = params.dims.n_styles
    rows = np.tile(np.arange(B), K)
    styles = np.repeat(np.arange(K), B)
    seq = rollout_expected(params, restyle(params, enc, rows, styles), start)
    logq = nc.pick(posterior(params, seq, variant), styles)
    return nc.mul(nc.sum(logq), 1.0 / (B * K))


@dataclass
class LossTerms:
    total: Tensor
    ce: CrossEntropy
    mim: Tensor | None

    @property
    def token_accuracy(self) -> float:
        return self.ce.correct / max(self.ce.tokens, 1)


def total_loss(
    params: DmgParams,
    batch: Batch,
    styles,
    lam: float,
    start: int,
    variant: str = "gru",
    feedback: Feedback = teacher_forcing,
    mim_always: bool = False,
) -> LossTerms:
    """Minimisation objective ``(1 - lam) * CE - lam * MIM``.

    With ``lam == 0`` the rollouts are skipped unless ``mim_always`` asks
    for the MIM value (then computed without recording gradients).
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"balance factor must lie in [0, 1), got {lam}")
    if variant not in Q_VARIANTS:
        raise ValueError(f"unknown posterior variant {variant!r}")
    enc = encode(params, batch.src, styles, batch.mask)
    ce = cross_entropy_term(params, enc, batch, start, feedback)
    if lam == 0.0:
        mim = None
        if mim_always:
            with nc.no_grad():
                mim = mim_term(params, encode(params, batch.src, styles, batch.mask), start, variant)
        return LossTerms(ce.loss, ce, mim)
    mim = mim_term(params, enc, start, variant)
    total = nc.sub(nc.mul(ce.loss, 1.0 - lam), nc.mul(mim, lam))
    return LossTerms(total, ce, mim)


def dims_to_dict(dims: ModelDims) -> dict:
    return asdict(dims)
