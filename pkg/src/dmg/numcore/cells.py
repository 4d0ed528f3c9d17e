"""Fused LSTM and GRU step kernels.

Each kernel is one tape node with a hand-written backward pass, which keeps
the graph of a long recurrence small.  Inputs may be single vectors ``[D]``
or batches ``[B, D]``.

Gate layouts (columns of the stacked weight matrices):

* LSTM: input, forget, candidate, output -- ``[D, 4H]`` / ``[H, 4H]``
* GRU: reset, update, candidate -- ``[D, 3H]`` / ``[H, 3H]``, with separate
  input and hidden biases so the reset gate scales only the hidden part of
  the candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _make, _sigmoid, as_tensor, getitem


@dataclass
class LSTMWeights:
    wx: Tensor
    wh: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]


@dataclass
class GRUWeights:
    wx: Tensor
    wh: Tensor
    bx: Tensor
    bh: Tensor

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]


def _check(name: str, x: Tensor, h: Tensor, wx: Tensor, wh: Tensor, gates: int):
    hid = wh.shape[0]
    if wh.shape != (hid, gates * hid) or wx.shape != (x.shape[-1], gates * hid):
        raise ValueError(
            f"{name}: weights {wx.shape}/{wh.shape} do not fit input {x.shape} "
            f"with hidden size {hid}"
        )
    if h.shape[-1] != hid or h.shape[:-1] != x.shape[:-1]:
        raise ValueError(f"{name}: state shape {h.shape} does not match input {x.shape}")


def lstm_cell(x, h_prev, c_prev, w: LSTMWeights) -> tuple[Tensor, Tensor]:
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    _check("lstm_cell", x, h_prev, w.wx, w.wh, 4)
    if c_prev.shape != h_prev.shape:
        raise ValueError(f"lstm_cell: cell shape {c_prev.shape} != hidden shape {h_prev.shape}")
    H = w.hidden
    vec = x.ndim == 1
    xd = x.data.reshape(1, -1) if vec else x.data
    hd = h_prev.data.reshape(1, -1) if vec else h_prev.data
    cd = c_prev.data.reshape(1, -1) if vec else c_prev.data
    wx, wh = w.wx.data, w.wh.data

    z = xd @ wx + hd @ wh + w.b.data
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H : 2 * H])
    g = np.tanh(z[:, 2 * H : 3 * H])
    o = _sigmoid(z[:, 3 * H :])
    c = f * cd + i * g
    tc = np.tanh(c)
    h = o * tc
    out = np.concatenate([h, c], axis=1)

    def backward(grad):
        grad = grad.reshape(-1, 2 * H)
        gh, gc = grad[:, :H], grad[:, H:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * cd * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                gh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dx = dz @ wx.T
        dh = dz @ wh.T
        dcp = dc * f
        if vec:
            dx, dh, dcp = dx.reshape(-1), dh.reshape(-1), dcp.reshape(-1)
        return dx, dh, dcp, xd.T @ dz, hd.T @ dz, dz.sum(axis=0)

    hc = _make(out.reshape(-1) if vec else out, (x, h_prev, c_prev, w.wx, w.wh, w.b), backward)
    if vec:
        return getitem(hc, slice(0, H)), getitem(hc, slice(H, 2 * H))
    return getitem(hc, (slice(None), slice(0, H))), getitem(hc, (slice(None), slice(H, 2 * H)))


def gru_cell(x, h_prev, w: GRUWeights) -> Tensor:
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    _check("gru_cell", x, h_prev, w.wx, w.wh, 3)
    H = w.hidden
    vec = x.ndim == 1
    xd = x.data.reshape(1, -1) if vec else x.data
    hd = h_prev.data.reshape(1, -1) if vec else h_prev.data
    wx, wh = w.wx.data, w.wh.data

    gx = xd @ wx + w.bx.data
    gh = hd @ wh + w.bh.data
    r = _sigmoid(gx[:, :H] + gh[:, :H])
    u = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    ghn = gh[:, 2 * H :]
    n = np.tanh(gx[:, 2 * H :] + r * ghn)
    h = (1.0 - u) * n + u * hd

    def backward(grad):
        grad = grad.reshape(-1, H)
        dan = grad * (1.0 - u) * (1.0 - n * n)
        dar = dan * ghn * r * (1.0 - r)
        dau = grad * (hd - n) * u * (1.0 - u)
        dgx = np.concatenate([dar, dau, dan], axis=1)
        dgh = np.concatenate([dar, dau, dan * r], axis=1)
        dx = dgx @ wx.T
        dh = grad * u + dgh @ wh.T
        if vec:
            dx, dh = dx.reshape(-1), dh.reshape(-1)
        return dx, dh, xd.T @ dgx, hd.T @ dgh, dgx.sum(axis=0), dgh.sum(axis=0)

    return _make(h.reshape(-1) if vec else h, (x, h_prev, w.wx, w.wh, w.bx, w.bh), backward)
