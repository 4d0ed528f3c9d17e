"""
Gradients from the tape
=======================

Build a small expression, run it backwards, and compare against
finite differences.
"""

import numpy as np

from dmg import numcore as nc

rng = nc.make_rng(0)

# a two-layer map with a softmax on top
x = nc.Tensor(rng.normal(size=(4, 3)), requires_grad=True, name="x")
w = nc.Tensor(rng.normal(size=(3, 5)), requires_grad=True, name="w")
y = nc.log_softmax(nc.tanh(nc.matmul(x, w)))
loss = nc.mean(nc.pick(y, np.array([0, 1, 2, 3])))

grads = nc.backward(loss, {"x": x, "w": w})
print("loss", loss.item())
print("dloss/dw shape", grads["w"].shape)

# central differences for one entry of w
eps = 1e-6
w.data[1, 2] += eps
with nc.no_grad():
    up = nc.mean(nc.pick(nc.log_softmax(nc.tanh(nc.matmul(x, w))), np.arange(4))).item()
w.data[1, 2] -= 2 * eps
with nc.no_grad():
    down = nc.mean(nc.pick(nc.log_softmax(nc.tanh(nc.matmul(x, w))), np.arange(4))).item()
w.data[1, 2] += eps
print("analytic ", grads["w"][1, 2])
print("numerical", (up - down) / (2 * eps))

# one LSTM step on a batch of two; h and c come back as separate tensors
cell = nc.LSTMWeights(
    nc.Tensor(nc.uniform_init(rng, (3, 16)), True),
    nc.Tensor(nc.uniform_init(rng, (4, 16)), True),
    nc.Tensor(np.zeros(16), True),
)
h = c = nc.Tensor(np.zeros((2, 4)))
for t in range(3):
    h, c = nc.lstm_cell(nc.Tensor(rng.normal(size=(2, 3))), h, c, cell)
g = nc.backward(nc.sum(h), [cell.wx, cell.wh])
print("LSTM grad norms", [float(np.linalg.norm(a)) for a in g])

# Adam walks a quadratic to its minimum
p = nc.Tensor(np.array([3.0, -2.0]), True)
opt = nc.Adam({"p": p}, lr=0.1)
for step in range(300):
    opt.step(nc.backward(nc.sum(nc.mul(p, p)), {"p": p}))
print("after Adam", p.data)
