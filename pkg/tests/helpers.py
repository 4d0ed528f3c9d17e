"""Independent oracles shared by the test modules."""

import numpy as np

# filled by the acceptance checks, printed by conftest in the session summary
ACCEPTANCE_LINES: list[str] = []


def numeric_grad(f, tensor, eps=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. ``tensor.data``."""
    flat = tensor.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        out[i] = (up - down) / (2 * eps)
    return out.reshape(tensor.shape)


def rel_error(a, b, floor=1e-10):
    """Norm-wise relative error; two vanishing gradients count as agreeing."""
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    if den < floor:
        return 0.0
    return num / den


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def tiny_problem(seed=0, scale=0.5):
    """V_src = V_tgt = 8, E = H = 4, K = 2, two rows of length 4 and 3."""
    from dmg.corpus import EOS, SEP, TokenVocab
    from dmg.model import DmgParams, ModelDims, make_batch

    src_vocab = TokenVocab.from_list(["_START_", "_EOS_", "|", "_UNK_", "a", "b", "c", "d"])
    tgt_vocab = TokenVocab.from_list(["_START_", "_EOS_", "|", "_UNK_", "60", "62", "64", "65"])
    dims = ModelDims(8, 8, 2, embed=4, hidden=4, style_dim=3)
    params = DmgParams.init(dims, np.random.default_rng(seed), scale)
    batch = make_batch(
        [["a", SEP, "c", EOS], ["d", "b", EOS]],
        src_vocab,
        tgt_vocab,
        [["62", SEP, "65", EOS], ["60", "64", EOS]],
    )
    return params, batch, np.array([0, 1]), tgt_vocab
