"""
Order matters to one posterior and not the other
================================================

The linear-projection posterior averages over time, so shuffling the
sequence cannot change its answer.  The GRU posterior reads in order.
"""

import numpy as np

from dmg import numcore as nc
from dmg.model import DmgParams, ExpectedSequence, ModelDims, posterior_gru, posterior_lp

rng = np.random.default_rng(1)
params = DmgParams.init(ModelDims(10, 10, 2, embed=4, hidden=8), rng, scale=1.0)

rising = [nc.Tensor(np.full((1, 4), t / 5.0)) for t in range(6)]
falling = rising[::-1]
mask = np.ones((1, 6))

for name, seq in (("rising", rising), ("falling", falling)):
    s = ExpectedSequence(seq, [], mask)
    print(name, "LP ", np.exp(posterior_lp(params, s).data).round(6))
    print(name, "GRU", np.exp(posterior_gru(params, s).data).round(6))
