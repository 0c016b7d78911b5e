"""Reference numpy implementation of the negative-sampling update kernel.

Mirrors ``_sgns_fast.pyx`` operation for operation: for each pair all
target scores are taken with the current weights, then the output rows and
finally the input row are updated.
"""

import numpy as np


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def train_chunk(w_in, w_out, inputs, outputs, negatives, lrs):
    """Apply one SGD step per pair in place; return the summed pre-update loss."""
    k = negatives.shape[1]
    labels = np.zeros(k + 1)
    labels[0] = 1.0
    total = 0.0
    for p in range(inputs.shape[0]):
        i = inputs[p]
        o = outputs[p]
        negs = negatives[p]
        keep = negs != o
        targets = np.concatenate(([o], negs[keep]))
        lab = labels[: targets.shape[0]]
        v = w_in[i].copy()
        u = w_out[targets]
        s = u @ v
        total -= _log_sigmoid(s[0]) + _log_sigmoid(-s[1:]).sum()
        g = (lab - 1.0 / (1.0 + np.exp(-s))) * lrs[p]
        neu1e = g @ u
        np.add.at(w_out, targets, np.outer(g, v))
        w_in[i] += neu1e
    return float(total)
