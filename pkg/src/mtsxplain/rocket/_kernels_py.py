"""Pure-numpy fallback for the compiled ROCKET convolution.

Vectorised over instances; loops over kernels, channels and taps in the same
order as the compiled kernel so both accumulate every output identically.
"""

import numpy as np


def apply_kernels(X, weights, lengths, biases, dilations, paddings, n_channels,
                  channel_indices, num_threads=1):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, _, L = X.shape
    K = len(lengths)
    out = np.empty((n, 2 * K))
    wo = co = 0
    for k in range(K):
        length, dil, pad = int(lengths[k]), int(dilations[k]), int(paddings[k])
        out_len = L + 2 * pad - (length - 1) * dil
        z = np.full((n, out_len), float(biases[k]))
        for ci in range(int(n_channels[k])):
            row = X[:, int(channel_indices[co + ci]), :]
            for j in range(length):
                w = weights[wo + ci * length + j]
                shift = j * dil - pad
                t_lo = max(0, -shift)
                t_hi = min(out_len, L - shift)
                if t_hi > t_lo:
                    z[:, t_lo:t_hi] += w * row[:, t_lo + shift : t_hi + shift]
        out[:, 2 * k] = (z > 0).sum(axis=1) / out_len
        out[:, 2 * k + 1] = z.max(axis=1)
        wo += int(n_channels[k]) * length
        co += int(n_channels[k])
    return out
