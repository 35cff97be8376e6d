"""Pure numpy version of the GIS expectation kernel.

Same contract as the compiled ``_gis_kernel.accumulate_shard``.
"""

import numpy as np


def accumulate_shard(ctx_ptr, ent_y, ent_f, ctx_n, obs_ptr, obs_y, obs_n,
                     weights, gbase, c0, c1, feat_out, glob_out):
    """Accumulate expected feature counts for contexts ``c0 .. c1-1``.

    For every context the score of outcome ``y`` is ``gbase[y]`` plus the
    weights of its sparse entries.  Adds ``n_c * P(y|c)`` into ``glob_out[y]``
    and into ``feat_out[f]`` for each sparse entry, and returns the
    log-likelihood of the observed outcomes.
    """
    nc = c1 - c0
    if nc <= 0:
        return 0.0
    e0, e1 = ctx_ptr[c0], ctx_ptr[c1]
    rows = np.repeat(np.arange(nc), np.diff(ctx_ptr[c0:c1 + 1]))
    ys = ent_y[e0:e1]
    scores = np.tile(gbase, (nc, 1))
    np.add.at(scores, (rows, ys), weights[ent_f[e0:e1]])
    m = scores.max(axis=1)
    logz = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
    probs = np.exp(scores - logz[:, None])
    n = ctx_n[c0:c1]
    glob_out += (probs * n[:, None]).sum(axis=0)
    np.add.at(feat_out, ent_f[e0:e1], n[rows] * probs[rows, ys])
    o0, o1 = obs_ptr[c0], obs_ptr[c1]
    orows = np.repeat(np.arange(nc), np.diff(obs_ptr[c0:c1 + 1]))
    oy = obs_y[o0:o1]
    return float(np.sum(obs_n[o0:o1] * (scores[orows, oy] - logz[orows])))
