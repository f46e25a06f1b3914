"""Randomized finite-difference audits of every analytic gradient.

Shared by the CLI `gradcheck` subcommand and the acceptance suite: the
loss-level checks perturb the sample/label (or query/prototype) arrays,
the encoder-level check perturbs the raw embedding table and chains
through encode -> loss -> backward.
"""

from __future__ import annotations

import numpy as np

from .encoder import EncoderParams, encode_text, encoder_backward
from .losses import finite_diff_check, loss_all, loss_ce, loss_label, loss_lg


def _random_episode(rng: np.random.Generator, n=5, k=2, m=3, d=16,
                    scale=0.7):
    """Sample/label arrays shaped like one episode batch."""
    c = n * (k + m)
    v = scale * rng.normal(size=(c, d))
    u = scale * rng.normal(size=(n, d))
    ids = np.concatenate([np.repeat(np.arange(n), k),
                          np.repeat(np.arange(n), m)])
    return v, ids, u


def check_loss_gradients(trials: int = 20, seed: int = 0, n=5, k=2, m=3,
                         d=16, tau: float = 0.5, h: float = 1e-4) -> dict:
    """Max relative FD error per loss kind over random episodes."""
    worst = {"lg": 0.0, "label": 0.0, "all": 0.0, "ce": 0.0}
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 100, trial)))
        v, ids, u = _random_episode(rng, n, k, m, d)

        def lg(v_, u_):
            res = loss_lg(v_, ids, u_, tau)
            return res.value, (res.grad_v, res.grad_u)

        def label(u_):
            res = loss_label(u_, tau)
            return res.value, (res.grad_u,)

        def both(v_, u_):
            res = loss_all(v_, ids, u_, tau)
            return res.value, (res.grad_v, res.grad_u)

        protos = 0.7 * rng.normal(size=(n, d))
        queries = v[n * k:]
        qids = ids[n * k:]

        def ce(q_, p_):
            res = loss_ce(q_, qids, p_, tau)
            return res.value, (res.grad_v, res.grad_u)

        worst["lg"] = max(worst["lg"], finite_diff_check(lg, [v, u], h))
        worst["label"] = max(worst["label"], finite_diff_check(label, [u], h))
        worst["all"] = max(worst["all"], finite_diff_check(both, [v, u], h))
        worst["ce"] = max(worst["ce"],
                          finite_diff_check(ce, [queries, protos], h))
    return worst


def check_encoder_gradient(instances: int = 5, seed: int = 0,
                           vocab_size: int = 24, dim: int = 8, n=3, k=1, m=2,
                           tau: float = 0.5, h: float = 1e-4) -> float:
    """Max relative FD error of the embedding-table gradient through
    encode -> combined loss -> backward."""
    worst = 0.0
    for inst in range(instances):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 200, inst)))
        table = rng.uniform(-0.6, 0.6, size=(vocab_size, dim))
        c = n * (k + m)
        sample_tokens = [
            list(rng.integers(0, vocab_size, size=int(rng.integers(2, 6))))
            for _ in range(c)
        ]
        label_tokens = [
            list(rng.integers(0, vocab_size, size=int(rng.integers(1, 3))))
            for _ in range(n)
        ]
        ids = np.concatenate([np.repeat(np.arange(n), k),
                              np.repeat(np.arange(n), m)])

        def pipeline(table_):
            params = EncoderParams(table_)
            v = np.stack([encode_text(params, t) for t in sample_tokens])
            u = np.stack([encode_text(params, t) for t in label_tokens])
            res = loss_all(v, ids, u, tau)
            grad = encoder_backward(params, sample_tokens + label_tokens,
                                    np.vstack([res.grad_v, res.grad_u]))
            return res.value, (grad,)

        worst = max(worst, finite_diff_check(pipeline, [table], h))
    return worst
