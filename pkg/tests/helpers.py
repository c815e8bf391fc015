"""Shared builders for gradient-check tests."""

import numpy as np

from metriclab.losses import contrastive_loss, sample_pairs, sample_triplets, triplet_loss
from metriclab.model import Architecture, encode, encode_backward, init_params
from metriclab.numcore import RngStream

TINY_CNN = dict(fc_dims=(16, 8), image_size=8, channels=(2, 3))


def architecture(kind):
    if kind == "mlp":
        return Architecture.mlp((6, 5, 4))
    if kind == "cnn":
        return Architecture.cnn(**TINY_CNN)
    return Architecture.head(7, 5)


def random_problem(kind, loss, seed, n=8):
    """Params, inputs, labels and fixed items for an encoder+loss gradient check."""
    rng = RngStream(seed)
    arch = architecture(kind)
    params = init_params(arch, rng)
    params = [p + 0.05 * rng.normal(p.shape) for p in params]  # non-zero biases too
    x = rng.normal((n,) + arch.input_shape)
    labels = np.array([0, 0, 1, 1, 2, 2, 0, 1][:n] if n <= 8 else rng.integers(3, n))
    idx = np.arange(n)
    sampler = sample_pairs if loss == "contrastive" else sample_triplets
    items = sampler(labels, idx, rng, margin=1.0)
    return arch, params, x, items


def loss_fn(arch, x, items, loss):
    fn = contrastive_loss if loss == "contrastive" else triplet_loss

    def f(params):
        emb, cache = encode(params, arch, x)
        out = fn(emb, items)
        return out.total, encode_backward(cache, out.grad_embeddings)

    return f
