"""Shared test utilities: random nets and the finite-difference oracle."""

import numpy as np

from steershape.autodiff import MLPLayer, Tape, Tensor2, backward, forward_mlp, forward_mlp_inference


def random_layers(rng, dims, scale=0.7):
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append(MLPLayer(Tensor2(rng.normal(size=(fan_in, fan_out)) * scale),
                               Tensor2(rng.normal(size=(1, fan_out)) * 0.2)))
    return layers


def scalar_forward(layers, x_row):
    """Independent loop-based forward evaluation, one scalar at a time."""
    h = list(x_row)
    for li, layer in enumerate(layers):
        w, b = layer.weight.a, layer.bias.a
        nxt = []
        for j in range(w.shape[1]):
            acc = b[0, j]
            for i in range(w.shape[0]):
                acc += h[i] * w[i, j]
            if li < len(layers) - 1 and acc < 0:
                acc = 0.0
            nxt.append(acc)
        h = nxt
    return h[0]


def _preacts(layers, x):
    out = []
    h = x
    for layer in layers[:-1]:
        h = h @ layer.weight.a + layer.bias.a
        out.append(h)
        h = np.maximum(h, 0.0)
    return out


def finite_difference_check(rng, dims, batch, h=1e-5, kink_margin=1e-6):
    """Max relative error between tape gradients and central differences.

    Coordinates whose perturbed forward pass lands a pre-activation within
    ``kink_margin`` of a ReLU kink are skipped; the subgradient convention
    makes finite differences meaningless there.
    """
    layers = random_layers(rng, dims)
    x = rng.normal(size=(batch, dims[0]))
    seed = rng.normal(size=(batch, 1))

    def loss_value():
        return float((forward_mlp_inference(layers, x) * seed).sum())

    tape = Tape()
    xv = tape.leaf(x)
    out = forward_mlp(layers, xv, tape)
    grads = backward(tape, seed=seed, root=out)
    leaf_indices = [i for i, node in enumerate(tape.nodes) if node.op == "leaf"]
    params = []
    for layer in layers:
        params.extend([layer.weight.a, layer.bias.a])
    param_grads = [grads[i] for i in leaf_indices[1:]]
    assert len(params) == len(param_grads)

    max_rel = 0.0
    for p, g in zip(params, param_grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = loss_value()
            near_kink = any(np.any(np.abs(a) < kink_margin)
                            for a in _preacts(layers, x))
            flat[idx] = orig - h
            lm = loss_value()
            near_kink |= any(np.any(np.abs(a) < kink_margin)
                             for a in _preacts(layers, x))
            flat[idx] = orig
            if near_kink:
                continue
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(gflat[idx]), 1e-6)
            max_rel = max(max_rel, abs(fd - gflat[idx]) / denom)
    return max_rel
