"""Pure numpy kernels; same signatures as the compiled ``_kernels`` module.

Parameters live in one flat float64 vector: for each layer the row-major
weight matrix ``(n_out, n_in)`` followed by the bias ``(n_out,)``.
"""
import numpy as np


def _layers(theta, sizes):
    out = []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = theta[pos:pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        b = theta[pos:pos + n_out]
        pos += n_out
        out.append((w, b))
    return out


def _forward(theta, sizes, X):
    acts = [X]
    layers = _layers(theta, sizes)
    a = X
    for l, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.tanh(z) if l < len(layers) - 1 else z
        acts.append(a)
    return acts, layers


def _backward(layers, acts, delta, grad):
    grads = _layers(grad, [acts[0].shape[1]] + [w.shape[0] for w, _ in layers])
    d = delta[:, None]
    for l in range(len(layers) - 1, -1, -1):
        w, _ = layers[l]
        gw, gb = grads[l]
        gw += d.T @ acts[l]
        gb += d.sum(axis=0)
        if l:
            d = (d @ w) * (1.0 - acts[l] ** 2)


def forward_batch(theta, sizes, X):
    acts, _ = _forward(theta, sizes, np.asarray(X, dtype=np.float64))
    return acts[-1][:, 0].copy()


def backward_batch(theta, sizes, X, upstream, grad):
    """Accumulate ``sum_m upstream[m] * dN(X[m])/dtheta`` into ``grad``."""
    grad[:] = 0.0
    acts, layers = _forward(theta, sizes, np.asarray(X, dtype=np.float64))
    _backward(layers, acts, np.asarray(upstream, dtype=np.float64), grad)


def loss_batch(theta, sizes, X, center, target, ds):
    r = center + forward_batch(theta, sizes, X) - target
    return float(np.sum(r * r) * ds)


def loss_grad(theta, sizes, X, center, target, ds, grad):
    grad[:] = 0.0
    acts, layers = _forward(theta, sizes, X)
    r = center + acts[-1][:, 0] - target
    _backward(layers, acts, 2.0 * ds * r, grad)
    return float(np.sum(r * r) * ds)


def adam_update(theta, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)
