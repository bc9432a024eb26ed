# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled network kernels.

Same flat parameter layout and signatures as ``_kernels_py``. Samples are
processed in fixed blocks, layer by layer, in ascending row order, so the
accumulated sums do not depend on anything but the inputs.
"""
import numpy as np
from libc.math cimport tanh, sqrt, pow

DEF BLOCK = 256
# row stride of the block buffers; padding avoids cache-set aliasing between rows
DEF STRIDE = BLOCK + 8


cdef struct Net:
    Py_ssize_t L
    const Py_ssize_t* sizes
    const Py_ssize_t* woff   # start of W_l in theta; b_l follows W_l
    const Py_ssize_t* aoff   # start of layer l activations in the block buffer
    const double* theta


cdef void _forward_block(Net net, const double* X, Py_ssize_t nb, double* acts) noexcept nogil:
    # activations are feature-major: unit k of layer l at acts[aoff[l] + k*STRIDE + m]
    cdef Py_ssize_t l, i, j, m, n_in, n_out
    cdef const double* W
    cdef const double* b
    cdef double* a_in
    cdef double* a_out
    cdef double* zj
    cdef double* ai
    cdef double w
    n_in = net.sizes[0]
    for i in range(n_in):
        for m in range(nb):
            acts[i * STRIDE + m] = X[m * n_in + i]
    for l in range(net.L):
        n_in = net.sizes[l]
        n_out = net.sizes[l + 1]
        W = net.theta + net.woff[l]
        b = W + n_in * n_out
        a_in = acts + net.aoff[l]
        a_out = acts + net.aoff[l + 1]
        for j in range(n_out):
            zj = a_out + j * STRIDE
            w = b[j]
            for m in range(nb):
                zj[m] = w
            for i in range(n_in):
                w = W[j * n_in + i]
                ai = a_in + i * STRIDE
                for m in range(nb):
                    zj[m] += w * ai[m]
            if l < net.L - 1:
                for m in range(nb):
                    zj[m] = tanh(zj[m])


cdef void _backward_block(Net net, double* acts, Py_ssize_t nb, double* d, double* dprev,
                          double* grad) noexcept nogil:
    """``d[m]`` holds the upstream derivative of sample m's output on entry."""
    cdef Py_ssize_t l, i, j, m, n_in, n_out
    cdef const double* W
    cdef double* gW
    cdef double* gb
    cdef double* a_in
    cdef double* ai
    cdef double* dj
    cdef double* di
    cdef double* tmp
    cdef double s, w
    for l in range(net.L - 1, -1, -1):
        n_in = net.sizes[l]
        n_out = net.sizes[l + 1]
        W = net.theta + net.woff[l]
        gW = grad + net.woff[l]
        gb = gW + n_in * n_out
        a_in = acts + net.aoff[l]
        for j in range(n_out):
            dj = d + j * STRIDE
            s = 0.0
            for m in range(nb):
                s += dj[m]
            gb[j] += s
            for i in range(n_in):
                ai = a_in + i * STRIDE
                s = 0.0
                for m in range(nb):
                    s += dj[m] * ai[m]
                gW[j * n_in + i] += s
        if l > 0:
            for i in range(n_in):
                di = dprev + i * STRIDE
                for m in range(nb):
                    di[m] = 0.0
                for j in range(n_out):
                    w = W[j * n_in + i]
                    dj = d + j * STRIDE
                    for m in range(nb):
                        di[m] += w * dj[m]
                ai = a_in + i * STRIDE
                for m in range(nb):
                    di[m] *= 1.0 - ai[m] * ai[m]
            tmp = d
            d = dprev
            dprev = tmp


cdef class _Workspace:
    cdef Py_ssize_t[::1] sizes, woff, aoff
    cdef double[::1] acts, d, dprev
    cdef Net net

    def __init__(self, const double[::1] theta, sizes):
        sz = np.ascontiguousarray(sizes, dtype=np.intp)
        if sz.ndim != 1 or len(sz) < 2:
            raise ValueError("need at least input and output layer sizes")
        woff = np.zeros(len(sz) - 1, dtype=np.intp)
        pos = 0
        for l in range(len(sz) - 1):
            woff[l] = pos
            pos += sz[l] * sz[l + 1] + sz[l + 1]
        if pos != theta.shape[0]:
            raise ValueError(f"parameter vector has {theta.shape[0]} entries, sizes need {pos}")
        aoff = np.zeros(len(sz), dtype=np.intp)
        aoff[1:] = np.cumsum(sz[:-1]) * STRIDE
        self.sizes = sz
        self.woff = woff
        self.aoff = aoff
        self.acts = np.empty(int(sz.sum()) * STRIDE)
        self.d = np.empty(int(sz.max()) * STRIDE)
        self.dprev = np.empty(int(sz.max()) * STRIDE)
        self.net.L = len(sz) - 1
        self.net.sizes = &self.sizes[0]
        self.net.woff = &self.woff[0]
        self.net.aoff = &self.aoff[0]
        self.net.theta = &theta[0]


def _as_matrix(X, Py_ssize_t n_in):
    Xa = np.ascontiguousarray(X, dtype=np.float64)
    if Xa.ndim != 2 or Xa.shape[1] != n_in:
        raise ValueError(f"inputs must have shape (N, {n_in}), got {Xa.shape}")
    return Xa


def forward_batch(const double[::1] theta, sizes, X):
    cdef _Workspace ws = _Workspace(theta, sizes)
    cdef const double[:, ::1] Xv = _as_matrix(X, ws.sizes[0])
    cdef Py_ssize_t N = Xv.shape[0], m0, nb, m, last = ws.aoff[ws.net.L]
    out = np.empty(N)
    cdef double[::1] ov = out
    if N == 0:
        return out
    with nogil:
        m0 = 0
        while m0 < N:
            nb = min(BLOCK, N - m0)
            _forward_block(ws.net, &Xv[m0, 0], nb, &ws.acts[0])
            for m in range(nb):
                ov[m0 + m] = ws.acts[last + m]
            m0 += nb
    return out


def backward_batch(const double[::1] theta, sizes, X, upstream, double[::1] grad):
    cdef _Workspace ws = _Workspace(theta, sizes)
    cdef const double[:, ::1] Xv = _as_matrix(X, ws.sizes[0])
    cdef const double[::1] up = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef Py_ssize_t N = Xv.shape[0], m0, nb, m
    grad[:] = 0.0
    if N == 0:
        return
    with nogil:
        m0 = 0
        while m0 < N:
            nb = min(BLOCK, N - m0)
            _forward_block(ws.net, &Xv[m0, 0], nb, &ws.acts[0])
            for m in range(nb):
                ws.d[m] = up[m0 + m]
            _backward_block(ws.net, &ws.acts[0], nb, &ws.d[0], &ws.dprev[0], &grad[0])
            m0 += nb


def loss_batch(const double[::1] theta, sizes, X, const double[::1] center,
               const double[::1] target, double ds):
    cdef double[::1] pred = forward_batch(theta, sizes, X)
    cdef Py_ssize_t m
    cdef double r, total = 0.0
    for m in range(pred.shape[0]):
        r = center[m] + pred[m] - target[m]
        total += r * r
    return total * ds


def loss_grad(const double[::1] theta, sizes, X, const double[::1] center,
              const double[::1] target, double ds, double[::1] grad):
    cdef _Workspace ws = _Workspace(theta, sizes)
    cdef const double[:, ::1] Xv = _as_matrix(X, ws.sizes[0])
    cdef Py_ssize_t N = Xv.shape[0], m0, nb, m, last = ws.aoff[ws.net.L]
    cdef double r, total = 0.0
    grad[:] = 0.0
    if N == 0:
        return 0.0
    with nogil:
        m0 = 0
        while m0 < N:
            nb = min(BLOCK, N - m0)
            _forward_block(ws.net, &Xv[m0, 0], nb, &ws.acts[0])
            for m in range(nb):
                r = center[m0 + m] + ws.acts[last + m] - target[m0 + m]
                total += r * r
                ws.d[m] = 2.0 * ds * r
            _backward_block(ws.net, &ws.acts[0], nb, &ws.d[0], &ws.dprev[0], &grad[0])
            m0 += nb
    return total * ds


def adam_update(double[::1] theta, const double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - pow(beta1, step)
    cdef double c2 = 1.0 - pow(beta2, step)
    cdef double g
    with nogil:
        for i in range(theta.shape[0]):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            theta[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
