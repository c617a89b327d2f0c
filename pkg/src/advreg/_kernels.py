"""Batch kernels for the dense ReLU critic.

Every kernel has a numba loop version and a vectorized numpy version with
the same signature; :mod:`advreg.critic` picks one at import time.

Layout: ``params`` is flat; layer ``k`` stores its ``(dims[k], dims[k+1])``
weight matrix row-major at ``woff[k]`` followed by the bias at ``boff[k]``.
The last layer is affine, all others use ReLU with derivative 0 at 0.
"""

import numpy as np

from ._accel import njit


def layer_offsets(dims):
    dims = np.asarray(dims, dtype=np.int64)
    L = len(dims) - 1
    woff = np.empty(L, dtype=np.int64)
    boff = np.empty(L, dtype=np.int64)
    o = 0
    for k in range(L):
        woff[k] = o
        o += dims[k] * dims[k + 1]
        boff[k] = o
        o += dims[k + 1]
    return woff, boff, o


# ---------------------------------------------------------------- numba


_JIT = dict(cache=True, fastmath=True)


@njit(**_JIT)
def _sample_forward(params, dims, woff, boff, x, acts, pre):
    L = dims.shape[0] - 1
    a0 = acts[0]
    for j in range(dims[0]):
        a0[j] = x[j]
    for k in range(L):
        nin = dims[k]
        nout = dims[k + 1]
        p = pre[k]
        b = params[boff[k]:boff[k] + nout]
        for o in range(nout):
            p[o] = b[o]
        ak = acts[k]
        for i in range(nin):
            a = ak[i]
            wr = params[woff[k] + i * nout:woff[k] + (i + 1) * nout]
            for o in range(nout):
                p[o] += a * wr[o]
        if k < L - 1:
            an = acts[k + 1]
            for o in range(nout):
                an[o] = max(p[o], 0.0)
    return pre[L - 1, 0]


@njit(**_JIT)
def _sample_deltas(params, dims, woff, pre, seed, delta):
    # delta[k, :dims[k+1]] = seed * d out / d pre[k]
    L = dims.shape[0] - 1
    delta[L - 1, 0] = seed
    for k in range(L - 1, 0, -1):
        nin = dims[k]
        nout = dims[k + 1]
        dk = delta[k]
        dprev = delta[k - 1]
        pk = pre[k - 1]
        for i in range(nin):
            wr = params[woff[k] + i * nout:woff[k] + (i + 1) * nout]
            s = 0.0
            for o in range(nout):
                s += wr[o] * dk[o]
            dprev[i] = s if pk[i] > 0.0 else 0.0


@njit(**_JIT)
def _input_grad_from_deltas(params, dims, woff, delta, g):
    n1 = dims[1]
    d0 = delta[0]
    nrm2 = 0.0
    for i in range(dims[0]):
        wr = params[woff[0] + i * n1:woff[0] + (i + 1) * n1]
        acc = 0.0
        for o in range(n1):
            acc += wr[o] * d0[o]
        g[i] = acc
        nrm2 += acc * acc
    return nrm2


@njit(**_JIT)
def _nb_forward(params, dims, woff, boff, X):
    n = X.shape[0]
    w = dims.max()
    L = dims.shape[0] - 1
    acts = np.zeros((L, w))
    pre = np.zeros((L, w))
    out = np.empty(n)
    for s in range(n):
        out[s] = _sample_forward(params, dims, woff, boff, X[s], acts, pre)
    return out


@njit(**_JIT)
def _nb_grad_input(params, dims, woff, boff, X):
    n = X.shape[0]
    w = dims.max()
    L = dims.shape[0] - 1
    acts = np.zeros((L, w))
    pre = np.zeros((L, w))
    delta = np.zeros((L, w))
    G = np.zeros((n, dims[0]))
    for s in range(n):
        _sample_forward(params, dims, woff, boff, X[s], acts, pre)
        _sample_deltas(params, dims, woff, pre, 1.0, delta)
        _input_grad_from_deltas(params, dims, woff, delta, G[s])
    return G


@njit(**_JIT)
def _nb_backward_params(params, dims, woff, boff, X, cot):
    n = X.shape[0]
    w = dims.max()
    L = dims.shape[0] - 1
    acts = np.zeros((L, w))
    pre = np.zeros((L, w))
    delta = np.zeros((L, w))
    out = np.empty(n)
    grad = np.zeros(params.shape[0])
    for s in range(n):
        out[s] = _sample_forward(params, dims, woff, boff, X[s], acts, pre)
        _sample_deltas(params, dims, woff, pre, cot[s], delta)
        for k in range(L):
            nin = dims[k]
            nout = dims[k + 1]
            ak = acts[k]
            dk = delta[k]
            for i in range(nin):
                a = ak[i]
                gr = grad[woff[k] + i * nout:woff[k] + (i + 1) * nout]
                for o in range(nout):
                    gr[o] += a * dk[o]
            gb = grad[boff[k]:boff[k] + nout]
            for o in range(nout):
                gb[o] += dk[o]
    return out, grad


@njit(**_JIT)
def _nb_gradient_penalty(params, dims, woff, boff, X, weight, guard):
    n = X.shape[0]
    w = dims.max()
    L = dims.shape[0] - 1
    acts = np.zeros((L, w))
    pre = np.zeros((L, w))
    delta = np.zeros((L, w))
    v = np.zeros((2, w))
    pen = np.empty(n)
    grad = np.zeros(params.shape[0])
    for s in range(n):
        _sample_forward(params, dims, woff, boff, X[s], acts, pre)
        _sample_deltas(params, dims, woff, pre, 1.0, delta)
        nrm = np.sqrt(_input_grad_from_deltas(params, dims, woff, delta, v[0]))
        pen[s] = (nrm - 1.0) * (nrm - 1.0)
        if nrm < guard:
            continue
        coef = weight * 2.0 * (nrm - 1.0) / nrm
        for i in range(dims[0]):
            v[0, i] *= coef
        cur = 0
        for k in range(L):
            nin = dims[k]
            nout = dims[k + 1]
            vc = v[cur]
            dk = delta[k]
            for i in range(nin):
                vi = vc[i]
                gr = grad[woff[k] + i * nout:woff[k] + (i + 1) * nout]
                for o in range(nout):
                    gr[o] += vi * dk[o]
            if k < L - 1:
                vn = v[1 - cur]
                for o in range(nout):
                    vn[o] = 0.0
                for i in range(nin):
                    vi = vc[i]
                    wr = params[woff[k] + i * nout:woff[k] + (i + 1) * nout]
                    for o in range(nout):
                        vn[o] += vi * wr[o]
                pk = pre[k]
                for o in range(nout):
                    if not pk[o] > 0.0:
                        vn[o] = 0.0
                cur = 1 - cur
    return pen, grad


# ---------------------------------------------------------------- numpy


def _unpack(params, dims, woff, boff):
    Ws, bs = [], []
    for k in range(len(dims) - 1):
        nin, nout = int(dims[k]), int(dims[k + 1])
        Ws.append(params[woff[k]:woff[k] + nin * nout].reshape(nin, nout))
        bs.append(params[boff[k]:boff[k] + nout])
    return Ws, bs


def _np_forward_full(Ws, bs, X):
    acts, masks = [X], []
    h = X
    for W, b in zip(Ws[:-1], bs[:-1]):
        z = h @ W + b
        m = z > 0.0
        h = np.where(m, z, 0.0)
        acts.append(h)
        masks.append(m)
    out = h @ Ws[-1] + bs[-1]
    return out[:, 0], acts, masks


def _np_deltas(Ws, masks, seed):
    # seed: (n,) cotangent on the output; returns per-layer (n, dims[k+1])
    deltas = [seed[:, None]]
    for k in range(len(Ws) - 1, 0, -1):
        d = (deltas[0] @ Ws[k].T) * masks[k - 1]
        deltas.insert(0, d)
    return deltas


def _np_forward(params, dims, woff, boff, X):
    Ws, bs = _unpack(params, dims, woff, boff)
    return _np_forward_full(Ws, bs, X)[0]


def _np_grad_input(params, dims, woff, boff, X):
    Ws, bs = _unpack(params, dims, woff, boff)
    _, _, masks = _np_forward_full(Ws, bs, X)
    deltas = _np_deltas(Ws, masks, np.ones(len(X)))
    return deltas[0] @ Ws[0].T


def _np_backward_params(params, dims, woff, boff, X, cot):
    Ws, bs = _unpack(params, dims, woff, boff)
    out, acts, masks = _np_forward_full(Ws, bs, X)
    deltas = _np_deltas(Ws, masks, np.asarray(cot, dtype=np.float64))
    grad = np.zeros_like(params)
    for k, (a, d) in enumerate(zip(acts, deltas)):
        nin, nout = int(dims[k]), int(dims[k + 1])
        grad[woff[k]:woff[k] + nin * nout] = (a.T @ d).ravel()
        grad[boff[k]:boff[k] + nout] = d.sum(axis=0)
    return out, grad


def _np_gradient_penalty(params, dims, woff, boff, X, weight, guard):
    Ws, bs = _unpack(params, dims, woff, boff)
    _, _, masks = _np_forward_full(Ws, bs, X)
    deltas = _np_deltas(Ws, masks, np.ones(len(X)))
    g = deltas[0] @ Ws[0].T
    nrm = np.sqrt(np.sum(g * g, axis=1))
    pen = (nrm - 1.0) ** 2
    live = nrm >= guard
    coef = np.zeros_like(nrm)
    coef[live] = weight * 2.0 * (nrm[live] - 1.0) / nrm[live]
    # forward-mode sweep of u = coef * g through the fixed ReLU pattern;
    # biases only move the pattern, so their penalty gradient is zero
    v = g * coef[:, None]
    grad = np.zeros_like(params)
    for k, d in enumerate(deltas):
        nin, nout = int(dims[k]), int(dims[k + 1])
        grad[woff[k]:woff[k] + nin * nout] = (v.T @ d).ravel()
        if k < len(Ws) - 1:
            v = (v @ Ws[k]) * masks[k]
    return pen, grad


NUMBA_KERNELS = {
    "forward": _nb_forward,
    "grad_input": _nb_grad_input,
    "backward_params": _nb_backward_params,
    "gradient_penalty": _nb_gradient_penalty,
}

NUMPY_KERNELS = {
    "forward": _np_forward,
    "grad_input": _np_grad_input,
    "backward_params": _np_backward_params,
    "gradient_penalty": _np_gradient_penalty,
}
