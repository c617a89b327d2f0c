"""Dense ReLU critic ``f: R^3 -> R`` with hand-written derivatives.

Parameters live in one flat float64 vector so the optimizer can treat them
as a single array; :meth:`CriticNet.weight` and :meth:`CriticNet.bias` give
per-layer views.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._kernels import NUMBA_KERNELS, NUMPY_KERNELS, layer_offsets
from .errors import InvalidArgumentError

GP_NORM_GUARD = 1e-12
_MAGIC = b"ADVC"
_VERSION = 1

_kernels = NUMBA_KERNELS if _accel.USE_NUMBA else NUMPY_KERNELS


def set_backend(name):
    """Switch critic kernels between ``"numba"`` and ``"numpy"`` at runtime."""
    global _kernels
    if name == "numba":
        if not _accel.HAVE_NUMBA:
            raise InvalidArgumentError("numba is not installed")
        _kernels = NUMBA_KERNELS
    elif name == "numpy":
        _kernels = NUMPY_KERNELS
    else:
        raise InvalidArgumentError(f"unknown backend {name!r}")


def get_backend():
    return "numba" if _kernels is NUMBA_KERNELS else "numpy"


@dataclass
class CriticNet:
    dims: tuple
    params: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 3 or self.dims[0] != 3 or self.dims[-1] != 1:
            raise InvalidArgumentError(f"bad critic dims {self.dims}")
        self._dims_arr = np.asarray(self.dims, dtype=np.int64)
        self._woff, self._boff, size = layer_offsets(self._dims_arr)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (size,):
            raise InvalidArgumentError(f"expected {size} parameters, got {self.params.shape}")

    @property
    def depth(self):
        return len(self.dims) - 1

    @property
    def n_params(self):
        return self.params.size

    def weight(self, k):
        nin, nout = self.dims[k], self.dims[k + 1]
        return self.params[self._woff[k]:self._woff[k] + nin * nout].reshape(nin, nout)

    def bias(self, k):
        return self.params[self._boff[k]:self._boff[k] + self.dims[k + 1]]

    def copy(self):
        return CriticNet(self.dims, self.params.copy())

    def with_params(self, params):
        return CriticNet(self.dims, params)

    def _args(self):
        return self.params, self._dims_arr, self._woff, self._boff


@dataclass
class CriticGradients:
    """Gradient w.r.t. every critic parameter, in the owning net's flat layout."""

    net: CriticNet
    flat: np.ndarray

    def weight(self, k):
        net = self.net
        nin, nout = net.dims[k], net.dims[k + 1]
        return self.flat[net._woff[k]:net._woff[k] + nin * nout].reshape(nin, nout)

    def bias(self, k):
        net = self.net
        return self.flat[net._boff[k]:net._boff[k] + net.dims[k + 1]]

    def __add__(self, other):
        return CriticGradients(self.net, self.flat + other.flat)

    def __mul__(self, c):
        return CriticGradients(self.net, self.flat * c)

    __rmul__ = __mul__


def critic_dims(width=32, depth=4):
    if width < 1 or depth < 2:
        raise InvalidArgumentError(f"need width >= 1 and depth >= 2, got {width}, {depth}")
    return (3,) + (int(width),) * (depth - 1) + (1,)


def init_critic(width=32, depth=4, rng=None):
    """He-normal weights (variance ``2 / fan_in``), zero biases."""
    rng = np.random.default_rng() if rng is None else rng
    dims = critic_dims(width, depth)
    woff, boff, size = layer_offsets(dims)
    params = np.zeros(size)
    for k in range(len(dims) - 1):
        nin, nout = dims[k], dims[k + 1]
        params[woff[k]:woff[k] + nin * nout] = rng.normal(0.0, np.sqrt(2.0 / nin), size=nin * nout)
    return CriticNet(dims, params)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(x.reshape(-1, 3))
    return X, single


def forward(net, x):
    """Critic value for one point ``(3,)`` or a batch ``(n, 3)``."""
    X, single = _as_batch(x)
    out = _kernels["forward"](*net._args(), X)
    return float(out[0]) if single else out


def grad_input(net, x):
    """``d f / d x`` for one point or a batch."""
    X, single = _as_batch(x)
    G = _kernels["grad_input"](*net._args(), X)
    return G[0] if single else G


def forward_and_backward(net, batch, output_cotangents):
    """Critic values on ``batch`` and ``sum_i c_i * d f(x_i) / d params``."""
    X, _ = _as_batch(batch)
    cot = np.ascontiguousarray(np.atleast_1d(np.asarray(output_cotangents, dtype=np.float64)))
    if cot.shape != (X.shape[0],):
        raise InvalidArgumentError(
            f"{X.shape[0]} points but {cot.shape[0]} cotangents"
        )
    if X.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    out, grad = _kernels["backward_params"](*net._args(), X, cot)
    return out, CriticGradients(net, grad)


def backward_params(net, batch, output_cotangents):
    """``sum_i c_i * d f(x_i) / d params``."""
    return forward_and_backward(net, batch, output_cotangents)[1]


def penalty_value_and_grad(net, x_hat, weight=1.0):
    """Per-point ``(||grad_x f|| - 1)^2`` and the parameter gradient of
    ``weight * sum`` of those terms."""
    X, _ = _as_batch(x_hat)
    pen, grad = _kernels["gradient_penalty"](*net._args(), X, float(weight), GP_NORM_GUARD)
    return pen, CriticGradients(net, grad)


def backward_gp(net, x_hat):
    """Parameter gradient of ``(||grad_x f(x_hat)|| - 1)^2``, summed over a batch."""
    return penalty_value_and_grad(net, x_hat)[1]


def save_critic(path, net):
    """Binary checkpoint: magic, version byte, layer dims, float64 LE params."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<I", len(net.dims)))
        fh.write(struct.pack("<%dI" % len(net.dims), *net.dims))
        fh.write(net.params.astype("<f8").tobytes())


def load_critic(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise InvalidArgumentError(f"{path}: not a critic checkpoint")
    if data[4] != _VERSION:
        raise InvalidArgumentError(f"{path}: unsupported checkpoint version {data[4]}")
    (n,) = struct.unpack_from("<I", data, 5)
    dims = struct.unpack_from("<%dI" % n, data, 9)
    params = np.frombuffer(data, dtype="<f8", offset=9 + 4 * n).astype(np.float64)
    return CriticNet(dims, params)
