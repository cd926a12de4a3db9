"""Dense float64 tensors with a reverse-mode gradient tape.

Implements exactly the surface the encoder/decoder networks need:
broadcasting arithmetic, matmul, elementwise nonlinearities, reductions,
reshape/slicing, and 2-D convolution together with its exact adjoint
(transposed convolution). Everything is backed by numpy arrays in
row-major order; element (i, j) of a d x d map lives at flat index i*d+j.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError

__all__ = [
    "Tensor",
    "Layer",
    "conv2d",
    "conv2d_transpose",
    "dense",
    "finite_difference_check",
    "init_uniform_fan_in",
    "no_grad",
]


def _unbroadcast(grad, shape):
    """Sum `grad` over axes that were broadcast to reach `grad.shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense f64 array that may participate in the gradient tape.

    `requires_grad=True` marks a leaf parameter; results of taped
    operations propagate the flag. After `backward()` every participating
    tensor's `.grad` holds d(loss)/d(tensor) and the tape is cleared.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- tape mechanics ------------------------------------------------------

    def backward(self):
        """Populate `.grad` on every participating tensor, then clear the tape.

        The receiver must be a scalar produced by taped operations.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                # never mutate a handed-out grad buffer; reassignment keeps
                # aliased first contributions safe
                parent.grad = g if parent.grad is None else parent.grad + g
        for node in topo:
            node._parents = ()
            node._vjp = None

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        out = _node(self.data + other.data, (self, other))
        if out.requires_grad:
            out._vjp = lambda g: (
                _unbroadcast(g, self.data.shape),
                _unbroadcast(g, other.data.shape),
            )
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        out = _node(self.data - other.data, (self, other))
        if out.requires_grad:
            out._vjp = lambda g: (
                _unbroadcast(g, self.data.shape),
                _unbroadcast(-g, other.data.shape),
            )
        return out

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        out = _node(self.data * other.data, (self, other))
        if out.requires_grad:
            out._vjp = lambda g: (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            )
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out.requires_grad:
            out._vjp = lambda g: (-g,)
        return out

    def __truediv__(self, other):
        other = _coerce(other)
        out = _node(self.data / other.data, (self, other))
        if out.requires_grad:
            out._vjp = lambda g: (
                _unbroadcast(g / other.data, self.data.shape),
                _unbroadcast(-g * self.data / (other.data**2), other.data.shape),
            )
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise ContractError("only scalar exponents are supported")
        out = _node(self.data**exponent, (self,))
        if out.requires_grad:
            out._vjp = lambda g: (g * exponent * self.data ** (exponent - 1),)
        return out

    def __matmul__(self, other):
        other = _coerce(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise DimensionError(
                f"matmul expects 2-D operands, got {self.data.ndim}-D @ {other.data.ndim}-D"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise DimensionError(
                f"matmul inner axes disagree: {self.data.shape} @ {other.data.shape} (axis 1 vs axis 0)"
            )
        out = _node(self.data @ other.data, (self, other))
        if out.requires_grad:
            a, b = self, other

            def vjp(g):
                da = g @ b.data.T if a.requires_grad else None
                db = a.data.T @ g if b.requires_grad else None
                return (da, db)

            out._vjp = vjp
        return out

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self):
        out = _node(np.exp(self.data), (self,))
        if out.requires_grad:
            out._vjp = lambda g, y=out.data: (g * y,)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out.requires_grad:
            out._vjp = lambda g: (g / self.data,)
        return out

    def expm1(self):
        out = _node(np.expm1(self.data), (self,))
        if out.requires_grad:
            out._vjp = lambda g, y=out.data: (g * (y + 1.0),)
        return out

    def sqrt(self):
        out = _node(np.sqrt(self.data), (self,))
        if out.requires_grad:
            out._vjp = lambda g, y=out.data: (g * 0.5 / y,)
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            mask = self.data > 0.0
            out._vjp = lambda g: (g * mask,)
        return out

    def sigmoid(self):
        y = expit(self.data)
        out = _node(y, (self,))
        if out.requires_grad:
            out._vjp = lambda g: (g * y * (1.0 - y),)
        return out

    # -- reductions and shape ops ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            shape = self.data.shape

            def vjp(g):
                gg = g
                if axis is not None and not keepdims:
                    gg = np.expand_dims(g, axis)
                return (np.broadcast_to(gg, shape),)

            out._vjp = vjp
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._vjp = lambda g: (g.reshape(self.data.shape),)
        return out

    def __getitem__(self, idx):
        out = _node(self.data[idx], (self,))
        if out.requires_grad:

            def vjp(g):
                full = np.zeros_like(self.data)
                full[idx] = g
                return (full,)

            out._vjp = vjp
        return out


def _coerce(value):
    return value if isinstance(value, Tensor) else Tensor(value)


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording (e.g. for generation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _node(data, parents):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


# -- raw convolution kernels (ndarray in, ndarray out) ---------------------------
#
# Kernel convention throughout: K has shape [out_c, in_c, kh, kw] and
# `_conv_fwd` maps [B, in_c, H, W] -> [B, out_c, Ho, Wo] with
# Ho = (H + 2*pad - kh)//stride + 1. `_conv_igrad` is its exact adjoint and
# `_conv_wgrad` the matching weight gradient; transposed convolution is
# `_conv_igrad` used as a forward operation.


def conv_output_size(n, kernel, stride, padding):
    return (n + 2 * padding - kernel) // stride + 1


def _im2col(x, kh, kw, stride, padding):
    """Return patch matrix [B*Ho*Wo, C*kh*kw] plus output spatial size."""
    B, C, H, W = x.shape
    ho = conv_output_size(H, kh, stride, padding)
    wo = conv_output_size(W, kw, stride, padding)
    if ho <= 0 or wo <= 0:
        raise DimensionError(
            f"kernel {kh}x{kw} with stride {stride}, padding {padding} does not fit "
            f"input spatial size {H}x{W}"
        )
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * ho * wo, C * kh * kw)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(colgrad, x_shape, kh, kw, stride, padding, ho, wo):
    """Scatter-add column gradients back onto the (padded) input layout."""
    B, C, H, W = x_shape
    hp, wp = H + 2 * padding, W + 2 * padding
    out = np.zeros((B, C, hp, wp))
    cg = colgrad.reshape(B, ho, wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += cg[
                :, :, u, v
            ]
    if padding:
        out = out[:, :, padding : hp - padding, padding : wp - padding]
    return out


def _conv_fwd(x, kernel, stride, padding, cols=None):
    out_c, in_c, kh, kw = kernel.shape
    if x.shape[1] != in_c:
        raise DimensionError(
            f"conv: input has {x.shape[1]} channels on axis 1, kernel expects {in_c}"
        )
    if cols is None:
        cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    else:
        cols, ho, wo = cols
    B = x.shape[0]
    out = cols @ kernel.reshape(out_c, -1).T
    return out.reshape(B, ho, wo, out_c).transpose(0, 3, 1, 2), (cols, ho, wo)


def _conv_igrad(dout, kernel, stride, padding, in_spatial):
    out_c, in_c, kh, kw = kernel.shape
    B = dout.shape[0]
    if dout.shape[1] != out_c:
        raise DimensionError(
            f"conv adjoint: input has {dout.shape[1]} channels on axis 1, kernel maps to {out_c}"
        )
    H, W = in_spatial
    ho = conv_output_size(H, kh, stride, padding)
    wo = conv_output_size(W, kw, stride, padding)
    if (ho, wo) != dout.shape[2:]:
        raise DimensionError(
            f"conv adjoint: spatial size {dout.shape[2:]} inconsistent with "
            f"target {H}x{W} (expected {ho}x{wo})"
        )
    gmat = dout.transpose(0, 2, 3, 1).reshape(B * ho * wo, out_c)
    colgrad = gmat @ kernel.reshape(out_c, -1)
    return _col2im(colgrad, (B, in_c, H, W), kh, kw, stride, padding, ho, wo)


def _conv_wgrad(x, dout, stride, padding, kernel_shape, cols=None):
    out_c, in_c, kh, kw = kernel_shape
    if cols is None:
        cols, ho, wo = _im2col(x, kh, kw, stride, padding)
    else:
        cols, ho, wo = cols
    gmat = dout.transpose(0, 2, 3, 1).reshape(-1, out_c)
    return (gmat.T @ cols).reshape(kernel_shape)


# -- taped convolution ops ---------------------------------------------------


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """Strided 2-D convolution; weight is [out_c, in_c, kh, kw]."""
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    x = _coerce(x)
    weight = _coerce(weight)
    out_data, cache = _conv_fwd(x.data, weight.data, stride, padding)
    if bias is not None:
        bias = _coerce(bias)
        out_data = out_data + bias.data.reshape(1, -1, 1, 1)
        parents = (x, weight, bias)
    else:
        parents = (x, weight)
    out = _node(out_data, parents)
    if out.requires_grad:
        in_spatial = x.data.shape[2:]

        def vjp(g):
            dx = (
                _conv_igrad(g, weight.data, stride, padding, in_spatial)
                if x.requires_grad
                else None
            )
            dw = (
                _conv_wgrad(x.data, g, stride, padding, weight.data.shape, cols=cache)
                if weight.requires_grad
                else None
            )
            if bias is None:
                return (dx, dw)
            return (dx, dw, g.sum(axis=(0, 2, 3)))

        out._vjp = vjp
    return out


def conv2d_transpose(x, weight, bias=None, stride=1, padding=0):
    """Exact adjoint of `conv2d`; weight is [in_c, out_c, kh, kw].

    Output spatial size is (in - 1)*stride - 2*padding + kernel.
    """
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    x = _coerce(x)
    weight = _coerce(weight)
    in_c, out_c, kh, kw = weight.data.shape
    B, xc, hi, wi = x.data.shape
    if xc != in_c:
        raise DimensionError(
            f"conv2d_transpose: input has {xc} channels on axis 1, weight expects {in_c}"
        )
    ho = (hi - 1) * stride - 2 * padding + kh
    wo = (wi - 1) * stride - 2 * padding + kw
    if ho <= 0 or wo <= 0:
        raise DimensionError(
            f"conv2d_transpose: output spatial size {ho}x{wo} is not positive"
        )
    out_data = _conv_igrad(x.data, weight.data, stride, padding, (ho, wo))
    if bias is not None:
        bias = _coerce(bias)
        out_data = out_data + bias.data.reshape(1, -1, 1, 1)
        parents = (x, weight, bias)
    else:
        parents = (x, weight)
    out = _node(out_data, parents)
    if out.requires_grad:

        def vjp(g):
            dx = (
                _conv_fwd(g, weight.data, stride, padding)[0]
                if x.requires_grad
                else None
            )
            dw = (
                _conv_wgrad(g, x.data, stride, padding, weight.data.shape)
                if weight.requires_grad
                else None
            )
            if bias is None:
                return (dx, dw)
            return (dx, dw, g.sum(axis=(0, 2, 3)))

        out._vjp = vjp
    return out


def dense(x, weight, bias=None):
    """Affine map on the trailing axis: x @ weight + bias."""
    out = x @ weight
    if bias is not None:
        out = out + bias
    return out


# -- layers --------------------------------------------------------------------


class Layer:
    """One network stage: conv2d, conv2d_transpose, dense, relu, sigmoid,
    or one of the structural adapters (flatten, reshape, crop).

    `target` carries the reshape shape (C, H, W) or crop size (H, W).
    """

    __slots__ = ("kind", "weights", "bias", "stride", "padding", "target")

    def __init__(self, kind, weights=None, bias=None, stride=1, padding=0, target=None):
        self.kind = kind
        self.weights = weights
        self.bias = bias
        self.stride = stride
        self.padding = padding
        self.target = target

    def parameters(self):
        return [p for p in (self.weights, self.bias) if p is not None]

    def __call__(self, x):
        k = self.kind
        if k == "conv2d":
            return conv2d(x, self.weights, self.bias, self.stride, self.padding)
        if k == "conv2d_transpose":
            return conv2d_transpose(x, self.weights, self.bias, self.stride, self.padding)
        if k == "dense":
            return dense(x, self.weights, self.bias)
        if k == "relu":
            return x.relu()
        if k == "sigmoid":
            return x.sigmoid()
        if k == "flatten":
            return x.reshape(x.shape[0], -1)
        if k == "reshape":
            return x.reshape((x.shape[0],) + tuple(self.target))
        if k == "crop":
            h, w = self.target
            if x.shape[2] < h or x.shape[3] < w:
                raise DimensionError(
                    f"crop target {h}x{w} exceeds input spatial size {x.shape[2]}x{x.shape[3]}"
                )
            return x[:, :, :h, :w]
        raise ContractError(f"unknown layer kind {k!r}")

    def __repr__(self):
        extra = ""
        if self.weights is not None:
            extra = f", weights={self.weights.shape}"
        return f"Layer({self.kind}{extra})"


def init_uniform_fan_in(shape, fan_in, rng):
    """Seed-deterministic uniform init with bound sqrt(1/fan_in)."""
    bound = float(np.sqrt(1.0 / fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


# -- gradient verification -------------------------------------------------------


def finite_difference_check(loss_fn, params, eps=1e-5, max_coords=16, rng=None):
    """Compare tape gradients of `loss_fn()` against central differences.

    Samples up to `max_coords` coordinates per parameter and returns the
    max over sampled coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    `loss_fn` must be deterministic (freeze any noise draws) and must not
    mutate the parameters.
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.grad = None
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    loss.backward()
    analytic = [
        np.zeros_like(p.data) if p.grad is None else np.array(p.grad) for p in params
    ]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        n = flat.size
        if n <= max_coords:
            coords = range(n)
        else:
            coords = np.sort(rng.choice(n, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(loss_fn().data)
            flat[i] = orig - eps
            lm = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericError("perturbed loss is not finite")
            numeric = (lp - lm) / (2.0 * eps)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
