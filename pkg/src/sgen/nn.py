"""Strided convolution, transposed convolution, and global average pooling.

Convolutions use cross-correlation semantics with zero padding.  Spatial
pooling by a factor f is a single strided conv: stride f with a 2f kernel
and f/2 padding (3x3, pad 1 at stride 1), so the output is exactly the
input divided by the stride.  ``deconv2d`` is defined as the adjoint of
the conv with the same geometry plus a bias, which makes upsampling by f
produce exactly f times the input size and ties the two operators
together for testing.

The heavy lifting is im2col/col2im plus matmul; backward rules are the
usual transposes of the forward maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, record

__all__ = [
    "ConvParams",
    "DeconvParams",
    "conv_params",
    "deconv_params",
    "conv2d",
    "deconv2d",
    "global_avg_pool",
    "he_std",
]


def _pool_kernel(factor: int) -> int:
    # factor-1 "pooling" is an ordinary 3x3 conv
    return 3 if factor == 1 else 2 * factor


def he_std(in_channels: int, kh: int, kw: int) -> float:
    """Kaiming-style init scale for relu-family activations."""
    return float(np.sqrt(2.0 / (in_channels * kh * kw)))


@dataclass
class ConvParams:
    """Weights for one convolution.

    weight: (out_channels, in_channels, kh, kw)
    bias:   (1, out_channels, 1, 1); per-channel offsets live in the
            channel slot because every tensor in the engine is 4-D.
    """

    weight: Tensor
    bias: Tensor
    stride: int
    padding: int

    def __post_init__(self):
        if self.weight.data.ndim != 4:
            raise ValueError("ConvParams: weight must be 4-D")
        out_c, _, kh, kw = self.weight.shape
        if kh != kw:
            raise ValueError(f"ConvParams: kernel must be square, got {kh}x{kw}")
        if self.bias.shape != (1, out_c, 1, 1):
            raise ValueError(
                f"ConvParams: bias shape {self.bias.shape} does not match"
                f" {out_c} output channels"
            )
        if self.stride < 1:
            raise ValueError(f"ConvParams: stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"ConvParams: padding must be >= 0, got {self.padding}")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


@dataclass
class DeconvParams:
    """Weights for one transposed convolution (upsampling by ``stride``).

    weight: (in_channels, out_channels, kh, kw); a DeconvParams with the
    same weight array as a ConvParams is its exact adjoint.
    """

    weight: Tensor
    bias: Tensor
    stride: int
    padding: int

    def __post_init__(self):
        if self.weight.data.ndim != 4:
            raise ValueError("DeconvParams: weight must be 4-D")
        _, out_c, kh, kw = self.weight.shape
        if kh != kw:
            raise ValueError(f"DeconvParams: kernel must be square, got {kh}x{kw}")
        if self.bias.shape != (1, out_c, 1, 1):
            raise ValueError(
                f"DeconvParams: bias shape {self.bias.shape} does not match"
                f" {out_c} output channels"
            )
        s = self.stride
        if s < 2 or (s & (s - 1)) != 0:
            raise ValueError(f"DeconvParams: stride must be a power of two >= 2, got {s}")

    @property
    def in_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


def conv_params(
    in_channels: int,
    out_channels: int,
    factor: int,
    rng: np.random.Generator,
    dtype=np.float32,
    kernel: int | None = None,
    weight_std: float | None = None,
) -> ConvParams:
    """Fresh conv weights for spatial pooling by ``factor``.

    kernel defaults to the pooling rule (3 at factor 1, else 2*factor) but
    may be overridden, e.g. 1 for channel-projection convs.  weight_std
    defaults to the He scale; pass 0.0 for zero-initialized gates.
    """
    if factor < 1:
        raise ValueError(f"conv_params: factor must be >= 1, got {factor}")
    k = _pool_kernel(factor) if kernel is None else kernel
    if (k - factor) % 2 != 0:
        raise ValueError(f"conv_params: kernel {k} incompatible with stride {factor}")
    pad = (k - factor) // 2
    std = he_std(in_channels, k, k) if weight_std is None else weight_std
    if std > 0:
        w = rng.normal(0.0, std, size=(out_channels, in_channels, k, k))
    else:
        w = np.zeros((out_channels, in_channels, k, k))
    weight = Tensor(w.astype(dtype), requires_grad=True)
    bias = Tensor(np.zeros((1, out_channels, 1, 1), dtype=dtype), requires_grad=True)
    return ConvParams(weight=weight, bias=bias, stride=factor, padding=pad)


def deconv_params(
    in_channels: int,
    out_channels: int,
    factor: int,
    rng: np.random.Generator,
    dtype=np.float32,
    weight_std: float | None = None,
) -> DeconvParams:
    """Fresh transposed-conv weights for upsampling by ``factor``."""
    k = 2 * factor
    pad = factor // 2
    std = he_std(in_channels, k, k) if weight_std is None else weight_std
    if std > 0:
        w = rng.normal(0.0, std, size=(in_channels, out_channels, k, k))
    else:
        w = np.zeros((in_channels, out_channels, k, k))
    weight = Tensor(w.astype(dtype), requires_grad=True)
    bias = Tensor(np.zeros((1, out_channels, 1, 1), dtype=dtype), requires_grad=True)
    return DeconvParams(weight=weight, bias=bias, stride=factor, padding=pad)


# ---------------------------------------------------------------------------
# im2col machinery.  cols layout: (n, c*kh*kw, oh*ow), kernel offsets fastest
# varying after channels, matching weight.reshape(out, c*kh*kw).

def _out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * k * k, oh * ow)


def _col2im(
    cols: np.ndarray, out_shape: tuple[int, int, int, int], k: int, stride: int, pad: int
) -> np.ndarray:
    """Adjoint of _im2col: scatter-add column entries back onto the image."""
    n, c, h, w = out_shape
    oh, ow = _out_hw(h, w, k, stride, pad)
    cols = cols.reshape(n, c, k, k, oh, ow)
    buf = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            buf[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        return buf[:, :, pad : pad + h, pad : pad + w]
    return buf


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Strided cross-correlation plus bias; output spatial dims = input / stride."""
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ValueError(f"conv2d: input has {c} channels, kernel expects {p.in_channels}")
    if x.dtype != p.weight.dtype:
        raise ValueError(f"conv2d: dtype mismatch {x.dtype} vs weight {p.weight.dtype}")
    s, k, pad = p.stride, p.kernel, p.padding
    if h % s or w % s:
        raise ValueError(f"conv2d: spatial dims ({h}, {w}) not divisible by stride {s}")
    oh, ow = _out_hw(h, w, k, s, pad)
    cols = _im2col(x.data, k, s, pad)
    wmat = p.weight.data.reshape(p.out_channels, -1)
    out = np.matmul(wmat, cols).reshape(n, p.out_channels, oh, ow) + p.bias.data
    y = Tensor(out)
    weight, bias = p.weight, p.bias

    def bwd(g):
        g2 = g.reshape(n, p.out_channels, oh * ow)
        dw = db = dx = None
        if weight.requires_grad:
            dw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias.requires_grad:
            db = g.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        if x.requires_grad:
            dx = _col2im(np.matmul(wmat.T, g2), (n, c, h, w), k, s, pad)
        return dx, dw, db

    return record((x, weight, bias), y, bwd)


def deconv2d(x: Tensor, p: DeconvParams) -> Tensor:
    """Adjoint of the matching conv2d, plus bias; upsamples by p.stride."""
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ValueError(f"deconv2d: input has {c} channels, kernel expects {p.in_channels}")
    if x.dtype != p.weight.dtype:
        raise ValueError(f"deconv2d: dtype mismatch {x.dtype} vs weight {p.weight.dtype}")
    s, k, pad = p.stride, p.kernel, p.padding
    H, W = h * s, w * s
    wmat = p.weight.data.reshape(c, -1)  # (in, out*kh*kw)
    x2 = x.data.reshape(n, c, h * w)
    cols = np.matmul(wmat.T, x2)  # (n, out*k*k, h*w)
    out = _col2im(cols, (n, p.out_channels, H, W), k, s, pad) + p.bias.data
    y = Tensor(out)
    weight, bias = p.weight, p.bias

    def bwd(g):
        dx = dw = db = None
        gcols = None
        if x.requires_grad or weight.requires_grad:
            gcols = _im2col(g, k, s, pad)  # (n, out*k*k, h*w)
        if x.requires_grad:
            dx = np.matmul(wmat, gcols).reshape(n, c, h, w)
        if weight.requires_grad:
            dw = np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias.requires_grad:
            db = g.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return dx, dw, db

    return record((x, weight, bias), y, bwd)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial dims: (n, c, h, w) -> (n, c, 1, 1)."""
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))
    inv = 1.0 / (h * w)

    def bwd(g):
        return (np.broadcast_to(g * inv, (n, c, h, w)).copy(),)

    return record((x,), out, bwd)
