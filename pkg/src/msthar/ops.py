"""Differentiable layer operations over batched float64 tensors.

Layout conventions: 1D activations are ``[batch, channels, length]``,
2D activations are ``[batch, channels, height, width]``, dense
activations are ``[batch, features]``.  Convolution kernels carry no
bias (batch norm supplies the shift).  Every op takes an optional
``tape``; with ``tape=None`` the op runs forward-only.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Parameter, ShapeError, Tape, Tensor

__all__ = [
    "conv1d",
    "conv2d",
    "separable_conv1d",
    "separable_conv2d",
    "batch_norm",
    "relu",
    "dense",
    "global_avg_pool",
    "residual_add",
    "concat",
    "softmax",
    "weighted_sum",
]


def _pad_amounts(length: int, kernel: int, stride: int, padding: str):
    """Return (pad_left, pad_right, out_length) for one spatial axis.

    "same" pads symmetrically with the extra sample on the right.
    """
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding == "valid":
        if kernel > length:
            raise ShapeError(
                f"kernel size {kernel} exceeds input length {length} with valid padding"
            )
        return 0, 0, (length - kernel) // stride + 1
    if padding == "same":
        out = -(-length // stride)
        total = max((out - 1) * stride + kernel - length, 0)
        left = total // 2
        return left, total - left, out
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _require_ndim(name: str, t: Tensor, ndim: int, what: str):
    if t.data.ndim != ndim:
        raise ShapeError(f"{name}: {what} must be {ndim}-dimensional, got shape {t.shape}")


# ---------------------------------------------------------------------------
# convolutions


def conv1d(x: Tensor, kernels: Parameter, stride: int = 1, padding: str = "valid",
           tape: Tape | None = None) -> Tensor:
    """Cross-correlate ``x`` [B,C,L] with ``kernels`` [O,C,K] -> [B,O,L']."""
    _require_ndim("conv1d", x, 3, "input")
    _require_ndim("conv1d", kernels, 3, "kernels")
    B, C, L = x.shape
    O, Ck, K = kernels.shape
    if Ck != C:
        raise ShapeError(
            f"conv1d: channel axis mismatch: kernels expect C_in={Ck}, input has C_in={C}"
        )
    pl, pr, Lout = _pad_amounts(L, K, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x.data
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]  # [B,C,L',K]
    out = Tensor(np.einsum("bclk,ock->bol", win, kernels.data, optimize=True))

    if tape is not None:
        def backward(dout):
            dw = np.empty_like(kernels.data)
            dxp = np.zeros_like(xp)
            for k in range(K):
                # per-tap slices keep everything 4-D and BLAS-friendly
                dw[:, :, k] = np.tensordot(dout, win[..., k], axes=([0, 2], [0, 2]))
                dxp[:, :, k:k + stride * Lout:stride] += np.einsum(
                    "bol,oc->bcl", dout, kernels.data[:, :, k], optimize=True
                )
            dx = dxp[:, :, pl:pl + L] if (pl or pr) else dxp
            return dx, dw

        tape.record(out, (x, kernels), backward)
    return out


def conv2d(x: Tensor, kernels: Parameter, stride: int = 1, padding: str = "valid",
           tape: Tape | None = None) -> Tensor:
    """Cross-correlate ``x`` [B,C,H,W] with ``kernels`` [O,C,Kh,Kw]."""
    _require_ndim("conv2d", x, 4, "input")
    _require_ndim("conv2d", kernels, 4, "kernels")
    B, C, H, W = x.shape
    O, Ck, Kh, Kw = kernels.shape
    if Ck != C:
        raise ShapeError(
            f"conv2d: channel axis mismatch: kernels expect C_in={Ck}, input has C_in={C}"
        )
    pt, pb, Hout = _pad_amounts(H, Kh, stride, padding)
    plft, prgt, Wout = _pad_amounts(W, Kw, stride, padding)
    if pt or pb or plft or prgt:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (plft, prgt)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (Kh, Kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = Tensor(np.einsum("bchwij,ocij->bohw", win, kernels.data, optimize=True))

    if tape is not None:
        def backward(dout):
            dw = np.empty_like(kernels.data)
            dxp = np.zeros_like(xp)
            for i in range(Kh):
                for j in range(Kw):
                    dw[:, :, i, j] = np.tensordot(
                        dout, win[..., i, j], axes=([0, 2, 3], [0, 2, 3])
                    )
                    dxp[:, :, i:i + stride * Hout:stride,
                        j:j + stride * Wout:stride] += np.einsum(
                        "bohw,oc->bchw", dout, kernels.data[:, :, i, j], optimize=True
                    )
            dx = dxp[:, :, pt:pt + H, plft:plft + W] if (pt or pb or plft or prgt) else dxp
            return dx, dw

        tape.record(out, (x, kernels), backward)
    return out


def _depthwise_conv1d(x, dw_kernels, stride, padding, tape):
    B, C, L = x.shape
    Cd, K = dw_kernels.shape
    if Cd != C:
        raise ShapeError(
            f"separable_conv1d: depthwise kernel count {Cd} != input channels {C}"
        )
    pl, pr, Lout = _pad_amounts(L, K, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x.data
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]
    out = Tensor(np.einsum("bclk,ck->bcl", win, dw_kernels.data, optimize=True))

    if tape is not None:
        def backward(dout):
            dk = np.empty_like(dw_kernels.data)
            dxp = np.zeros_like(xp)
            for k in range(K):
                dk[:, k] = np.einsum("bcl,bcl->c", dout, win[..., k], optimize=True)
                dxp[:, :, k:k + stride * Lout:stride] += (
                    dout * dw_kernels.data[:, k][None, :, None]
                )
            dx = dxp[:, :, pl:pl + L] if (pl or pr) else dxp
            return dx, dk

        tape.record(out, (x, dw_kernels), backward)
    return out


def _pointwise_conv1d(x, pw_kernels, tape):
    B, C, L = x.shape
    O, Cp = pw_kernels.shape
    if Cp != C:
        raise ShapeError(
            f"separable_conv1d: pointwise kernels expect C_in={Cp}, input has C_in={C}"
        )
    out = Tensor(np.einsum("bcl,oc->bol", x.data, pw_kernels.data, optimize=True))

    if tape is not None:
        xdata = x.data

        def backward(dout):
            dx = np.einsum("bol,oc->bcl", dout, pw_kernels.data, optimize=True)
            dk = np.einsum("bol,bcl->oc", dout, xdata, optimize=True)
            return dx, dk

        tape.record(out, (x, pw_kernels), backward)
    return out


def separable_conv1d(x: Tensor, depthwise_kernels: Parameter, pointwise_kernels: Parameter,
                     stride: int = 1, padding: str = "valid",
                     tape: Tape | None = None) -> Tensor:
    """Depthwise conv [C,K] per channel followed by a 1x1 conv [O,C]."""
    _require_ndim("separable_conv1d", x, 3, "input")
    mid = _depthwise_conv1d(x, depthwise_kernels, stride, padding, tape)
    return _pointwise_conv1d(mid, pointwise_kernels, tape)


def _depthwise_conv2d(x, dw_kernels, stride, padding, tape):
    B, C, H, W = x.shape
    Cd, Kh, Kw = dw_kernels.shape
    if Cd != C:
        raise ShapeError(
            f"separable_conv2d: depthwise kernel count {Cd} != input channels {C}"
        )
    pt, pb, Hout = _pad_amounts(H, Kh, stride, padding)
    pl, pr, Wout = _pad_amounts(W, Kw, stride, padding)
    if pt or pb or pl or pr:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (Kh, Kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = Tensor(np.einsum("bchwij,cij->bchw", win, dw_kernels.data, optimize=True))

    if tape is not None:
        def backward(dout):
            dk = np.empty_like(dw_kernels.data)
            dxp = np.zeros_like(xp)
            for i in range(Kh):
                for j in range(Kw):
                    dk[:, i, j] = np.einsum(
                        "bchw,bchw->c", dout, win[..., i, j], optimize=True
                    )
                    dxp[:, :, i:i + stride * Hout:stride,
                        j:j + stride * Wout:stride] += (
                        dout * dw_kernels.data[:, i, j][None, :, None, None]
                    )
            dx = dxp[:, :, pt:pt + H, pl:pl + W] if (pt or pb or pl or pr) else dxp
            return dx, dk

        tape.record(out, (x, dw_kernels), backward)
    return out


def _pointwise_conv2d(x, pw_kernels, tape):
    B, C, H, W = x.shape
    O, Cp = pw_kernels.shape
    if Cp != C:
        raise ShapeError(
            f"separable_conv2d: pointwise kernels expect C_in={Cp}, input has C_in={C}"
        )
    out = Tensor(np.einsum("bchw,oc->bohw", x.data, pw_kernels.data, optimize=True))

    if tape is not None:
        xdata = x.data

        def backward(dout):
            dx = np.einsum("bohw,oc->bchw", dout, pw_kernels.data, optimize=True)
            dk = np.einsum("bohw,bchw->oc", dout, xdata, optimize=True)
            return dx, dk

        tape.record(out, (x, pw_kernels), backward)
    return out


def separable_conv2d(x: Tensor, depthwise_kernels: Parameter, pointwise_kernels: Parameter,
                     stride: int = 1, padding: str = "valid",
                     tape: Tape | None = None) -> Tensor:
    """Depthwise conv [C,Kh,Kw] per channel followed by a 1x1 conv [O,C]."""
    _require_ndim("separable_conv2d", x, 4, "input")
    mid = _depthwise_conv2d(x, depthwise_kernels, stride, padding, tape)
    return _pointwise_conv2d(mid, pointwise_kernels, tape)


# ---------------------------------------------------------------------------
# normalization and pointwise layers


def batch_norm(x: Tensor, gamma: Parameter, beta: Parameter,
               running_mean: np.ndarray, running_var: np.ndarray,
               mode: str = "train", momentum: float = 0.99, eps: float = 1e-5,
               tape: Tape | None = None) -> Tensor:
    """Normalize per channel (axis 1) over batch and spatial axes.

    Train mode normalizes by batch moments and updates the running stats
    in place; infer mode normalizes by the running stats.  Variances are
    biased (divide by N).
    """
    if x.data.ndim < 2:
        raise ShapeError(f"batch_norm: input must have a channel axis, got shape {x.shape}")
    C = x.shape[1]
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ShapeError(
            f"batch_norm: gamma/beta must have shape ({C},), got {gamma.shape} and {beta.shape}"
        )
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, C) + (1,) * (x.data.ndim - 2)
    g = gamma.data.reshape(bshape)
    b = beta.data.reshape(bshape)

    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("batch_norm: train mode requires batch size >= 2")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
        inv = 1.0 / np.sqrt(var + eps).reshape(bshape)
        xhat = (x.data - mean.reshape(bshape)) * inv
        out = Tensor(g * xhat + b)

        if tape is not None:
            n = x.data.size // C

            def backward(dout):
                dbeta = dout.sum(axis=axes)
                dgamma = (dout * xhat).sum(axis=axes)
                dxhat = dout * g
                dx = inv * (
                    dxhat
                    - dxhat.mean(axis=axes).reshape(bshape)
                    - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape) / n
                )
                return dx, dgamma, dbeta

            tape.record(out, (x, gamma, beta), backward)
        return out

    if mode == "infer":
        inv = 1.0 / np.sqrt(running_var + eps).reshape(bshape)
        xhat = (x.data - running_mean.reshape(bshape)) * inv
        out = Tensor(g * xhat + b)

        if tape is not None:
            def backward(dout):
                dbeta = dout.sum(axis=axes)
                dgamma = (dout * xhat).sum(axis=axes)
                dx = dout * g * inv
                return dx, dgamma, dbeta

            tape.record(out, (x, gamma, beta), backward)
        return out

    raise ValueError(f"batch_norm: mode must be 'train' or 'infer', got {mode!r}")


def relu(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    if tape is not None:
        mask = x.data > 0.0

        def backward(dout):
            return (dout * mask,)

        tape.record(out, (x,), backward)
    return out


def dense(x: Tensor, weight: Parameter, bias: Parameter,
          tape: Tape | None = None) -> Tensor:
    """Affine map [B,F] @ [F,O] + [O]."""
    _require_ndim("dense", x, 2, "input")
    B, F = x.shape
    Fw, O = weight.shape
    if Fw != F:
        raise ShapeError(f"dense: weight expects {Fw} input features, input has {F}")
    if bias.data.shape != (O,):
        raise ShapeError(f"dense: bias must have shape ({O},), got {bias.shape}")
    out = Tensor(x.data @ weight.data + bias.data)

    if tape is not None:
        xdata = x.data

        def backward(dout):
            dx = dout @ weight.data.T
            dw = xdata.T @ dout
            db = dout.sum(axis=0)
            return dx, dw, db

        tape.record(out, (x, weight, bias), backward)
    return out


def global_avg_pool(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Mean over all spatial axes: [B,C,...] -> [B,C]."""
    if x.data.ndim < 3:
        raise ShapeError(f"global_avg_pool: input must have spatial axes, got shape {x.shape}")
    axes = tuple(range(2, x.data.ndim))
    n = int(np.prod([x.shape[a] for a in axes]))
    out = Tensor(x.data.mean(axis=axes))

    if tape is not None:
        spatial = x.data.shape[2:]

        def backward(dout):
            expanded = dout.reshape(dout.shape + (1,) * len(spatial))
            return (np.broadcast_to(expanded / n, x.data.shape).copy(),)

        tape.record(out, (x,), backward)
    return out


def residual_add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"residual_add: shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:
        def backward(dout):
            return dout.copy(), dout.copy()

        tape.record(out, (a, b), backward)
    return out


def concat(tensors: list, axis: int = 1, tape: Tape | None = None) -> Tensor:
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        other = t.shape
        if len(other) != len(ref) or any(
            o != r for i, (o, r) in enumerate(zip(other, ref)) if i != axis
        ):
            raise ShapeError(f"concat: non-concat axes must match, got {ref} vs {other}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))

    if tape is not None:
        sizes = [t.shape[axis] for t in tensors]
        bounds = np.cumsum([0] + sizes)

        def backward(dout):
            pieces = []
            for i in range(len(sizes)):
                sl = [slice(None)] * dout.ndim
                sl[axis] = slice(bounds[i], bounds[i + 1])
                pieces.append(dout[tuple(sl)].copy())
            return tuple(pieces)

        tape.record(out, tuple(tensors), backward)
    return out


def softmax(x: Tensor, tape: Tape | None = None) -> Tensor:
    """Row-wise softmax over the last axis; rows sum to 1."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    if tape is not None:
        def backward(dout):
            inner = (dout * s).sum(axis=-1, keepdims=True)
            return ((dout - inner) * s,)

        tape.record(out, (x,), backward)
    return out


def weighted_sum(x: Tensor, weights: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Scalar projection sum(x * weights); handy for building test losses."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.data.shape:
        raise ShapeError(f"weighted_sum: weights shape {w.shape} != input shape {x.shape}")
    out = Tensor(np.sum(x.data * w))

    if tape is not None:
        def backward(dout):
            return (dout * w,)

        tape.record(out, (x,), backward)
    return out
