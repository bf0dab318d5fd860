"""Reference ConvNet math: real-valued and behavioral fixed-point models.

These are the oracles the cycle-level datapath and the layer mapper are
checked against. Convolution is "valid" (no padding) and follows

    y_o(j, i) = b_o + sum_c sum_(b, a) k_oc(b, a) * x_c(j - b, i - a)

with output pixel (0, 0) anchored on input rows 0..kh-1 and cols 0..kw-1, i.e.
``y[o, j, i] = b[o] + sum k[o, c, p, q] * x[c, j + kh-1-p, i + kw-1-q]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .datapath import ChipParams
from .qformat import (
    QFormat,
    Q12_9,
    as_exact,
    dequantize_array,
    exact_dtype,
    quantize_array,
    reduce_width_array,
    truncate_array,
)

RELU = "relu"
NONE = "none"


@dataclass
class FeatureMap:
    """Channel-major (c, h, w) tensor. ``fmt is None`` means real samples."""

    data: np.ndarray
    fmt: Optional[QFormat] = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"feature map must be 3-D (c, h, w), got shape {self.data.shape}")
        if self.fmt is None:
            self.data = self.data.astype(np.float64)
        else:
            self.data = self.data.astype(np.int64)

    @property
    def elem_kind(self) -> str:
        return "real" if self.fmt is None else "fixed"

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def to_real(self) -> "FeatureMap":
        if self.fmt is None:
            return self
        return FeatureMap(dequantize_array(self.data, self.fmt))

    def to_fixed(self, fmt: QFormat = Q12_9) -> "FeatureMap":
        if self.fmt is not None:
            return self
        return FeatureMap(quantize_array(self.data, fmt), fmt)

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.fmt == other.fmt and np.array_equal(self.data, other.data)


@dataclass
class FilterSet:
    """Weights (out, in, kh, kw) and per-output-channel biases."""

    weights: np.ndarray
    biases: Optional[np.ndarray] = None
    fmt: Optional[QFormat] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 4:
            raise ValueError(f"filters must be 4-D (out, in, kh, kw), got shape {self.weights.shape}")
        dtype = np.float64 if self.fmt is None else np.int64
        self.weights = self.weights.astype(dtype)
        if self.biases is None:
            self.biases = np.zeros(self.out_channels, dtype=dtype)
        self.biases = np.asarray(self.biases).astype(dtype).reshape(-1)
        if self.biases.shape != (self.out_channels,):
            raise ValueError(f"expected {self.out_channels} biases, got {self.biases.shape[0]}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def h_k(self) -> int:
        return self.weights.shape[2]

    @property
    def w_k(self) -> int:
        return self.weights.shape[3]

    def to_real(self) -> "FilterSet":
        if self.fmt is None:
            return self
        return FilterSet(dequantize_array(self.weights, self.fmt), dequantize_array(self.biases, self.fmt))

    def to_fixed(self, fmt: QFormat = Q12_9) -> "FilterSet":
        if self.fmt is not None:
            return self
        return FilterSet(quantize_array(self.weights, fmt), quantize_array(self.biases, fmt), fmt)


@dataclass(frozen=True)
class LayerSpec:
    """One stage: valid convolution, activation, optional max-pooling (stride = size)."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    input_h: int
    input_w: int
    activation: str = RELU
    pool: Optional[tuple] = (2, 2)
    name: str = ""

    def __post_init__(self):
        for k in (self.kernel_h, self.kernel_w):
            if k < 1 or k % 2 == 0:
                raise ValueError(f"{self.label}: kernel dims must be odd and >= 1, got {self.kernel_h}x{self.kernel_w}")
        if self.input_h < self.kernel_h or self.input_w < self.kernel_w:
            raise ValueError(
                f"{self.label}: input {self.input_h}x{self.input_w} smaller than kernel {self.kernel_h}x{self.kernel_w}"
            )
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(f"{self.label}: channel counts must be positive")
        if self.activation not in (RELU, NONE):
            raise ValueError(f"{self.label}: unknown activation {self.activation!r}")
        if self.pool is not None:
            object.__setattr__(self, "pool", tuple(int(p) for p in self.pool))

    @property
    def label(self) -> str:
        return self.name or "layer"

    @property
    def conv_h(self) -> int:
        return self.input_h - self.kernel_h + 1

    @property
    def conv_w(self) -> int:
        return self.input_w - self.kernel_w + 1

    @property
    def output_h(self) -> int:
        return self.conv_h // self.pool[0] if self.pool else self.conv_h

    @property
    def output_w(self) -> int:
        return self.conv_w // self.pool[1] if self.pool else self.conv_w


@dataclass
class Network:
    """Stages of (LayerSpec, FilterSet) plus an optional pixel-wise classifier.

    ``classifier`` is a list of ``(weights (out, in), biases (out,), activation)``.
    """

    stages: list = field(default_factory=list)
    classifier: Optional[list] = None


def _check_conv(x: FeatureMap, f: FilterSet):
    if x.channels != f.in_channels:
        raise ValueError(f"input has {x.channels} channels but filters expect {f.in_channels}")
    if x.height < f.h_k or x.width < f.w_k:
        raise ValueError(f"input {x.height}x{x.width} smaller than kernel {f.h_k}x{f.w_k}")


def _windows(data: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (c, H', W', kh, kw) view; window[.., a, b] = x[c, j + a, i + b]
    return sliding_window_view(data, (kh, kw), axis=(1, 2))


def conv_real(x: FeatureMap, f: FilterSet) -> FeatureMap:
    x, f = x.to_real(), f.to_real()
    _check_conv(x, f)
    win = _windows(x.data, f.h_k, f.w_k)
    flipped = f.weights[:, :, ::-1, ::-1]
    y = np.einsum("chwab,ocab->ohw", win, flipped, optimize=True)
    return FeatureMap(y + f.biases[:, None, None])


def kernel_part_slices(k: int, chip_k: int) -> list:
    """Tap index ranges of a kernel dimension processed by one chip pass each.

    Kernels no larger than the chip are one part; larger ones are split
    top-left anchored in steps of ``chip_k``.
    """
    if k <= chip_k:
        return [slice(0, k)]
    return [slice(s, min(s + chip_k, k)) for s in range(0, k, chip_k)]


def _pad_channels(a: np.ndarray, axis: int, n: int) -> np.ndarray:
    short = -a.shape[axis] % n
    if not short:
        return a
    pad = [(0, 0)] * a.ndim
    pad[axis] = (0, short)
    return np.pad(a, pad)


def conv_fixed_chain(
    x: FeatureMap,
    f: FilterSet,
    chip: Optional[ChipParams] = None,
    fmt: Optional[QFormat] = None,
) -> FeatureMap:
    """Behavioral model of the chip's arithmetic chain for one layer.

    Per input channel the inner product is truncated (SoP); per block of
    ``n_ch`` input channels the truncated values are summed exactly and
    reduced to the word width (ChSum, chip output); block partials, kernel
    parts and the bias are summed exactly off-chip and reduced once more.
    ``fmt`` selects the overflow mode; its widths must match the operands.
    """
    chip = chip or ChipParams()
    fmt = fmt or x.fmt
    if x.fmt is None or f.fmt is None:
        raise ValueError("conv_fixed_chain needs fixed-point input and filters")
    for name, other in (("input", x.fmt), ("filters", f.fmt)):
        if (other.total_bits, other.frac_bits) != (fmt.total_bits, fmt.frac_bits):
            raise ValueError(f"{name} format {other} does not match {fmt}")
    _check_conv(x, f)

    n = chip.n_ch
    n_in = x.channels + (-x.channels % n)
    kh, kw = f.h_k, f.w_k
    out_h, out_w = x.height - kh + 1, x.width - kw + 1

    taps = min(kh, chip.h_k) * min(kw, chip.w_k)
    dtype = exact_dtype(fmt, taps)
    win = as_exact(_windows(x.data, kh, kw)[:, :, :, ::-1, ::-1], dtype)
    wts = as_exact(f.weights, dtype)
    acc_dtype = exact_dtype(fmt, 1, terms=n_in + 8)

    total = np.zeros((f.out_channels, out_h, out_w), dtype=acc_dtype)
    for rows in kernel_part_slices(kh, chip.h_k):
        for cols in kernel_part_slices(kw, chip.w_k):
            # flipped window index p' pairs with kernel index p
            part_win = win[:, :, :, rows, cols]
            for o in range(f.out_channels):
                ip = np.einsum("chwab,cab->chw", part_win, wts[o, :, rows, cols])
                sop = _pad_channels(truncate_array(ip, fmt), 0, n)
                blocks = sop.reshape(n_in // n, n, out_h, out_w).astype(acc_dtype).sum(axis=1)
                chsum = reduce_width_array(blocks, fmt)
                total[o] += chsum.astype(acc_dtype).sum(axis=0)
    total = total + as_exact(f.biases, acc_dtype)[:, None, None]
    return FeatureMap(reduce_width_array(total, fmt).astype(np.int64), x.fmt)


def relu(x: FeatureMap) -> FeatureMap:
    return FeatureMap(np.maximum(x.data, 0), x.fmt)


def maxpool(x: FeatureMap, ph: int = 2, pw: int = 2) -> FeatureMap:
    """Non-overlapping max-pooling; trailing rows/cols that do not fill a window are dropped."""
    c, h, w = x.shape
    hh, ww = h // ph, w // pw
    d = x.data[:, : hh * ph, : ww * pw].reshape(c, hh, ph, ww, pw)
    return FeatureMap(d.max(axis=(2, 4)), x.fmt)


def maxpool2(x: FeatureMap) -> FeatureMap:
    return maxpool(x, 2, 2)


def classify_pixelwise(x: FeatureMap, layers: Sequence) -> FeatureMap:
    """Apply a fully-connected stack independently at every pixel.

    For fixed-point maps the weights and biases are raw codes in ``x.fmt``;
    each matrix-vector product is exact and truncated once after the bias.
    """
    data = x.data
    for i, (wts, bias, act) in enumerate(layers):
        wts = np.asarray(wts)
        bias = np.asarray(bias).reshape(-1)
        if wts.ndim != 2 or wts.shape[1] != data.shape[0]:
            raise ValueError(
                f"classifier layer {i}: weight shape {wts.shape} does not accept {data.shape[0]} channels"
            )
        if bias.shape[0] != wts.shape[0]:
            raise ValueError(f"classifier layer {i}: {bias.shape[0]} biases for {wts.shape[0]} outputs")
        if x.fmt is None:
            data = np.einsum("oc,chw->ohw", wts.astype(np.float64), data) + bias[:, None, None]
        else:
            dtype = exact_dtype(x.fmt, wts.shape[1])
            wide = np.einsum("oc,chw->ohw", as_exact(wts, dtype), as_exact(data, dtype))
            data = reduce_width_array((wide >> x.fmt.frac_bits) + as_exact(bias, dtype)[:, None, None], x.fmt)
            data = data.astype(np.int64)
        if act == RELU:
            data = np.maximum(data, 0)
    return FeatureMap(data, x.fmt)


def _apply_stage(x: FeatureMap, spec: LayerSpec, f: FilterSet, mode: str, chip, fmt) -> FeatureMap:
    if mode == "real":
        y = conv_real(x, f)
    else:
        y = conv_fixed_chain(x, f.to_fixed(fmt), chip, fmt)
    if spec.activation == RELU:
        y = relu(y)
    if spec.pool:
        y = maxpool(y, *spec.pool)
    return y


def run_stages(
    x: FeatureMap,
    net: Network,
    mode: str = "real",
    chip: Optional[ChipParams] = None,
    fmt: Optional[QFormat] = None,
) -> list:
    """Outputs of every stage (and the classifier, if any) in order."""
    if mode not in ("real", "fixed_chain"):
        raise ValueError(f"unknown mode {mode!r}")
    chip = chip or ChipParams()
    if mode == "real":
        x = x.to_real()
    else:
        fmt = fmt or x.fmt or chip.fmt
        x = x.to_fixed(fmt)
    outs = []
    for idx, (spec, f) in enumerate(net.stages):
        label = spec.name or f"stage {idx + 1}"
        if (x.channels, x.height, x.width) != (spec.in_channels, spec.input_h, spec.input_w):
            raise ValueError(
                f"{label}: expects input {spec.in_channels}x{spec.input_h}x{spec.input_w}, "
                f"got {x.channels}x{x.height}x{x.width}"
            )
        if (f.out_channels, f.in_channels, f.h_k, f.w_k) != (
            spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w
        ):
            raise ValueError(f"{label}: filter shape {f.weights.shape} does not match the layer")
        x = _apply_stage(x, spec, f, mode, chip, fmt)
        outs.append(x)
    if net.classifier:
        layers = net.classifier
        if mode == "fixed_chain":
            layers = [(quantize_array(w, fmt), quantize_array(b, fmt), a) for w, b, a in layers]
        x = classify_pixelwise(x, layers)
        outs.append(x)
    return outs


def run_network(x, net: Network, mode: str = "real", chip=None, fmt=None) -> FeatureMap:
    outs = run_stages(x, net, mode, chip, fmt)
    if not outs:
        return x.to_real() if mode == "real" else x.to_fixed(fmt or x.fmt or (chip or ChipParams()).fmt)
    return outs[-1]


@dataclass
class StageError:
    max_abs: float
    rms: float
    sign_flip_fraction: float


def quantization_error(net: Network, x: FeatureMap, fmt: QFormat, chip=None) -> list:
    """Per-stage error of the fixed-point chain against the real-valued network."""
    ref = run_stages(x.to_real(), net, "real", chip)
    fixed = run_stages(x.to_real(), net, "fixed_chain", chip, fmt)
    errs = []
    for r, q in zip(ref, fixed):
        d = q.to_real().data - r.data
        errs.append(
            StageError(
                max_abs=float(np.max(np.abs(d))) if d.size else 0.0,
                rms=float(math.sqrt(np.mean(d * d))) if d.size else 0.0,
                sign_flip_fraction=float(np.mean(np.sign(q.data) != np.sign(r.data))) if d.size else 0.0,
            )
        )
    return errs
