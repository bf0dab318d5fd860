"""YAML network/chip configuration for the command-line tools.

Example::

    seed: 1
    chip: {n_ch: 8, h_k: 7, w_k: 7, h_in_max: 512, f_mhz: 250,
           total_bits: 12, frac_bits: 9, overflow: wrap}
    input: {channels: 3, height: 240, width: 320}
    layers:
      - {name: stage1, out_channels: 16, kernel: 7, activation: relu, pool: [2, 2]}
      - {name: stage2, out_channels: 64, kernel: 7, pool: [2, 2], filters: random, bias: random}
    classifier:
      - {out: 64, activation: relu}
      - {out: 8, activation: none}
    system: {n_chips: 4, pairing: true, bus_bits: 12, bus_mhz: 250, pool: [2, 2]}

``filters``/``bias``/``weights`` take ``random`` (seeded, uniform over all
codes), ``zero``, ``delta`` (filters only: centre tap 1.0 on matching
channels) or a tensor-file path. Filter files hold (out*in, kh, kw), bias
files (out, 1, 1), classifier weight files (1, out, in).
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .datapath import ChipParams
from .golden import NONE, RELU, FilterSet, LayerSpec
from .perf import SystemConfig
from .qformat import QFormat, quantize_array
from .tensorfile import DTYPE_FIXED, read_tensor


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        where = f"{field}" + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.field = field
        self.line = line


class _LineDict(dict):
    lines: dict = {}
    line: Optional[int] = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    d = _LineDict(loader.construct_pairs(node, deep=True))
    d.lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    d.line = node.start_mark.line + 1
    return d


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(d, key=None):
    if isinstance(d, _LineDict):
        return d.lines.get(key, d.line) if key is not None else d.line
    return None


def _get(d, key, path, kind, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError("required field missing", f"{path}.{key}" if path else key, _line(d))
        return default
    v = d[key]
    try:
        if kind is int:
            if isinstance(v, bool) or int(v) != v:
                raise TypeError
            return int(v)
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {v!r}", f"{path}.{key}" if path else key, _line(d, key))


def _pair(v, path, line):
    if v is None:
        return None
    if isinstance(v, int) and not isinstance(v, bool):
        return (v, v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(e, int) for e in v):
        return tuple(v)
    raise ConfigError(f"expected an int or [h, w], got {v!r}", path, line)


@dataclass
class LayerConfig:
    spec: LayerSpec
    filters: str = "random"
    bias: str = "zero"
    line: Optional[int] = None


@dataclass
class NetworkConfig:
    chip: ChipParams
    input_shape: tuple
    layers: list = field(default_factory=list)
    classifier: list = field(default_factory=list)
    system: Optional[SystemConfig] = None
    seed: int = 0
    base_dir: str = "."

    @property
    def specs(self) -> list:
        return [l.spec for l in self.layers]

    # filter/bias materialization -------------------------------------------------

    def _rng(self, *key):
        return np.random.default_rng([self.seed, *key])

    def _source(self, src, shape, fmt, key, what, allow_delta=False, file_shape=None):
        if src == "random":
            return self._rng(*key).integers(fmt.min_raw, fmt.max_raw + 1, size=shape, dtype=np.int64)
        if src == "zero":
            return np.zeros(shape, dtype=np.int64)
        if src == "delta" and allow_delta:
            w = np.zeros(shape, dtype=np.int64)
            o, c, kh, kw = shape
            for i in range(min(o, c)):
                w[i, i, kh // 2, kw // 2] = 1 << fmt.frac_bits
            return w
        path = src if os.path.isabs(src) else os.path.join(self.base_dir, src)
        if not os.path.exists(path):
            raise ConfigError(f"unknown source {src!r} (not random/zero{'/delta' if allow_delta else ''} or a file)", what)
        try:
            dtype, arr = read_tensor(path, fmt.total_bits)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}", what)
        if file_shape is not None and arr.shape != file_shape:
            raise ConfigError(f"{path} has dims {arr.shape}, expected {file_shape}", what)
        if dtype != DTYPE_FIXED:
            arr = quantize_array(arr, fmt)
        return arr.reshape(shape)

    def filter_set(self, idx: int) -> FilterSet:
        lc = self.layers[idx]
        s = lc.spec
        fmt = self.chip.fmt
        shape = (s.out_channels, s.in_channels, s.kernel_h, s.kernel_w)
        w = self._source(lc.filters, shape, fmt, (idx, 0), f"layers[{idx}].filters", True,
                         (s.out_channels * s.in_channels, s.kernel_h, s.kernel_w))
        b = self._source(lc.bias, (s.out_channels,), fmt, (idx, 1), f"layers[{idx}].bias",
                         file_shape=(s.out_channels, 1, 1))
        return FilterSet(w, b, fmt)

    def classifier_layers(self) -> list:
        fmt = self.chip.fmt
        out = []
        c = self.layers[-1].spec.out_channels if self.layers else self.input_shape[0]
        for i, (n_out, act, wsrc, bsrc) in enumerate(self.classifier):
            key = 1000 + i
            w = self._source(wsrc, (n_out, c), fmt, (key, 0), f"classifier[{i}].weights", file_shape=(1, n_out, c))
            b = self._source(bsrc, (n_out,), fmt, (key, 1), f"classifier[{i}].bias", file_shape=(n_out, 1, 1))
            out.append((w, b, act))
            c = n_out
        return out


def parse_config(text: str, base_dir: str = ".") -> NetworkConfig:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", "document",
                          mark.line + 1 if mark else None)
    if doc is None:
        doc = _LineDict()
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", "document", 1)

    known = {"seed", "chip", "input", "layers", "classifier", "system"}
    for k in doc:
        if k not in known:
            raise ConfigError("unknown field", str(k), _line(doc, k))

    seed = _get(doc, "seed", "", int, 0)
    chip_d = doc.get("chip") or _LineDict()
    try:
        fmt = QFormat(
            _get(chip_d, "total_bits", "chip", int, 12),
            _get(chip_d, "frac_bits", "chip", int, 9),
            _get(chip_d, "overflow", "chip", str, "wrap"),
        )
        chip = ChipParams(
            n_ch=_get(chip_d, "n_ch", "chip", int, 8),
            h_k=_get(chip_d, "h_k", "chip", int, 7),
            w_k=_get(chip_d, "w_k", "chip", int, 7),
            h_in_max=_get(chip_d, "h_in_max", "chip", int, 512),
            f_mhz=_get(chip_d, "f_mhz", "chip", float, 250.0),
            fmt=fmt,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        key = next((k for k in chip_d if str(k) in str(exc)), None)
        raise ConfigError(str(exc), f"chip.{key}" if key else "chip", _line(chip_d, key) or _line(doc, "chip"))

    inp = doc.get("input")
    if not isinstance(inp, dict):
        raise ConfigError("required mapping missing", "input", _line(doc, "input") or _line(doc))
    shape = (
        _get(inp, "channels", "input", int, required=True),
        _get(inp, "height", "input", int, required=True),
        _get(inp, "width", "input", int, required=True),
    )

    layers = []
    c, h, w = shape
    raw_layers = doc.get("layers") or []
    if not isinstance(raw_layers, list):
        raise ConfigError("expected a list", "layers", _line(doc, "layers"))
    for i, ld in enumerate(raw_layers):
        path = f"layers[{i}]"
        if not isinstance(ld, dict):
            raise ConfigError("expected a mapping", path, _line(doc, "layers"))
        kernel = _pair(ld.get("kernel", 7), f"{path}.kernel", _line(ld, "kernel"))
        pool = _pair(ld.get("pool", None), f"{path}.pool", _line(ld, "pool"))
        for key, have in (("in_channels", c), ("input_h", h), ("input_w", w)):
            if key in ld and _get(ld, key, path, int) != have:
                raise ConfigError(f"is {ld[key]} but the previous stage produces {have}", f"{path}.{key}",
                                  _line(ld, key))
        act = _get(ld, "activation", path, str, RELU)
        if act not in (RELU, NONE):
            raise ConfigError(f"must be relu or none, got {act!r}", f"{path}.activation", _line(ld, "activation"))
        try:
            spec = LayerSpec(
                in_channels=c,
                out_channels=_get(ld, "out_channels", path, int, required=True),
                kernel_h=kernel[0],
                kernel_w=kernel[1],
                input_h=h,
                input_w=w,
                activation=act,
                pool=pool,
                name=_get(ld, "name", path, str, f"stage{i + 1}"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), path, _line(ld))
        layers.append(LayerConfig(spec, _get(ld, "filters", path, str, "random"), _get(ld, "bias", path, str, "zero"),
                                  _line(ld)))
        c, h, w = spec.out_channels, spec.output_h, spec.output_w

    classifier = []
    for i, cd in enumerate(doc.get("classifier") or []):
        path = f"classifier[{i}]"
        if not isinstance(cd, dict):
            raise ConfigError("expected a mapping", path, _line(doc, "classifier"))
        act = _get(cd, "activation", path, str, RELU)
        if act not in (RELU, NONE):
            raise ConfigError(f"must be relu or none, got {act!r}", f"{path}.activation", _line(cd, "activation"))
        classifier.append((_get(cd, "out", path, int, required=True), act,
                           _get(cd, "weights", path, str, "random"), _get(cd, "bias", path, str, "zero")))

    system = None
    if doc.get("system") is not None:
        sd = doc["system"]
        try:
            system = SystemConfig(
                n_chips=_get(sd, "n_chips", "system", int, 4),
                pairing=_get(sd, "pairing", "system", bool, True),
                bus_bits=_get(sd, "bus_bits", "system", int, fmt.total_bits),
                bus_mhz=_get(sd, "bus_mhz", "system", float, chip.f_mhz),
                pool=_pair(sd.get("pool", [2, 2]), "system.pool", _line(sd, "pool")),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), "system", _line(doc, "system"))

    return NetworkConfig(chip, shape, layers, classifier, system, seed, base_dir)


def load_config(path) -> NetworkConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
