"""Randomized cross-checks of the simulator against the golden model."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .datapath import DIR_IN, DIR_OUT, ChipParams, OrigamiChip
from .golden import NONE, FeatureMap, FilterSet, LayerSpec, conv_fixed_chain, conv_real
from .mapper import run_layer
from .qformat import QFormat

N_CH_CHOICES = (2, 4, 8)
KERNEL_CHOICES = (3, 5, 7)
MAX_SIDE = 64


@dataclass
class Mismatch:
    trial: int
    seed: int
    kind: str
    detail: str
    location: Optional[tuple] = None
    got: Optional[int] = None
    want: Optional[int] = None

    def describe(self) -> str:
        s = f"trial {self.trial} (seed {self.seed}) {self.kind}: {self.detail}"
        if self.location is not None:
            s += f" at (channel, row, col)={self.location}: got {self.got}, expected {self.want}"
        return s


@dataclass
class VerifyResult:
    seed: int
    trials: int
    tiles: int = 0
    layers: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def first_difference(got: np.ndarray, want: np.ndarray):
    """Index and values of the first differing element, or None."""
    diff = np.argwhere(got != want)
    if not len(diff):
        return None
    loc = tuple(int(i) for i in diff[0])
    return loc, int(got[loc]), int(want[loc])


def random_codes(rng, shape, fmt: QFormat) -> np.ndarray:
    return rng.integers(fmt.min_raw, fmt.max_raw + 1, size=shape, dtype=np.int64)


def random_chip(rng, fmt: QFormat) -> ChipParams:
    n_ch = int(rng.choice(N_CH_CHOICES))
    k = int(rng.choice(KERNEL_CHOICES))
    return ChipParams(n_ch=n_ch, h_k=k, w_k=k, h_in_max=MAX_SIDE, fmt=fmt)


def tile_trial(rng, chip: ChipParams, oracle_fmt: Optional[QFormat] = None, max_side: int = MAX_SIDE):
    """One random tile through the cycle simulator and the golden chain.

    Returns ``(tile, got, want)`` with maps of shape (n_ch, out_h, out_w).
    """
    fmt = chip.fmt
    n, kh, kw = chip.n_ch, chip.h_k, chip.w_k
    h = int(rng.integers(kh, min(max_side, chip.h_in_max) + 1))
    w = int(rng.integers(kw, max_side + 1))
    x = random_codes(rng, (n, h, w), fmt)
    k = random_codes(rng, (n, n, kh, kw), fmt)
    sim = OrigamiChip(chip)
    sim.load_filters(k)
    tile = sim.simulate_tile(x)
    ofmt = oracle_fmt or fmt
    want = conv_fixed_chain(FeatureMap(x, ofmt), FilterSet(k, None, ofmt), chip, ofmt).data
    return tile, tile.output_map(), want


def _structural(tile, chip: ChipParams, x_shape) -> Optional[str]:
    """Shape/cycle/bus invariants that hold regardless of the arithmetic."""
    _, h, w = x_shape
    oh, ow = h - chip.h_k + 1, w - chip.w_k + 1
    ref = conv_real(FeatureMap(np.zeros((chip.n_ch, h, w))),
                    FilterSet(np.zeros((chip.n_ch, chip.n_ch, chip.h_k, chip.w_k))))
    if tile.output_map().shape != ref.shape:
        return f"output shape {tile.output_map().shape} != reference {ref.shape}"
    if tile.cycles.total != chip.tile_cycles(h, w):
        return f"cycles {tile.cycles.total} != closed form {chip.tile_cycles(h, w)}"
    if max(tile.trace.max_words_per_cycle(d) for d in (DIR_IN, DIR_OUT)) > 1:
        return "more than one word per cycle on a bus direction"
    n_in = tile.trace.count(DIR_IN)
    if n_in != chip.n_ch * h * w + chip.filter_words:
        return f"{n_in} input words, expected {chip.n_ch * h * w + chip.filter_words}"
    if len(tile.outputs) != chip.n_ch * oh * ow:
        return f"{len(tile.outputs)} output words, expected {chip.n_ch * oh * ow}"
    return None


def layer_trial(rng, chip: ChipParams, oracle_fmt: Optional[QFormat] = None):
    """A small multi-block, multi-stripe layer through mapper + simulator."""
    fmt = chip.fmt
    n = chip.n_ch
    kh = int(rng.choice((3, 5, 7, 9)))
    kw = int(rng.choice((3, 5, 7, 9)))
    c_in = int(rng.integers(1, 2 * n + 1))
    c_out = int(rng.integers(1, 2 * n + 1))
    h = int(rng.integers(kh, 24))
    w = int(rng.integers(kw, 24))
    h_in_max = max(chip.h_k, int(rng.integers(chip.h_k, 24)))
    small = replace(chip, h_in_max=h_in_max)
    layer = LayerSpec(c_in, c_out, kh, kw, h, w, activation=NONE, pool=None, name="verify")
    x = random_codes(rng, (c_in, h, w), fmt)
    f = FilterSet(random_codes(rng, (c_out, c_in, kh, kw), fmt), random_codes(rng, (c_out,), fmt), fmt)
    run = run_layer(FeatureMap(x, fmt), layer, f, small, threads=1)
    ofmt = oracle_fmt or fmt
    want = conv_fixed_chain(FeatureMap(x, ofmt), FilterSet(f.weights, f.biases, ofmt), small, ofmt).data
    return run, run.output.data, want


def run_verification(trials: int, seed: int = 0, chip: Optional[ChipParams] = None,
                     oracle_overflow: Optional[str] = None, layer_every: int = 4,
                     stop_on_failure: bool = True) -> VerifyResult:
    """Compare simulator and golden model on ``trials`` random instances.

    Without ``chip`` every tile draws its own ``n_ch`` and kernel size.
    Every ``layer_every``-th trial additionally runs a whole small layer
    through the mapper. ``oracle_overflow`` forces the golden model onto a
    different overflow mode; it exists as a negative control.
    """
    result = VerifyResult(seed, trials)
    fmt = chip.fmt if chip else QFormat()
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        c = chip or random_chip(rng, fmt)
        ofmt = c.fmt.with_mode(oracle_overflow) if oracle_overflow else None
        tile, got, want = tile_trial(rng, c, ofmt)
        result.tiles += 1
        bad = _structural(tile, c, (c.n_ch, tile.out_h + c.h_k - 1, tile.out_w + c.w_k - 1))
        if bad:
            result.failures.append(Mismatch(t, seed, "tile", f"n_ch={c.n_ch} k={c.h_k}: {bad}"))
        diff = first_difference(got, want)
        if diff:
            loc, g, wv = diff
            result.failures.append(Mismatch(t, seed, "tile", f"n_ch={c.n_ch} k={c.h_k} "
                                            f"{tile.out_h}x{tile.out_w} outputs differ", loc, g, wv))
        if layer_every and t % layer_every == layer_every - 1:
            run, got, want = layer_trial(rng, c, ofmt)
            result.layers += 1
            diff = first_difference(got, want)
            if diff:
                loc, g, wv = diff
                L = run.plan.layer
                result.failures.append(Mismatch(t, seed, "layer", f"{L.in_channels}->{L.out_channels} "
                                                f"k={L.kernel_h}x{L.kernel_w} outputs differ", loc, g, wv))
        if result.failures and stop_on_failure:
            break
    return result
