"""Cycle-level, bit-exact model of one Origami chip.

The chip is simulated at slow-clock granularity. Every slow cycle the 12-bit
input bus delivers one word: first the filter weights (configuration mode),
then the image stripe column by column, each column row by row and each row
channel by channel. Incoming pixels are written to the image window SRAM and,
once ``w_k - 1`` columns are buffered, the matching SRAM row is shifted into
the image bank. When the bank holds a full ``h_k x w_k`` window, the
``n_ch / 2`` SoP units compute two inner products each (two fast-clock
sub-steps), truncate them, and the channel summers accumulate them over the
``n_ch`` input channels. A finished pixel's ``n_ch`` results are latched and
leave on the output bus one per cycle while the next pixel is computed.

Per tile (filters + stripe) the cycle count is
``n_ch * h_in * w_in + n_ch**2 * h_k * w_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .qformat import Q12_9, QFormat, SATURATE, exact_dtype, fits

DIR_IN, DIR_OUT = 0, 1
TAG_FILTER, TAG_PIXEL, TAG_RESULT = 0, 1, 2
DIRECTIONS = ("in", "out")
TAGS = ("filter", "pixel", "result")

# phase counters filled in by the streaming loop
_PRELOAD, _COLUMN, _COMPUTE = 0, 1, 2


@dataclass(frozen=True)
class ChipParams:
    n_ch: int = 8
    h_k: int = 7
    w_k: int = 7
    h_in_max: int = 512
    f_mhz: float = 250.0
    fmt: QFormat = Q12_9
    sram_banks: int = 4

    def __post_init__(self):
        if self.n_ch < 0 or self.n_ch % 2:
            raise ValueError(f"n_ch must be even (two output channels per SoP unit), got {self.n_ch}")
        if self.h_k < 1 or self.w_k < 1:
            raise ValueError("kernel dims must be positive")
        if self.h_in_max < self.h_k:
            raise ValueError(f"h_in_max={self.h_in_max} smaller than h_k={self.h_k}")

    @property
    def n_sop(self) -> int:
        return self.n_ch // 2

    @property
    def f_hz(self) -> float:
        return self.f_mhz * 1e6

    @property
    def f_fast_mhz(self) -> float:
        return 2 * self.f_mhz

    @property
    def taps(self) -> int:
        return self.h_k * self.w_k

    @property
    def filter_words(self) -> int:
        return self.n_ch * self.n_ch * self.taps

    def tile_cycles(self, h_in: int, w_in: int) -> int:
        return self.n_ch * h_in * w_in + self.filter_words


class ImageWindowSram:
    """``w_k``-wide column window of ``h_in_max`` rows for each of ``n_ch`` channels.

    One SRAM row holds ``w_k`` words of one channel; rows are spread over
    ``banks`` macros. Banking is modeled for capacity only.
    """

    def __init__(self, params: ChipParams, dtype=np.int64):
        self.params = params
        self.mem = np.zeros((params.n_ch, params.h_in_max, params.w_k), dtype=dtype)

    @property
    def rows_per_bank(self) -> int:
        p = self.params
        return math.ceil(p.n_ch * p.h_in_max / p.sram_banks)

    @property
    def row_bits(self) -> int:
        return self.params.w_k * self.params.fmt.total_bits

    @property
    def capacity_bits(self) -> int:
        return self.params.sram_banks * self.rows_per_bank * self.row_bits

    @property
    def capacity_words(self) -> int:
        return self.capacity_bits // self.params.fmt.total_bits


class ImageBank:
    """``n_ch`` register windows of ``h_k x w_k`` words feeding the SoP units."""

    def __init__(self, params: ChipParams, dtype=np.int64):
        self.regs = np.zeros((params.n_ch, params.h_k, params.w_k), dtype=dtype)

    @property
    def size(self) -> int:
        return self.regs.size


class FilterBank:
    """All ``n_ch**2`` kernels of the current channel block.

    During streaming the SoP units read one of ``2 * n_ch`` weight sets per
    fast cycle: set ``2 * c + s`` holds, for input channel ``c`` and sub-step
    ``s``, the kernels of output channels ``s, s + 2, s + 4, ...``.
    """

    def __init__(self, params: ChipParams, dtype=np.int64):
        self.params = params
        self.regs = np.zeros((params.n_ch, params.n_ch, params.h_k, params.w_k), dtype=dtype)
        self.configuring = True

    @property
    def n_sets(self) -> int:
        return 2 * self.params.n_ch

    @property
    def set_size(self) -> int:
        return self.params.n_ch * self.params.taps // 2

    def select(self, set_index: int) -> np.ndarray:
        c, s = divmod(set_index, 2)
        return self.regs[s::2, c]

    def write(self, weights: np.ndarray):
        if not self.configuring:
            raise RuntimeError("filter bank is read-only while streaming")
        self.regs[...] = weights


@dataclass
class CyclesBreakdown:
    filter_load: int
    stripe_preload: int
    column_preload_total: int
    compute: int

    @property
    def total(self) -> int:
        return self.filter_load + self.stripe_preload + self.column_preload_total + self.compute

    def as_dict(self) -> dict:
        return {
            "filter_load": self.filter_load,
            "stripe_preload": self.stripe_preload,
            "column_preload_total": self.column_preload_total,
            "compute": self.compute,
            "total": self.total,
        }


_RECORD_DTYPE = np.dtype([("cycle", "<u8"), ("direction", "u1"), ("tag", "u1"), ("word", "<u2")])


@dataclass
class BusTrace:
    """Bus words as an (N, 4) int64 array of (cycle, direction, tag, raw word)."""

    records: np.ndarray
    word_bits: int = 12

    def __post_init__(self):
        self.records = np.asarray(self.records, dtype=np.int64).reshape(-1, 4)

    def __len__(self):
        return len(self.records)

    def count(self, direction: Optional[int] = None, tag: Optional[int] = None) -> int:
        sel = np.ones(len(self.records), dtype=bool)
        if direction is not None:
            sel &= self.records[:, 1] == direction
        if tag is not None:
            sel &= self.records[:, 2] == tag
        return int(sel.sum())

    def words(self, direction: int, tag: int) -> np.ndarray:
        r = self.records
        return r[(r[:, 1] == direction) & (r[:, 2] == tag), 3]

    def max_words_per_cycle(self, direction: int) -> int:
        cyc = self.records[self.records[:, 1] == direction, 0]
        if not len(cyc):
            return 0
        return int(np.unique(cyc, return_counts=True)[1].max())

    def _unsigned(self) -> np.ndarray:
        return self.records[:, 3] & ((1 << self.word_bits) - 1)

    def to_text(self) -> str:
        digits = math.ceil(self.word_bits / 4)
        words = self._unsigned()
        lines = [
            f"{cyc},{DIRECTIONS[d]},{TAGS[t]},0x{w:0{digits}X}"
            for (cyc, d, t, _), w in zip(self.records.tolist(), words.tolist())
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_bytes(self) -> bytes:
        if self.word_bits > 16:
            raise ValueError("binary traces hold at most 16-bit words")
        out = np.empty(len(self.records), dtype=_RECORD_DTYPE)
        out["cycle"] = self.records[:, 0]
        out["direction"] = self.records[:, 1]
        out["tag"] = self.records[:, 2]
        out["word"] = self._unsigned()
        return out.tobytes()

    @classmethod
    def from_text(cls, text: str, word_bits: int = 12) -> "BusTrace":
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                cyc, d, t, w = line.strip().split(",")
                rows.append((int(cyc), DIRECTIONS.index(d), TAGS.index(t), _sign_extend(int(w, 16), word_bits)))
            except ValueError as exc:
                raise ValueError(f"trace line {n}: cannot parse {line!r}") from exc
        return cls(np.array(rows, dtype=np.int64).reshape(-1, 4), word_bits)

    @classmethod
    def from_bytes(cls, data: bytes, word_bits: int = 12) -> "BusTrace":
        if len(data) % _RECORD_DTYPE.itemsize:
            raise ValueError(f"binary trace length {len(data)} is not a multiple of {_RECORD_DTYPE.itemsize}")
        arr = np.frombuffer(data, dtype=_RECORD_DTYPE)
        rec = np.empty((len(arr), 4), dtype=np.int64)
        rec[:, 0] = arr["cycle"]
        rec[:, 1] = arr["direction"]
        rec[:, 2] = arr["tag"]
        rec[:, 3] = [_sign_extend(int(w), word_bits) for w in arr["word"]]
        return cls(rec, word_bits)

    def save(self, path, binary: bool = False):
        if binary:
            with open(path, "wb") as fh:
                fh.write(self.to_bytes())
        else:
            with open(path, "w") as fh:
                fh.write(self.to_text())


def _sign_extend(v: int, bits: int) -> int:
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >> (bits - 1) else v


@dataclass
class TileResult:
    """Output stream of one tile: pixels in column-major scan order, ``n_ch`` words each."""

    outputs: np.ndarray
    out_h: int
    out_w: int
    cycles: CyclesBreakdown
    trace: BusTrace
    fmt: QFormat
    unit_counts: np.ndarray = field(repr=False, default=None)
    filter_selects: np.ndarray = field(repr=False, default=None)

    @property
    def n_ch(self) -> int:
        return self.outputs.size // max(1, self.out_h * self.out_w)

    def output_map(self) -> np.ndarray:
        """Outputs rearranged to (n_ch, out_h, out_w)."""
        return self.outputs.reshape(self.out_w, self.out_h, -1).transpose(2, 1, 0).copy()


def _stream_tile(x, filt, sram, bank, acc, outbuf, frac, tb, saturate, t0,
                 rec, selects, unit_counts, phases):
    n_ch = x.shape[0]
    h = x.shape[1]
    w = x.shape[2]
    hk = filt.shape[2]
    wk = filt.shape[3]
    n_sop = n_ch // 2
    half = 1 << (tb - 1)
    mask = (1 << tb) - 1
    lo = -half
    hi = half - 1

    t = t0
    nrec = 0
    ncomp = 0
    drain = n_ch
    for col in range(w):
        slot = col % wk
        for r in range(h):
            for c in range(n_ch):
                # output bus: previous pixel's ChSum results, one per cycle
                if drain < n_ch:
                    rec[nrec, 0] = t
                    rec[nrec, 1] = 1
                    rec[nrec, 2] = 2
                    rec[nrec, 3] = outbuf[drain]
                    nrec += 1
                    drain += 1

                # input bus -> image window SRAM
                word = x[c, r, col]
                rec[nrec, 0] = t
                rec[nrec, 1] = 0
                rec[nrec, 2] = 1
                rec[nrec, 3] = word
                nrec += 1
                sram[c, r, slot] = word

                if col < wk - 1:
                    phases[0] += 1
                    t += 1
                    continue

                # SRAM row (written this cycle) -> image bank
                for rr in range(hk - 1):
                    for cc in range(wk):
                        bank[c, rr, cc] = bank[c, rr + 1, cc]
                for cc in range(wk):
                    bank[c, hk - 1, cc] = sram[c, r, (col - wk + 1 + cc) % wk]

                if r < hk - 1:
                    phases[1] += 1
                    t += 1
                    continue

                # two fast-clock sub-steps; unit u serves output channels 2u, 2u+1
                for s in range(2):
                    selects[ncomp, s] = 2 * c + s
                    for u in range(n_sop):
                        o = 2 * u + s
                        ip = 0
                        for rr in range(hk):
                            for cc in range(wk):
                                ip += bank[c, rr, cc] * filt[o, c, hk - 1 - rr, wk - 1 - cc]
                        v = ip >> frac
                        if saturate:
                            v = min(max(v, lo), hi)
                        else:
                            v = ((v + half) & mask) - half
                        if c == 0:
                            acc[o] = v
                        else:
                            acc[o] += v
                        unit_counts[u, s] += 1
                ncomp += 1
                phases[2] += 1

                if c == n_ch - 1:
                    for o in range(n_ch):
                        v = acc[o]
                        if saturate:
                            v = min(max(v, lo), hi)
                        else:
                            v = ((v + half) & mask) - half
                        outbuf[o] = v
                    drain = 0
                t += 1

    t_end = t
    while drain < n_ch:
        rec[nrec, 0] = t
        rec[nrec, 1] = 1
        rec[nrec, 2] = 2
        rec[nrec, 3] = outbuf[drain]
        nrec += 1
        drain += 1
        t += 1
    return t_end, nrec


_stream_tile_jit = njit(cache=True, nogil=True)(_stream_tile)


class OrigamiChip:
    """One accelerator instance. Not thread-safe; use one instance per worker."""

    def __init__(self, params: Optional[ChipParams] = None):
        self.params = params or ChipParams()
        p = self.params
        if p.n_ch < 2:
            raise ValueError("a chip needs at least one SoP unit (n_ch >= 2)")
        self.fast = exact_dtype(p.fmt, p.taps, terms=p.n_ch) is np.int64
        dtype = np.int64 if self.fast else object
        self.sram = ImageWindowSram(p, dtype)
        self.image_bank = ImageBank(p, dtype)
        self.filter_bank = FilterBank(p, dtype)
        self._filter_records = np.zeros((0, 4), dtype=np.int64)
        self._filter_cycles = 0
        self.filters_loaded = False

    def load_filters(self, filters) -> int:
        """Shift all weights in over the input bus; one word per slow cycle."""
        p = self.params
        w = np.asarray(getattr(filters, "weights", filters))
        shape = (p.n_ch, p.n_ch, p.h_k, p.w_k)
        if w.shape != shape:
            raise ValueError(f"filter tensor must have shape {shape}, got {w.shape}")
        if not fits(w, p.fmt):
            raise ValueError(f"filter codes do not fit {p.fmt}")
        self.filter_bank.configuring = True
        self.filter_bank.write(w if self.fast else w.astype(object))
        n = w.size
        rec = np.empty((n, 4), dtype=np.int64)
        rec[:, 0] = np.arange(n)
        rec[:, 1] = DIR_IN
        rec[:, 2] = TAG_FILTER
        rec[:, 3] = w.reshape(-1)
        self._filter_records = rec
        self._filter_cycles = n
        self.filters_loaded = True
        return n

    def simulate_tile(self, stripe) -> TileResult:
        """Stream one ``n_ch``-channel stripe through the loaded filters."""
        p = self.params
        if not self.filters_loaded:
            raise RuntimeError("load_filters must be called before simulate_tile")
        fmt = getattr(stripe, "fmt", None) or p.fmt
        if (fmt.total_bits, fmt.frac_bits) != (p.fmt.total_bits, p.fmt.frac_bits):
            raise ValueError(f"stripe format {fmt} does not match chip format {p.fmt}")
        x = np.asarray(getattr(stripe, "data", stripe))
        if x.ndim != 3 or x.shape[0] != p.n_ch:
            raise ValueError(f"stripe must have shape ({p.n_ch}, h, w), got {x.shape}")
        _, h, w = x.shape
        if h > p.h_in_max:
            raise ValueError(f"stripe height {h} exceeds h_in_max={p.h_in_max}; split it into stripes")
        if h < p.h_k or w < p.w_k:
            raise ValueError(f"stripe {h}x{w} smaller than kernel {p.h_k}x{p.w_k}")
        if not fits(x, p.fmt):
            raise ValueError(f"stripe codes do not fit {p.fmt}")

        out_h, out_w = h - p.h_k + 1, w - p.w_k + 1
        n_out = p.n_ch * out_h * out_w
        n_compute = p.n_ch * out_h * out_w
        rec = np.zeros((p.n_ch * h * w + n_out, 4), dtype=np.int64)
        selects = np.zeros((n_compute, 2), dtype=np.int64)
        unit_counts = np.zeros((p.n_sop, 2), dtype=np.int64)
        phases = np.zeros(3, dtype=np.int64)
        t0 = self._filter_cycles

        self.filter_bank.configuring = False
        if self.fast:
            acc = np.zeros(p.n_ch, dtype=np.int64)
            outbuf = np.zeros(p.n_ch, dtype=np.int64)
            t_end, nrec = _stream_tile_jit(
                x.astype(np.int64), self.filter_bank.regs, self.sram.mem, self.image_bank.regs,
                acc, outbuf, p.fmt.frac_bits, p.fmt.total_bits, p.fmt.overflow_mode == SATURATE,
                t0, rec, selects, unit_counts, phases,
            )
        else:
            acc = np.zeros(p.n_ch, dtype=object)
            outbuf = np.zeros(p.n_ch, dtype=object)
            t_end, nrec = _stream_tile(
                x.astype(object), self.filter_bank.regs, self.sram.mem, self.image_bank.regs,
                acc, outbuf, p.fmt.frac_bits, p.fmt.total_bits, p.fmt.overflow_mode == SATURATE,
                t0, rec, selects, unit_counts, phases,
            )
        assert nrec == len(rec)

        records = np.concatenate([self._filter_records, rec])
        outputs = rec[rec[:, 1] == DIR_OUT, 3].copy()
        cycles = CyclesBreakdown(
            filter_load=self._filter_cycles,
            stripe_preload=int(phases[_PRELOAD]),
            column_preload_total=int(phases[_COLUMN]),
            compute=int(phases[_COMPUTE]),
        )
        assert cycles.total == t_end
        # filters stay resident; a following tile does not pay for them again
        self._filter_records = np.zeros((0, 4), dtype=np.int64)
        self._filter_cycles = 0
        return TileResult(
            outputs=outputs,
            out_h=out_h,
            out_w=out_w,
            cycles=cycles,
            trace=BusTrace(records, p.fmt.total_bits),
            fmt=p.fmt,
            unit_counts=unit_counts,
            filter_selects=selects,
        )


def load_filters(chip: OrigamiChip, filters) -> int:
    return chip.load_filters(filters)


def simulate_tile(chip: OrigamiChip, stripe) -> TileResult:
    return chip.simulate_tile(stripe)


def run_job(chip: OrigamiChip, filters, stripe) -> TileResult:
    """Load a filter block and stream one stripe through it."""
    chip.load_filters(filters)
    return chip.simulate_tile(stripe)


@dataclass
class DualClockReport:
    n_units: int
    channels_per_unit: int
    covered_channels: tuple
    compute_cycles: int
    unit_results: np.ndarray
    selects_alternate: bool

    @property
    def ok(self) -> bool:
        return (
            self.selects_alternate
            and bool(np.all(self.unit_results.sum(axis=1) == 2 * self.compute_cycles))
            and self.n_units * self.channels_per_unit == len(self.covered_channels)
        )


def dual_clock_check(chip: OrigamiChip, tile: TileResult) -> DualClockReport:
    """Check that every SoP unit served two output channels per slow compute cycle."""
    p = chip.params
    sel = tile.filter_selects
    n = len(sel)
    channel = np.arange(n) % p.n_ch
    alternate = bool(np.array_equal(sel[:, 0], 2 * channel) and np.array_equal(sel[:, 1], 2 * channel + 1))
    covered = tuple(sorted(2 * u + s for u in range(p.n_sop) for s in range(2) if tile.unit_counts[u, s] > 0))
    per_unit = {int(v) for v in (tile.unit_counts > 0).sum(axis=1)} if n else {2}
    return DualClockReport(
        n_units=p.n_sop,
        channels_per_unit=per_unit.pop() if len(per_unit) == 1 else -1,
        covered_channels=covered if n else tuple(range(p.n_ch)),
        compute_cycles=tile.cycles.compute,
        unit_results=tile.unit_counts.copy(),
        selects_alternate=alternate,
    )
