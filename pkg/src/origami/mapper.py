"""Compile convolutional layers into chip-sized jobs and reassemble the results.

A job is one ``n_ch x n_ch`` channel block, one horizontal stripe of at most
``h_in_max`` input rows, and one ``h_k x w_k`` part of the layer's kernel.
Chip outputs are already truncated to the word format; the host sums them
exactly, adds the bias and truncates once.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datapath import ChipParams, OrigamiChip, TileResult
from .golden import RELU, FeatureMap, FilterSet, LayerSpec
from .qformat import QFormat, reduce_width_array

SCHEDULE_HEADER = "job_id,in_block,out_block,row_start,h_in,kernel_part"


@dataclass
class KernelPart:
    """A chip-sized slice of a kernel.

    ``offset`` is the slice's top-left corner in the zero-padded kernel grid.
    ``input_shift`` says where the part's input window starts relative to the
    full kernel's window, so that summing the part convolutions of the shifted
    inputs reproduces the full convolution. Negative shifts read zeros.
    """

    weights: np.ndarray
    offset: tuple
    input_shift: tuple


def _axis_parts(k: int, chip_k: int):
    """(padded-grid offset, input shift) for each part along one kernel axis."""
    if k <= chip_k:
        lead = (chip_k - k) // 2
        return lead, [(0, k - chip_k + lead)]
    n = math.ceil(k / chip_k)
    return 0, [(chip_k * i, k - chip_k - chip_k * i) for i in range(n)]


def prepare_kernel(kernel: np.ndarray, chip: ChipParams) -> list:
    """Zero-pad (centered) or split a 2-D kernel into ``h_k x w_k`` parts."""
    kernel = np.asarray(kernel)
    h, w = kernel.shape
    lead_h, rows = _axis_parts(h, chip.h_k)
    lead_w, cols = _axis_parts(w, chip.w_k)
    grid = np.zeros((max(chip.h_k, len(rows) * chip.h_k), max(chip.w_k, len(cols) * chip.w_k)), dtype=kernel.dtype)
    grid[lead_h:lead_h + h, lead_w:lead_w + w] = kernel
    parts = []
    for r0, sr in rows:
        for c0, sc in cols:
            parts.append(KernelPart(grid[r0:r0 + chip.h_k, c0:c0 + chip.w_k].copy(), (r0, c0), (sr, sc)))
    return parts


@dataclass
class TileJob:
    job_id: int
    in_block: int
    out_block: int
    stripe_index: int
    row_start: int
    h_in: int
    col_start: int
    w_in: int
    kernel_part: int
    out_row_start: int
    out_rows: int
    filters: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def stripe(self) -> tuple:
        return (self.row_start, self.h_in)


@dataclass
class LayerPlan:
    layer: LayerSpec
    chip: ChipParams
    jobs: list
    accumulation: dict
    n_in_blocks: int
    n_out_blocks: int
    n_stripes: int
    n_parts: int

    @property
    def out_h(self) -> int:
        return self.layer.conv_h

    @property
    def out_w(self) -> int:
        return self.layer.conv_w

    @property
    def cycles(self) -> int:
        return sum(self.chip.tile_cycles(j.h_in, j.w_in) for j in self.jobs)

    def to_schedule(self) -> str:
        lines = [SCHEDULE_HEADER]
        lines += [f"{j.job_id},{j.in_block},{j.out_block},{j.row_start},{j.h_in},{j.kernel_part}" for j in self.jobs]
        return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> list:
    """Rows of a schedule written by :meth:`LayerPlan.to_schedule` as int tuples."""
    rows = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line == SCHEDULE_HEADER:
            continue
        try:
            vals = tuple(int(v) for v in line.split(","))
        except ValueError as exc:
            raise ValueError(f"schedule line {n}: cannot parse {line!r}") from exc
        if len(vals) != 6:
            raise ValueError(f"schedule line {n}: expected 6 fields, got {len(vals)}")
        rows.append(vals)
    return rows


def _stripe_ranges(out_h: int, max_out_rows: int) -> list:
    return [(o0, min(max_out_rows, out_h - o0)) for o0 in range(0, out_h, max_out_rows)]


def plan_layer(layer: LayerSpec, chip: ChipParams, filters: Optional[FilterSet] = None) -> LayerPlan:
    """Enumerate jobs out_block-major, then in_block, stripe, kernel part."""
    n = chip.n_ch
    n_in_blocks = math.ceil(layer.in_channels / n)
    n_out_blocks = math.ceil(layer.out_channels / n)
    _, rows = _axis_parts(layer.kernel_h, chip.h_k)
    _, cols = _axis_parts(layer.kernel_w, chip.w_k)
    part_shifts = [(sr, sc) for _, sr in rows for _, sc in cols]
    stripes = _stripe_ranges(layer.conv_h, chip.h_in_max - chip.h_k + 1)

    part_kernels = None
    if filters is not None:
        if filters.fmt is None:
            raise ValueError("job filters must be fixed-point")
        part_kernels = _split_filters(filters, chip)

    jobs, accumulation = [], {}
    for ob in range(n_out_blocks):
        for ib in range(n_in_blocks):
            for si, (o0, m) in enumerate(stripes):
                for kp, (sr, sc) in enumerate(part_shifts):
                    job = TileJob(
                        job_id=len(jobs),
                        in_block=ib,
                        out_block=ob,
                        stripe_index=si,
                        row_start=o0 + sr,
                        h_in=m + chip.h_k - 1,
                        col_start=sc,
                        w_in=layer.conv_w + chip.w_k - 1,
                        kernel_part=kp,
                        out_row_start=o0,
                        out_rows=m,
                    )
                    if part_kernels is not None:
                        job.filters = _block(part_kernels[kp], ob, ib, n)
                    jobs.append(job)
                    accumulation.setdefault((ob, si), []).append(job.job_id)
    return LayerPlan(layer, chip, jobs, accumulation, n_in_blocks, n_out_blocks, len(stripes), len(part_shifts))


def _split_filters(filters: FilterSet, chip: ChipParams) -> list:
    """Per kernel part, the (out, in, h_k, w_k) weights of the whole layer."""
    o, c = filters.out_channels, filters.in_channels
    per_kernel = [[prepare_kernel(filters.weights[i, j], chip) for j in range(c)] for i in range(o)]
    n_parts = len(per_kernel[0][0])
    out = []
    for kp in range(n_parts):
        out.append(np.array([[per_kernel[i][j][kp].weights for j in range(c)] for i in range(o)], dtype=np.int64))
    return out


def _block(weights: np.ndarray, ob: int, ib: int, n: int) -> np.ndarray:
    blk = np.zeros((n, n) + weights.shape[2:], dtype=np.int64)
    sub = weights[ob * n:(ob + 1) * n, ib * n:(ib + 1) * n]
    blk[: sub.shape[0], : sub.shape[1]] = sub
    return blk


def extract_window(data: np.ndarray, c0: int, nc: int, r0: int, nr: int, k0: int, nk: int) -> np.ndarray:
    """Sub-block of a (c, h, w) array; positions outside the array read as zero."""
    out = np.zeros((nc, nr, nk), dtype=data.dtype)
    C, H, W = data.shape
    cs, ce = max(c0, 0), min(c0 + nc, C)
    rs, re = max(r0, 0), min(r0 + nr, H)
    ks, ke = max(k0, 0), min(k0 + nk, W)
    if cs < ce and rs < re and ks < ke:
        out[cs - c0:ce - c0, rs - r0:re - r0, ks - k0:ke - k0] = data[cs:ce, rs:re, ks:ke]
    return out


def job_input(x: FeatureMap, job: TileJob, chip: ChipParams) -> np.ndarray:
    """The ``n_ch``-channel stripe a job streams into the chip."""
    return extract_window(x.data, job.in_block * chip.n_ch, chip.n_ch, job.row_start, job.h_in, job.col_start, job.w_in)


def accumulate_offchip(partials: dict, biases, plan: LayerPlan, fmt: QFormat) -> FeatureMap:
    """Exact host-side sum of chip outputs plus bias, truncated once.

    ``partials`` maps job ids to either a :class:`TileResult` or its
    (n_ch, out_rows, out_w) output map.
    """
    n = plan.chip.n_ch
    layer = plan.layer
    biases = np.zeros(layer.out_channels, dtype=np.int64) if biases is None else np.asarray(biases, dtype=np.int64)
    total = np.zeros((plan.n_out_blocks * n, plan.out_h, plan.out_w), dtype=np.int64)
    for (ob, si), job_ids in plan.accumulation.items():
        for jid in job_ids:
            if jid not in partials:
                job = plan.jobs[jid]
                raise KeyError(
                    f"missing output of job {jid} (in_block={job.in_block}, out_block={job.out_block}, "
                    f"stripe={job.stripe_index}, kernel_part={job.kernel_part})"
                )
            job = plan.jobs[jid]
            res = partials[jid]
            res = res.output_map() if isinstance(res, TileResult) else np.asarray(res)
            if res.shape != (n, job.out_rows, plan.out_w):
                raise ValueError(f"job {jid}: output shape {res.shape}, expected {(n, job.out_rows, plan.out_w)}")
            total[ob * n:(ob + 1) * n, job.out_row_start:job.out_row_start + job.out_rows] += res
    total = total[: layer.out_channels] + biases[:, None, None]
    return FeatureMap(reduce_width_array(total, fmt).astype(np.int64), fmt)


@dataclass
class LayerRun:
    plan: LayerPlan
    output: FeatureMap
    tiles: dict

    @property
    def cycles(self) -> int:
        return sum(t.cycles.total for t in self.tiles.values())


def worker_count(requested: Optional[int] = None) -> int:
    env = os.environ.get("ORIGAMI_SIM_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(requested or cap, cap))


def run_layer(x: FeatureMap, layer: LayerSpec, filters: FilterSet, chip: ChipParams,
              threads: Optional[int] = None) -> LayerRun:
    """Plan a layer, stream every job through a simulated chip, accumulate off-chip.

    Returns the pre-activation layer output. Jobs run on up to ``threads``
    workers (capped by ``ORIGAMI_SIM_THREADS``), one chip instance each.
    """
    if x.fmt is None or filters.fmt is None:
        raise ValueError("run_layer needs fixed-point input and filters")
    if (x.channels, x.height, x.width) != (layer.in_channels, layer.input_h, layer.input_w):
        raise ValueError(
            f"{layer.label}: expects input {layer.in_channels}x{layer.input_h}x{layer.input_w}, "
            f"got {x.channels}x{x.height}x{x.width}"
        )
    plan = plan_layer(layer, chip, filters)

    def run_chunk(jobs):
        sim = OrigamiChip(chip)
        done = {}
        for job in jobs:
            sim.load_filters(job.filters)
            done[job.job_id] = sim.simulate_tile(job_input(x, job, chip))
        return done

    n_workers = min(worker_count(threads), len(plan.jobs)) or 1
    chunks = [plan.jobs[i::n_workers] for i in range(n_workers)]
    tiles = {}
    if n_workers == 1:
        tiles.update(run_chunk(plan.jobs))
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            for part in pool.map(run_chunk, chunks):
                tiles.update(part)
    tiles = dict(sorted(tiles.items()))
    out = accumulate_offchip(tiles, filters.biases, plan, x.fmt)
    return LayerRun(plan, out, tiles)


def pool_and_activate(x: FeatureMap, layer: LayerSpec, stats: Optional[dict] = None) -> FeatureMap:
    """ReLU and max-pooling applied column by column, as a host scan-line pass.

    Vertical maxima are formed locally per column; only one running column of
    horizontal maxima is buffered. ``stats['buffer_values']`` receives the
    per-channel buffer high-water mark.
    """
    data = x.data
    if layer.activation == RELU:
        data = np.maximum(data, 0)
    if not layer.pool:
        if stats is not None:
            stats["buffer_values"] = 0
        return FeatureMap(data, x.fmt)
    ph, pw = layer.pool
    c, h, w = data.shape
    hh, ww = h // ph, w // pw
    out = np.empty((c, hh, ww), dtype=data.dtype)
    buf = None
    high_water = 0
    for col in range(ww * pw):
        vmax = data[:, : hh * ph, col].reshape(c, hh, ph).max(axis=2)
        k = col % pw
        buf = vmax if k == 0 else np.maximum(buf, vmax)
        if k < pw - 1:
            high_water = max(high_water, buf.shape[1])
        else:
            out[:, :, col // pw] = buf
    if stats is not None:
        stats["buffer_values"] = high_water
    return FeatureMap(out, x.fmt)
