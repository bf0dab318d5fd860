"""Analytic throughput, efficiency, bandwidth and power model.

Cycle counts come from the same job plan the simulator executes, so
``layer_report(...).cycles`` equals the sum of simulated tile cycles.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .datapath import ChipParams
from .golden import LayerSpec
from .mapper import plan_layer

REPORT_FIELDS = (
    "eta_ch_idle",
    "eta_filter_load",
    "eta_border",
    "eta_total",
    "ops",
    "cycles",
    "runtime_ms",
    "throughput_gops",
)


def op_count(layer: LayerSpec) -> int:
    """Multiplies and adds counted separately."""
    return (
        2 * layer.out_channels * layer.in_channels * layer.kernel_h * layer.kernel_w
        * (layer.input_h - layer.kernel_h + 1) * (layer.input_w - layer.kernel_w + 1)
    )


def peak_throughput(chip: ChipParams) -> float:
    """GOp/s with every SoP unit busy: ``2 * n_ch * h_k * w_k * f``."""
    return 2 * chip.n_ch * chip.h_k * chip.w_k * chip.f_hz / 1e9


def eta_border(h_in: int, w_in: int, h_k: int, w_k: int) -> float:
    return (h_in - h_k + 1) * (w_in - w_k + 1) / (h_in * w_in)


def eta_filter_load(h_in: int, w_in: int, chip: ChipParams) -> float:
    data = chip.n_ch * h_in * w_in
    return data / (chip.n_ch * chip.n_ch * chip.h_k * chip.w_k + data)


def eta_ch_idle(n_in: int, n_out: int, n_ch: int) -> float:
    return (n_in * n_out) / (math.ceil(n_in / n_ch) * n_ch * math.ceil(n_out / n_ch) * n_ch)


@dataclass
class StageReport:
    name: str
    eta_ch_idle: float
    eta_filter_load: float
    eta_border: float
    ops: int
    cycles: int
    runtime_s: float
    n_jobs: int

    @property
    def eta_total(self) -> float:
        return self.eta_ch_idle * self.eta_filter_load * self.eta_border

    @property
    def runtime_ms(self) -> float:
        return self.runtime_s * 1e3

    @property
    def throughput_gops(self) -> float:
        return self.ops / self.runtime_s / 1e9 if self.runtime_s else 0.0

    def as_dict(self) -> dict:
        d = {"name": self.name}
        d.update({k: getattr(self, k) for k in REPORT_FIELDS})
        d["n_jobs"] = self.n_jobs
        return d


def layer_report(layer: LayerSpec, chip: ChipParams) -> StageReport:
    plan = plan_layer(layer, chip)
    cycles = plan.cycles
    return StageReport(
        name=layer.name,
        eta_ch_idle=eta_ch_idle(layer.in_channels, layer.out_channels, chip.n_ch),
        eta_filter_load=eta_filter_load(layer.input_h, layer.input_w, chip),
        eta_border=eta_border(layer.input_h, layer.input_w, layer.kernel_h, layer.kernel_w),
        ops=op_count(layer),
        cycles=cycles,
        runtime_s=cycles / chip.f_hz,
        n_jobs=len(plan.jobs),
    )


@dataclass
class PerfReport:
    stages: list
    chip: ChipParams
    seed: Optional[int] = None
    system: Optional[dict] = None

    @property
    def ops(self) -> int:
        return sum(s.ops for s in self.stages)

    @property
    def cycles(self) -> int:
        return sum(s.cycles for s in self.stages)

    @property
    def runtime_s(self) -> float:
        return sum(s.runtime_s for s in self.stages)

    @property
    def avg_throughput(self) -> float:
        """GOp/s over all stages, i.e. total ops / total runtime."""
        return self.ops / self.runtime_s / 1e9 if self.runtime_s else 0.0

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.runtime_s if self.runtime_s else 0.0

    def totals(self) -> dict:
        return {
            "ops": self.ops,
            "cycles": self.cycles,
            "runtime_ms": self.runtime_s * 1e3,
            "throughput_gops": self.avg_throughput,
            "frame_rate": self.frame_rate,
        }

    def to_json(self) -> str:
        chip = asdict(self.chip)
        chip["fmt"] = asdict(self.chip.fmt)
        doc = {
            "seed": self.seed,
            "chip": chip,
            "peak_throughput_gops": peak_throughput(self.chip),
            "stages": [s.as_dict() for s in self.stages],
            "totals": self.totals(),
            "system": self.system,
        }
        return json.dumps(doc, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("stage",) + REPORT_FIELDS + ("frame_rate",))
        for s in self.stages:
            w.writerow([s.name] + [repr(getattr(s, k)) for k in REPORT_FIELDS] + [""])
        t = self.totals()
        peak = peak_throughput(self.chip)
        eta = t["throughput_gops"] / peak if peak else 0.0
        w.writerow(["total", "", "", "", repr(eta), t["ops"], t["cycles"], repr(t["runtime_ms"]),
                    repr(t["throughput_gops"]), repr(t["frame_rate"])])
        if self.seed is not None:
            w.writerow(["# seed", self.seed])
        return buf.getvalue()


def network_report(layers: Sequence[LayerSpec], chip: ChipParams, seed=None, system=None) -> PerfReport:
    return PerfReport([layer_report(l, chip) for l in layers], chip, seed, system)


# --- bandwidth ---

def io_bandwidth(chip: ChipParams) -> float:
    """MB/s per bus direction: one word per slow cycle."""
    return chip.fmt.total_bits * chip.f_hz / 8 / 1e6


def bandwidth_efficiency(throughput_gops: float, bandwidth_mb_s: float) -> tuple:
    """(GOp/GB, MB/GOp) for a throughput sustained with a given per-direction bandwidth."""
    gop_per_gb = throughput_gops / (bandwidth_mb_s / 1e3) if bandwidth_mb_s else math.inf
    mb_per_gop = bandwidth_mb_s / throughput_gops if throughput_gops else math.inf
    return gop_per_gb, mb_per_gop


def chip_bandwidth_efficiency(chip: ChipParams) -> tuple:
    return bandwidth_efficiency(peak_throughput(chip), io_bandwidth(chip))


@dataclass(frozen=True)
class SystemConfig:
    """Several chips behind one memory.

    With ``pairing`` chips are grouped in 2x2 sets: two chips share input data
    and two chips' outputs are summed before being written back.
    """

    n_chips: int = 4
    pairing: bool = True
    bus_bits: int = 12
    bus_mhz: float = 250.0
    pool: Optional[tuple] = (2, 2)

    def __post_init__(self):
        if self.n_chips < 1:
            raise ValueError("need at least one chip")
        if self.pairing and self.n_chips % 2:
            raise ValueError(f"pairing needs an even number of chips, got {self.n_chips}")

    @property
    def chip_bandwidth(self) -> float:
        return self.bus_bits * self.bus_mhz * 1e6 / 8 / 1e6


@dataclass
class SystemBandwidth:
    """Memory traffic in MB/s while processing a stage, plus the filter-load burst."""

    input_read: float
    output_write: float
    partial_read: float
    final_write: float
    filter_load: float

    @property
    def total(self) -> float:
        return self.input_read + self.output_write + self.partial_read + self.final_write

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def system_bandwidth(sys: SystemConfig, stage: Optional[LayerSpec] = None) -> SystemBandwidth:
    """Memory bandwidth of a multi-chip system.

    Chip outputs are partial sums: they are written, read back for the final
    accumulation (fused with activation and pooling), and the pooled result is
    written once more. ``stage.pool`` overrides ``sys.pool`` when given.
    """
    b = sys.chip_bandwidth
    n = sys.n_chips
    if sys.pairing:
        if n % 4 == 0:
            inp, out = n * b / 2, n * b / 2
        elif n == 2:
            # one pair can share inputs, but there is no partner pair to sum with
            inp, out = n * b / 2, n * b
        else:
            raise ValueError(f"unsupported pairing arrangement for {n} chips")
    else:
        inp, out = n * b, n * b
    pool = stage.pool if stage is not None else sys.pool
    shrink = pool[0] * pool[1] if pool else 1
    return SystemBandwidth(
        input_read=inp,
        output_write=out,
        partial_read=out,
        final_write=out / shrink,
        filter_load=n * b,
    )


def system_frame_rate(report: PerfReport, sys: SystemConfig) -> float:
    """Frames/s with every chip working on its own frame share."""
    return sys.n_chips * report.frame_rate


# --- power ---

def scale_power(p_mw: float, v_old: float, v_new: float, len_old_nm: float, len_new_nm: float) -> float:
    """Technology scaling: linear in feature size, quadratic in supply voltage."""
    for name, v in (("p_mw", p_mw), ("v_old", v_old), ("v_new", v_new), ("len_old_nm", len_old_nm),
                    ("len_new_nm", len_new_nm)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return p_mw * (len_new_nm / len_old_nm) * (v_new / v_old) ** 2


def io_power(bandwidth_mb_s: float, pj_per_bit: float) -> float:
    """mW to move ``bandwidth_mb_s`` at ``pj_per_bit``."""
    if bandwidth_mb_s < 0 or pj_per_bit < 0:
        raise ValueError("bandwidth and energy per bit must be non-negative")
    return bandwidth_mb_s * 8 * pj_per_bit / 1e3


def efficiency_with_io(throughput_gops: float, core_mw: float, io_mw_per_direction: float) -> dict:
    """GOp/s/W including I/O power, counting one or both bus directions."""
    return {
        "one_direction": throughput_gops / ((core_mw + io_mw_per_direction) / 1e3),
        "both_directions": throughput_gops / ((core_mw + 2 * io_mw_per_direction) / 1e3),
    }
