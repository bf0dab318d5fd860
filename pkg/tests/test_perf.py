import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from origami import ChipParams, LayerSpec, QFormat
from origami.perf import (
    SystemConfig,
    bandwidth_efficiency,
    chip_bandwidth_efficiency,
    efficiency_with_io,
    eta_border,
    eta_ch_idle,
    eta_filter_load,
    io_bandwidth,
    io_power,
    layer_report,
    network_report,
    op_count,
    peak_throughput,
    scale_power,
    system_bandwidth,
    system_frame_rate,
)
from origami.reference import reference_layers


def test_op_count_formula():
    layer = LayerSpec(2, 3, 3, 5, 10, 12)
    assert op_count(layer) == 2 * 3 * 2 * 3 * 5 * 8 * 8


def test_eta_closed_forms():
    assert eta_border(10, 10, 3, 3) == pytest.approx(0.64)
    assert eta_ch_idle(3, 16, 8) == pytest.approx(3 / 8)
    assert eta_ch_idle(16, 64, 8) == 1.0
    chip = ChipParams()
    assert eta_filter_load(55, 75, chip) == pytest.approx(33000 / 36136)


def test_layer_report_cycles_match_plan():
    chip = ChipParams()
    layer = reference_layers()[2]
    rep = layer_report(layer, chip)
    # 8 in-blocks x 32 out-blocks of 55x75 tiles
    assert rep.cycles == 8 * 32 * 36136
    assert rep.runtime_s == pytest.approx(rep.cycles / 250e6)


def test_layer_report_ignores_stripes_in_eta():
    rep = layer_report(LayerSpec(8, 8, 7, 7, 600, 20), ChipParams())
    assert rep.n_jobs == 2


def test_reports_serialize():
    rep = network_report(reference_layers(), ChipParams(), seed=42)
    doc = json.loads(rep.to_json())
    assert doc["seed"] == 42
    assert [s["name"] for s in doc["stages"]] == ["stage1", "stage2", "stage3"]
    assert set(doc["stages"][0]) >= {"eta_ch_idle", "eta_filter_load", "eta_border", "eta_total", "ops",
                                      "cycles", "runtime_ms", "throughput_gops"}
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("stage,eta_ch_idle")
    assert lines[-2].startswith("total,") and lines[-1] == "# seed,42"


def test_peak_and_bus():
    assert peak_throughput(ChipParams()) == pytest.approx(196.0)
    assert peak_throughput(ChipParams(n_ch=4, h_k=3, w_k=3, f_mhz=100)) == pytest.approx(7.2)
    assert io_bandwidth(ChipParams()) == pytest.approx(375.0)
    assert io_bandwidth(ChipParams(fmt=QFormat(16, 8))) == pytest.approx(500.0)


def test_bandwidth_efficiency():
    gpg, mpg = chip_bandwidth_efficiency(ChipParams())
    assert gpg == pytest.approx(196 / 0.375)
    assert mpg == pytest.approx(375 / 196)
    assert bandwidth_efficiency(0.0, 10.0)[1] == math.inf


def test_system_bandwidth_paired():
    bw = system_bandwidth(SystemConfig())
    assert bw.input_read == pytest.approx(750)
    assert bw.output_write == pytest.approx(750)
    assert bw.final_write == pytest.approx(187.5)
    assert bw.total == pytest.approx(2437.5)
    assert bw.filter_load == pytest.approx(1500)


def test_system_bandwidth_variants():
    assert system_bandwidth(SystemConfig(pairing=False)).total == pytest.approx(4 * 375 * 3.25)
    two = system_bandwidth(SystemConfig(n_chips=2))
    assert (two.input_read, two.output_write) == (375, 750)
    assert system_bandwidth(SystemConfig(n_chips=8), LayerSpec(1, 1, 3, 3, 5, 5, pool=None)).final_write == 1500
    with pytest.raises(ValueError):
        SystemConfig(n_chips=3)
    with pytest.raises(ValueError):
        system_bandwidth(SystemConfig(n_chips=6))


def test_system_frame_rate():
    rep = network_report(reference_layers(), ChipParams())
    assert system_frame_rate(rep, SystemConfig()) == pytest.approx(4 * rep.frame_rate)


def test_power_helpers():
    assert scale_power(100, 1.0, 0.5, 40, 20) == pytest.approx(12.5)
    assert io_power(1000, 1) == pytest.approx(8)
    with pytest.raises(ValueError):
        scale_power(100, 0, 0.5, 40, 20)
    with pytest.raises(ValueError):
        io_power(-1, 1)
    eff = efficiency_with_io(100, 50, 25)
    assert eff["one_direction"] == pytest.approx(100 / 0.075)
    assert eff["both_directions"] == pytest.approx(1000)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(7, 200), st.integers(7, 200))
def test_eta_factorization(n_in, n_out, h, w):
    chip = ChipParams()
    rep = layer_report(LayerSpec(n_in, n_out, 7, 7, h, w), chip)
    measured = rep.ops / (peak_throughput(chip) * 1e9 * rep.runtime_s)
    assert measured == pytest.approx(rep.eta_total, rel=1e-12)
    assert 0 < rep.eta_total <= 1
    assert rep.throughput_gops <= peak_throughput(chip) * (1 + 1e-12)


@given(st.integers(7, 300), st.integers(7, 300))
def test_eta_monotone(h, w):
    chip = ChipParams()
    assert eta_border(h + 1, w, 7, 7) >= eta_border(h, w, 7, 7)
    assert eta_border(h, w + 1, 7, 7) >= eta_border(h, w, 7, 7)
    assert eta_filter_load(h + 1, w, chip) >= eta_filter_load(h, w, chip)


def test_scaling_rows():
    # frozen from the formula: (28/65) * (0.53/1.2)^2 and (28/45) * 0.8^2
    assert scale_power(93, 1.2, 0.53, 65, 28) == pytest.approx(7.8148, abs=1e-4)
    assert scale_power(600, 1.0, 0.8, 45, 28) == pytest.approx(238.933, abs=1e-3)
    assert scale_power(5000, 1.0, 0.8, 45, 28) == pytest.approx(1991.11, abs=1e-2)
