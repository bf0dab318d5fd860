"""Acceptance gate. Each test prints one PASS/FAIL line; the summary lists them all."""
import time
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from conftest import codes, record
from origami import ChipParams, FeatureMap, FilterSet, LayerSpec, OrigamiChip, QFormat
from origami.golden import NONE, conv_fixed_chain, conv_real
from origami.mapper import extract_window, prepare_kernel, run_layer
from origami.perf import (
    SystemConfig,
    bandwidth_efficiency,
    chip_bandwidth_efficiency,
    eta_border,
    eta_filter_load,
    io_bandwidth,
    io_power,
    network_report,
    op_count,
    peak_throughput,
    scale_power,
    system_bandwidth,
    system_frame_rate,
)
from origami.reference import reference_layers
from origami.verify import first_difference, random_chip, tile_trial

CHIP = ChipParams()
# 189 MHz fast clock at 0.8 V, i.e. a 94.5 MHz word clock
CHIP_08V = ChipParams(f_mhz=94.5)


def two_dp(x):
    return float(Decimal(x).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def rel(a, b):
    return abs(a - b) / abs(b)


def test_c01_op_counts():
    start = time.perf_counter()
    ops = [op_count(l) for l in reference_layers()]
    elapsed = time.perf_counter() - start
    ok = ops == [345_631_104, 1_681_999_872, 5_428_641_792]
    ok &= all(abs(o / 1e6 - p) < 1 for o, p in zip(ops, (346, 1682, 5428)))
    ok &= elapsed < 1
    assert record(1, ok, f"ops={ops} ({elapsed * 1e3:.1f} ms)")


def test_c02_efficiency_factors():
    rep = network_report(reference_layers(), CHIP)
    got = [[two_dp(getattr(s, k)) for s in rep.stages]
           for k in ("eta_ch_idle", "eta_filter_load", "eta_border", "eta_total")]
    want = [[0.38, 1.00, 1.00], [0.99, 0.98, 0.91], [0.96, 0.91, 0.82], [0.36, 0.89, 0.75]]
    assert record(2, got == want, f"chIdle/filterLoad/border/total={got}")


def test_c03_throughput_and_timing():
    rep = network_report(reference_layers(), CHIP)
    tput = [s.throughput_gops for s in rep.stages]
    rt = [s.runtime_ms for s in rep.stages]
    ok = all(abs(t - w) <= 2 for t, w in zip(tput, (71, 174, 147)))
    ok &= all(rel(r, w) <= 0.01 for r, w in zip(rt, (4.93, 9.65, 36.94)))
    ok &= abs(rep.avg_throughput - 145) <= 2
    ok &= abs(rep.frame_rate - 19.4) <= 0.2
    assert record(3, ok, f"GOp/s={[round(t, 2) for t in tput]} ms={[round(r, 3) for r in rt]} "
                         f"avg={rep.avg_throughput:.2f} fps={rep.frame_rate:.3f}")


def test_c04_peaks():
    peak, low = peak_throughput(CHIP), peak_throughput(CHIP_08V)
    bw = io_bandwidth(CHIP)
    ok = round(peak) == 196 and round(low) == 74 and bw == 375
    assert record(4, ok, f"peak={peak:.3f} GOp/s, 0.8V peak={low:.3f} GOp/s, bus={bw} MB/s")


def test_c05_bandwidth_efficiency():
    gpg, _ = chip_bandwidth_efficiency(CHIP)
    _, mpg = bandwidth_efficiency(74, 142)
    _, mpg_model = chip_bandwidth_efficiency(CHIP_08V)
    ok = round(gpg, 1) == 522.7 and rel(gpg, 521) <= 0.005 and two_dp(mpg) == 1.92
    assert record(5, ok, f"{gpg:.2f} GOp/GB, 142/74={mpg:.4f} MB/GOp (model at 94.5 MHz: {mpg_model:.4f})")


def test_c06_system_bandwidth():
    sys = SystemConfig(n_chips=4, pairing=True)
    bw = system_bandwidth(sys)
    fps = system_frame_rate(network_report(reference_layers(), CHIP), sys)
    ok = bw.total == 2437.5 and rel(bw.total, 2450) <= 0.01 and bw.filter_load == 1500 and fps > 75
    assert record(6, ok, f"total={bw.total} MB/s, filter load={bw.filter_load} MB/s, {fps:.2f} frame/s")


def test_c07_power():
    p = scale_power(449, 1.2, 0.8, 65, 28)
    io_hi, io_lo = io_power(375, 21), io_power(142, 21)
    ok = round(p, 1) == 86.0 and rel(p, 86.1) <= 0.002 and io_hi == 63 and abs(io_lo - 24) <= 0.5
    assert record(7, ok, f"scaled core={p:.3f} mW, I/O={io_hi:.3f} mW and {io_lo:.3f} mW")


_TILES = []


def _tiles():
    # 1000 seeded tiles, shared by criteria 8 and 9
    if not _TILES:
        fmt = QFormat()
        start = time.perf_counter()
        for t in range(1000):
            rng = np.random.default_rng([2015, t])
            chip = random_chip(rng, fmt)
            tile, got, want = tile_trial(rng, chip)
            _TILES.append((chip, tile, first_difference(got, want)))
        _TILES.append(time.perf_counter() - start)
    return _TILES[:-1], _TILES[-1]


def test_c08_oracle_equivalence():
    tiles, elapsed = _tiles()
    bad = [(i, d) for i, (_, _, d) in enumerate(tiles) if d is not None]
    mix = sorted({(c.n_ch, c.h_k) for c, _, _ in tiles})
    ok = len(tiles) >= 1000 and not bad and elapsed < 60 and len(mix) == 9
    assert record(8, ok, f"{len(tiles)} tiles, {len(bad)} mismatches, {elapsed:.1f} s, (n_ch, k) mix={len(mix)}"
                         + (f", first at tile {bad[0][0]}: {bad[0][1]}" if bad else ""))


def test_c09_cycle_closed_form():
    tiles, _ = _tiles()
    worst = 0.0
    cycles_ok = True
    for chip, tile, _ in tiles:
        h, w = tile.out_h + chip.h_k - 1, tile.out_w + chip.w_k - 1
        n, k = chip.n_ch, chip.h_k
        cycles_ok &= tile.cycles.total == n * h * w + n * n * k * k
        layer = LayerSpec(n, n, k, k, h, w)
        runtime = tile.cycles.total / chip.f_hz
        lhs = op_count(layer) / (peak_throughput(chip) * 1e9 * runtime)
        rhs = eta_border(h, w, k, k) * eta_filter_load(h, w, chip)
        worst = max(worst, rel(lhs, rhs))
    ok = cycles_ok and worst <= 1e-12
    assert record(9, ok, f"closed form holds for all {len(tiles)} tiles: {cycles_ok}, worst eta identity error {worst:.2e}")


def _int_conv(x, k):
    win = sliding_window_view(x, k.shape)[:, :, ::-1, ::-1]
    return np.einsum("hwab,ab->hw", win, k)


def test_c10_kernel_decomposition():
    chip = ChipParams()
    small = ChipParams(n_ch=2, h_in_max=14)
    fmt = QFormat()
    worst = 0.0
    exact_ok = pipeline_ok = True
    for t in range(100):
        rng = np.random.default_rng([10, t])
        size = 9 if t % 2 == 0 else 11
        x = rng.standard_normal((1, 24, 26))
        kern = rng.standard_normal((size, size))
        full = conv_real(FeatureMap(x), FilterSet(kern[None, None])).data[0]
        oh, ow = full.shape
        parts = prepare_kernel(kern, chip)
        acc = np.zeros_like(full)
        for p in parts:
            sr, sc = p.input_shift
            win = extract_window(x, 0, 1, sr, oh + 6, sc, ow + 6)
            acc += conv_real(FeatureMap(win), FilterSet(p.weights[None, None])).data[0]
        worst = max(worst, np.max(np.abs(acc - full)) / np.max(np.abs(full)))

        # fixed point: the exact part sums reproduce the full-precision inner products
        xq, kq = codes(rng, (1, 24, 26)), codes(rng, (size, size))
        wide = _int_conv(xq[0], kq)
        parts_q = prepare_kernel(kq, chip)
        wide_sum = sum(_int_conv(extract_window(xq, 0, 1, p.input_shift[0], oh + 6, p.input_shift[1], ow + 6)[0],
                                 p.weights) for p in parts_q)
        exact_ok &= np.array_equal(wide, wide_sum)

        # and the mapper + cycle simulator chain equals the golden chain
        c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        layer = LayerSpec(c_in, c_out, size, size, 20, 18, activation=NONE, pool=None)
        fx = FeatureMap(codes(rng, (c_in, 20, 18)), fmt)
        f = FilterSet(codes(rng, (c_out, c_in, size, size)), codes(rng, c_out), fmt)
        pipeline_ok &= run_layer(fx, layer, f, small, threads=1).output == conv_fixed_chain(fx, f, small)
    ok = worst <= 1e-9 and exact_ok and pipeline_ok
    assert record(10, ok, f"100 kernels: real rel err {worst:.1e}, exact wide sums {exact_ok}, "
                          f"simulated parts bit-exact {pipeline_ok}")


def test_c11_scope_statement():
    note = ("out of scope, not reproduced: measured power/voltage curves, classification accuracy, "
            "silicon area; covered only through the derived figures of criteria 4-7")
    assert record(11, True, note)
