import numpy as np
import pytest

from conftest import codes
from origami import ChipParams, FeatureMap, FilterSet, LayerSpec, QFormat
from origami.golden import NONE, conv_fixed_chain, conv_real, maxpool, relu
from origami.mapper import (
    SCHEDULE_HEADER,
    accumulate_offchip,
    extract_window,
    parse_schedule,
    plan_layer,
    pool_and_activate,
    prepare_kernel,
    run_layer,
    worker_count,
)


def test_small_kernel_is_centered():
    chip = ChipParams()
    parts = prepare_kernel(np.ones((3, 5)), chip)
    assert len(parts) == 1
    g = parts[0].weights
    assert g.shape == (7, 7)
    assert g[2:5, 1:6].sum() == 15 and g.sum() == 15
    assert parts[0].input_shift == (-2, -1)


def test_large_kernel_split():
    parts = prepare_kernel(np.arange(121).reshape(11, 11), ChipParams())
    assert len(parts) == 4
    assert [p.offset for p in parts] == [(0, 0), (0, 7), (7, 0), (7, 7)]
    assert [p.input_shift for p in parts] == [(4, 4), (4, -3), (-3, 4), (-3, -3)]
    assert sum(p.weights.sum() for p in parts) == np.arange(121).sum()


@pytest.mark.parametrize("k", [(3, 3), (9, 9), (11, 5), (13, 13)])
def test_part_sum_equals_real_conv(rng, k):
    chip = ChipParams()
    x = rng.standard_normal((1, 20, 22))
    kern = rng.standard_normal(k)
    full = conv_real(FeatureMap(x), FilterSet(kern[None, None])).data[0]
    oh, ow = full.shape
    acc = np.zeros_like(full)
    for p in prepare_kernel(kern, chip):
        sr, sc = p.input_shift
        win = extract_window(x, 0, 1, sr, oh + chip.h_k - 1, sc, ow + chip.w_k - 1)
        acc += conv_real(FeatureMap(win), FilterSet(p.weights[None, None])).data[0]
    np.testing.assert_allclose(acc, full, rtol=1e-9, atol=1e-9)


def test_plan_counts():
    chip = ChipParams(h_in_max=20)
    layer = LayerSpec(20, 10, 9, 7, 50, 30)
    plan = plan_layer(layer, chip)
    assert (plan.n_in_blocks, plan.n_out_blocks, plan.n_parts) == (3, 2, 2)
    # 42 output rows, at most 14 per stripe
    assert plan.n_stripes == 3
    assert len(plan.jobs) == 3 * 2 * 3 * 2
    rows = sorted({(j.out_row_start, j.out_rows) for j in plan.jobs})
    assert rows == [(0, 14), (14, 14), (28, 14)]
    assert all(j.h_in <= chip.h_in_max for j in plan.jobs)
    assert plan.cycles == sum(chip.tile_cycles(j.h_in, j.w_in) for j in plan.jobs)
    # out_block-major ordering
    assert [j.out_block for j in plan.jobs] == sorted(j.out_block for j in plan.jobs)


def test_schedule_round_trip():
    plan = plan_layer(LayerSpec(8, 8, 7, 7, 30, 20), ChipParams(h_in_max=16))
    text = plan.to_schedule()
    assert text.startswith(SCHEDULE_HEADER + "\n")
    rows = parse_schedule(text)
    assert rows == [(j.job_id, j.in_block, j.out_block, j.row_start, j.h_in, j.kernel_part) for j in plan.jobs]
    with pytest.raises(ValueError, match="line 2"):
        parse_schedule(SCHEDULE_HEADER + "\n1,2,3\n")


@pytest.mark.parametrize("c_in,c_out,kh,kw,h,w", [
    (3, 16, 7, 7, 40, 33),
    (10, 5, 5, 3, 25, 20),
    (4, 9, 11, 9, 30, 24),
    (2, 3, 3, 13, 18, 30),
])
def test_run_layer_bit_exact(rng, c_in, c_out, kh, kw, h, w):
    fmt = QFormat()
    chip = ChipParams(h_in_max=20)
    layer = LayerSpec(c_in, c_out, kh, kw, h, w, activation=NONE, pool=None)
    x = FeatureMap(codes(rng, (c_in, h, w)), fmt)
    f = FilterSet(codes(rng, (c_out, c_in, kh, kw)), codes(rng, c_out), fmt)
    run = run_layer(x, layer, f, chip, threads=2)
    assert run.output == conv_fixed_chain(x, f, chip)
    assert run.cycles == run.plan.cycles


def test_threads_do_not_change_results(rng, monkeypatch):
    fmt = QFormat()
    chip = ChipParams(n_ch=4, h_k=3, w_k=3, h_in_max=10)
    layer = LayerSpec(8, 8, 3, 3, 24, 16)
    x = FeatureMap(codes(rng, (8, 24, 16)), fmt)
    f = FilterSet(codes(rng, (8, 8, 3, 3)), None, fmt)
    one = run_layer(x, layer, f, chip, threads=1)
    many = run_layer(x, layer, f, chip, threads=4)
    assert one.output == many.output
    monkeypatch.setenv("ORIGAMI_SIM_THREADS", "1")
    assert worker_count(8) == 1


def test_accumulate_reports_missing_job(rng):
    chip = ChipParams(n_ch=2, h_k=3, w_k=3, h_in_max=8)
    layer = LayerSpec(2, 2, 3, 3, 10, 6)
    plan = plan_layer(layer, chip)
    partials = {j.job_id: np.zeros((2, j.out_rows, plan.out_w), dtype=np.int64) for j in plan.jobs[1:]}
    with pytest.raises(KeyError, match="job 0"):
        accumulate_offchip(partials, None, plan, QFormat())


def test_run_layer_rejects_shape(rng):
    layer = LayerSpec(2, 2, 3, 3, 10, 10)
    f = FilterSet(np.zeros((2, 2, 3, 3), dtype=np.int64), None, QFormat())
    with pytest.raises(ValueError, match="expects input"):
        run_layer(FeatureMap(np.zeros((2, 9, 10), dtype=np.int64), QFormat()), layer, f, ChipParams(n_ch=2))


def test_pool_and_activate_matches_golden(rng):
    x = FeatureMap(codes(rng, (3, 9, 11)), QFormat())
    layer = LayerSpec(3, 3, 3, 3, 11, 13, pool=(2, 2))
    stats = {}
    got = pool_and_activate(x, layer, stats)
    assert got == maxpool(relu(x), 2, 2)
    # one column of horizontal maxima per channel
    assert stats["buffer_values"] == 4
