"""
Mapping a layer that does not fit the chip
==========================================

16 -> 12 channels with an 11x11 kernel on a chip with 8 channels, 7x7
kernels and 32-row stripes.
"""
import numpy as np

from origami import ChipParams, FeatureMap, FilterSet, LayerSpec, conv_fixed_chain, plan_layer, run_layer
from origami.golden import NONE

chip = ChipParams(h_in_max=32)
fmt = chip.fmt
layer = LayerSpec(16, 12, 11, 11, 70, 40, activation=NONE, pool=None, name="wide")

plan = plan_layer(layer, chip)
print(f"{plan.n_in_blocks} in-blocks x {plan.n_out_blocks} out-blocks x "
      f"{plan.n_stripes} stripes x {plan.n_parts} kernel parts = {len(plan.jobs)} jobs")
print(plan.to_schedule().splitlines()[:5])

rng = np.random.default_rng(3)
x = FeatureMap(rng.integers(fmt.min_raw, fmt.max_raw + 1, (16, 70, 40)), fmt)
f = FilterSet(rng.integers(-64, 64, (12, 16, 11, 11)), rng.integers(-64, 64, 12), fmt)

run = run_layer(x, layer, f, chip)
print("simulated cycles:", run.cycles, "planned:", plan.cycles)
print("matches golden chain:", run.output == conv_fixed_chain(x, f, chip))
