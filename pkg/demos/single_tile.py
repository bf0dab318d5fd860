"""
Streaming one tile through the chip
===================================

Load an 8x8 block of 7x7 filters, stream a 55x75 stripe and look at what
came out of the bus.
"""
import numpy as np

from origami import ChipParams, FeatureMap, FilterSet, OrigamiChip, conv_fixed_chain, dual_clock_check
from origami.datapath import DIR_IN, DIR_OUT

chip = ChipParams()
fmt = chip.fmt
rng = np.random.default_rng(7)
x = rng.integers(fmt.min_raw, fmt.max_raw + 1, (8, 55, 75))
k = rng.integers(fmt.min_raw, fmt.max_raw + 1, (8, 8, 7, 7))

sim = OrigamiChip(chip)
sim.load_filters(k)
tile = sim.simulate_tile(x)

print("cycles:", tile.cycles.as_dict())
print("closed form:", chip.tile_cycles(55, 75))

# the same numbers from the behavioral model
ref = conv_fixed_chain(FeatureMap(x, fmt), FilterSet(k, None, fmt), chip)
print("bit-exact:", np.array_equal(tile.output_map(), ref.data))

# bus activity: one word per cycle and direction
tr = tile.trace
print("words in/out:", tr.count(DIR_IN), tr.count(DIR_OUT))
print(tr.to_text().splitlines()[3136:3140])

# each SoP unit alternates between its two output channels
print("dual clock ok:", dual_clock_check(sim, tile).ok)
