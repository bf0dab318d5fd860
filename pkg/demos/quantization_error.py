"""
How much does 12-bit arithmetic cost?
=====================================

Run a small random network in floating point and through the fixed-point
chain, and compare stage by stage for a few word formats.
"""
import numpy as np

from origami import ChipParams, FeatureMap, FilterSet, LayerSpec, Network, QFormat, quantization_error

rng = np.random.default_rng(0)
l1 = LayerSpec(3, 8, 7, 7, 40, 40, pool=(2, 2), name="s1")
l2 = LayerSpec(8, 16, 5, 5, l1.output_h, l1.output_w, pool=None, name="s2")
net = Network([
    (l1, FilterSet(rng.normal(0, 0.05, (8, 3, 7, 7)), rng.normal(0, 0.05, 8))),
    (l2, FilterSet(rng.normal(0, 0.05, (16, 8, 5, 5)), rng.normal(0, 0.05, 16))),
])
x = FeatureMap(rng.uniform(-1, 1, (3, 40, 40)))

for fmt in (QFormat(12, 9), QFormat(12, 10), QFormat(16, 12)):
    errs = quantization_error(net, x, fmt, ChipParams())
    print(fmt, [f"max {e.max_abs:.4f} rms {e.rms:.4f}" for e in errs])
