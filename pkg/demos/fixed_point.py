"""
Fixed-point words and the truncation chain
==========================================
"""
import numpy as np

from origami import Q12_9, QFormat, quantize, truncate
from origami.qformat import inner_product_full, quantize_array

# Q12.9: 12-bit two's complement, 9 fractional bits, range [-4, 4)
print(Q12_9, Q12_9.min_raw, Q12_9.max_raw, Q12_9.lsb)

# quantization floors onto the grid
for v in (0.3, -0.3, 3.999, 4.0):
    print(f"{v:7.3f} -> raw {quantize(v).raw:5d} = {float(quantize(v)):.6f}")

# with saturation instead of wrap-around
sat = Q12_9.with_mode("saturate")
print("4.0 saturated:", quantize(4.0, sat).raw)

# one 3x3 inner product kept at full width, then truncated back to a word
rng = np.random.default_rng(0)
window = [quantize(v) for v in rng.uniform(-1, 1, 9)]
kernel = [quantize(v) for v in rng.uniform(-0.5, 0.5, 9)]
wide = inner_product_full(window, kernel)
print("full precision:", float(wide.value), "-> word:", float(truncate(wide)))

# the array forms do the same on whole tensors
print(quantize_array(np.array([0.25, -0.001, 7.0]), QFormat(12, 9)))
