"""
Throughput of the scene-labeling network
========================================
"""
from origami import ChipParams, network_report, reference_layers

rep = network_report(reference_layers(240, 320), ChipParams(), seed=0)
for s in rep.stages:
    print(f"{s.name}: idle {s.eta_ch_idle:.2f}  load {s.eta_filter_load:.2f}  border {s.eta_border:.2f}  "
          f"-> {s.throughput_gops:6.1f} GOp/s in {s.runtime_ms:.2f} ms")
print(f"average {rep.avg_throughput:.1f} GOp/s, {rep.frame_rate:.1f} frame/s")

# a larger frame amortizes the borders better
hd = network_report(reference_layers(720, 1280), ChipParams())
print(f"1280x720: {hd.avg_throughput:.1f} GOp/s, {hd.frame_rate:.2f} frame/s")

print(rep.to_csv())
