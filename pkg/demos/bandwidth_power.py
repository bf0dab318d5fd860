"""
Bandwidth, system scaling and power
===================================
"""
from origami import ChipParams, SystemConfig, network_report, reference_layers
from origami.perf import (
    bandwidth_efficiency,
    chip_bandwidth_efficiency,
    efficiency_with_io,
    io_bandwidth,
    io_power,
    peak_throughput,
    scale_power,
    system_bandwidth,
    system_frame_rate,
)

chip = ChipParams()
print(f"peak {peak_throughput(chip):.0f} GOp/s, bus {io_bandwidth(chip):.0f} MB/s per direction")
print("GOp/GB, MB/GOp:", chip_bandwidth_efficiency(chip))

low = ChipParams(f_mhz=94.5)
print(f"0.8 V: {peak_throughput(low):.1f} GOp/s, {io_bandwidth(low):.1f} MB/s,",
      f"{bandwidth_efficiency(74, 142)[1]:.2f} MB/GOp")

sys = SystemConfig(n_chips=4, pairing=True)
print("4 chips:", system_bandwidth(sys).as_dict())
rep = network_report(reference_layers(), chip)
print(f"{system_frame_rate(rep, sys):.1f} frame/s")

# 65 nm at 1.2 V -> 28 nm at 0.8 V
core = scale_power(449, 1.2, 0.8, 65, 28)
io = io_power(375, 21)
print(f"core {core:.1f} mW, I/O {io:.1f} mW per direction")
print(efficiency_with_io(196, core, io))
