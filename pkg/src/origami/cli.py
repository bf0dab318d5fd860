"""``origami-sim``: estimate, simulate and verify from the command line.

Exit codes: 0 success, 1 verification or cycle-check failure, 2 bad
configuration or input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, NetworkConfig, load_config
from .golden import FeatureMap, classify_pixelwise
from .mapper import pool_and_activate, run_layer
from .perf import network_report, system_bandwidth, system_frame_rate
from .qformat import SATURATE, WRAP, quantize_array
from .tensorfile import DTYPE_FIXED, read_tensor, write_tensor
from .verify import run_verification

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(args) -> NetworkConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _emit(text: str, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_estimate(args) -> int:
    cfg = _load(args)
    system = None
    if cfg.system is not None:
        system = {"config": vars(cfg.system) | {"pool": list(cfg.system.pool or [])},
                  "bandwidth_mb_s": system_bandwidth(cfg.system).as_dict()}
    report = network_report(cfg.specs, cfg.chip, seed=cfg.seed, system=system)
    if cfg.system is not None:
        system["frame_rate"] = system_frame_rate(report, cfg.system)
    _emit(report.to_json() if args.format == "json" else report.to_csv(), args.out)
    if args.out:
        t = report.totals()
        print(f"{len(report.stages)} stages, {t['throughput_gops']:.2f} GOp/s, "
              f"{t['frame_rate']:.2f} frame/s -> {args.out}")
    return EXIT_OK


def _input_map(cfg: NetworkConfig, path) -> FeatureMap:
    fmt = cfg.chip.fmt
    if path:
        try:
            dtype, arr = read_tensor(path, fmt.total_bits)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc), "--input")
        if arr.shape != tuple(cfg.input_shape):
            raise ConfigError(f"tensor dims {arr.shape} do not match input {tuple(cfg.input_shape)}", "--input")
        return FeatureMap(arr if dtype == DTYPE_FIXED else quantize_array(arr, fmt), fmt)
    rng = np.random.default_rng([cfg.seed, 999])
    return FeatureMap(rng.integers(fmt.min_raw, fmt.max_raw + 1, size=cfg.input_shape, dtype=np.int64), fmt)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    x = _input_map(cfg, args.input)
    filters = [cfg.filter_set(i) for i in range(len(cfg.layers))]
    head = cfg.classifier_layers()
    out = args.out
    os.makedirs(out, exist_ok=True)
    if args.trace:
        os.makedirs(os.path.join(out, "traces"), exist_ok=True)
    bits = cfg.chip.fmt.total_bits
    write_tensor(os.path.join(out, "input.ogmi"), x.data, DTYPE_FIXED, bits)
    estimate = network_report(cfg.specs, cfg.chip, seed=cfg.seed)

    rows = []
    ok = True
    for i, (lc, f) in enumerate(zip(cfg.layers, filters)):
        spec = lc.spec
        run = run_layer(x, spec, f, cfg.chip, threads=args.threads)
        stats = {}
        x = pool_and_activate(run.output, spec, stats)
        write_tensor(os.path.join(out, f"{spec.name}.ogmi"), x.data, DTYPE_FIXED, bits)
        with open(os.path.join(out, f"{spec.name}_schedule.csv"), "w") as fh:
            fh.write(run.plan.to_schedule())
        if args.trace:
            for jid, tile in run.tiles.items():
                stem = os.path.join(out, "traces", f"{spec.name}_job{jid:05d}")
                tile.trace.save(stem + ".csv")
                tile.trace.save(stem + ".bin", binary=True)
        est = estimate.stages[i].cycles
        rows.append({
            "name": spec.name,
            "jobs": len(run.plan.jobs),
            "simulated_cycles": run.cycles,
            "estimated_cycles": est,
            "match": run.cycles == est,
            "pool_buffer_values": stats.get("buffer_values", 0),
        })
        ok &= run.cycles == est
        print(f"{spec.name}: {len(run.plan.jobs)} jobs, {run.cycles} cycles (estimate {est}) "
              f"-> {x.channels}x{x.height}x{x.width}")

    if head:
        x = classify_pixelwise(x, head)
        write_tensor(os.path.join(out, "classifier.ogmi"), x.data, DTYPE_FIXED, bits)
        print(f"classifier -> {x.channels}x{x.height}x{x.width}")

    doc = {
        "seed": cfg.seed,
        "layers": rows,
        "total_simulated": sum(r["simulated_cycles"] for r in rows),
        "total_estimated": sum(r["estimated_cycles"] for r in rows),
        "match": ok,
    }
    with open(os.path.join(out, "cycles.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if not ok:
        print("simulated cycles disagree with the estimate", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    chip = None
    seed = 0
    if args.config:
        cfg = _load(args)
        chip, seed = cfg.chip, cfg.seed
    if args.seed is not None:
        seed = args.seed
    print(f"verify: seed {seed}, {args.trials} trials")
    res = run_verification(args.trials, seed, chip, oracle_overflow=args.oracle_overflow)
    if res.ok:
        print(f"OK: {res.tiles} tiles and {res.layers} layers bit-exact (seed {seed})")
        return EXIT_OK
    for f in res.failures:
        print(f"FAIL: {f.describe()}")
    return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="origami-sim", description="Convolution accelerator simulator")
    sub = p.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="analytic performance report")
    est.add_argument("--config", required=True)
    est.add_argument("--format", choices=("json", "csv"), default="json")
    est.add_argument("--out", help="write the report here instead of stdout")
    est.add_argument("--seed", type=int)
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="cycle-accurate run of the whole network")
    sim.add_argument("--config", required=True)
    sim.add_argument("--input", help="input tensor file; random codes when omitted")
    sim.add_argument("--out", default="origami_out", help="output directory")
    sim.add_argument("--trace", action="store_true", help="dump per-job bus traces")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="randomized simulator vs golden-model check")
    ver.add_argument("--config")
    ver.add_argument("--trials", type=int, default=200)
    ver.add_argument("--seed", type=int)
    ver.add_argument("--oracle-overflow", choices=(WRAP, SATURATE),
                     help="force the golden model's overflow mode (negative control)")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
