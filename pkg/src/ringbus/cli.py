"""Experiment runner: scenario queries, heatmaps, validation, attacks.

Every subcommand resolves its configuration, writes a ``manifest.json``
embedding it next to its outputs, and is bit-reproducible for a fixed
seed.  Exit codes: 0 ok, 1 usage error, 2 validation found disagreements.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, covert, sidechannel
from .model import ContentionScenario, SenderMode, heatmap, predict
from .ringsim import SimConfig
from .validate import validate, write_rows_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _outdir(args) -> Path:
    base = args.outdir or os.environ.get("RINGBUS_OUTDIR", ".")
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(outdir: Path, command: str, config: dict) -> None:
    manifest = {"tool": "ringbus", "version": __version__,
                "command": command, "config": config}
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _verdict_payload(scenario: ContentionScenario, config: SimConfig) -> dict:
    v = predict(scenario, config.topo)
    return {
        "rc": scenario.rc, "rs": scenario.rs,
        "sc": scenario.sc, "ss": scenario.ss,
        "mode": scenario.mode.value,
        "slice_contention": v.slice_contention,
        "ring_contention": v.ring_contention,
        "contention": v.any_contention,
        "flows": sorted(k.value for k in v.contending_flows),
        "severity_rank": v.severity_rank,
    }


def cmd_predict(args) -> int:
    config = SimConfig.preset(args.arch)
    scenario = ContentionScenario(args.rc, args.rs, args.sc, args.ss,
                                  SenderMode(args.mode))
    try:
        scenario.validate(config.topo)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = _verdict_payload(scenario, config)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_heatmap(args) -> int:
    config = SimConfig.preset(args.arch)
    outdir = _outdir(args)
    mode = SenderMode(args.mode)
    out = outdir / f"heatmap_{mode.value}.csv"
    with open(out, "w") as fh:
        fh.write("rc,rs,sc,ss,mode,slice,ring,flows,severity\n")
        for s, v in heatmap(mode, config.topo):
            flows = "+".join(sorted(k.value for k in v.contending_flows))
            fh.write(f"{s.rc},{s.rs},{s.sc},{s.ss},{mode.value},"
                     f"{int(v.slice_contention)},{int(v.ring_contention)},"
                     f"{flows},{v.severity_rank}\n")
    _write_manifest(outdir, "heatmap",
                    {"arch": args.arch, "mode": mode.value,
                     "n_stops": config.topo.n_stops})
    print(f"wrote {out}")
    return 0


def cmd_validate(args) -> int:
    outdir = _outdir(args)
    report = validate(args.arch, seed=args.seed, workers=args.workers,
                      progress=(lambda d, t:
                                print(f"  chunk {d}/{t}", flush=True))
                      if args.verbose else None)
    write_rows_csv(report.rows, outdir / "validation_rows.csv")
    summary = report.summary()
    summary["disagreeing_tuples"] = [
        {"rc": r.rc, "rs": r.rs, "sc": r.sc, "ss": r.ss, "mode": r.mode,
         "delta": r.delta, "predicted": r.predicted}
        for r in report.disagreements
    ]
    _dump_json(outdir / "validation_report.json", summary)
    _write_manifest(outdir, "validate",
                    {"arch": args.arch, "seed": args.seed})
    print(f"{summary['checks']} checks, agreement "
          f"{summary['agreement'] * 100:.2f}%, "
          f"{summary['disagreements']} disagreements")
    return 0 if not report.disagreements else 2


def _parse_bits(spec: str, seed: int) -> np.ndarray:
    if spec.startswith("random:"):
        k = int(spec.split(":", 1)[1])
        rng = np.random.default_rng(seed)
        return rng.integers(0, 2, size=k).astype(np.int64)
    text = Path(spec).read_text().strip()
    return np.array([int(c) for c in text if c in "01"], dtype=np.int64)


def cmd_covert(args) -> int:
    sim_config = SimConfig.preset(args.arch)
    outdir = _outdir(args)
    channel = covert.ChannelConfig(interval=args.interval,
                                   noise_agents=args.noise,
                                   noise_rate=args.noise_rate)
    try:
        channel.validate(sim_config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = _parse_bits(args.bits, args.seed)
    bits = np.concatenate([covert.preamble(), payload])
    trace = covert.transmit(bits, channel, sim_config, seed=args.seed)
    decoded = covert.receive(trace, channel, len(bits))
    errors = int(np.sum(decoded != payload))
    flipped = False
    if errors > len(payload) / 2:
        errors = len(payload) - errors
        flipped = True
    report = covert.CapacityReport.from_errors(
        args.interval, len(payload), errors, args.clock_ghz, flipped)
    trace.to_csv(outdir / "covert_trace.csv")
    _dump_json(outdir / "capacity.json", {
        "interval_cycles": report.interval,
        "n_bits": report.n_bits,
        "bit_errors": errors,
        "error_prob": report.error_prob,
        "raw_bandwidth_bps": report.raw_bandwidth_bps,
        "capacity_bps": report.capacity_bps,
        "bits_per_cycle": report.bits_per_cycle,
    })
    _write_manifest(outdir, "covert", {
        "arch": args.arch, "interval": args.interval, "bits": args.bits,
        "seed": args.seed, "noise": args.noise, "noise_rate": args.noise_rate,
        "clock_ghz": args.clock_ghz,
    })
    print(f"{len(payload)} bits, {errors} errors "
          f"(e={report.error_prob:.4f}), capacity "
          f"{report.capacity_bps / 1e6:.3f} Mbps at {args.clock_ghz} GHz")
    return 0


def _parse_key(text: str) -> tuple[int, int]:
    text = text.lower().removeprefix("0x")
    return int(text, 16), 4 * len(text)


def cmd_crypto(args) -> int:
    sim_config = SimConfig.preset(args.arch)
    outdir = _outdir(args)
    profile = sidechannel.VictimProfile.named(args.victim)
    value, n_bits = _parse_key(args.key)
    bits = sidechannel.key_to_bits(value, n_bits)
    flush_all = args.flush == "all"
    noise_agents = 1 if args.noise > 0 else 0
    result = sidechannel.extract_key(bits, profile, sim_config,
                                     seed=args.seed, flush_all=flush_all,
                                     noise_agents=noise_agents,
                                     noise_rate=args.noise or
                                     sidechannel.CALIBRATED_NOISE_RATE)
    for i, bit in enumerate(bits):
        vec = sidechannel.collect_bit_trace(
            bit, profile, sim_config, seed=args.seed * 7_919 + i,
            flush_all=flush_all, noise_agents=noise_agents,
            noise_rate=args.noise or sidechannel.CALIBRATED_NOISE_RATE)
        with open(outdir / f"bit_{i:03d}.csv", "w") as fh:
            fh.write("sample,latency_cycles\n")
            for j, lat in enumerate(vec):
                fh.write(f"{j},{lat:.6f}\n")
    recovered = sidechannel.bits_to_key(result.recovered_bits)
    _dump_json(outdir / "extraction.json", {
        "victim": profile.name,
        "key": f"0x{value:0{n_bits // 4}X}",
        "recovered": f"0x{recovered:0{n_bits // 4}X}",
        "exact": bool(result.correct),
        "victim_runs": result.victim_runs,
        "flush": args.flush,
        "n_bits": n_bits,
    })
    _write_manifest(outdir, "crypto-attack", {
        "arch": args.arch, "victim": args.victim, "key": args.key,
        "noise": args.noise, "flush": args.flush, "seed": args.seed,
    })
    print(f"recovered 0x{recovered:0{n_bits // 4}X} "
          f"({'exact' if result.correct else 'with errors'}), "
          f"{result.victim_runs} victim runs")
    return 0


def cmd_keystroke(args) -> int:
    sim_config = SimConfig.preset(args.arch)
    outdir = _outdir(args)
    if args.events.isdigit():
        workload = sidechannel.KeystrokeWorkload.uniform(
            int(args.events), seed=args.seed, stress_agents=args.stress)
    else:
        times = tuple(int(line) for line in
                      Path(args.events).read_text().split())
        workload = sidechannel.KeystrokeWorkload(
            event_times=times, stress_agents=args.stress)
    trace, report = sidechannel.run_keystroke_experiment(
        workload, sim_config, window=args.window, seed=args.seed)
    trace.to_csv(outdir / "keystroke_trace.csv")
    _dump_json(outdir / "keystroke_report.json", {
        "events": len(workload.event_times),
        "detections": list(report.detections),
        "false_negatives": report.false_negatives,
        "false_positives": report.false_positives,
        "max_lag_cycles": report.max_lag,
        "threshold": report.threshold,
        "stress": args.stress,
        "window": args.window,
    })
    _write_manifest(outdir, "keystroke", {
        "arch": args.arch, "events": args.events, "stress": args.stress,
        "window": args.window, "seed": args.seed,
    })
    print(f"{len(workload.event_times)} events: "
          f"{report.false_negatives} FN, {report.false_positives} FP, "
          f"max lag {report.max_lag} cycles")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ringbus",
                     description="Ring-interconnect contention simulator "
                                 "and analysis toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--arch", default="coffeelake",
                       choices=["coffeelake", "skylake"])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--outdir", default=None,
                       help="output directory (default: $RINGBUS_OUTDIR or .)")

    p = sub.add_parser("predict", help="contention verdict for one scenario")
    p.add_argument("rc", type=int)
    p.add_argument("rs", type=int)
    p.add_argument("sc", type=int)
    p.add_argument("ss", type=int)
    p.add_argument("mode", choices=["hit", "miss"])
    p.add_argument("--arch", default="coffeelake",
                   choices=["coffeelake", "skylake"])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("heatmap", help="full contention grid as CSV")
    p.add_argument("--mode", default="hit", choices=["hit", "miss"])
    common(p)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("validate",
                       help="simulate every scenario and compare against "
                            "the analytical predicates")
    common(p)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("covert", help="covert channel round trip")
    p.add_argument("--interval", type=int, default=3000)
    p.add_argument("--bits", default="random:1000",
                   help="random:K or a file of 0/1 characters")
    p.add_argument("--noise", type=int, default=0,
                   help="number of background noise agents")
    p.add_argument("--noise-rate", type=float, default=0.01)
    p.add_argument("--clock-ghz", type=float, default=3.0)
    common(p)
    p.set_defaults(func=cmd_covert)

    p = sub.add_parser("crypto-attack", help="key-bit extraction attack")
    p.add_argument("--victim", default="rsa", choices=["rsa", "eddsa"])
    p.add_argument("--key", default="0xF")
    p.add_argument("--noise", type=float, default=0.0,
                   help="noise worker duty cycle (0 disables noise)")
    p.add_argument("--flush", default="all", choices=["all", "private"])
    common(p)
    p.set_defaults(func=cmd_crypto)

    p = sub.add_parser("keystroke", help="keystroke timing attack")
    p.add_argument("--events", default="100",
                   help="event count or a file of event cycles")
    p.add_argument("--stress", type=int, default=0,
                   help="number of synthetic memory-load workers")
    p.add_argument("--window", type=int, default=3000)
    common(p)
    p.set_defaults(func=cmd_keystroke)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
