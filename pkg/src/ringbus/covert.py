"""Covert channel over ring contention: on-off keying and capacity metrics.

The sender transmits a 1 by hammering a slice configuration that is
guaranteed to contend with the receiver's loads, and a 0 by idling.  The
receiver times its monitoring loads continuously and decodes with a
per-interval mean-latency threshold calibrated from a known preamble.
Performance is summarized as raw bandwidth x (1 - H(e)) under the binary
symmetric channel model, H being the binary entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ContentionScenario, SenderMode, predict
from .ringsim import SimConfig
from .ringsim import _kernel as K
from .ringsim.simulator import AgentSpec, Simulator, Trace, sender_agent

PREAMBLE_BITS = 64

DEFAULT_SCENARIO = ContentionScenario(3, 2, 4, 1, SenderMode.HIT)


def binary_entropy(e: float) -> float:
    if not 0.0 <= e <= 1.0:
        raise ValueError("error probability must be in [0, 1]")
    if e in (0.0, 1.0):
        return 0.0
    return -e * math.log2(e) - (1 - e) * math.log2(1 - e)


@dataclass(frozen=True)
class ChannelConfig:
    scenario: ContentionScenario = DEFAULT_SCENARIO
    interval: int = 3_000            # cycles per bit
    epoch: int = 2_048               # shared start-of-transmission cycle
    clock_ghz: float = 3.0           # only used to express capacity per second
    noise_agents: int = 0
    noise_rate: float = 0.01         # per-cycle issue probability per noise agent

    def validate(self, sim_config: SimConfig) -> None:
        self.scenario.validate(sim_config.topo)
        if self.scenario.mode is not SenderMode.HIT:
            raise ValueError("the channel keys on an LLC-hit sender")
        verdict = predict(self.scenario, sim_config.topo)
        if not verdict.ring_contention:
            raise ValueError(
                f"scenario {self.scenario} does not contend on the ring; "
                "pick a configuration whose predicted verdict is contention")
        # one receiver batch must fit in a bit window with slack to spare
        batch = 4 * 60 + 8
        if self.interval < batch:
            raise ValueError(f"interval {self.interval} is below the receiver "
                             f"batch latency ({batch} cycles)")


@dataclass
class CapacityReport:
    interval: int
    n_bits: int
    error_prob: float
    raw_bandwidth_bps: float
    capacity_bps: float
    bits_per_cycle: float
    flipped: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, interval: int, n_bits: int, errors: int,
                    clock_ghz: float, flipped: bool = False) -> "CapacityReport":
        e = errors / n_bits if n_bits else 0.0
        raw = clock_ghz * 1e9 / interval
        cap = raw * (1.0 - binary_entropy(e))
        return cls(interval=interval, n_bits=n_bits, error_prob=e,
                   raw_bandwidth_bps=raw, capacity_bps=cap,
                   bits_per_cycle=(1.0 - binary_entropy(e)) / interval,
                   flipped=flipped)


def _bit_windows(bits, config: ChannelConfig):
    """Active sender windows covering each 1-bit interval."""
    windows = []
    for i, b in enumerate(bits):
        if b:
            start = config.epoch + i * config.interval
            windows.append((start, start + config.interval, -1))
    return tuple(windows)


def _noise_specs(config: ChannelConfig, sim_config: SimConfig, seed: int):
    """Background agents loading random slices at a low rate."""
    n = sim_config.topo.n_stops
    rng = np.random.default_rng(seed ^ 0xC0FFEE)
    specs = []
    for i in range(config.noise_agents):
        slices = tuple(int(s) for s in rng.integers(0, n, size=64))
        specs.append(AgentSpec(
            core=int((config.scenario.rc + 1 + i) % n),
            slices=slices,
            kinds=tuple([K.KIND_MISS] * 64),
            cap=8,
            issue_prob=config.noise_rate,
            seed_salt=1000 + i,
        ))
    return tuple(specs)


def transmit(bits, config: ChannelConfig, sim_config: SimConfig,
             *, seed: int = 0) -> Trace:
    """Run sender and receiver through one transmission; return the trace."""
    config.validate(sim_config)
    bits = np.asarray(bits, dtype=np.int64)
    total = config.epoch + (len(bits) + 1) * config.interval
    sender = sender_agent(config.scenario, sim_config,
                          windows=_bit_windows(bits, config))
    agents = (sender,) + _noise_specs(config, sim_config, seed)
    sim = Simulator(sim_config, config.scenario.rc, config.scenario.rs, agents,
                    seed=seed, max_cycles=total)
    sim.run(total)
    trace = sim.trace()
    trace.meta.update(interval=config.interval, epoch=config.epoch,
                      n_bits=len(bits))
    return trace


def _interval_means(trace: Trace, config: ChannelConfig, n_bits: int) -> np.ndarray:
    idx = (trace.issue_cycles - config.epoch) // config.interval
    keep = (idx >= 0) & (idx < n_bits)
    idx = idx[keep]
    lat = trace.latencies[keep]
    sums = np.zeros(n_bits)
    counts = np.zeros(n_bits)
    np.add.at(sums, idx, lat)
    np.add.at(counts, idx, 1)
    if np.any(counts == 0):
        raise ValueError("a bit interval contains no samples; interval too small")
    return sums / counts


def receive(trace: Trace, config: ChannelConfig, n_bits: int) -> np.ndarray:
    """Decode per-interval means against a preamble-calibrated threshold.

    The first PREAMBLE_BITS intervals carry the alternating training
    pattern; they calibrate the midpoint threshold and are not returned.
    """
    means = _interval_means(trace, config, n_bits)
    pre = means[:PREAMBLE_BITS]
    ones = pre[0::2]
    zeros = pre[1::2]
    threshold = (ones.mean() + zeros.mean()) / 2.0
    return (means[PREAMBLE_BITS:] > threshold).astype(np.int64)


def preamble() -> np.ndarray:
    bits = np.zeros(PREAMBLE_BITS, dtype=np.int64)
    bits[0::2] = 1
    return bits


def evaluate(config: ChannelConfig, sim_config: SimConfig, n_bits: int = 1_000,
             *, seed: int = 0):
    """Round-trip n_bits random payload bits and measure the error rate."""
    rng = np.random.default_rng(seed)
    payload = rng.integers(0, 2, size=n_bits).astype(np.int64)
    bits = np.concatenate([preamble(), payload])
    trace = transmit(bits, config, sim_config, seed=seed)
    decoded = receive(trace, config, len(bits))
    errors = int(np.sum(decoded != payload))
    flipped = False
    if n_bits and errors > n_bits / 2:
        errors = n_bits - errors  # flip convention: never report e > 0.5
        flipped = True
    report = CapacityReport.from_errors(config.interval, n_bits, errors,
                                        config.clock_ghz, flipped)
    report.meta.update(rc=config.scenario.rc, rs=config.scenario.rs,
                       sc=config.scenario.sc, ss=config.scenario.ss,
                       noise_agents=config.noise_agents,
                       noise_rate=config.noise_rate, seed=seed)
    return report, trace, payload, decoded


def sweep_intervals(intervals, sim_config: SimConfig, *,
                    scenario: ContentionScenario = DEFAULT_SCENARIO,
                    n_bits: int = 1_000, noise_agents: int = 0,
                    noise_rate: float = 0.01, seed: int = 0) -> list[CapacityReport]:
    reports = []
    for interval in intervals:
        cfg = ChannelConfig(scenario=scenario, interval=int(interval),
                            noise_agents=noise_agents, noise_rate=noise_rate)
        report, _, _, _ = evaluate(cfg, sim_config, n_bits=n_bits, seed=seed)
        reports.append(report)
    return reports
