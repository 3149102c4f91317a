"""Simulator front end: state construction, traces, scenario runs, sweeps.

The heavy lifting happens in :mod:`._kernel`; this module builds the packed
state arrays, wires load agents to probe sets from :mod:`..cache` (so their
hit/miss behavior is validated against the cache model rather than
asserted), and exposes the experiment-level helpers used by the predicates'
cross-validation sweep.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .. import cache as cachemod
from ..cache import CacheGeometry, HitLevel
from ..model import ContentionScenario, SenderMode
from ..topology import AgentId, AgentKind, lane_for
from . import _kernel as K
from .config import SimConfig

RECEIVER_SET_INDEX = 5
SENDER_SET_INDEX = 33  # distinct from the receiver's sets: no eviction coupling

FAR_FUTURE = 1 << 60


def _seed32(*values: int) -> int:
    h = 2166136261
    for v in values:
        v = int(v) & 0xFFFFFFFFFFFFFFFF
        for shift in (0, 32):
            h ^= (v >> shift) & 0xFFFFFFFF
            h = (h * 16777619) & 0xFFFFFFFF
    return h or 1


@dataclass(frozen=True)
class AgentSpec:
    """One background load generator (sender, victim burst, or noise)."""

    core: int
    slices: tuple[int, ...]
    kinds: tuple[int, ...]                    # K.KIND_HIT / K.KIND_MISS per load
    windows: tuple[tuple[int, int, int], ...] = ()  # (start, end, budget), -1 = unbounded
    cap: int = 64
    issue_prob: float = 0.9
    seed_salt: int = 0

    def __post_init__(self) -> None:
        if len(self.slices) != len(self.kinds) or not self.slices:
            raise ValueError("slices and kinds must be equal-length, non-empty")


@dataclass
class Trace:
    """Time-ordered receiver samples: one (issue_cycle, latency) per batch."""

    issue_cycles: np.ndarray
    latencies: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.issue_cycles)

    def mean(self) -> float:
        if len(self.latencies) == 0:
            return math.inf  # a starved receiver saw unbounded latency
        return float(np.mean(self.latencies))

    def after(self, cycle: int) -> "Trace":
        keep = self.issue_cycles >= cycle
        return Trace(self.issue_cycles[keep], self.latencies[keep], dict(self.meta))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("issue_cycle,latency_cycles\n")
            for c, l in zip(self.issue_cycles, self.latencies):
                fh.write(f"{int(c)},{l:.6f}\n")


class Simulator:
    """One deterministic simulator instance owning its full state."""

    def __init__(
        self,
        config: SimConfig,
        rc: int,
        rs: int,
        agents: tuple[AgentSpec, ...] = (),
        *,
        seed: int | None = None,
        max_cycles: int = 1_000_000,
        batch_size: int | None = None,
        receiver_kind: int = K.KIND_HIT,
        receiver_enabled: bool = True,
    ) -> None:
        topo = config.topo
        if not (0 <= rc < topo.n_stops and 0 <= rs < topo.n_stops):
            raise ValueError("receiver core/slice out of range")
        for a in agents:
            if not 0 <= a.core < topo.n_stops:
                raise ValueError("agent core out of range")
            if any(not 0 <= s < topo.n_stops for s in a.slices):
                raise ValueError("agent slice out of range")
        self.config = config
        self.cfg_arr = config.timing_array()
        self.seed = config.rng_seed if seed is None else seed
        self.agents = agents

        n_pos = topo.n_positions
        n_slices = topo.n_stops
        pool = 17 + sum(a.cap for a in agents)
        qcap = 2 * pool + 8
        n_agents = max(len(agents), 1)

        self.occ = np.zeros((K.N_CONV, n_pos), np.int64)
        self.occ_g = np.zeros((K.N_CONV, n_pos), np.int64)
        self.occ_n = np.zeros(K.N_CONV, np.int64)
        self.occg_n = np.zeros(K.N_CONV, np.int64)
        self.q = np.zeros((2, n_pos, K.N_CONV, qcap), np.int64)
        self.q_head = np.zeros((2, n_pos, K.N_CONV), np.int64)
        self.q_n = np.zeros((2, n_pos, K.N_CONV), np.int64)
        self.qmask = np.zeros(n_pos, np.int64)
        self.rr = np.zeros((n_pos, K.N_CONV), np.int64)
        self.T = np.zeros((pool, K.TP_COLS), np.int64)
        self.free = np.arange(pool - 1, -1, -1, dtype=np.int64)
        self.free_n = np.array([pool], np.int64)
        max_delay = max(config.issue_overhead, config.slice_latency, config.sa_dram)
        wheel_size = 1 << (max_delay + 2).bit_length()
        self.wheel = np.zeros((wheel_size, n_slices + len(agents) + 4), np.int64)
        self.wheel_n = np.zeros(wheel_size, np.int64)
        self.sq = np.zeros((n_slices, pool), np.int64)
        self.sq_meta = np.zeros((n_slices, 3), np.int64)
        self.saq = np.zeros(pool, np.int64)
        self.sa_meta = np.zeros(3, np.int64)
        self.rcv = np.zeros(9, np.int64)
        self.rcv[K.RCV_CORE] = rc
        self.rcv[K.RCV_SLICE] = rs
        self.rcv[K.RCV_BATCH] = batch_size if batch_size is not None else config.batch_size
        self.rcv[K.RCV_KIND] = receiver_kind
        self.rcv[K.RCV_ENABLED] = 1 if receiver_enabled else 0
        # shortest possible batch period bounds how many samples can appear
        per_batch = 40 if (batch_size or config.batch_size) == 1 else 120
        max_batches = max_cycles // per_batch + 16
        self.out_issue = np.zeros(max_batches, np.int64)
        self.out_lat = np.zeros(max_batches, np.float64)
        self.out_n = np.zeros(1, np.int64)

        ag = np.zeros((n_agents, K.AG_COLS), np.int64)
        pissue = np.zeros(n_agents, np.float64)
        seq_rows = []
        wnd_rows = []
        for i, a in enumerate(agents):
            ag[i, K.AG_CORE] = a.core
            ag[i, K.AG_CAP] = a.cap
            ag[i, K.AG_RNG] = _seed32(self.seed, 0x5EED, i, a.seed_salt)
            ag[i, K.AG_SEQ_OFF] = len(seq_rows)
            ag[i, K.AG_SEQ_LEN] = len(a.slices)
            seq_rows.extend((s, k) for s, k in zip(a.slices, a.kinds))
            windows = a.windows if a.windows else ((0, FAR_FUTURE, -1),)
            ag[i, K.AG_W_OFF] = len(wnd_rows)
            ag[i, K.AG_W_N] = len(windows)
            ag[i, K.AG_WLEFT] = windows[0][2]
            wnd_rows.extend(windows)
            pissue[i] = a.issue_prob
        self.agents_arr = ag
        self.a_pissue = pissue
        self.seq = np.array(seq_rows or [(0, 0)], np.int64)
        self.wnd = np.array(wnd_rows or [(0, 0, 0)], np.int64)

        self.lane_core = np.array(
            [int(lane_for(AgentId(AgentKind.CORE, i), topo)) for i in range(n_slices)],
            np.int64)
        self.lane_slice = np.array(
            [int(lane_for(AgentId(AgentKind.SLICE, i), topo)) for i in range(n_slices)],
            np.int64)
        self.g_rng = np.array([_seed32(self.seed, 0x617), _seed32(self.seed, 0x5FC)], np.int64)
        self.clock_arr = np.zeros(1, np.int64)

    @property
    def clock(self) -> int:
        return int(self.clock_arr[0])

    def run(self, n_cycles: int) -> None:
        start = self.clock
        K.run(self.occ, self.occ_g, self.occ_n, self.occg_n,
              self.q, self.q_head, self.q_n, self.qmask, self.rr,
              self.T, self.free, self.free_n, self.wheel, self.wheel_n,
              self.sq, self.sq_meta, self.saq, self.sa_meta,
              self.rcv, self.out_issue, self.out_lat, self.out_n,
              self.agents_arr, self.a_pissue, self.seq, self.wnd,
              self.lane_core, self.lane_slice, self.g_rng, self.clock_arr,
              self.cfg_arr, self.config.m2_slot_weight, start, start + n_cycles)

    def step(self) -> None:
        """Advance exactly one cycle."""
        self.run(1)

    def agent_completed(self, index: int) -> int:
        return int(self.agents_arr[index, K.AG_DONE])

    def trace(self, warmup: int = 0) -> Trace:
        n = int(self.out_n[0])
        tr = Trace(self.out_issue[:n].copy(), self.out_lat[:n].copy())
        return tr.after(warmup) if warmup else tr


# ---------------------------------------------------------------------------
# probe-set wiring: agents get their hit/miss behavior from the cache model

@functools.lru_cache(maxsize=None)
def _validated_stream(geom: CacheGeometry, target_slice: int, mode: SenderMode):
    """Load stream for a sender: addresses found by the probe-set search and
    replayed against the cache model to confirm their steady-state level."""
    sets = (SENDER_SET_INDEX, cachemod.sibling_set(SENDER_SET_INDEX, geom))
    if mode is SenderMode.HIT:
        count = 2 * geom.w_llc
        expected = HitLevel.LLC_HIT
    else:
        count = 2 * geom.w_llc + 4
        expected = HitLevel.MISS
    addrs = cachemod.find_set_addresses(target_slice, sets, count, geom)
    level = cachemod.steady_state_level(addrs, geom)
    if level is not expected:
        raise RuntimeError(f"sender stream reached {level}, expected {expected}")
    kind = K.KIND_HIT if expected is HitLevel.LLC_HIT else K.KIND_MISS
    slices = tuple(cachemod.slice_of(a, geom) for a in addrs)
    if set(slices) != {target_slice}:
        raise RuntimeError("probe-set search returned a foreign slice")
    return slices, tuple([kind] * len(addrs))


@functools.lru_cache(maxsize=None)
def _validated_receiver(geom: CacheGeometry, target_slice: int) -> None:
    mon = cachemod.build_monitoring_set(0, target_slice, RECEIVER_SET_INDEX, geom)
    level = cachemod.steady_state_level(mon.addresses, geom)
    if level is not HitLevel.LLC_HIT:
        raise RuntimeError("receiver monitoring set does not stay LLC-resident")


def sender_agent(scenario: ContentionScenario, config: SimConfig,
                 windows: tuple[tuple[int, int, int], ...] = (),
                 seed_salt: int = 0) -> AgentSpec:
    slices, kinds = _validated_stream(config.geom, scenario.ss, scenario.mode)
    return AgentSpec(core=scenario.sc, slices=slices, kinds=kinds, windows=windows,
                     cap=config.sender_max_inflight,
                     issue_prob=config.sender_issue_prob, seed_salt=seed_salt)


def scenario_simulator(config: SimConfig, scenario: ContentionScenario,
                       *, seed: int, max_cycles: int,
                       with_sender: bool = True) -> Simulator:
    _validated_receiver(config.geom, scenario.rs)
    agents = (sender_agent(scenario, config),) if with_sender else ()
    return Simulator(config, scenario.rc, scenario.rs, agents,
                     seed=seed, max_cycles=max_cycles)


def single_load_latency(config: SimConfig, core: int, slc: int,
                        kind: int = K.KIND_HIT) -> int:
    """Completion latency of one isolated load (no other traffic)."""
    sim = Simulator(config, core, slc, (), seed=0, max_cycles=4096,
                    batch_size=1, receiver_kind=kind)
    for _ in range(16):
        sim.run(256)
        if int(sim.out_n[0]) >= 1:
            return int(sim.out_lat[0])
    raise RuntimeError("load did not complete")


# ---------------------------------------------------------------------------
# contention measurement and the full cross-validation sweep

DEFAULT_WARMUP = 3_000
DEFAULT_DURATION = 80_000


def run_scenario(config: SimConfig, scenario: ContentionScenario, *,
                 seed: int = 0, duration: int = DEFAULT_DURATION,
                 warmup: int = DEFAULT_WARMUP, with_sender: bool = True) -> Trace:
    sim = scenario_simulator(config, scenario, seed=seed, max_cycles=duration,
                             with_sender=with_sender)
    sim.run(duration)
    return sim.trace(warmup=warmup)


@functools.lru_cache(maxsize=None)
def _baseline_mean(config: SimConfig, rc: int, rs: int, seed: int,
                   duration: int, warmup: int) -> float:
    scenario = ContentionScenario(rc, rs, rc, rs, SenderMode.HIT)
    tr = run_scenario(config, scenario, seed=seed, duration=duration,
                      warmup=warmup, with_sender=False)
    return tr.mean()


def measure_delta(config: SimConfig, scenario: ContentionScenario, *,
                  seed: int = 0, duration: int = DEFAULT_DURATION,
                  warmup: int = DEFAULT_WARMUP) -> tuple[float, float, float]:
    """(delta, contended mean, baseline mean) of mean batch latency."""
    tr = run_scenario(config, scenario, seed=seed, duration=duration, warmup=warmup)
    base = _baseline_mean(config, scenario.rc, scenario.rs, seed, duration, warmup)
    return tr.mean() - base, tr.mean(), base


def sweep(config: SimConfig, modes=(SenderMode.HIT, SenderMode.MISS), *,
          seed: int = 0, duration: int = DEFAULT_DURATION,
          warmup: int = DEFAULT_WARMUP, progress=None):
    """Simulate every (rc, rs, sc, ss, mode) tuple; yield measurement rows.

    Rows are dicts with the scenario fields, the measured means and the
    delta; ordering is canonical (sorted tuples), independent of scheduling.
    """
    n = config.topo.n_stops
    total = n ** 4 * len(modes)
    done = 0
    for mode in modes:
        for rc in range(n):
            for rs in range(n):
                for sc in range(n):
                    for ss in range(n):
                        scenario = ContentionScenario(rc, rs, sc, ss, mode)
                        delta, mean, base = measure_delta(
                            config, scenario, seed=seed,
                            duration=duration, warmup=warmup)
                        done += 1
                        if progress is not None and done % 512 == 0:
                            progress(done, total)
                        yield {
                            "rc": rc, "rs": rs, "sc": sc, "ss": ss,
                            "mode": mode.value, "mean_latency": mean,
                            "baseline": base, "delta": delta,
                        }
