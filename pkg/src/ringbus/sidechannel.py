"""Side-channel attacks built on ring contention.

Key-bit extraction: a victim with key-dependent control flow runs one loop
iteration per secret bit, calling a first routine unconditionally and a
second one only for 1 bits.  Started cold (its cache footprint cleansed on
every interrupt), each iteration emits a burst of serialized cache-missing
loads whose ring traffic the attacker times from another core; a second
burst late in the window marks a 1.  A linear classifier on the raw sample
vector recovers each bit, and the interrupt/resume protocol walks the key.

Keystroke timing: handling a key press executes enough cold code and data
to produce a broad burst of loads across many slices.  A moving average
over the attacker's samples shows these bursts as spikes; detections are
rising threshold crossings, debounced to one per excursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cache import slice_of
from .ringsim import SimConfig
from .ringsim import _kernel as K
from .ringsim.simulator import FAR_FUTURE, AgentSpec, Simulator, Trace

VICTIM_BASE = 0x40000000
E2_BASE = 0x80000000

ATTACK_RC, ATTACK_RS = 2, 1     # crypto attack receiver placement
VICTIM_CORE = 5
# private-only cleansing leaves the victim hitting in the LLC, which
# contends with fewer slice targets; this placement doubles the coverage
PRIVATE_RC, PRIVATE_RS = 5, 4
PRIVATE_VICTIM_CORE = 6
KEYSTROKE_RC, KEYSTROKE_RS = 3, 2

RSA_SAMPLES = 43
EDDSA_SAMPLES = 140

# classifier-accuracy calibration: bursty background load during trace
# collection, tuned so single-trace accuracy lands in the high 80s
CALIBRATED_NOISE_AGENTS = 1
CALIBRATED_NOISE_RATE = 0.35   # load-phase duty cycle of each noise worker


@dataclass(frozen=True)
class VictimProfile:
    """Memory-traffic shape of one victim loop iteration.

    Footprint sizes are chosen so the cold-start burst durations land on
    the calibrated per-load latencies; the window lengths are what the
    attacker uses to time its interrupts.
    """

    name: str
    t_e1: int                 # cycles for one cold first-routine burst
    t_e1e2: int               # cycles for first + second routine, cold
    n_e1: int                 # cold lines loaded by the first routine
    n_e2: int
    samples: int              # classifier vector length
    core: int = VICTIM_CORE
    burst_cap: int = 32       # outstanding victim loads (out-of-order window)

    def __post_init__(self) -> None:
        if not self.t_e1e2 > self.t_e1 > 0:
            raise ValueError("burst windows must satisfy t_e1e2 > t_e1 > 0")

    @classmethod
    def rsa(cls) -> "VictimProfile":
        return cls("rsa", t_e1=5_690, t_e1e2=11_230, n_e1=716, n_e2=725,
                   samples=RSA_SAMPLES)

    @classmethod
    def eddsa(cls) -> "VictimProfile":
        return cls("eddsa", t_e1=18_260, t_e1e2=35_120, n_e1=2_359, n_e2=2_205,
                   samples=EDDSA_SAMPLES)

    @classmethod
    def named(cls, name: str) -> "VictimProfile":
        try:
            return {"rsa": cls.rsa, "eddsa": cls.eddsa}[name.lower()]()
        except KeyError:
            raise ValueError(f"unknown victim profile {name!r}") from None

    def footprint_addresses(self, routine: int) -> tuple[int, ...]:
        base = VICTIM_BASE if routine == 1 else E2_BASE
        count = self.n_e1 if routine == 1 else self.n_e2
        return tuple(base + 64 * i for i in range(count))

    def footprint_slices(self, geom, routine: int) -> tuple[int, ...]:
        return tuple(slice_of(a, geom) for a in self.footprint_addresses(routine))

    def window(self, flush_all: bool) -> tuple[int, int]:
        """(t_e1, t_e1e2) for the active cleansing mode.

        With private-only cleansing the victim's lines stay LLC resident,
        so its loads come back an order of magnitude faster and the
        iteration windows shrink accordingly.
        """
        if flush_all:
            return self.t_e1, self.t_e1e2
        shrink = 0.198  # calibrated LLC-hit vs DRAM-miss per-load cost ratio
        return int(self.t_e1 * shrink), int(self.t_e1e2 * shrink)


def victim_agent(profile: VictimProfile, bit: int, geom, *,
                 flush_all: bool = True) -> AgentSpec:
    """The victim's loads for one loop iteration, started cold.

    The iteration is a single serialized load stream: the first routine's
    lines, then (only for a 1 bit) the second routine's.  Full cleansing
    makes every load a DRAM miss; private-only cleansing leaves the lines
    LLC resident, so the bursts are LLC hits instead.
    """
    slices = profile.footprint_slices(geom, 1)
    if bit:
        slices = slices + profile.footprint_slices(geom, 2)
    kind = K.KIND_MISS if flush_all else K.KIND_HIT
    return AgentSpec(core=profile.core, slices=slices,
                     kinds=tuple([kind] * len(slices)),
                     windows=((0, FAR_FUTURE, len(slices)),),
                     cap=profile.burst_cap, issue_prob=1.0)


def _noise_agents(n: int, duty: float, sim_config: SimConfig, seed: int,
                  avoid_core: int, duration: int) -> tuple[AgentSpec, ...]:
    """Bursty background load: each agent alternates dense load phases with
    idle gaps.  ``duty`` is the fraction of time spent loading; bursts at
    the scale of a victim iteration are what actually confuse the
    classifier (a stationary load shifts both window halves equally)."""
    stops = sim_config.topo.n_stops
    rng = np.random.default_rng(seed ^ 0x5E1F)
    specs = []
    for i in range(n):
        core = (avoid_core + 1 + i) % stops
        slices = tuple(int(s) for s in rng.integers(0, stops, size=64))
        windows = []
        t = int(rng.integers(0, 3_000))
        while t < duration:
            on = int(rng.integers(1_000, 3_500))
            windows.append((t, t + on, -1))
            gap = max(200, int(on * (1.0 - duty) / max(duty, 1e-6)))
            t += on + int(rng.integers(gap // 2, gap + 1))
        specs.append(AgentSpec(core=core, slices=slices,
                               kinds=tuple([K.KIND_MISS] * 64),
                               windows=tuple(windows) or ((0, 0, 0),),
                               cap=32, issue_prob=0.9, seed_salt=2000 + i))
    return tuple(specs)


def attack_placement(flush_all: bool) -> tuple[int, int, int]:
    """(receiver core, receiver slice, victim core) per cleansing mode."""
    if flush_all:
        return ATTACK_RC, ATTACK_RS, VICTIM_CORE
    return PRIVATE_RC, PRIVATE_RS, PRIVATE_VICTIM_CORE


def collect_bit_trace(bit: int, profile: VictimProfile, sim_config: SimConfig,
                      *, seed: int = 0, flush_all: bool = True,
                      noise_agents: int = 0,
                      noise_rate: float = CALIBRATED_NOISE_RATE,
                      rc: int | None = None, rs: int | None = None) -> np.ndarray:
    """Fixed-length attacker sample vector for one victim iteration."""
    def_rc, def_rs, victim_core = attack_placement(flush_all)
    rc = def_rc if rc is None else rc
    rs = def_rs if rs is None else rs
    profile = replace(profile, core=victim_core) if profile.core == VICTIM_CORE         and not flush_all else profile
    _, window = profile.window(flush_all)
    duration = window + 2_000
    agents = (victim_agent(profile, bit, sim_config.geom, flush_all=flush_all),)
    agents += _noise_agents(noise_agents, noise_rate, sim_config, seed,
                            profile.core, duration)
    sim = Simulator(sim_config, rc, rs, agents, seed=seed, max_cycles=duration)
    sim.run(duration)
    trace = sim.trace()
    vec = np.asarray(trace.latencies[:profile.samples], dtype=np.float64)
    if len(vec) < profile.samples:
        # window shorter than the vector: pad with the trailing quiet level
        fill = vec[-1] if len(vec) else 0.0
        vec = np.concatenate([vec, np.full(profile.samples - len(vec), fill)])
    return vec


def collect_dataset(profile: VictimProfile, sim_config: SimConfig,
                    n_traces: int = 5_000, *, seed: int = 0,
                    flush_all: bool = True, noise_agents: int = 0,
                    noise_rate: float = CALIBRATED_NOISE_RATE):
    """Balanced labeled trace set: alternating bit labels."""
    X = np.zeros((n_traces, profile.samples))
    y = np.zeros(n_traces, dtype=np.int64)
    for i in range(n_traces):
        bit = i % 2
        X[i] = collect_bit_trace(bit, profile, sim_config,
                                 seed=seed * 1_000_003 + i,
                                 flush_all=flush_all,
                                 noise_agents=noise_agents,
                                 noise_rate=noise_rate)
        y[i] = bit
    return X, y


@dataclass
class LinearClassifier:
    """Ridge-regression separator on the raw sample vector."""

    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    def classify(self, vector: np.ndarray) -> int:
        z = (np.asarray(vector) - self.mean) / self.scale
        return int(z @ self.weights + self.bias > 0.0)

    def classify_many(self, vectors: np.ndarray) -> np.ndarray:
        z = (np.asarray(vectors) - self.mean) / self.scale
        return (z @ self.weights + self.bias > 0.0).astype(np.int64)


def train_classifier(vectors: np.ndarray, labels: np.ndarray,
                     ridge: float = 1e-2) -> LinearClassifier:
    labels = np.asarray(labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("training set must contain both classes")
    X = np.asarray(vectors, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    t = np.where(labels > 0, 1.0, -1.0)
    n_feat = Z.shape[1]
    w = np.linalg.solve(Z.T @ Z + ridge * len(Z) * np.eye(n_feat), Z.T @ t)
    bias = float(t.mean())
    return LinearClassifier(weights=w, bias=bias, mean=mean, scale=scale)


def split_train_test(X, y, *, test_fraction: float = 0.25, seed: int = 0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    n_test = int(len(X) * test_fraction)
    test, train = order[:n_test], order[n_test:]
    return X[train], y[train], X[test], y[test]


def classifier_accuracy(profile: VictimProfile, sim_config: SimConfig, *,
                        n_traces: int = 5_000, seed: int = 0,
                        flush_all: bool = True,
                        noise_agents: int = CALIBRATED_NOISE_AGENTS,
                        noise_rate: float = CALIBRATED_NOISE_RATE) -> float:
    """Accuracy under the standard protocol: balanced set, 75/25 split."""
    X, y = collect_dataset(profile, sim_config, n_traces, seed=seed,
                           flush_all=flush_all, noise_agents=noise_agents,
                           noise_rate=noise_rate)
    Xtr, ytr, Xte, yte = split_train_test(X, y, seed=seed)
    model = train_classifier(Xtr, ytr)
    return float(np.mean(model.classify_many(Xte) == yte))


@dataclass
class KeyExtraction:
    recovered_bits: tuple[int, ...]
    victim_runs: int
    correct: bool | None = None


def extract_key(key_bits, profile: VictimProfile, sim_config: SimConfig, *,
                model: LinearClassifier | None = None, seed: int = 0,
                flush_all: bool = True, noise_agents: int = 0,
                noise_rate: float = CALIBRATED_NOISE_RATE) -> KeyExtraction:
    """Interrupt/resume loop: one classified iteration window per key bit.

    Every interrupt cleanses the victim's footprint, so each iteration
    starts cold.  After a 0 bit the victim must be restarted from the top
    and fast-forwarded through the already-known prefix, so each 0 among
    all but the last bit costs one extra victim run.
    """
    key_bits = [int(b) for b in key_bits]
    if model is None:
        X, y = collect_dataset(profile, sim_config, 200, seed=seed + 17,
                               flush_all=flush_all, noise_agents=noise_agents,
                               noise_rate=noise_rate)
        model = train_classifier(X, y)
    recovered = []
    runs = 1
    for i, bit in enumerate(key_bits):
        vec = collect_bit_trace(bit, profile, sim_config,
                                seed=seed * 7_919 + i, flush_all=flush_all,
                                noise_agents=noise_agents,
                                noise_rate=noise_rate)
        inferred = model.classify(vec)
        recovered.append(inferred)
        if inferred == 0 and i < len(key_bits) - 1:
            runs += 1  # restart and replay the known prefix
    return KeyExtraction(tuple(recovered), runs,
                         correct=recovered == key_bits)


def key_to_bits(value: int, n_bits: int) -> list[int]:
    """Key bits in the order the victim's loop consumes them
    (least-significant first)."""
    return [(value >> i) & 1 for i in range(n_bits)]


def bits_to_key(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


# ---------------------------------------------------------------------------
# keystroke timing

@dataclass(frozen=True)
class KeystrokeWorkload:
    """Ground-truth key events plus their burst shape and background noise."""

    event_times: tuple[int, ...]
    burst_span: int = 600_000       # keystroke handling stretches over ~0.2 ms
    burst_cap: int = 32
    burst_rate: float = 0.9
    stress_agents: int = 0          # synthetic memory-load workers
    stress_rate: float = 0.5
    stress_period: int = 400_000    # workers alternate busy/idle phases

    def __post_init__(self) -> None:
        times = self.event_times
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")

    @classmethod
    def uniform(cls, n_events: int, *, first: int = 1_500_000,
                spacing: int = 2_000_000, jitter: int = 120_000,
                seed: int = 0, **kw) -> "KeystrokeWorkload":
        rng = np.random.default_rng(seed ^ 0x7E1)
        offs = rng.integers(-jitter, jitter + 1, size=n_events)
        times = tuple(int(first + i * spacing + offs[i]) for i in range(n_events))
        return cls(event_times=times, **kw)

    @property
    def duration(self) -> int:
        return self.event_times[-1] + self.burst_span + 1_000_000


def _keystroke_agents(workload: KeystrokeWorkload, sim_config: SimConfig,
                      seed: int) -> tuple[AgentSpec, ...]:
    stops = sim_config.topo.n_stops
    rng = np.random.default_rng(seed ^ 0x4E9)
    # the keystroke handler touches code and data spread over every slice
    slices = tuple(int(s) for s in rng.integers(0, stops, size=256))
    windows = tuple((t, t + workload.burst_span, -1) for t in workload.event_times)
    handler = AgentSpec(core=(KEYSTROKE_RC + 2) % stops, slices=slices,
                        kinds=tuple([K.KIND_MISS] * len(slices)),
                        windows=windows, cap=workload.burst_cap,
                        issue_prob=workload.burst_rate, seed_salt=300)
    agents = [handler]
    # memory-load workers run random busy/idle phases; enough of them
    # overlapping looks just like a keystroke burst
    for i in range(workload.stress_agents):
        core = (KEYSTROKE_RC + 1 + i) % stops
        s = tuple(int(v) for v in rng.integers(0, stops, size=64))
        w = []
        t = int(rng.integers(0, workload.stress_period))
        duty = workload.stress_rate
        while t < workload.duration:
            on = int(rng.integers(workload.stress_period // 6,
                                  workload.stress_period // 2))
            w.append((t, t + on, -1))
            gap = int(on * (1.0 - duty) / max(duty, 1e-6))
            t += on + int(rng.integers(max(gap // 2, 1), gap + 1))
        agents.append(AgentSpec(core=core, slices=s,
                                kinds=tuple([K.KIND_MISS] * 64),
                                windows=tuple(w), cap=8,
                                issue_prob=0.9, seed_salt=400 + i))
    return tuple(agents)


@dataclass
class KeystrokeReport:
    detections: tuple[int, ...]
    false_negatives: int
    false_positives: int
    max_lag: int
    threshold: float
    meta: dict = field(default_factory=dict)


def detect_keystrokes(trace: Trace, window: int = 3_000, *,
                      threshold: float | None = None,
                      calibration_until: int | None = None) -> tuple[np.ndarray, float]:
    """Spike detection on the moving-average latency.

    The threshold is calibrated from the moving average over the leading
    quiet segment (no events are scheduled there): its maximum plus a
    margin scaled to its spread.  Returns (detection cycles, threshold).
    """
    if window < 1:
        raise ValueError("window must be at least one sample")
    if len(trace) < 2 * window:
        raise ValueError("trace too short for the averaging window")
    lat = trace.latencies
    kernel = np.ones(window) / window
    ma = np.convolve(lat, kernel, mode="valid")
    cycles = trace.issue_cycles[window - 1:]
    if threshold is None:
        if calibration_until is None:
            calibration_until = int(cycles[0] + (cycles[-1] - cycles[0]) // 10)
        quiet = ma[cycles <= calibration_until]
        if len(quiet) < 16:
            raise ValueError("calibration segment too short")
        spread = float(quiet.max() - quiet.min())
        threshold = float(quiet.max() + max(1.0, 0.75 * spread))
    # hysteresis: once triggered, the average must fall back toward the
    # floor before another excursion counts, so edge wobble stays one event
    release = threshold - max(0.5, 0.5 * float(threshold - np.median(ma)))
    detections = []
    armed = True
    for i in range(len(ma)):
        if armed and ma[i] > threshold:
            detections.append(cycles[i])
            armed = False
        elif not armed and ma[i] < release:
            armed = True
    return np.asarray(detections, dtype=np.int64), threshold


def run_keystroke_experiment(workload: KeystrokeWorkload, sim_config: SimConfig,
                             *, window: int = 3_000, seed: int = 0,
                             rc: int = KEYSTROKE_RC,
                             rs: int = KEYSTROKE_RS) -> tuple[Trace, KeystrokeReport]:
    agents = _keystroke_agents(workload, sim_config, seed)
    duration = workload.duration
    sim = Simulator(sim_config, rc, rs, agents, seed=seed, max_cycles=duration)
    sim.run(duration)
    trace = sim.trace()
    calibration_until = workload.event_times[0] - 100_000
    detections, threshold = detect_keystrokes(trace, window,
                                              calibration_until=calibration_until)
    lag_limit = 3_000_000
    false_neg = 0
    max_lag = 0
    used = np.zeros(len(detections), dtype=bool)
    for t in workload.event_times:
        lags = detections - t
        ok = np.flatnonzero((lags >= 0) & (lags <= lag_limit) & ~used)
        if len(ok) == 0:
            false_neg += 1
        else:
            used[ok[0]] = True
            max_lag = max(max_lag, int(lags[ok[0]]))
    false_pos = int((~used).sum())
    report = KeystrokeReport(
        detections=tuple(int(d) for d in detections),
        false_negatives=false_neg, false_positives=false_pos,
        max_lag=max_lag, threshold=threshold,
        meta={"events": len(workload.event_times),
              "stress_agents": workload.stress_agents, "window": window,
              "seed": seed},
    )
    return trace, report
