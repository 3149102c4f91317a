"""Cross-validation of the simulator against the analytical predicates.

For every (rc, rs, sc, ss, mode) tuple, the simulator's verdict is "the
receiver's mean batch latency exceeds its uncontended baseline by more than
the decision margin".  Non-contending senders leave the receiver's timing
bit-identical to the baseline, so their deltas are exactly zero; contending
senders produce strictly positive deltas.  A short first-stage run settles
the clear cases and ambiguous tuples are re-run longer before deciding.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .model import ContentionScenario, SenderMode, predict
from .ringsim import SimConfig
from .ringsim.simulator import measure_delta

STAGE1_DURATION = 40_000
STAGE2_DURATION = 200_000
STAGE2_BAND = 8.0  # deltas below margin * band get the long re-run
WARMUP = 3_000


@dataclass
class ValidationRow:
    rc: int
    rs: int
    sc: int
    ss: int
    mode: str
    mean_latency: float
    baseline: float
    delta: float
    sim_contention: bool
    predicted: bool

    @property
    def agree(self) -> bool:
        return self.sim_contention == self.predicted


@dataclass
class ValidationReport:
    rows: list[ValidationRow]
    margin: float

    @property
    def total(self) -> int:
        return len(self.rows)

    @property
    def disagreements(self) -> list[ValidationRow]:
        return [r for r in self.rows if not r.agree]

    @property
    def agreement(self) -> float:
        return 1.0 - len(self.disagreements) / self.total

    def summary(self) -> dict:
        true_deltas = [r.delta for r in self.rows if r.predicted]
        false_deltas = [r.delta for r in self.rows if not r.predicted]
        return {
            "checks": self.total,
            "agreement": self.agreement,
            "disagreements": len(self.disagreements),
            "margin": self.margin,
            "min_true_delta": min(true_deltas) if true_deltas else None,
            "max_false_delta": max(false_deltas) if false_deltas else None,
        }


def _measure_tuple(config: SimConfig, scenario: ContentionScenario,
                   seed: int, margin: float):
    delta, mean, base = measure_delta(config, scenario, seed=seed,
                                      duration=STAGE1_DURATION, warmup=WARMUP)
    if 0.0 < delta <= margin * STAGE2_BAND:
        delta, mean, base = measure_delta(config, scenario, seed=seed,
                                          duration=STAGE2_DURATION, warmup=WARMUP)
    return delta, mean, base


def _validate_chunk(args):
    arch, overrides, rc_values, seed = args
    config = SimConfig.preset(arch, **overrides)
    margin = config.contention_margin
    topo = config.topo
    n = topo.n_stops
    rows = []
    for mode in (SenderMode.HIT, SenderMode.MISS):
        for rc in rc_values:
            for rs in range(n):
                for sc in range(n):
                    for ss in range(n):
                        scenario = ContentionScenario(rc, rs, sc, ss, mode)
                        delta, mean, base = _measure_tuple(config, scenario,
                                                           seed, margin)
                        rows.append(ValidationRow(
                            rc, rs, sc, ss, mode.value, mean, base, delta,
                            sim_contention=delta > margin,
                            predicted=predict(scenario, topo).any_contention,
                        ))
    return rows


def validate(arch: str = "coffeelake", *, seed: int = 0, workers: int | None = None,
             overrides: dict | None = None, progress=None) -> ValidationReport:
    """Run the full n^4 x 2 sweep and compare against the predicates."""
    overrides = overrides or {}
    config = SimConfig.preset(arch, **overrides)
    n = config.topo.n_stops
    if workers is None:
        workers = min(2, os.cpu_count() or 1)
    chunks = [(arch, overrides, [rc], seed) for rc in range(n)]
    rows: list[ValidationRow] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, chunk_rows in enumerate(pool.map(_validate_chunk, chunks)):
                rows.extend(chunk_rows)
                if progress:
                    progress(i + 1, len(chunks))
    else:
        for i, chunk in enumerate(chunks):
            rows.extend(_validate_chunk(chunk))
            if progress:
                progress(i + 1, len(chunks))
    # canonical ordering: mode, then scenario tuple
    rows.sort(key=lambda r: (r.mode, r.rc, r.rs, r.sc, r.ss))
    return ValidationReport(rows, config.contention_margin)


def write_rows_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("rc,rs,sc,ss,mode,mean_latency,baseline,delta\n")
        for r in rows:
            fh.write(f"{r.rc},{r.rs},{r.sc},{r.ss},{r.mode},"
                     f"{r.mean_latency:.6f},{r.baseline:.6f},{r.delta:.6f}\n")
