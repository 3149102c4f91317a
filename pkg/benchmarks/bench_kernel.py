"""Compare the compiled cycle kernel against the pure-Python fallback.

Runs the same contended scenario in a subprocess twice, once per backend
(the backend is chosen at import time via RINGBUS_NO_NUMBA), and reports
cycles per second for each.

    python benchmarks/bench_kernel.py [--cycles N]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

DRIVER = textwrap.dedent("""
    import json, time
    from ringbus.model import ContentionScenario, SenderMode
    from ringbus.ringsim import SimConfig, NUMBA_ENABLED
    from ringbus.ringsim.simulator import scenario_simulator

    cycles = {cycles}
    cfg = SimConfig.coffeelake()
    scenario = ContentionScenario(2, 5, 1, 6, SenderMode.MISS)
    sim = scenario_simulator(cfg, scenario, seed=1, max_cycles=cycles + 1000)
    sim.run(500)  # compile / warm up outside the timed region
    t0 = time.perf_counter()
    sim.run(cycles)
    dt = time.perf_counter() - t0
    print(json.dumps({{
        "numba": NUMBA_ENABLED,
        "cycles": cycles,
        "seconds": dt,
        "cycles_per_second": cycles / dt,
        "batches": len(sim.trace()),
    }}))
""")


def run_backend(cycles: int, pure_python: bool) -> dict:
    env = dict(os.environ)
    if pure_python:
        env["RINGBUS_NO_NUMBA"] = "1"
    else:
        env.pop("RINGBUS_NO_NUMBA", None)
    proc = subprocess.run([sys.executable, "-c", DRIVER.format(cycles=cycles)],
                          env=env, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(1)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cycles", type=int, default=200_000,
                        help="simulated cycles per backend (default 200k)")
    parser.add_argument("--pure-cycles", type=int, default=None,
                        help="cycles for the fallback run (defaults to "
                             "--cycles / 10; the fallback is slow)")
    args = parser.parse_args()
    pure_cycles = args.pure_cycles or max(args.cycles // 10, 10_000)

    compiled = run_backend(args.cycles, pure_python=False)
    fallback = run_backend(pure_cycles, pure_python=True)

    print(f"compiled kernel : {compiled['cycles']:>9d} cycles in "
          f"{compiled['seconds']:.2f}s  -> "
          f"{compiled['cycles_per_second'] / 1e6:.2f} Mcycles/s "
          f"(numba={compiled['numba']})")
    print(f"pure-python     : {fallback['cycles']:>9d} cycles in "
          f"{fallback['seconds']:.2f}s  -> "
          f"{fallback['cycles_per_second'] / 1e6:.3f} Mcycles/s "
          f"(numba={fallback['numba']})")
    speedup = compiled["cycles_per_second"] / fallback["cycles_per_second"]
    print(f"speedup         : {speedup:.0f}x")


if __name__ == "__main__":
    main()
