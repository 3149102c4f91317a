"""The compiled and the pure-Python kernel must agree to the last bit."""

import hashlib
import json
import os
import subprocess
import sys
import textwrap

import pytest

from ringbus.ringsim import NUMBA_ENABLED

SCRIPT = textwrap.dedent("""
    import hashlib, json
    import numpy as np
    from ringbus.model import ContentionScenario, SenderMode
    from ringbus.ringsim import SimConfig, NUMBA_ENABLED
    from ringbus.ringsim.simulator import run_scenario

    cfg = SimConfig.coffeelake()
    out = {"numba": NUMBA_ENABLED}
    for mode in (SenderMode.HIT, SenderMode.MISS):
        tr = run_scenario(cfg, ContentionScenario(2, 5, 1, 6, mode),
                          seed=42, duration=12_000, warmup=0)
        h = hashlib.sha256()
        h.update(tr.issue_cycles.tobytes())
        h.update(tr.latencies.tobytes())
        out[mode.value] = h.hexdigest()
    print(json.dumps(out))
""")


def _run(disable_numba: bool) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["RINGBUS_NO_NUMBA"] = "1"
    else:
        env.pop("RINGBUS_NO_NUMBA", None)
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env,
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


@pytest.mark.skipif(not NUMBA_ENABLED, reason="numba not active in this run")
def test_fallback_matches_compiled_kernel():
    compiled = _run(disable_numba=False)
    fallback = _run(disable_numba=True)
    assert compiled["numba"] is True
    assert fallback["numba"] is False
    assert compiled["hit"] == fallback["hit"]
    assert compiled["miss"] == fallback["miss"]
