import numpy as np
import pytest

from ringbus.model import ContentionScenario, SenderMode
from ringbus.ringsim import SimConfig, Simulator
from ringbus.ringsim import _kernel as K
from ringbus.ringsim.simulator import (
    AgentSpec,
    measure_delta,
    run_scenario,
    scenario_simulator,
    single_load_latency,
)

CFG = SimConfig.coffeelake()


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(issue_overhead=0)
    with pytest.raises(ValueError):
        SimConfig(m2_slot_weight=1.5)


def test_preset_names():
    assert SimConfig.preset("skylake").topo.n_stops == 4
    with pytest.raises(ValueError):
        SimConfig.preset("nehalem")


# --- slot mechanics -------------------------------------------------------

def _push_packet(sim, side, pos, conv, role, dst_pos, txn=0):
    entry = ((txn + 1) << 24) | (role << 16) | (dst_pos + 1)
    K._push_back.py_func(sim.q, sim.q_head, sim.q_n, sim.qmask,
                         side, pos, conv, entry) \
        if hasattr(K._push_back, "py_func") else \
        K._push_back(sim.q, sim.q_head, sim.q_n, sim.qmask,
                     side, pos, conv, entry)


def test_packet_travels_one_hop_per_cycle():
    sim = Simulator(CFG, 0, 0, (), receiver_enabled=False, max_cycles=64)
    conv = (K.REQ * 2 + 0) * 2 + K.RIGHT
    # inject at stop position 2 heading to position 5 (three links)
    _push_packet(sim, 0, 2, conv, K.ROLE_NOP, 5)
    sim.step()  # injection happens at the end of this cycle
    positions = []
    for _ in range(4):
        occupied = np.nonzero(sim.occ[conv])[0]
        positions.append(list(occupied))
        sim.step()
    assert positions[0] == [2]
    assert positions[1] == [3]
    assert positions[2] == [4]
    assert positions[3] == []  # delivered on arrival at position 5


def test_inflight_traffic_blocks_downstream_injection():
    sim = Simulator(CFG, 0, 0, (), receiver_enabled=False, max_cycles=64)
    conv = (K.REQ * 2 + 0) * 2 + K.RIGHT
    _push_packet(sim, 0, 1, conv, K.ROLE_NOP, 8, txn=1)
    sim.step()                       # upstream packet now at position 1
    _push_packet(sim, 0, 2, conv, K.ROLE_NOP, 8, txn=2)
    sim.step()
    # the upstream packet advanced into position 2, so the new packet waited
    assert sim.q_n[0, 2, conv] == 1
    sim.step()
    assert sim.q_n[0, 2, conv] == 0  # free slot next cycle


def test_different_lanes_do_not_interact():
    sim = Simulator(CFG, 0, 0, (), receiver_enabled=False, max_cycles=64)
    conv_l1 = (K.REQ * 2 + 0) * 2 + K.RIGHT
    conv_l2 = (K.REQ * 2 + 1) * 2 + K.RIGHT
    _push_packet(sim, 0, 1, conv_l1, K.ROLE_NOP, 8, txn=1)
    sim.step()
    _push_packet(sim, 0, 2, conv_l2, K.ROLE_NOP, 8, txn=2)
    sim.step()
    assert sim.q_n[0, 2, conv_l2] == 0  # injected immediately


def test_delivery_frees_slot_for_same_stop_injection():
    sim = Simulator(CFG, 0, 0, (), receiver_enabled=False, max_cycles=64)
    conv = (K.REQ * 2 + 0) * 2 + K.RIGHT
    _push_packet(sim, 0, 1, conv, K.ROLE_NOP, 2, txn=1)  # delivered at 2
    sim.step()
    _push_packet(sim, 0, 2, conv, K.ROLE_NOP, 8, txn=2)
    sim.step()
    # the first packet was ejected at position 2 in the same cycle the
    # second wanted to inject there, so no stall
    assert sim.q_n[0, 2, conv] == 0


# --- latency calibration --------------------------------------------------

def test_uncontended_hit_latency_band_and_monotonic():
    lats = [single_load_latency(CFG, 0, s) for s in range(8)]
    assert lats == sorted(lats)
    assert all(lats[i] < lats[i + 1] for i in range(7))
    assert all(40 <= l <= 60 for l in lats)


def test_hit_latency_golden_value():
    # core 2 loading from slice 5: three hops out, three hops back
    assert single_load_latency(CFG, 2, 5) == 49


def test_miss_latency_invariant_in_core():
    lats = [single_load_latency(CFG, sc, 7, K.KIND_MISS) for sc in range(8)]
    assert len(set(lats)) == 1
    assert lats[0] == 248


def test_home_slice_hit_is_fastest():
    assert single_load_latency(CFG, 3, 3) == min(
        single_load_latency(CFG, 3, s) for s in range(8))


# --- receiver behavior ----------------------------------------------------

def test_receiver_without_sender_is_flat():
    tr = run_scenario(CFG, ContentionScenario(2, 5, 2, 5, SenderMode.HIT),
                      with_sender=False, duration=30_000)
    assert len(tr) > 50
    assert tr.latencies.min() == tr.latencies.max()
    assert np.all(np.diff(tr.issue_cycles) > 0)


def test_contending_sender_raises_mean():
    delta, _, _ = measure_delta(CFG, ContentionScenario(2, 5, 1, 6, SenderMode.HIT),
                                duration=30_000)
    assert delta > 1.0


def test_non_contending_sender_leaves_mean_exact():
    delta, _, _ = measure_delta(CFG, ContentionScenario(2, 5, 3, 4, SenderMode.HIT),
                                duration=30_000)
    assert delta == 0.0


def test_same_slice_sender_queues_behind():
    delta, _, _ = measure_delta(CFG, ContentionScenario(2, 5, 0, 5, SenderMode.HIT),
                                duration=30_000)
    assert delta > 50.0


def test_idle_sender_injects_nothing():
    spec = AgentSpec(core=1, slices=(6,), kinds=(K.KIND_HIT,),
                     windows=((0, 0, 0),))
    sim = Simulator(CFG, 2, 5, (spec,), max_cycles=10_000)
    sim.run(10_000)
    assert sim.agent_completed(0) == 0


def test_trace_determinism():
    a = run_scenario(CFG, ContentionScenario(2, 5, 1, 6, SenderMode.MISS),
                     seed=7, duration=20_000)
    b = run_scenario(CFG, ContentionScenario(2, 5, 1, 6, SenderMode.MISS),
                     seed=7, duration=20_000)
    assert np.array_equal(a.issue_cycles, b.issue_cycles)
    assert np.array_equal(a.latencies, b.latencies)


def test_conservation_no_stuck_packets():
    s = ContentionScenario(2, 5, 1, 6, SenderMode.MISS)
    sim = scenario_simulator(CFG, s, seed=3, max_cycles=50_000)
    sim.run(20_000)
    done_before = sim.agent_completed(0)
    # stop issuing: close the agent's window by exhausting budget is not
    # possible here, so just drain: everything in flight must complete
    sim.agents_arr[0, K.AG_CAP] = 0
    sim.run(2_000)
    assert sim.agents_arr[0, K.AG_INFLIGHT] == 0
    assert sim.agent_completed(0) > done_before
    receiver_busy = int(sim.rcv[K.RCV_BUSY])
    assert int(sim.free_n[0]) + receiver_busy == len(sim.T)
    # only the receiver's current load may still occupy ring slots
    assert int(sim.occ_n.sum()) + int(sim.occg_n.sum()) <= 3 * receiver_busy


def test_two_senders_add_contention():
    base = ContentionScenario(5, 0, 7, 4, SenderMode.HIT)
    one = run_scenario(CFG, base, seed=2, duration=40_000).mean()
    sim = scenario_simulator(CFG, base, seed=2, max_cycles=40_000)
    from ringbus.ringsim.simulator import sender_agent
    extra = sender_agent(ContentionScenario(5, 0, 6, 3, SenderMode.HIT), CFG,
                         seed_salt=1)
    both_sim = Simulator(CFG, 5, 0,
                         (sender_agent(base, CFG), extra),
                         seed=2, max_cycles=40_000)
    both_sim.run(40_000)
    both = both_sim.trace(warmup=3_000).mean()
    baseline = run_scenario(CFG, base, seed=2, duration=40_000,
                            with_sender=False).mean()
    assert one > baseline
    assert both >= one


def test_sweep_csv_roundtrip(tmp_path):
    from ringbus.validate import ValidationRow, write_rows_csv
    rows = [ValidationRow(0, 1, 2, 3, "hit", 199.0, 195.0, 4.0, True, True)]
    path = tmp_path / "rows.csv"
    write_rows_csv(rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "rc,rs,sc,ss,mode,mean_latency,baseline,delta"
    assert lines[1].startswith("0,1,2,3,hit,")
