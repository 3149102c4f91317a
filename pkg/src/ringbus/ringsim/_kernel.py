"""Cycle kernel: boxcar slots, injection arbitration, queues, transactions.

Every function here is compiled with numba's ``@njit`` when available; set
``RINGBUS_NO_NUMBA=1`` to run the identical source uncompiled (pure
numpy/Python).  Both paths produce bit-identical results.

Mechanics
---------
Each of the three active rings has two lanes, and each lane carries traffic
both ways, giving 12 independent linear conveyors of slots (position 0 is
the system agent, core/slice stop ``i`` sits at ``i + 1``).  Slots advance
one hop per cycle; a packet that reaches its destination is ejected, which
frees the slot at that stop within the same cycle.  A stop may inject into
a conveyor only when the slot passing it is empty, so traffic already on
the ring always wins; when a core and its slice both want the same
conveyor in the same cycle, the stop alternates between them.  Requests a
slice forwards to the system agent hold a blocking slot only with
probability ``m2_weight``; the rest ride spare capacity in a shadow
conveyor that delays nobody (a tunable stand-in for the observed weaker
contention of that flow).

Per cycle: advance/deliver, timer-driven phase transitions, slice and SA
queue service, agent issue, injection.

State lives in plain int64/float64 arrays (see ``simulator.KernelState``)
and is passed explicitly; transaction and agent pools are 2-D arrays whose
columns are named by the ``TP_*`` / ``AG_*`` constants below.
"""

import os

try:
    if os.environ.get("RINGBUS_NO_NUMBA", "") in ("1", "true", "yes"):
        raise ImportError("numba disabled by RINGBUS_NO_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True

    def _jit(fn):
        return _njit(cache=True, fastmath=False)(fn)

    def _jit_inline(fn):
        # helpers run a few times per cycle: the call itself would dominate
        return _njit(cache=True, fastmath=False, inline="always")(fn)

except ImportError:
    NUMBA_ENABLED = False

    def _jit(fn):
        return fn

    def _jit_inline(fn):
        return fn


# rings / directions / conveyors
REQ, ACK, DATA = 0, 1, 2
RIGHT, LEFT = 0, 1
N_RINGS, N_LANES, N_DIRS = 3, 2, 2
N_CONV = N_RINGS * N_LANES * N_DIRS

# packet roles
ROLE_REQ = 0     # core->slice request: deliver into the slice queue
ROLE_SA_REQ = 1  # slice->SA forwarded request: deliver into the SA queue
ROLE_PKT = 2     # response data packet counted toward completion
ROLE_NOP = 3     # response packet without completion bookkeeping
ROLE_GO = 4      # completion message: the core commits the load one cycle
                 # after it arrives, so a delayed GO is never free

# transaction phases
PH_FREE = 0
PH_ISSUE = 1     # core-side pipeline before the request reaches the stop
PH_INFLIGHT = 2
PH_SLICE_Q = 3
PH_LOOKUP = 4
PH_SA_Q = 5
PH_SA_WORK = 6

KIND_HIT = 0
KIND_MISS = 1

# timing_array slots (mirrors config.py)
CFG_ISSUE = 0
CFG_SLICE_LAT = 1
CFG_SLICE_SVC = 2
CFG_SA_DRAM = 3
CFG_SA_SVC = 4
CFG_RETURN = 5
CFG_LOCAL = 6
CFG_GAP = 7
CFG_HOP = 8

# receiver state slots
RCV_CORE = 0
RCV_SLICE = 1
RCV_BATCH = 2
RCV_NEXT = 3
RCV_DONE = 4
RCV_START = 5
RCV_BUSY = 6
RCV_KIND = 7
RCV_ENABLED = 8

# transaction pool columns
TP_PHASE = 0
TP_COMP = 1      # latest completion candidate among delivered response packets
TP_AGENT = 2
TP_KIND = 3
TP_CORE = 4
TP_SLICE = 5
TP_PENDING = 6
TP_ISSUE = 7
TP_COLS = 8

# agent pool columns
AG_CORE = 0
AG_CAP = 1
AG_INFLIGHT = 2
AG_CURSOR = 3
AG_DONE = 4
AG_WIDX = 5
AG_WLEFT = 6
AG_RNG = 7
AG_SEQ_OFF = 8
AG_SEQ_LEN = 9
AG_W_OFF = 10
AG_W_N = 11
AG_COLS = 12

# window columns
WN_START = 0
WN_END = 1
WN_BUDGET = 2

# load-sequence columns
SQ_SLICE = 0
SQ_KIND = 1

# per-slice / SA queue metadata columns
SM_HEAD = 0
SM_N = 1
SM_BUSY = 2


def _conv_idx(ring, lane, direction):
    return (ring * N_LANES + lane) * N_DIRS + direction


def _pack(txn, role, ghost, dst_pos):
    return ((txn + 1) << 24) | (role << 16) | (ghost << 8) | (dst_pos + 1)


def _rng_next(rng, i):
    # xorshift32 kept inside int64 containers: identical in both backends
    x = rng[i]
    x ^= (x << 13) & 0xFFFFFFFF
    x ^= x >> 17
    x ^= (x << 5) & 0xFFFFFFFF
    rng[i] = x
    return x


def _rng_uniform(rng, i):
    return _rng_next(rng, i) * (1.0 / 4294967296.0)


def _complete(txn, comp_cycle, cfg, T, rcv, out_issue, out_lat, out_n,
              agents, free, free_n):
    agent = T[txn, TP_AGENT]
    if agent < 0:
        rcv[RCV_BUSY] = 0
        rcv[RCV_DONE] += 1
        if rcv[RCV_DONE] >= rcv[RCV_BATCH]:
            n = out_n[0]
            if n < out_issue.shape[0]:
                out_issue[n] = rcv[RCV_START]
                out_lat[n] = comp_cycle - rcv[RCV_START]
                out_n[0] = n + 1
            rcv[RCV_DONE] = 0
            rcv[RCV_NEXT] = comp_cycle + 1 + cfg[CFG_GAP]
        else:
            rcv[RCV_NEXT] = comp_cycle + 1
    else:
        agents[agent, AG_INFLIGHT] -= 1
        agents[agent, AG_DONE] += 1
    T[txn, TP_PHASE] = PH_FREE
    free[free_n[0]] = txn
    free_n[0] += 1


def _deliver(slot, cycle, cfg, T, sq, sq_meta, saq, sa_meta,
             rcv, out_issue, out_lat, out_n, agents, free, free_n):
    txn = (slot >> 24) - 1
    role = (slot >> 16) & 0xFF
    if role == ROLE_REQ:
        s = T[txn, TP_SLICE]
        n = sq_meta[s, SM_N]
        if n >= sq.shape[1]:
            raise RuntimeError("slice queue overflow")
        idx = sq_meta[s, SM_HEAD] + n
        if idx >= sq.shape[1]:
            idx -= sq.shape[1]
        sq[s, idx] = txn
        sq_meta[s, SM_N] = n + 1
        T[txn, TP_PHASE] = PH_SLICE_Q
    elif role == ROLE_SA_REQ:
        n = sa_meta[SM_N]
        if n >= saq.shape[0]:
            raise RuntimeError("system agent queue overflow")
        idx = sa_meta[SM_HEAD] + n
        if idx >= saq.shape[0]:
            idx -= saq.shape[0]
        saq[idx] = txn
        sa_meta[SM_N] = n + 1
        T[txn, TP_PHASE] = PH_SA_Q
    elif role == ROLE_PKT or role == ROLE_GO:
        cand = cycle + 1 if role == ROLE_GO else cycle
        if cand > T[txn, TP_COMP]:
            T[txn, TP_COMP] = cand
        T[txn, TP_PENDING] -= 1
        if T[txn, TP_PENDING] == 0:
            _complete(txn, T[txn, TP_COMP] + cfg[CFG_RETURN], cfg, T,
                      rcv, out_issue, out_lat, out_n, agents, free, free_n)
    # ROLE_NOP: refill copies and miss acknowledgements, no bookkeeping


def _advance_one(occ, occ_n, conv, direction, cycle, cfg, T, sq, sq_meta,
                 saq, sa_meta, rcv, out_issue, out_lat, out_n,
                 agents, free, free_n):
    np_pos = occ.shape[1]
    if direction == RIGHT:
        for p in range(np_pos - 1, 0, -1):
            s = occ[conv, p - 1]
            if s != 0 and (s & 0xFF) - 1 == p:
                _deliver(s, cycle, cfg, T, sq, sq_meta, saq, sa_meta,
                         rcv, out_issue, out_lat, out_n, agents, free, free_n)
                occ[conv, p] = 0
                occ_n[conv] -= 1
            else:
                occ[conv, p] = s
        occ[conv, 0] = 0
    else:
        for p in range(np_pos - 1):
            s = occ[conv, p + 1]
            if s != 0 and (s & 0xFF) - 1 == p:
                _deliver(s, cycle, cfg, T, sq, sq_meta, saq, sa_meta,
                         rcv, out_issue, out_lat, out_n, agents, free, free_n)
                occ[conv, p] = 0
                occ_n[conv] -= 1
            else:
                occ[conv, p] = s
        occ[conv, np_pos - 1] = 0


def _push_back(q, q_head, q_n, qmask, side, pos, conv, entry):
    n = q_n[side, pos, conv]
    if n >= q.shape[3]:
        raise RuntimeError("injection queue overflow")
    idx = q_head[side, pos, conv] + n
    if idx >= q.shape[3]:
        idx -= q.shape[3]
    q[side, pos, conv, idx] = entry
    q_n[side, pos, conv] = n + 1
    qmask[pos] |= 1 << conv


def _fire(txn, cycle, cfg, m2_weight, T, q, q_head, q_n, qmask,
          lane_core, lane_slice, sq, sq_meta, agents, g_rng,
          rcv, out_issue, out_lat, out_n, free, free_n):
    phase = T[txn, TP_PHASE]
    core = T[txn, TP_CORE]
    slc = T[txn, TP_SLICE]
    core_pos = core + 1
    slice_pos = slc + 1
    qcap = q.shape[3]
    if phase == PH_ISSUE:
        if core == slc:
            # home slice: the shared stop hands the request over locally
            n = sq_meta[slc, SM_N]
            if n >= sq.shape[1]:
                raise RuntimeError("slice queue overflow")
            idx = sq_meta[slc, SM_HEAD] + n
            if idx >= sq.shape[1]:
                idx -= sq.shape[1]
            sq[slc, idx] = txn
            sq_meta[slc, SM_N] = n + 1
            T[txn, TP_PHASE] = PH_SLICE_Q
        else:
            direction = RIGHT if slice_pos > core_pos else LEFT
            conv = _conv_idx(REQ, lane_slice[slc], direction)
            entry = _pack(txn, ROLE_REQ, 0, slice_pos)
            n = q_n[0, core_pos, conv]
            if n >= qcap:
                raise RuntimeError("injection queue overflow")
            if T[txn, TP_AGENT] < 0:
                # the receiver's timed load outranks its core's other streams
                head = q_head[0, core_pos, conv] - 1
                if head < 0:
                    head += qcap
                q[0, core_pos, conv, head] = entry
                q_head[0, core_pos, conv] = head
            else:
                idx = q_head[0, core_pos, conv] + n
                if idx >= qcap:
                    idx -= qcap
                q[0, core_pos, conv, idx] = entry
            q_n[0, core_pos, conv] = n + 1
            qmask[core_pos] |= 1 << conv
            T[txn, TP_PHASE] = PH_INFLIGHT
    elif phase == PH_LOOKUP:
        if T[txn, TP_KIND] == KIND_HIT:
            if core == slc:
                _complete(txn, cycle + cfg[CFG_LOCAL] + cfg[CFG_RETURN], cfg, T,
                          rcv, out_issue, out_lat, out_n, agents, free, free_n)
            else:
                T[txn, TP_PENDING] = 3
                T[txn, TP_COMP] = 0
                direction = RIGHT if core_pos > slice_pos else LEFT
                lane = lane_core[core]
                _push_back(q, q_head, q_n, qmask, 1, slice_pos,
                           _conv_idx(ACK, lane, direction),
                           _pack(txn, ROLE_GO, 0, core_pos))
                conv_d = _conv_idx(DATA, lane, direction)
                entry = _pack(txn, ROLE_PKT, 0, core_pos)
                _push_back(q, q_head, q_n, qmask, 1, slice_pos, conv_d, entry)
                _push_back(q, q_head, q_n, qmask, 1, slice_pos, conv_d, entry)
                T[txn, TP_PHASE] = PH_INFLIGHT
        else:
            # forward toward the system agent on the lane the request used
            ghost = 0
            if m2_weight < 1.0:
                agent = T[txn, TP_AGENT]
                if agent >= 0:
                    draw = _rng_uniform(agents[:, AG_RNG], agent)
                else:
                    draw = _rng_uniform(g_rng, 0)
                if draw >= m2_weight:
                    ghost = 1
            _push_back(q, q_head, q_n, qmask, 1, slice_pos,
                       _conv_idx(REQ, lane_slice[slc], LEFT),
                       _pack(txn, ROLE_SA_REQ, ghost, 0))
            if core != slc:
                direction = RIGHT if core_pos > slice_pos else LEFT
                _push_back(q, q_head, q_n, qmask, 1, slice_pos,
                           _conv_idx(ACK, lane_core[core], direction),
                           _pack(txn, ROLE_NOP, 0, core_pos))
            T[txn, TP_PHASE] = PH_INFLIGHT
    elif phase == PH_SA_WORK:
        T[txn, TP_PENDING] = 3
        T[txn, TP_COMP] = 0
        lane_c = lane_core[core]
        _push_back(q, q_head, q_n, qmask, 1, 0, _conv_idx(ACK, lane_c, RIGHT),
                   _pack(txn, ROLE_GO, 0, core_pos))
        conv_d = _conv_idx(DATA, lane_c, RIGHT)
        entry = _pack(txn, ROLE_PKT, 0, core_pos)
        _push_back(q, q_head, q_n, qmask, 1, 0, conv_d, entry)
        _push_back(q, q_head, q_n, qmask, 1, 0, conv_d, entry)
        # separate refill copy for the missing slice, lane per slice cluster
        refill = _pack(txn, ROLE_NOP, 0, slice_pos)
        conv_s = _conv_idx(DATA, lane_slice[slc], RIGHT)
        _push_back(q, q_head, q_n, qmask, 1, 0, conv_s, refill)
        _push_back(q, q_head, q_n, qmask, 1, 0, conv_s, refill)
        T[txn, TP_PHASE] = PH_INFLIGHT


def _schedule(wheel, wheel_n, txn, ready):
    idx = ready & (wheel.shape[0] - 1)
    n = wheel_n[idx]
    if n >= wheel.shape[1]:
        raise RuntimeError("timer wheel bucket overflow")
    wheel[idx, n] = txn
    wheel_n[idx] = n + 1


def _run(occ, occ_g, occ_n, occg_n,
         q, q_head, q_n, qmask, rr,
         T, free, free_n, wheel, wheel_n,
         sq, sq_meta, saq, sa_meta,
         rcv, out_issue, out_lat, out_n,
         agents, a_pissue, seq, wnd,
         lane_core, lane_slice, g_rng, clock,
         cfg, m2_weight, start, end):
    n_agents = agents.shape[0]
    n_slices = sq.shape[0]
    np_pos = occ.shape[1]
    qcap = q.shape[3]
    rng = agents[:, AG_RNG]
    hop_one = cfg[CFG_HOP] == 1

    for cycle in range(start, end):
        # 1. advance every occupied conveyor one hop; eject arrivals
        if hop_one or cycle % cfg[CFG_HOP] == 0:
            for conv in range(N_CONV):
                if occ_n[conv] > 0:
                    _advance_one(occ, occ_n, conv, conv % N_DIRS, cycle, cfg,
                                 T, sq, sq_meta, saq, sa_meta, rcv,
                                 out_issue, out_lat, out_n, agents, free, free_n)
                if occg_n[conv] > 0:
                    _advance_one(occ_g, occg_n, conv, conv % N_DIRS, cycle, cfg,
                                 T, sq, sq_meta, saq, sa_meta, rcv,
                                 out_issue, out_lat, out_n, agents, free, free_n)

        # 2. timer-driven phase transitions (issue pipeline, lookup, refill)
        slot = cycle & (wheel.shape[0] - 1)
        nfire = wheel_n[slot]
        if nfire > 0:
            wheel_n[slot] = 0
            for i in range(nfire):
                _fire(wheel[slot, i], cycle, cfg, m2_weight, T,
                      q, q_head, q_n, qmask,
                      lane_core, lane_slice, sq, sq_meta, agents, g_rng,
                      rcv, out_issue, out_lat, out_n, free, free_n)

        # 3. slice request queues: one dequeue per service interval
        for s in range(n_slices):
            if sq_meta[s, SM_N] > 0 and cycle >= sq_meta[s, SM_BUSY]:
                txn = sq[s, sq_meta[s, SM_HEAD]]
                head = sq_meta[s, SM_HEAD] + 1
                if head >= sq.shape[1]:
                    head = 0
                sq_meta[s, SM_HEAD] = head
                sq_meta[s, SM_N] -= 1
                svc = cfg[CFG_SLICE_SVC]
                if T[txn, TP_AGENT] >= 0:
                    svc += _rng_next(g_rng, 1) & 1
                sq_meta[s, SM_BUSY] = cycle + svc
                T[txn, TP_PHASE] = PH_LOOKUP
                _schedule(wheel, wheel_n, txn, cycle + cfg[CFG_SLICE_LAT])

        # 4. system agent queue
        if sa_meta[SM_N] > 0 and cycle >= sa_meta[SM_BUSY]:
            txn = saq[sa_meta[SM_HEAD]]
            head = sa_meta[SM_HEAD] + 1
            if head >= saq.shape[0]:
                head = 0
            sa_meta[SM_HEAD] = head
            sa_meta[SM_N] -= 1
            svc = cfg[CFG_SA_SVC]
            if T[txn, TP_AGENT] >= 0:
                svc += _rng_next(g_rng, 1) & 1
            sa_meta[SM_BUSY] = cycle + svc
            T[txn, TP_PHASE] = PH_SA_WORK
            _schedule(wheel, wheel_n, txn, cycle + cfg[CFG_SA_DRAM])

        # 5. receiver: serialized loads, timed in batches
        if rcv[RCV_ENABLED] != 0 and rcv[RCV_BUSY] == 0 and cycle >= rcv[RCV_NEXT]:
            if rcv[RCV_DONE] == 0:
                rcv[RCV_START] = cycle
            rcv[RCV_BUSY] = 1
            if free_n[0] == 0:
                raise RuntimeError("transaction pool exhausted")
            free_n[0] -= 1
            t = free[free_n[0]]
            T[t, TP_AGENT] = -1
            T[t, TP_KIND] = rcv[RCV_KIND]
            T[t, TP_CORE] = rcv[RCV_CORE]
            T[t, TP_SLICE] = rcv[RCV_SLICE]
            T[t, TP_PENDING] = 0
            T[t, TP_ISSUE] = cycle
            T[t, TP_PHASE] = PH_ISSUE
            _schedule(wheel, wheel_n, t, cycle + cfg[CFG_ISSUE])

        # 6. background agents: windowed, jittered, capped pipelines
        for a in range(n_agents):
            nw = agents[a, AG_W_N]
            if nw == 0:
                continue
            off = agents[a, AG_W_OFF]
            wi = agents[a, AG_WIDX]
            while wi < nw and cycle >= wnd[off + wi, WN_END]:
                wi += 1
                if wi < nw:
                    agents[a, AG_WLEFT] = wnd[off + wi, WN_BUDGET]
            agents[a, AG_WIDX] = wi
            if wi >= nw or cycle < wnd[off + wi, WN_START]:
                continue
            if agents[a, AG_WLEFT] == 0 or agents[a, AG_INFLIGHT] >= agents[a, AG_CAP]:
                continue
            if a_pissue[a] < 1.0 and _rng_uniform(rng, a) >= a_pissue[a]:
                continue
            cur = agents[a, AG_CURSOR]
            if cur >= agents[a, AG_SEQ_LEN]:
                cur = 0
            agents[a, AG_CURSOR] = cur + 1
            if agents[a, AG_WLEFT] > 0:
                agents[a, AG_WLEFT] -= 1
            agents[a, AG_INFLIGHT] += 1
            if free_n[0] == 0:
                raise RuntimeError("transaction pool exhausted")
            free_n[0] -= 1
            t = free[free_n[0]]
            T[t, TP_AGENT] = a
            T[t, TP_KIND] = seq[agents[a, AG_SEQ_OFF] + cur, SQ_KIND]
            T[t, TP_CORE] = agents[a, AG_CORE]
            T[t, TP_SLICE] = seq[agents[a, AG_SEQ_OFF] + cur, SQ_SLICE]
            T[t, TP_PENDING] = 0
            T[t, TP_ISSUE] = cycle
            T[t, TP_PHASE] = PH_ISSUE
            _schedule(wheel, wheel_n, t,
                      cycle + cfg[CFG_ISSUE] + (_rng_next(rng, a) & 3))

        # 7. injection: free passing slots only; round-robin core vs slice
        for pos in range(np_pos):
            mask = qmask[pos]
            if mask == 0:
                continue
            for conv in range(N_CONV):
                if (mask >> conv) & 1 == 0:
                    continue
                ns = q_n[1, pos, conv]
                if ns > 0:
                    head = q[1, pos, conv, q_head[1, pos, conv]]
                    if (head >> 8) & 1 == 1 and occ_g[conv, pos] == 0:
                        # shadow traffic rides along without blocking anyone
                        occ_g[conv, pos] = head
                        occg_n[conv] += 1
                        head_i = q_head[1, pos, conv] + 1
                        if head_i >= qcap:
                            head_i = 0
                        q_head[1, pos, conv] = head_i
                        q_n[1, pos, conv] = ns - 1
                        ns -= 1
                nc = q_n[0, pos, conv]
                if nc + ns == 0:
                    qmask[pos] &= ~(1 << conv)
                    continue
                if occ[conv, pos] != 0:
                    continue  # in-flight traffic has priority
                if nc > 0 and ns > 0:
                    side = rr[pos, conv]
                    rr[pos, conv] = 1 - side
                elif nc > 0:
                    side = 0
                else:
                    side = 1
                head = q_head[side, pos, conv]
                entry = q[side, pos, conv, head]
                head += 1
                if head >= qcap:
                    head = 0
                q_head[side, pos, conv] = head
                q_n[side, pos, conv] -= 1
                if q_n[0, pos, conv] + q_n[1, pos, conv] == 0:
                    qmask[pos] &= ~(1 << conv)
                occ[conv, pos] = entry & ~(1 << 8)  # a real slot blocks either way
                occ_n[conv] += 1

    clock[0] = end


_conv_idx = _jit_inline(_conv_idx)
_pack = _jit_inline(_pack)
_rng_next = _jit_inline(_rng_next)
_rng_uniform = _jit_inline(_rng_uniform)
_complete = _jit_inline(_complete)
_deliver = _jit_inline(_deliver)
_advance_one = _jit_inline(_advance_one)
_push_back = _jit_inline(_push_back)
_fire = _jit_inline(_fire)
_schedule = _jit_inline(_schedule)
run = _jit(_run)
