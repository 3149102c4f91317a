"""Closed-form contention predicates and transaction flow decomposition.

Contention on the interconnect is predicted two independent ways:

* :func:`predict` decomposes the sender's transaction into per-ring,
  per-lane directed flows and checks each against the receiver's two
  injection points using the arbitration rules (in-flight traffic blocks
  injection strictly downstream of its source; a slice and a core sharing
  a stop round-robin for the same lane; delivery at a stop frees the slot).
* :func:`ring_contention_formula` transcribes the empirical boolean
  conditions directly.

A test asserts the two agree on every scenario, guarding each against
transcription mistakes in the other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .topology import (
    AgentId,
    AgentKind,
    Direction,
    Lane,
    RingName,
    RingTopology,
    cluster_of,
    lane_for,
)


class SenderMode(enum.Enum):
    HIT = "hit"
    MISS = "miss"


class FlowKind(enum.Enum):
    REQUEST_RING = "request"       # core -> slice request (hit and miss)
    ACK_DATA_RING = "ack_data"     # slice -> core GO + data (hit only)
    SLICE_TO_SA = "slice_to_sa"    # slice -> SA forwarded request (miss)
    MISS_ACK = "miss_ack"          # slice -> core response packet (miss)
    SA_TO_CORE = "sa_to_core"      # SA -> core GO + data (miss)
    SA_TO_SLICE = "sa_to_slice"    # SA -> slice data refill (miss)


@dataclass(frozen=True)
class ContentionScenario:
    rc: int
    rs: int
    sc: int
    ss: int
    mode: SenderMode = SenderMode.HIT

    def validate(self, topo: RingTopology) -> None:
        for name in ("rc", "rs", "sc", "ss"):
            v = getattr(self, name)
            if not 0 <= v < topo.n_stops:
                raise ValueError(f"{name}={v} out of range [0, {topo.n_stops})")


@dataclass(frozen=True)
class Flow:
    """One directed stream of sender packets on specific rings and a lane."""

    kind: FlowKind
    rings: tuple[RingName, ...]
    lane: Lane
    src_pos: int
    dst_pos: int
    injector: AgentKind
    packets: int  # slots occupied per transaction

    @property
    def direction(self) -> Direction:
        return Direction.RIGHT if self.dst_pos >= self.src_pos else Direction.LEFT

    @property
    def on_ring(self) -> bool:
        return self.src_pos != self.dst_pos

    @property
    def links(self) -> tuple[int, ...]:
        a, b = self.src_pos, self.dst_pos
        if b >= a:
            return tuple(range(a, b))
        return tuple(range(a - 1, b - 1, -1))


@dataclass(frozen=True)
class ContentionVerdict:
    slice_contention: bool
    ring_contention: bool
    contending_flows: frozenset[FlowKind]
    severity_rank: int

    @property
    def any_contention(self) -> bool:
        return self.slice_contention or self.ring_contention


_WEAK_FLOWS = {FlowKind.REQUEST_RING, FlowKind.MISS_ACK, FlowKind.SLICE_TO_SA}


def _severity(flows: frozenset[FlowKind]) -> int:
    if not flows:
        return 0
    if len(flows) > 1:
        return 3
    return 1 if next(iter(flows)) in _WEAK_FLOWS else 2


def flows_for(scenario: ContentionScenario, topo: RingTopology) -> list[Flow]:
    """Sender-side flow decomposition: two flows for a hit, five for a miss.

    Lanes follow the destination agent's cluster (flipped for slices); the
    forwarded request to the system agent keeps the lane it arrived on.
    """
    scenario.validate(topo)
    sc, ss = scenario.sc, scenario.ss
    core = AgentId(AgentKind.CORE, sc)
    slc = AgentId(AgentKind.SLICE, ss)
    p_core = topo.position(core)
    p_slice = topo.position(slc)
    lane_to_slice = lane_for(slc, topo)
    lane_to_core = lane_for(core, topo)

    request = Flow(FlowKind.REQUEST_RING, (RingName.REQUEST,), lane_to_slice,
                   p_core, p_slice, AgentKind.CORE, packets=1)
    if scenario.mode is SenderMode.HIT:
        response = Flow(FlowKind.ACK_DATA_RING, (RingName.ACKNOWLEDGE, RingName.DATA),
                        lane_to_core, p_slice, p_core, AgentKind.SLICE, packets=3)
        return [request, response]
    return [
        request,
        Flow(FlowKind.SLICE_TO_SA, (RingName.REQUEST,), lane_to_slice,
             p_slice, topo.sa_position, AgentKind.SLICE, packets=1),
        Flow(FlowKind.MISS_ACK, (RingName.ACKNOWLEDGE,), lane_to_core,
             p_slice, p_core, AgentKind.SLICE, packets=1),
        Flow(FlowKind.SA_TO_CORE, (RingName.ACKNOWLEDGE, RingName.DATA),
             lane_to_core, topo.sa_position, p_core, AgentKind.SYSTEM_AGENT, packets=3),
        Flow(FlowKind.SA_TO_SLICE, (RingName.DATA,), lane_to_slice,
             topo.sa_position, p_slice, AgentKind.SYSTEM_AGENT, packets=2),
    ]


def receiver_flows(rc: int, rs: int, topo: RingTopology) -> list[Flow]:
    """The monitoring receiver's own two flows (it always hits in the LLC)."""
    return flows_for(ContentionScenario(rc, rs, rc, rs, SenderMode.HIT), topo)


def _blocks(sender: Flow, recv: Flow) -> bool:
    """Does the sender flow delay the receiver flow's injection?

    In-flight packets occupy the slot passing every stop strictly between
    their source and destination, so they stall an injector there outright;
    a delivery frees the slot at the destination stop itself.  When the two
    flows inject at the same stop, only distinct agents (a core and its
    slice) compete, and their round-robin arbitration still costs the
    receiver cycles; an agent never delays itself.
    """
    if not sender.on_ring or not recv.on_ring:
        return False
    if sender.lane != recv.lane or sender.direction != recv.direction:
        return False
    if not set(sender.rings) & set(recv.rings):
        return False
    p = recv.src_pos
    if sender.direction is Direction.RIGHT:
        inside = sender.src_pos < p < sender.dst_pos
    else:
        inside = sender.dst_pos < p < sender.src_pos
    if inside:
        return True
    return p == sender.src_pos and sender.injector != recv.injector


def predict(scenario: ContentionScenario, topo: RingTopology) -> ContentionVerdict:
    """Flow-derived contention verdict for one (receiver, sender) scenario.

    Slice contention (same target slice) and ring contention are
    independent: a receiver loading from its home slice occupies no links,
    so only slice contention can ever reach it.
    """
    scenario.validate(topo)
    slice_contention = scenario.ss == scenario.rs
    recv = receiver_flows(scenario.rc, scenario.rs, topo)
    contending = frozenset(
        f.kind for f in flows_for(scenario, topo)
        if any(_blocks(f, r) for r in recv)
    )
    return ContentionVerdict(
        slice_contention=slice_contention,
        ring_contention=bool(contending),
        contending_flows=contending,
        severity_rank=_severity(contending),
    )


def _same(a: int, b: int, topo: RingTopology) -> bool:
    return cluster_of(a, topo) is cluster_of(b, topo)


def ring_contention_formula(scenario: ContentionScenario, topo: RingTopology) -> bool:
    """Literal transcription of the empirical contention conditions.

    This is the full "does the receiver slow down at all" predicate: a
    same-slice term, then ring terms per receiver direction.  The miss-mode
    predicate keeps every hit-mode term and adds the conditions contributed
    by the extra flows of a miss transaction (slice-to-SA forwarding and
    the two refill flows out of the system agent at the left end).
    """
    scenario.validate(topo)
    rc, rs, sc, ss = scenario.rc, scenario.rs, scenario.sc, scenario.ss
    if ss == rs:
        return True
    if rc < rs:
        return (
            (sc < rc and ss > rc and _same(ss, rs, topo))
            or (ss > rs and sc < rs and _same(sc, rc, topo))
        )
    if rc > rs:
        hit_terms = (
            (sc > rc and ss < rc and _same(ss, rs, topo))
            or (ss < rs and sc > rs and _same(sc, rc, topo))
        )
        if scenario.mode is SenderMode.HIT:
            return hit_terms
        flipped = cluster_of(ss, topo) is not cluster_of(rc, topo)
        return (
            (sc > rc and ss < rc and _same(ss, rs, topo))
            or (ss >= rc and _same(ss, rs, topo))
            or (sc > rs and _same(sc, rc, topo))
            or (ss > rs and flipped)
        )
    return False


def heatmap(mode: SenderMode, topo: RingTopology):
    """Full enumeration over (rc, rs, sc, ss); yields (scenario, verdict)."""
    n = topo.n_stops
    for rc in range(n):
        for rs in range(n):
            for sc in range(n):
                for ss in range(n):
                    s = ContentionScenario(rc, rs, sc, ss, mode)
                    yield s, predict(s, topo)


def heatmap_table(mode: SenderMode, topo: RingTopology, rc: int, rs: int):
    """One (rc, rs) panel as an n x n nested list indexed [sc][ss]."""
    n = topo.n_stops
    return [
        [predict(ContentionScenario(rc, rs, sc, ss, mode), topo) for ss in range(n)]
        for sc in range(n)
    ]
