"""Linear ring layout: stop positions, agent clusters, lane assignment, routes.

The interconnect is modeled as a line of ring stops.  The system agent sits
at the left end (position 0) and core/slice stop ``i`` sits at position
``i + 1``; core ``i`` shares its stop with LLC slice ``i``.  There is no
wraparound link: every route is the unique linear segment between two
positions, traveling Right (increasing position) or Left.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class AgentKind(enum.Enum):
    CORE = "core"
    SLICE = "slice"
    SYSTEM_AGENT = "sa"


class Cluster(enum.Enum):
    A = "A"
    B = "B"


class Lane(enum.IntEnum):
    LANE1 = 0
    LANE2 = 1


class RingName(enum.IntEnum):
    REQUEST = 0
    ACKNOWLEDGE = 1
    DATA = 2
    # Physically present, but no modeled transaction puts traffic on it.
    SNOOP = 3


class Direction(enum.IntEnum):
    RIGHT = 0
    LEFT = 1


@dataclass(frozen=True)
class AgentId:
    kind: AgentKind
    index: int = 0

    def __post_init__(self) -> None:
        if self.kind is not AgentKind.SYSTEM_AGENT and self.index < 0:
            raise ValueError("agent index must be non-negative")


@dataclass(frozen=True)
class RingTopology:
    """Stop count and fixed left-to-right ordering of the ring stops."""

    n_stops: int = 8

    def __post_init__(self) -> None:
        if self.n_stops < 4 or self.n_stops % 2 != 0:
            raise ValueError("n_stops must be an even integer >= 4")

    @property
    def sa_position(self) -> int:
        return 0

    @property
    def n_positions(self) -> int:
        return self.n_stops + 1

    def position(self, agent: AgentId) -> int:
        """Position of an agent's ring stop on the line."""
        if agent.kind is AgentKind.SYSTEM_AGENT:
            return 0
        self._check_index(agent.index)
        return agent.index + 1

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.n_stops:
            raise ValueError(f"stop index {index} out of range [0, {self.n_stops})")


def cluster_of(index: int, topo: RingTopology) -> Cluster:
    """Cluster of the core/slice stop at ``index``.

    The 8-stop machine groups stops {0, 3, 4, 7} against {1, 2, 5, 6}; the
    rule below (index mod 4 in {0, 3}) reproduces those sets and restricts
    to the 4-stop machine as the same sets cut at index 4.
    """
    topo._check_index(index)
    return Cluster.A if index % 4 in (0, 3) else Cluster.B


def lane_for(dest: AgentId, topo: RingTopology) -> Lane:
    """Lane used by traffic destined to ``dest``, on any of the four rings.

    Cores in cluster A are served on lane 1 and cores in B on lane 2;
    for slices the assignment is flipped.  The system agent is not a valid
    destination here: it accepts request traffic on either lane, so callers
    keep the lane of the flow that is being forwarded to it.
    """
    if dest.kind is AgentKind.SYSTEM_AGENT:
        raise ValueError("system agent receives on either lane; pass the originating lane")
    cluster = cluster_of(dest.index, topo)
    if dest.kind is AgentKind.CORE:
        return Lane.LANE1 if cluster is Cluster.A else Lane.LANE2
    return Lane.LANE2 if cluster is Cluster.A else Lane.LANE1


def path(src: AgentId, dst: AgentId, topo: RingTopology) -> tuple[Direction, tuple[int, ...]]:
    """Shortest (unique) route between two agents.

    Returns the travel direction and the ordered inter-stop links crossed,
    where link ``i`` joins positions ``i`` and ``i + 1``.  A core and its
    home slice share a stop, so their route is the empty segment.
    """
    a = topo.position(src)
    b = topo.position(dst)
    if a == b and src.kind == dst.kind:
        raise ValueError("src and dst are the same agent")
    if b >= a:
        return Direction.RIGHT, tuple(range(a, b))
    return Direction.LEFT, tuple(range(a - 1, b - 1, -1))


def overlaps(seg1: tuple[int, ...], seg2: tuple[int, ...]) -> bool:
    """True when two link segments share at least one link."""
    return bool(set(seg1) & set(seg2))


def upstream_of(inject_a: int, inject_b: int, direction: Direction) -> bool:
    """True when a packet injected at ``inject_a`` passes stop ``inject_b``
    while still on the ring (strictly before it in travel direction)."""
    if direction is Direction.RIGHT:
        return inject_a < inject_b
    return inject_a > inject_b
