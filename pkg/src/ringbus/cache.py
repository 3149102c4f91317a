"""Inclusive three-level cache model and probe-set construction.

The hierarchy is set-associative with strict LRU at every level and an
inclusive LLC split into per-core slices: filling a line installs it at all
levels, and evicting a line from the LLC invalidates any private copies.
Addresses are synthetic 64-bit line-aligned integers; set indices come from
fixed bit fields above the 6-bit line offset and the slice comes from an
XOR fold of the line address (the real hash is undocumented, and only the
resulting slice index matters to the contention model).

The probe sets built here give the load agents their cache behavior by
construction:

* a *monitoring set* holds exactly ``w_llc`` addresses of one slice, evenly
  split over two LLC sets that share an L1 set, so that an in-order loop
  over it keeps missing in the private caches while always hitting the LLC;
* an *eviction set* holds ``w_l1`` addresses that alias the monitoring
  set's private-cache sets but live in different LLC sets, so one pass over
  it demotes every monitoring line to LLC-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

LINE_BITS = 6


class HitLevel(enum.Enum):
    L1_HIT = "l1"
    L2_HIT = "l2"
    LLC_HIT = "llc"
    MISS = "miss"


@dataclass(frozen=True)
class CacheGeometry:
    w_l1: int = 8
    sets_l1: int = 64
    w_l2: int = 4
    sets_l2: int = 1024
    w_llc: int = 12
    sets_llc_per_slice: int = 2048
    n_slices: int = 8
    line_size: int = 64

    def __post_init__(self) -> None:
        for name in ("w_l1", "sets_l1", "w_l2", "sets_l2", "w_llc",
                     "sets_llc_per_slice", "n_slices"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("sets_l1", "sets_l2", "sets_llc_per_slice", "n_slices"):
            v = getattr(self, name)
            if v & (v - 1):
                raise ValueError(f"{name} must be a power of two")
        if self.line_size != 1 << LINE_BITS:
            raise ValueError("only 64-byte lines are modeled")
        if not (self.w_llc > self.w_l1 and self.w_llc > self.w_l2):
            raise ValueError("w_llc must exceed both private-cache way counts")
        if not (self.sets_l1 <= self.sets_l2 < self.sets_llc_per_slice):
            raise ValueError("set counts must satisfy sets_l1 <= sets_l2 < sets_llc")

    @classmethod
    def coffeelake(cls) -> "CacheGeometry":
        return cls()

    @classmethod
    def skylake(cls) -> "CacheGeometry":
        return cls(w_llc=16, n_slices=4)


def _line(addr: int) -> int:
    return addr >> LINE_BITS


def l1_set(addr: int, geom: CacheGeometry) -> int:
    return _line(addr) % geom.sets_l1


def l2_set(addr: int, geom: CacheGeometry) -> int:
    return _line(addr) % geom.sets_l2


def llc_set(addr: int, geom: CacheGeometry) -> int:
    return _line(addr) % geom.sets_llc_per_slice


def slice_of(addr: int, geom: CacheGeometry) -> int:
    """Slice index for an address: XOR fold of the line-address bits.

    Folding chunks of log2(n_slices) bits keeps the map line-offset
    invariant and uniform across slices, which is all downstream code
    relies on.
    """
    bits = geom.n_slices.bit_length() - 1
    if bits == 0:
        return 0
    line = _line(addr)
    acc = 0
    while line:
        acc ^= line & (geom.n_slices - 1)
        line >>= bits
    return acc


@dataclass(frozen=True)
class MonitoringSet:
    addresses: tuple[int, ...]
    target_slice: int
    target_sets: tuple[int, int]


@dataclass(frozen=True)
class EvictionSet:
    addresses: tuple[int, ...]


class SearchExhausted(RuntimeError):
    """The synthetic address range ran out before enough lines were found."""


class CacheState:
    """Single-owner mutable state of one simulated cache hierarchy.

    Each set is a Python list ordered most-recently-used first.
    """

    def __init__(self, geom: CacheGeometry) -> None:
        self.geom = geom
        self._l1: list[list[int]] = [[] for _ in range(geom.sets_l1)]
        self._l2: list[list[int]] = [[] for _ in range(geom.sets_l2)]
        self._llc: list[list[list[int]]] = [
            [[] for _ in range(geom.sets_llc_per_slice)] for _ in range(geom.n_slices)
        ]

    def access(self, addr: int) -> HitLevel:
        """Perform a load; return the highest level that held the line before."""
        g = self.geom
        line = _line(addr) << LINE_BITS
        s1 = self._l1[l1_set(line, g)]
        if line in s1:
            s1.remove(line)
            s1.insert(0, line)
            return HitLevel.L1_HIT
        s2 = self._l2[l2_set(line, g)]
        if line in s2:
            s2.remove(line)
            s2.insert(0, line)
            self._fill(s1, line, g.w_l1)
            return HitLevel.L2_HIT
        s3 = self._llc[slice_of(line, g)][llc_set(line, g)]
        if line in s3:
            s3.remove(line)
            s3.insert(0, line)
            self._fill_l2(line, g)
            self._fill(s1, line, g.w_l1)
            return HitLevel.LLC_HIT
        victim = self._fill(s3, line, g.w_llc)
        if victim is not None:
            self._invalidate_private(victim)
        self._fill_l2(line, g)
        self._fill(s1, line, g.w_l1)
        return HitLevel.MISS

    def hit_level(self, addr: int) -> HitLevel:
        """Where the line currently resides, without touching LRU state."""
        g = self.geom
        line = _line(addr) << LINE_BITS
        if line in self._l1[l1_set(line, g)]:
            return HitLevel.L1_HIT
        if line in self._l2[l2_set(line, g)]:
            return HitLevel.L2_HIT
        if line in self._llc[slice_of(line, g)][llc_set(line, g)]:
            return HitLevel.LLC_HIT
        return HitLevel.MISS

    def flush_victim(self, footprint, private_only: bool = False) -> None:
        """Remove the given lines from the hierarchy (cold restart).

        ``private_only`` models eviction-based cleansing that only touches
        the L1/L2: the lines stay resident in the LLC.
        """
        g = self.geom
        for addr in footprint:
            line = _line(addr) << LINE_BITS
            s1 = self._l1[l1_set(line, g)]
            if line in s1:
                s1.remove(line)
            s2 = self._l2[l2_set(line, g)]
            if line in s2:
                s2.remove(line)
            if not private_only:
                s3 = self._llc[slice_of(line, g)][llc_set(line, g)]
                if line in s3:
                    s3.remove(line)

    def check_inclusive(self) -> bool:
        """Full-scan inclusivity check: L1 lines live in the L2, and every
        private line lives in the LLC."""
        g = self.geom
        llc_lines = set()
        for per_slice in self._llc:
            for ways in per_slice:
                llc_lines.update(ways)
        l2_lines = set()
        for ways in self._l2:
            l2_lines.update(ways)
        for ways in self._l1:
            if any(line not in l2_lines or line not in llc_lines for line in ways):
                return False
        if any(line not in llc_lines for line in l2_lines):
            return False
        return True

    @staticmethod
    def _fill(ways: list[int], line: int, capacity: int) -> int | None:
        victim = None
        if len(ways) >= capacity:
            victim = ways.pop()
        ways.insert(0, line)
        return victim

    def _fill_l2(self, line: int, g: CacheGeometry) -> None:
        # the L2 holds everything the L1 does, so its victims leave the L1 too
        victim = self._fill(self._l2[l2_set(line, g)], line, g.w_l2)
        if victim is not None:
            s1 = self._l1[l1_set(victim, g)]
            if victim in s1:
                s1.remove(victim)

    def _invalidate_private(self, line: int) -> None:
        g = self.geom
        s1 = self._l1[l1_set(line, g)]
        if line in s1:
            s1.remove(line)
        s2 = self._l2[l2_set(line, g)]
        if line in s2:
            s2.remove(line)


def find_set_addresses(target_slice: int, target_sets, count: int,
                       geom: CacheGeometry, start_line: int = 0) -> list[int]:
    """Scan the synthetic address range for ``count`` lines of one slice,
    cycling through ``target_sets`` so the result is evenly split."""
    per_set = {s: [] for s in target_sets}
    quota = [count // len(target_sets)] * len(target_sets)
    for i in range(count % len(target_sets)):
        quota[i] += 1
    # Sized analytically: lines cycle through every (set, slice) pair once
    # per sets*slices lines, so a few extra laps are ample.
    limit = 4 * (count + 1) * geom.sets_llc_per_slice * geom.n_slices
    line = start_line
    while any(len(per_set[s]) < q for s, q in zip(target_sets, quota)):
        if line - start_line > limit:
            raise SearchExhausted("address range too small for requested set")
        addr = line << LINE_BITS
        s = llc_set(addr, geom)
        if s in per_set and len(per_set[s]) < quota[target_sets.index(s)] \
                and slice_of(addr, geom) == target_slice:
            per_set[s].append(addr)
        line += 1
    ordered = []
    for i in range(max(quota)):
        for s in target_sets:
            if i < len(per_set[s]):
                ordered.append(per_set[s][i])
    return ordered


def sibling_set(set_index: int, geom: CacheGeometry) -> int:
    """Second LLC set paired with ``set_index`` in a monitoring set.

    Flipping the lowest set bit above the L1 field keeps both sets in one
    L1 set (full L1 pressure on traversal) while leaving each L2 set with
    spare same-set LLC sets for eviction-set construction.
    """
    bit = geom.sets_l1.bit_length() - 1
    flip = 1 << bit
    if flip >= geom.sets_llc_per_slice:
        raise ValueError("geometry leaves no sibling set above the L1 field")
    return set_index ^ flip


def build_monitoring_set(core: int, target_slice: int, set_index: int,
                         geom: CacheGeometry) -> MonitoringSet:
    """``w_llc`` addresses of one slice, split over a pair of LLC sets.

    ``core`` pins where the loads will issue from; it does not constrain
    the addresses.
    """
    del core
    if not 0 <= target_slice < geom.n_slices:
        raise ValueError("slice index out of range")
    if not 0 <= set_index < geom.sets_llc_per_slice:
        raise ValueError("set index out of range")
    sets = (set_index, sibling_set(set_index, geom))
    addrs = find_set_addresses(target_slice, sets, geom.w_llc, geom)
    return MonitoringSet(tuple(addrs), target_slice, sets)


def build_eviction_set(mon: MonitoringSet, geom: CacheGeometry) -> EvictionSet:
    """``w_l1`` addresses aliasing the monitoring set's L1/L2 sets but in
    different LLC sets, used to demote monitoring lines out of L1/L2."""
    complements = tuple(s ^ (geom.sets_llc_per_slice >> 1) for s in mon.target_sets)
    if set(complements) & set(mon.target_sets):
        raise SearchExhausted("no LLC sets left aliasing the private sets")
    per_set = geom.w_l1 // len(complements)
    rem = geom.w_l1 % len(complements)
    addrs: list[int] = []
    for i, s in enumerate(complements):
        want = per_set + (1 if i < rem else 0)
        # Any slice works: demotion only needs L1/L2 set pressure.
        found: list[int] = []
        line = 0
        while len(found) < want:
            addr = line << LINE_BITS
            if llc_set(addr, geom) == s:
                found.append(addr)
            line += 1
        addrs.extend(found)
    return EvictionSet(tuple(addrs))


def warmup_traversals(state: CacheState, addresses, passes: int = 2) -> None:
    for _ in range(passes):
        for addr in addresses:
            state.access(addr)


def steady_state_level(addresses, geom: CacheGeometry) -> HitLevel:
    """Hit level of every access once an in-order loop reaches steady state.

    Replays the loop against a fresh hierarchy and checks that from the
    third pass on, all accesses land at one level.
    """
    state = CacheState(geom)
    warmup_traversals(state, addresses, passes=2)
    levels = {state.access(a) for a in addresses}
    if len(levels) != 1:
        raise RuntimeError(f"traversal did not reach a steady state: {levels}")
    return levels.pop()
