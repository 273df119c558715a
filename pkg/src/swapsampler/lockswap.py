"""Delay-tolerant swap protocol: per-peer lock-based state machines.

Both endpoints of a ringing edge initiate the same swap (they share the
clock, so they agree on the swap id).  Each locks itself, requests locks from
its other neighbors, and sends its neighbor list to its partner once every
neighbor acknowledged; a peer executes when it holds all acknowledgments and
the partner's list.  Any contention fails the whole swap immediately: there
is no waiting on busy peers, so no hold-and-wait cycles can form.

A locked helper releases its lock only after it has applied one identifier
replacement per initiator that locked it (a neighbor of both endpoints is
locked by both and must apply both replacements).  Releasing on the first
replacement would let the peer ship a half-updated neighbor list into a new
swap while the second replacement is still in transit, which corrupts the
preserved graph structure; both lock requests always precede either
replacement, so the expected count is known before it is needed.

Neighbor tables are keyed by edge slot, not by peer id: between the two
replacements of a swap a table can transiently hold the same peer id on two
slots, and the slot key is what stays stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import clocks
from .clocks import PrngState, SharedClock
from .errors import InvariantError, ParameterError
from .netsim import CLOCK_RING, DelayModel, EventQueue, MESSAGE_DELIVERY, SimStats
from .topology import Permutation, Topology

LOCK_REQUEST = "lock_request"
LOCK_RESPONSE = "lock_response"
SWAP = "swap"
SWAP_FAIL = "swap_fail"
UNLOCK = "unlock"
REPLACE = "replace"

INITIATOR = "initiator"
NEIGHBOR = "neighbor"


def make_swap_id(slot: int, ring_index: int) -> int:
    """Both endpoints derive the same id from the shared clock's ring."""
    return (slot << 32) | ring_index


@dataclass(frozen=True)
class Message:
    kind: str
    swap_id: int
    src: int
    dst: int
    success: bool = False
    old_id: int = -1
    new_id: int = -1
    neighbor_payload: Optional[dict[int, int]] = None  # slot -> peer id


@dataclass
class PeerActor:
    """One peer's protocol state; interaction is only through messages and
    shared-clock rings."""

    id: int
    neighbors: dict[int, int]            # slot -> peer id
    listener: Optional["LockedNetwork"] = None
    lock_swap: Optional[int] = None
    lock_role: Optional[str] = None
    # initiator bookkeeping
    partner: int = -1
    awaiting: set[int] = field(default_factory=set)
    requested: tuple[int, ...] = ()
    partner_payload: Optional[dict[int, int]] = None
    ready: bool = False
    # helper (neighbor-role) bookkeeping
    lockers: set[int] = field(default_factory=set)
    replaced_slots: set[int] = field(default_factory=set)

    def locked(self) -> bool:
        return self.lock_swap is not None

    def neighbor_ids(self) -> list[int]:
        return sorted(self.neighbors.values())

    def _unlock(self) -> None:
        self.lock_swap = None
        self.lock_role = None
        self.partner = -1
        self.awaiting = set()
        self.requested = ()
        self.partner_payload = None
        self.ready = False
        self.lockers = set()
        self.replaced_slots = set()

    # -- ring handling --------------------------------------------------------

    def on_clock_ring(self, swap_id: int, partner: int, now: float) -> list[Message]:
        if self.locked():
            self._notify_resolved(swap_id, now)
            return [Message(SWAP_FAIL, swap_id, self.id, partner)]
        self.lock_swap = swap_id
        self.lock_role = INITIATOR
        self.partner = partner
        others = sorted(v for v in self.neighbors.values() if v != partner)
        self.requested = tuple(others)
        self.awaiting = set(others)
        self.partner_payload = None
        if not others:
            self.ready = True
            return [self._swap_message()]
        return [Message(LOCK_REQUEST, swap_id, self.id, nbr) for nbr in others]

    # -- message handling -----------------------------------------------------

    def on_message(self, msg: Message, now: float) -> list[Message]:
        if msg.dst != self.id:
            raise InvariantError(f"message for {msg.dst} delivered to {self.id}")
        if msg.kind == LOCK_REQUEST:
            return self._on_lock_request(msg)
        if msg.kind == LOCK_RESPONSE:
            return self._on_lock_response(msg, now)
        if msg.kind == SWAP:
            return self._on_swap(msg, now)
        if msg.kind == SWAP_FAIL:
            return self._on_swap_fail(msg, now)
        if msg.kind == UNLOCK:
            return self._on_unlock(msg)
        if msg.kind == REPLACE:
            return self._on_replace(msg)
        raise InvariantError(f"unknown message kind {msg.kind!r}")

    def _on_lock_request(self, msg: Message) -> list[Message]:
        if not self.locked():
            self.lock_swap = msg.swap_id
            self.lock_role = NEIGHBOR
            self.lockers = {msg.src}
            self.replaced_slots = set()
            return [Message(LOCK_RESPONSE, msg.swap_id, self.id, msg.src, success=True)]
        if self.lock_swap == msg.swap_id:
            # second endpoint of the same swap locking a shared neighbor
            self.lockers.add(msg.src)
            return [Message(LOCK_RESPONSE, msg.swap_id, self.id, msg.src, success=True)]
        return [Message(LOCK_RESPONSE, msg.swap_id, self.id, msg.src, success=False)]

    def _on_lock_response(self, msg: Message, now: float) -> list[Message]:
        if self.lock_swap != msg.swap_id or self.lock_role != INITIATOR:
            # Swap already failed here.  A positive response still holds a
            # lock at the sender: our earlier Unlock may have overtaken the
            # LockRequest, so release the sender explicitly or its lock
            # would leak forever.
            if msg.success:
                return [Message(UNLOCK, msg.swap_id, self.id, msg.src)]
            return []
        if msg.src not in self.awaiting:
            return []
        if not msg.success:
            return self._fail_out(now)
        self.awaiting.discard(msg.src)
        out: list[Message] = []
        if not self.awaiting and not self.ready:
            self.ready = True
            out.append(self._swap_message())
            if self.partner_payload is not None:
                out.extend(self._execute(now))
        return out

    def _on_swap(self, msg: Message, now: float) -> list[Message]:
        if self.lock_swap != msg.swap_id or self.lock_role != INITIATOR:
            return []
        self.partner_payload = dict(msg.neighbor_payload)
        if self.ready:
            return self._execute(now)
        return []

    def _on_swap_fail(self, msg: Message, now: float) -> list[Message]:
        if self.lock_swap != msg.swap_id or self.lock_role != INITIATOR:
            return []
        out = [Message(UNLOCK, msg.swap_id, self.id, nbr) for nbr in self.requested]
        self._notify_resolved(msg.swap_id, now)
        self._unlock()
        return out

    def _on_unlock(self, msg: Message) -> list[Message]:
        if self.lock_swap == msg.swap_id and self.lock_role == NEIGHBOR:
            self._unlock()
        return []

    def _on_replace(self, msg: Message) -> list[Message]:
        tracked = self.lock_swap == msg.swap_id and self.lock_role == NEIGHBOR
        touched = self.replaced_slots if tracked else set()
        slot = None
        for s in sorted(self.neighbors):
            if self.neighbors[s] == msg.old_id and s not in touched:
                slot = s
                break
        if slot is None:
            raise InvariantError(
                f"peer {self.id}: no entry for {msg.old_id} to replace "
                f"(swap {msg.swap_id})")
        self.neighbors[slot] = msg.new_id
        if tracked:
            self.replaced_slots.add(slot)
            if len(self.replaced_slots) >= len(self.lockers):
                self._unlock()
        return []

    # -- internals ------------------------------------------------------------

    def _swap_message(self) -> Message:
        return Message(SWAP, self.lock_swap, self.id, self.partner,
                       neighbor_payload=dict(self.neighbors))

    def _fail_out(self, now: float) -> list[Message]:
        out = [Message(UNLOCK, self.lock_swap, self.id, nbr) for nbr in self.requested]
        out.append(Message(SWAP_FAIL, self.lock_swap, self.id, self.partner))
        self._notify_resolved(self.lock_swap, now)
        self._unlock()
        return out

    def _execute(self, now: float) -> list[Message]:
        sid = self.lock_swap
        partner = self.partner
        out = [Message(REPLACE, sid, self.id, nbr, old_id=self.id, new_id=partner)
               for slot, nbr in sorted(self.neighbors.items()) if nbr != partner]
        self.neighbors = {slot: (partner if v == self.id else v)
                          for slot, v in self.partner_payload.items()}
        if self.listener is not None:
            self.listener.on_execute(sid, self.id, now)
        self._unlock()
        return out

    def _notify_resolved(self, swap_id: int, now: float) -> None:
        if self.listener is not None:
            self.listener.on_endpoint_failed(swap_id, self.id, now)


@dataclass
class SwapOutcome:
    swap_id: int
    start_time: float
    end_time: float
    outcome: str  # "success" | "fail"
    initiator: int
    partner: int


@dataclass
class LockStats(SimStats):
    swaps_initiated: int = 0
    swaps_succeeded: int = 0
    swaps_failed: int = 0


class _SwapTrack:
    __slots__ = ("swap_id", "slot", "start", "initiator", "partner",
                 "executions", "resolved", "end")

    def __init__(self, swap_id: int, slot: int, start: float,
                 initiator: int, partner: int):
        self.swap_id = swap_id
        self.slot = slot
        self.start = start
        self.initiator = initiator
        self.partner = partner
        self.executions = 0
        self.resolved = 0
        self.end = start


class LockedNetwork:
    """Event-driven run of the lock-based protocol on one topology."""

    def __init__(self, topology: Topology, rate: float, master_seed: int,
                 delay_model: DelayModel):
        self.topology = topology
        self.delay_model = delay_model
        self.queue = EventQueue()
        self.queue.stats = LockStats()
        self.stats: LockStats = self.queue.stats
        self._delay_rng = PrngState(
            clocks.substream_seed(master_seed, clocks.DELAY_SPACE, 0))
        self.clocks: list[SharedClock] = clocks.slot_clocks(
            master_seed, len(topology.edges), rate)
        self._ring_cursor = [1] * len(self.clocks)
        self.actors = []
        for peer in range(topology.n):
            table = {topology.slot_index[tuple(sorted((peer, nbr)))]: nbr
                     for nbr in topology.adjacency[peer]}
            self.actors.append(PeerActor(peer, table, listener=self))
        # committed position -> peer map, advanced when a swap first executes
        self.sigma = list(range(topology.n))
        self._tracks: dict[int, _SwapTrack] = {}
        self.outcomes: list[SwapOutcome] = []
        for slot in range(len(self.clocks)):
            self.queue.schedule(self.clocks[slot].ring_time(1), CLOCK_RING,
                                slot, self._on_ring)

    # -- driver callbacks -----------------------------------------------------

    def on_execute(self, swap_id: int, peer: int, now: float) -> None:
        track = self._tracks[swap_id]
        track.executions += 1
        if track.executions == 1:
            a, b = self.topology.edges[track.slot]
            self.sigma[a], self.sigma[b] = self.sigma[b], self.sigma[a]
        self._resolve(track, now)

    def on_endpoint_failed(self, swap_id: int, peer: int, now: float) -> None:
        self._resolve(self._tracks[swap_id], now)

    def _resolve(self, track: _SwapTrack, now: float) -> None:
        track.resolved += 1
        track.end = max(track.end, now)
        if track.resolved == 2:
            if track.executions == 1:
                raise InvariantError("swap executed on one side only")
            ok = track.executions == 2
            self.stats.swaps_succeeded += ok
            self.stats.swaps_failed += not ok
            self.outcomes.append(SwapOutcome(
                track.swap_id, track.start, track.end,
                "success" if ok else "fail", track.initiator, track.partner))
            del self._tracks[track.swap_id]

    # -- event handlers -------------------------------------------------------

    def _on_ring(self, now: float, slot: int) -> None:
        ring_index = self._ring_cursor[slot]
        sid = make_swap_id(slot, ring_index)
        a, b = self.topology.edges[slot]
        i, j = self.sigma[a], self.sigma[b]
        self._tracks[sid] = _SwapTrack(sid, slot, now, i, j)
        self.stats.swaps_initiated += 1
        for actor_id, partner in ((i, j), (j, i)):
            for msg in self.actors[actor_id].on_clock_ring(sid, partner, now):
                self._send(msg, now)
        self._ring_cursor[slot] += 1
        self.queue.schedule(self.clocks[slot].ring_time(self._ring_cursor[slot]),
                            CLOCK_RING, slot, self._on_ring)

    def _on_deliver(self, now: float, msg: Message) -> None:
        for out in self.actors[msg.dst].on_message(msg, now):
            self._send(out, now)

    def _send(self, msg: Message, now: float) -> None:
        delay = self.delay_model.deliver_delay(msg.src, msg.dst, self._delay_rng)
        self.queue.schedule(now + delay, MESSAGE_DELIVERY, msg, self._on_deliver)

    # -- driving --------------------------------------------------------------

    def run(self, horizon: float, check_times: tuple[float, ...] = (),
            drain: bool = True) -> LockStats:
        """Run to the horizon; at each check time (and at the end if `drain`)
        suspend new rings, deliver everything in flight, and audit the
        structural invariants."""
        for t in sorted(check_times):
            if not 0 <= t <= horizon:
                raise ParameterError(f"check time {t} outside [0, {horizon}]")
            # a previous drain may have delivered messages past t already
            self.queue.run(max(t, self.queue.now))
            self._force_quiescence()
        self.queue.run(max(horizon, self.queue.now))
        if drain:
            self._force_quiescence()
        return self.stats

    def _force_quiescence(self) -> None:
        deferred = self.queue.drain_messages()
        self.check_quiescent()
        for ev in deferred:
            if ev.kind != CLOCK_RING:
                raise InvariantError(f"unexpected deferred event {ev.kind}")
            slot = ev.payload
            k = self._ring_cursor[slot]
            while self.clocks[slot].ring_time(k) <= self.queue.now:
                k += 1
            self._ring_cursor[slot] = k
            self.queue.schedule(self.clocks[slot].ring_time(k), CLOCK_RING,
                                slot, self._on_ring)

    # -- audits and views -----------------------------------------------------

    def check_quiescent(self) -> None:
        """Assert the invariants that must hold when no swap is in progress:
        no locks, mutual slot-consistent adjacency, and an edge set equal to
        the committed relabeling of the initial one."""
        for actor in self.actors:
            if actor.locked():
                raise InvariantError(f"peer {actor.id} still locked at quiescence")
        expected = {}
        for slot, (a, b) in enumerate(self.topology.edges):
            expected[slot] = {self.sigma[a], self.sigma[b]}
        seen: dict[int, set[int]] = {}
        for actor in self.actors:
            for slot, nbr in actor.neighbors.items():
                mutual = self.actors[nbr].neighbors.get(slot)
                if mutual != actor.id:
                    raise InvariantError(
                        f"asymmetric adjacency: {actor.id} lists {nbr} on slot "
                        f"{slot}, reverse entry is {mutual}")
                seen.setdefault(slot, set()).update((actor.id, nbr))
        if seen != expected:
            raise InvariantError("edge set diverged from the committed relabeling")

    def committed_sigma(self) -> Permutation:
        """Position -> peer mapping accumulated from successful swaps."""
        return Permutation(tuple(self.sigma))

    def neighborhood(self, peer: int) -> set[int]:
        return set(self.actors[peer].neighbors.values())

    def sample(self, peer: int, size: int, rng: PrngState) -> tuple[int, ...]:
        pool = self.actors[peer].neighbor_ids()
        if not 1 <= size <= len(pool):
            raise ParameterError(f"sample size {size} out of range for peer {peer}")
        for i in range(size):
            j = i + rng.uniform_int(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(pool[:size])


def throughput(stats: LockStats, horizon: float) -> float:
    """Successful swaps per second of simulated time."""
    if horizon <= 0:
        raise ParameterError("horizon must be positive")
    return stats.swaps_succeeded / horizon


def swap_durations(outcomes: list[SwapOutcome], outcome: str = "success") -> list[float]:
    return [o.end_time - o.start_time for o in outcomes if o.outcome == outcome]


def write_swap_outcomes(outcomes: list[SwapOutcome], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["swap_id", "start_time", "end_time", "outcome",
                         "initiator", "partner"])
        for o in outcomes:
            writer.writerow([o.swap_id, f"{o.start_time:.9g}", f"{o.end_time:.9g}",
                             o.outcome, o.initiator, o.partner])
