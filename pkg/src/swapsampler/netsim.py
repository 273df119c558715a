"""Deterministic discrete-event engine with pluggable message-delay models.

Events pop in (time, sequence) order; the sequence number breaks time ties
in scheduling order, so a run is a pure function of its inputs.  Handlers may
only schedule into the present or future.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .clocks import PrngState
from .errors import InvariantError, ParameterError

CLOCK_RING = "clock-ring"
MESSAGE_DELIVERY = "message-delivery"


@dataclass(order=True)
class SimEvent:
    time: float
    sequence: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False)
    handler: Callable[[float, Any], None] = field(compare=False)


class DelayModel:
    """One-way message delay: zero, i.i.d. uniform per message, or a fixed
    per-pair trace matrix.  Construction takes milliseconds, delays are
    returned in seconds."""

    ZERO = "zero"
    UNIFORM = "uniform"
    TRACE = "trace"

    def __init__(self, kind: str, delta_max_ms: float = 0.0,
                 matrix_ms: np.ndarray | None = None):
        self.kind = kind
        self.delta_max = delta_max_ms / 1000.0
        if kind == self.TRACE:
            if matrix_ms is None:
                raise ParameterError("trace model needs a delay matrix")
            matrix_ms = np.asarray(matrix_ms, dtype=float)
            if matrix_ms.ndim != 2 or matrix_ms.shape[0] != matrix_ms.shape[1]:
                raise ParameterError("trace matrix must be square")
            if (matrix_ms < 0).any():
                raise ParameterError("trace delays must be nonnegative")
            if np.diagonal(matrix_ms).any():
                raise ParameterError("trace matrix diagonal must be zero")
            self.matrix = matrix_ms / 1000.0
        elif kind not in (self.ZERO, self.UNIFORM):
            raise ParameterError(f"unknown delay model {kind!r}")

    @classmethod
    def zero(cls) -> "DelayModel":
        return cls(cls.ZERO)

    @classmethod
    def uniform(cls, delta_max_ms: float) -> "DelayModel":
        if delta_max_ms < 0:
            raise ParameterError("delta_max must be nonnegative")
        return cls(cls.UNIFORM, delta_max_ms=delta_max_ms)

    @classmethod
    def trace(cls, matrix_ms: np.ndarray) -> "DelayModel":
        return cls(cls.TRACE, matrix_ms=matrix_ms)

    def deliver_delay(self, src: int, dst: int, rng: PrngState) -> float:
        if src == dst:
            raise ParameterError("no self-addressed messages")
        if self.kind == self.ZERO:
            return 0.0
        if self.kind == self.UNIFORM:
            return rng.uniform() * self.delta_max
        try:
            return float(self.matrix[src][dst])
        except IndexError as exc:
            raise ParameterError(f"trace lookup ({src}, {dst}) out of bounds") from exc


def load_trace(path: str | Path) -> np.ndarray:
    """n x n one-way delay matrix in milliseconds, CSV, zero diagonal."""
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    matrix = np.array(rows, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ParameterError(f"{path}: trace must be a square matrix")
    return matrix


@dataclass
class SimStats:
    events_processed: int = 0
    messages_sent: int = 0
    messages_delivered: int = 0


class EventQueue:
    """Single-owner event loop with monotone time."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._next_seq = 0
        self.now = 0.0
        self.stats = SimStats()

    def schedule(self, time: float, kind: str, payload: Any,
                 handler: Callable[[float, Any], None]) -> None:
        if time < self.now:
            raise InvariantError(
                f"event scheduled at {time} before current time {self.now}")
        heapq.heappush(self._heap, SimEvent(time, self._next_seq, kind, payload, handler))
        self._next_seq += 1
        if kind == MESSAGE_DELIVERY:
            self.stats.messages_sent += 1

    def pending(self) -> int:
        return len(self._heap)

    def pending_messages(self) -> int:
        return sum(1 for e in self._heap if e.kind == MESSAGE_DELIVERY)

    def peek_time(self) -> float:
        return self._heap[0].time if self._heap else float("inf")

    def run(self, horizon: float) -> SimStats:
        """Process every event with time <= horizon in (time, sequence)
        order; leaves later events pending and advances `now` to the
        horizon."""
        if horizon < self.now:
            raise ParameterError("horizon precedes current time")
        while self._heap and self._heap[0].time <= horizon:
            ev = heapq.heappop(self._heap)
            self.now = ev.time
            self.stats.events_processed += 1
            if ev.kind == MESSAGE_DELIVERY:
                self.stats.messages_delivered += 1
            ev.handler(ev.time, ev.payload)
        self.now = horizon
        return self.stats

    def drain_messages(self) -> list[SimEvent]:
        """Force quiescence: deliver message events (including ones sent
        while draining) until none remain, advancing time as they deliver.
        Non-message events are removed and returned so the caller can
        reschedule them past the drain."""
        deferred = []
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.kind != MESSAGE_DELIVERY:
                deferred.append(ev)
                continue
            self.now = max(self.now, ev.time)
            self.stats.events_processed += 1
            self.stats.messages_delivered += 1
            ev.handler(ev.time, ev.payload)
        return deferred
