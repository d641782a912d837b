"""Domain types, simulated clock, event ordering, and shared errors.

All times are simulated milliseconds: event timestamps are integers, latency
arithmetic is done in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class CepSimError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(CepSimError):
    """A configuration value is missing, malformed, or out of range."""


class CostModelError(CepSimError):
    """A cost model was asked to price an event type it does not know."""


@dataclass(frozen=True, slots=True)
class Event:
    """One stream element; the unit of transmission and processing cost.

    ``seq`` strictly increases in arrival order and ``ts`` is non-decreasing
    with ``seq``, so (ts, seq) is a total order over any stream.
    """

    seq: int
    ts: int
    etype: str
    key: str | None = None
    payload_cost_hint: float | None = None


def event_sort_key(e: Event) -> tuple[int, int]:
    return (e.ts, e.seq)


def compare_events(a: Event, b: Event) -> int:
    """Three-way comparison by (ts, seq): -1, 0, or 1."""
    ka = (a.ts, a.seq)
    kb = (b.ts, b.seq)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


@dataclass(slots=True)
class WindowDescriptor:
    """An open or closed window and the operator instance that owns it.

    ``member_count_per_type`` is filled as member events are processed; cost
    models read it to price an event against the window's accumulated state.
    """

    wid: int
    start_seq: int
    open_ts: int
    close_ts: int | None = None
    assigned_instance: int | None = None
    member_count_per_type: dict[str, int] = field(default_factory=dict)

    @property
    def is_open(self) -> bool:
        return self.close_ts is None

    @property
    def scope_ms(self) -> float | None:
        """Window scope: time between opening and closing event, if closed."""
        if self.close_ts is None:
            return None
        return float(self.close_ts - self.open_ts)

    def contains_ts(self, ts: int) -> bool:
        if ts < self.open_ts:
            return False
        return self.close_ts is None or ts <= self.close_ts


class SimClock:
    """Monotone simulated clock in milliseconds."""

    __slots__ = ("now",)

    def __init__(self, now: float = 0.0):
        self.now = now

    def advance_to(self, t: float) -> None:
        if t < self.now:
            raise ValueError(f"simulated clock cannot go backwards: {t} < {self.now}")
        self.now = t


@dataclass(frozen=True, slots=True)
class LatencySample:
    """Latency record of one event on one instance.

    ``lambda_o == lambda_q + lambda_p`` exactly, by construction via
    :meth:`make`.
    """

    event_seq: int
    instance: int
    lambda_q: float
    lambda_p: float
    lambda_o: float

    @classmethod
    def make(cls, event_seq: int, instance: int, lambda_q: float, lambda_p: float) -> "LatencySample":
        return cls(event_seq, instance, lambda_q, lambda_p, lambda_q + lambda_p)
