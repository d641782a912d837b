"""Window detection, event routing, and the splitter's monitoring statistics.

The splitter watches the inbound stream inside tumbling monitoring windows of
``mtime_ms``. At the end of each monitoring window it freezes a snapshot:
equal-width bins over inter-arrival times and per-type in-window processing
latencies, event-type ratios, measured window scope and shift, and the
T-COUNT transition counters. Bin boundaries for a monitoring window come from
the observed [min, max] range of the previous one; values outside that range
clamp into the edge bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .core import Event, WindowDescriptor


@dataclass
class Bin:
    """One equal-width bin with Welford accumulators."""

    lo: float
    hi: float
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def sigma(self) -> float:
        # population standard deviation; 0 for empty bins
        if self.count == 0:
            return 0.0
        return math.sqrt(self.m2 / self.count)


@dataclass(frozen=True)
class BinStat:
    """Frozen view of one bin inside a snapshot."""

    lo: float
    hi: float
    count: int
    mean: float
    sigma: float
    weight: float


@dataclass(frozen=True)
class PopulationStat:
    """Whole-population moments of one measured quantity."""

    count: int
    mean: float
    sigma: float
    lo: float
    hi: float


_EMPTY_POP = PopulationStat(0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class StreamStatsSnapshot:
    """Immutable statistics frozen at the end of one monitoring window."""

    index: int
    frozen_at: float
    stale: bool
    event_count: int
    iat_bins: tuple[BinStat, ...]
    iat_pop: PopulationStat
    lat_bins: Mapping[str, tuple[BinStat, ...]]
    lat_pop: Mapping[str, PopulationStat]
    type_ratio: Mapping[str, float]
    ws_est: float
    delta_est: float
    c_minus: int
    c_plus: int
    c_trans: int
    t_minus_types: frozenset[str]
    t_plus_types: frozenset[str]


EMPTY_SNAPSHOT = StreamStatsSnapshot(
    index=-1,
    frozen_at=0.0,
    stale=True,
    event_count=0,
    iat_bins=(),
    iat_pop=_EMPTY_POP,
    lat_bins={},
    lat_pop={},
    type_ratio={},
    ws_est=0.0,
    delta_est=0.0,
    c_minus=0,
    c_plus=0,
    c_trans=0,
    t_minus_types=frozenset(),
    t_plus_types=frozenset(),
)


def _bin_values(values: Sequence[float], n_bins: int, vrange: tuple[float, float] | None) -> tuple[tuple[BinStat, ...], PopulationStat]:
    """Bin ``values`` into ``n_bins`` equal-width bins over ``vrange``.

    When ``vrange`` is None (first monitoring window) the values' own range is
    used. Out-of-range values clamp into the edge bins. Also returns the
    population moments of the values.
    """
    n = len(values)
    vmin = min(values)
    vmax = max(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    pop = PopulationStat(n, mean, math.sqrt(var), vmin, vmax)

    lo, hi = vrange if vrange is not None else (vmin, vmax)
    width = (hi - lo) / n_bins
    bins = [Bin(lo + i * width, lo + (i + 1) * width) for i in range(n_bins)]
    if width > 0:
        last = n_bins - 1
        for v in values:
            idx = int((v - lo) / width)
            if idx < 0:
                idx = 0
            elif idx > last:
                idx = last
            bins[idx].add(v)
    else:
        for v in values:
            bins[0].add(v)
    stats = tuple(
        BinStat(b.lo, b.hi, b.count, b.mean, b.sigma, b.count / n) for b in bins
    )
    return stats, pop


def _ratio_split(means: Mapping[str, float]) -> tuple[frozenset[str], frozenset[str]]:
    """Split event types into high-cost (T-) and low-cost (T+) halves.

    Types are ranked by mean in-window latency; the upper half goes to T-,
    with the median type and ties at the boundary resolved toward T-.
    """
    if not means:
        return frozenset(), frozenset()
    ranked = sorted(means, key=lambda t: (-means[t], t))
    cut = (len(ranked) + 1) // 2
    threshold = means[ranked[cut - 1]]
    t_minus = frozenset(t for t in ranked if means[t] >= threshold)
    t_plus = frozenset(t for t in ranked if means[t] < threshold)
    return t_minus, t_plus


class StreamStats:
    """Live monitoring-window accumulators feeding the latency model.

    Single-writer: only the simulation thread mutates it. Snapshots returned
    by :meth:`end_monitoring_window` are immutable.
    """

    def __init__(self, n_iat_bins: int, n_lat_bins: int, mtime_ms: float, window_mode: str = "tumbling"):
        if n_iat_bins < 1 or n_lat_bins < 1:
            raise ValueError("bin counts must be >= 1")
        if window_mode != "tumbling":
            raise ValueError(f"only tumbling monitoring windows are supported, got {window_mode!r}")
        self.n_iat_bins = n_iat_bins
        self.n_lat_bins = n_lat_bins
        self.mtime_ms = mtime_ms
        self.window_mode = window_mode
        self.snapshot = EMPTY_SNAPSHOT
        self._iat_range: tuple[float, float] | None = None
        self._lat_ranges: dict[str, tuple[float, float]] = {}
        self._reset_window()

    def _reset_window(self) -> None:
        self._iats: list[float] = []
        self._lats: dict[str, list[float]] = {}
        self._type_counts: dict[str, int] = {}
        self._ws_sum = 0.0
        self._ws_n = 0
        self._delta_sum = 0.0
        self._delta_n = 0
        self._last_open_ts: float | None = None
        self._c_minus = 0
        self._c_plus = 0
        self._c_trans = 0
        self._last_group: str | None = None

    # -- observations ------------------------------------------------------

    def observe_event(self, e: Event, prev_ts: int | None) -> None:
        """Record one arrival: its inter-arrival gap, type, and T-COUNT group.

        The first event of a stream has no gap and is skipped for iat. Group
        membership comes from the last snapshot's type ranking; events of
        types without latency history stay ungrouped.
        """
        if prev_ts is not None:
            self._iats.append(float(e.ts - prev_ts))
        self._type_counts[e.etype] = self._type_counts.get(e.etype, 0) + 1
        snap = self.snapshot
        if e.etype in snap.t_minus_types:
            group = "-"
            self._c_minus += 1
        elif e.etype in snap.t_plus_types:
            group = "+"
            self._c_plus += 1
        else:
            return
        if self._last_group is not None and group != self._last_group:
            self._c_trans += 1
        self._last_group = group

    def observe_latency(self, etype: str, lambda_p_w: float) -> None:
        """Record one reported in-window processing latency for a type."""
        self._lats.setdefault(etype, []).append(lambda_p_w)

    def observe_window_opened(self, open_ts: float) -> None:
        if self._last_open_ts is not None:
            self._delta_sum += open_ts - self._last_open_ts
            self._delta_n += 1
        self._last_open_ts = open_ts

    def observe_window_closed(self, scope_ms: float) -> None:
        self._ws_sum += scope_ms
        self._ws_n += 1

    # -- freezing ----------------------------------------------------------

    def end_monitoring_window(self, now: float) -> StreamStatsSnapshot:
        """Freeze the current monitoring window into a snapshot and reset.

        An empty window returns the previous snapshot flagged stale; bin
        boundaries and estimates are left untouched so scheduling never
        blocks on statistics.
        """
        observed = bool(self._iats) or bool(self._lats) or bool(self._type_counts)
        if not observed:
            self.snapshot = replace(self.snapshot, stale=True, frozen_at=now)
            return self.snapshot

        prev = self.snapshot
        total = sum(self._type_counts.values())

        if self._iats:
            iat_bins, iat_pop = _bin_values(self._iats, self.n_iat_bins, self._iat_range)
            self._iat_range = (iat_pop.lo, iat_pop.hi)
        else:
            iat_bins, iat_pop = prev.iat_bins, prev.iat_pop

        lat_bins: dict[str, tuple[BinStat, ...]] = dict(prev.lat_bins)
        lat_pop: dict[str, PopulationStat] = dict(prev.lat_pop)
        for etype, values in self._lats.items():
            bins, pop = _bin_values(values, self.n_lat_bins, self._lat_ranges.get(etype))
            self._lat_ranges[etype] = (pop.lo, pop.hi)
            lat_bins[etype] = bins
            lat_pop[etype] = pop

        type_ratio = (
            {t: c / total for t, c in sorted(self._type_counts.items())}
            if total
            else dict(prev.type_ratio)
        )
        ws_est = self._ws_sum / self._ws_n if self._ws_n else prev.ws_est
        delta_est = self._delta_sum / self._delta_n if self._delta_n else prev.delta_est
        t_minus, t_plus = _ratio_split({t: p.mean for t, p in lat_pop.items()})

        self.snapshot = StreamStatsSnapshot(
            index=prev.index + 1,
            frozen_at=now,
            stale=False,
            event_count=total,
            iat_bins=iat_bins,
            iat_pop=iat_pop,
            lat_bins=lat_bins,
            lat_pop=lat_pop,
            type_ratio=type_ratio,
            ws_est=ws_est,
            delta_est=delta_est,
            c_minus=self._c_minus,
            c_plus=self._c_plus,
            c_trans=self._c_trans,
            t_minus_types=t_minus,
            t_plus_types=t_plus,
        )
        self._reset_window()
        return self.snapshot


# ---------------------------------------------------------------------------
# Window detection and routing


@dataclass
class SplitResult:
    opened: list[WindowDescriptor] = field(default_factory=list)
    closed: list[WindowDescriptor] = field(default_factory=list)
    memberships: list[WindowDescriptor] = field(default_factory=list)


class KeyedAperiodicPolicy:
    """Traffic-style windows: an open-type event with a fresh key opens a
    window; the close-type event with the matching key closes it."""

    def __init__(self, open_etype: str = "L1", close_etype: str = "L2"):
        self.open_etype = open_etype
        self.close_etype = close_etype
        self._by_key: dict[str, int] = {}  # key -> wid

    def closes(self, e: Event, open_windows: Mapping[int, WindowDescriptor]) -> list[tuple[int, int]]:
        if e.etype != self.close_etype or e.key is None:
            return []
        wid = self._by_key.pop(e.key, None)
        if wid is None:
            return []
        return [(wid, e.ts)]

    def opens(self, e: Event) -> bool:
        # a key already holding an open window cannot open a second one
        return e.etype == self.open_etype and e.key is not None and e.key not in self._by_key

    def register(self, e: Event, wid: int) -> None:
        self._by_key[e.key] = wid

    def has_pending_close(self, e: Event) -> bool:
        return e.etype == self.close_etype


class TimeWindowPolicy:
    """Face-style windows: an opener event starts a window that closes at the
    first event with ts >= open_ts + ws."""

    def __init__(self, opener_etype: str, ws_ms: float):
        self.opener_etype = opener_etype
        self.ws_ms = ws_ms

    def closes(self, e: Event, open_windows: Mapping[int, WindowDescriptor]) -> list[tuple[int, int]]:
        out = []
        for wid, w in open_windows.items():
            close_ts = w.open_ts + self.ws_ms
            if e.ts >= close_ts:
                out.append((wid, int(close_ts)))
        return out

    def opens(self, e: Event) -> bool:
        return e.etype == self.opener_etype

    def register(self, e: Event, wid: int) -> None:
        pass

    def has_pending_close(self, e: Event) -> bool:
        return False


def make_policy(cfg) -> KeyedAperiodicPolicy | TimeWindowPolicy:
    """Window-detection policy for a workload config."""
    if cfg.scenario == "traffic":
        return KeyedAperiodicPolicy()
    return TimeWindowPolicy(cfg.opener_etype, cfg.scope.ws_ms)


class Splitter:
    """Detects window opens/closes and computes event memberships.

    Windows comprise every event between their opening and closing event
    (inclusive), so membership is purely temporal once open/close instants
    are fixed by the policy.
    """

    def __init__(self, policy, stats: StreamStats | None = None):
        self.policy = policy
        self.stats = stats
        self.open_windows: dict[int, WindowDescriptor] = {}
        self.dropped_closes = 0
        self._next_wid = 0
        self._prev_ts: int | None = None

    def process(self, e: Event) -> SplitResult:
        """Detect windows for one event and list its member windows.

        Returns windows opened by ``e``, windows closed at ``e`` (the closing
        event is itself a member when its timestamp does not exceed the
        close), and all member windows in wid order.
        """
        res = SplitResult()
        claimed_close = self.policy.has_pending_close(e)
        for wid, close_ts in self.policy.closes(e, self.open_windows):
            w = self.open_windows.pop(wid)
            w.close_ts = close_ts
            res.closed.append(w)
            if self.stats is not None:
                self.stats.observe_window_closed(w.scope_ms)
        if claimed_close and not res.closed:
            self.dropped_closes += 1

        if self.policy.opens(e):
            w = WindowDescriptor(wid=self._next_wid, start_seq=e.seq, open_ts=e.ts)
            self._next_wid += 1
            self.open_windows[w.wid] = w
            self.policy.register(e, w.wid)
            res.opened.append(w)
            if self.stats is not None:
                self.stats.observe_window_opened(float(e.ts))

        members = [w for w in res.closed if e.ts <= w.close_ts]
        members.extend(self.open_windows.values())
        members.sort(key=lambda w: w.wid)
        res.memberships = members

        if self.stats is not None:
            self.stats.observe_event(e, self._prev_ts)
        self._prev_ts = e.ts
        return res


def route_event(e: Event, memberships: Sequence[WindowDescriptor]) -> list[int]:
    """Instances that must receive ``e``: the deduplicated owners of its
    member windows, in ascending index order."""
    return sorted({w.assigned_instance for w in memberships if w.assigned_instance is not None})
