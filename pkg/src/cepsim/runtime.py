"""Discrete-event simulation of the split--process--merge pipeline.

The simulator walks the totally ordered event stream once. Each event is run
through the splitter (window detection, monitoring statistics), newly opened
windows are assigned by the scheduling controller, and the event is then
transmitted to every instance owning at least one of its member windows.
Operator instances are simulated, not real threads: an event's service time
is the summed in-window cost over its member windows on that instance, and
the instance's busy-until clock advances accordingly. This yields exactly
the busy-server recursion lambda_q(e') = max(0, lambda_q(e) + lambda_p(e) -
iat) per instance, reproducibly and hardware-independently.

Monitoring-window freezes and instance feedback reports fire at their
simulated times between event arrivals; feedback reflects only events whose
processing already completed, so controllers see realistically stale data.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TYPE_CHECKING

from .core import Event, LatencySample, SimClock, WindowDescriptor
from .latency_model import ModelParams
from .scheduler import Decision, InstanceView, WindowScheduler, make_scheduler
from .splitter import Splitter, StreamStats, make_policy, route_event
from .workload import CostModel, generate_stream, in_window_cost

if TYPE_CHECKING:  # pragma: no cover
    from .cli import ExperimentConfig


@dataclass(slots=True)
class _Record:
    """One processed (event, instance) pair, kept for feedback and metrics."""

    seq: int
    etype: str
    arrival: float
    start: float
    completion: float
    lambda_q: float
    lambda_p: float
    n_windows: int
    queue_len: int


@dataclass(frozen=True)
class FeedbackReport:
    """Queue summary an instance sends to the splitter at feedback instants."""

    instance: int
    queued_counts: Mapping[str, int]
    theta_bar_rep: float
    last_lambda_o: float | None
    emitted_at: float


@dataclass
class InstanceState:
    """Simulated operator instance: FIFO queue driven by a busy-until clock."""

    idx: int
    busy_until: float = 0.0
    open_windows: dict[int, WindowDescriptor] = field(default_factory=dict)
    last_arrival: float | None = None
    records: list[_Record] = field(default_factory=list)
    pending_obs: deque = field(default_factory=deque)  # (completion, etype, lambda_p_w)
    _q_cursor: int = 0  # first record with start > t
    _c_cursor: int = 0  # first record with completion > t

    def advance_q_cursor(self, t: float) -> int:
        recs = self.records
        i = self._q_cursor
        while i < len(recs) and recs[i].start <= t:
            i += 1
        self._q_cursor = i
        return i

    def make_feedback(self, now: float) -> FeedbackReport:
        """Snapshot of the queue at ``now``; only completed events count as
        reported latency, only arrived-but-unstarted events count as queued."""
        i = self.advance_q_cursor(now)
        recs = self.records
        j = self._c_cursor
        while j < len(recs) and recs[j].completion <= now:
            j += 1
        self._c_cursor = j
        last_lo = None
        if j > 0:
            r = recs[j - 1]
            last_lo = r.lambda_q + r.lambda_p
        counts: dict[str, int] = {}
        theta_sum = 0
        queued = 0
        for r in recs[i:]:
            if r.arrival > now:
                continue
            counts[r.etype] = counts.get(r.etype, 0) + 1
            theta_sum += r.n_windows
            queued += 1
        theta = theta_sum / queued if queued else 1.0
        return FeedbackReport(self.idx, counts, theta, last_lo, now)


@dataclass
class WindowRecord:
    """Per-window ground truth for prediction-accuracy analysis."""

    wid: int
    open_ts: int
    instance: int
    close_ts: int | None = None
    n_member_events: int = 0
    actual_gamma_minus: float = 0.0
    actual_gamma_plus: float = 0.0
    actual_lambda_q_peak: float = 0.0


@dataclass
class BatchRecord:
    """A maximal run of consecutive windows scheduled to one instance."""

    batch_id: int
    instance: int
    first_decision_ts: int
    wids: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class FeedbackDelay:
    """Delay between a batch's first scheduling decision and the latency and
    queue-length peaks it caused on its instance."""

    batch_id: int
    instance: int
    first_decision_ts: int
    n_windows: int
    lat_peak: float
    lat_peak_delay_ms: float
    qlen_peak: int
    qlen_peak_delay_ms: float


@dataclass
class RunMetrics:
    """Everything one simulation run produced."""

    latency_samples: list[LatencySample] = field(default_factory=list)
    sample_ts: list[int] = field(default_factory=list)
    sample_queue_len: list[int] = field(default_factory=list)
    transmissions: int = 0
    transmission_rows: list[tuple[int, int, int, int]] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    decision_ts: list[int] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    batches: list[BatchRecord] = field(default_factory=list)
    feedback_reports: list[FeedbackReport] = field(default_factory=list)
    dropped_closes: int = 0
    n_events: int = 0
    n_snapshots: int = 0

    def lambda_o_values(self, warmup_ms: float = 0.0) -> list[float]:
        return [
            s.lambda_o
            for s, ts in zip(self.latency_samples, self.sample_ts)
            if ts >= warmup_ms
        ]

    def violation_stats(self, lb_ms: float, warmup_ms: float = 0.0) -> tuple[int, float, int]:
        """(violation count, max excess over the bound in ms, samples considered)."""
        count = 0
        worst = 0.0
        considered = 0
        for s, ts in zip(self.latency_samples, self.sample_ts):
            if ts < warmup_ms:
                continue
            considered += 1
            if s.lambda_o > lb_ms:
                count += 1
                worst = max(worst, s.lambda_o - lb_ms)
        return count, worst, considered

    def feedback_delays(self) -> list[FeedbackDelay]:
        """Per-batch feedback delays, attributing to a batch every event
        processed on its instance between the batch's first scheduling
        decision and the close of its last window."""
        close_by_wid = {w.wid: w.close_ts for w in self.windows}
        by_instance: dict[int, list[int]] = {}
        for i, s in enumerate(self.latency_samples):
            by_instance.setdefault(s.instance, []).append(i)
        end_of_run = self.sample_ts[-1] if self.sample_ts else 0
        out = []
        for b in self.batches:
            closes = [close_by_wid.get(wid) for wid in b.wids]
            span_end = max((c for c in closes if c is not None), default=None)
            if span_end is None or any(c is None for c in closes):
                span_end = end_of_run
            lat_peak = -1.0
            lat_ts = b.first_decision_ts
            qlen_peak = -1
            qlen_ts = b.first_decision_ts
            for i in by_instance.get(b.instance, ()):
                ts = self.sample_ts[i]
                if ts < b.first_decision_ts or ts > span_end:
                    continue
                s = self.latency_samples[i]
                if s.lambda_o > lat_peak:
                    lat_peak = s.lambda_o
                    lat_ts = ts
                q = self.sample_queue_len[i]
                if q > qlen_peak:
                    qlen_peak = q
                    qlen_ts = ts
            if lat_peak < 0:
                continue  # batch saw no events
            out.append(
                FeedbackDelay(
                    b.batch_id,
                    b.instance,
                    b.first_decision_ts,
                    len(b.wids),
                    lat_peak,
                    float(lat_ts - b.first_decision_ts),
                    qlen_peak,
                    float(qlen_ts - b.first_decision_ts),
                )
            )
        return out


def measure_feedback_delay(metrics: RunMetrics, batch_id: int) -> FeedbackDelay | None:
    """Feedback delay of one scheduling batch; None if it processed no events."""
    for fd in metrics.feedback_delays():
        if fd.batch_id == batch_id:
            return fd
    return None


def merge(streams: Sequence[Iterable], key=None) -> list:
    """Merge locally ordered instance output streams into one deterministic,
    globally ordered stream. Duplicates from replicated windows pass through."""
    return list(heapq.merge(*streams, key=key))


def simulate(
    events: Sequence[Event],
    policy,
    cost_model: CostModel,
    scheduler: WindowScheduler,
    model_params: ModelParams,
    mtime_ms: float,
    feedback_interval_ms: float | None = None,
    transfer_delay_ms: float = 0.0,
    feedback_delivery_delay_ms: float = 0.0,
) -> RunMetrics:
    """Run the split--process--merge pipeline over a prepared event stream.

    Deterministic: the same inputs produce identical metrics.
    """
    if feedback_interval_ms is None:
        feedback_interval_ms = mtime_ms / 10.0
    n_instances = scheduler.n
    stats = StreamStats(model_params.n_iat_bins, model_params.n_lat_bins, mtime_ms)
    splitter = Splitter(policy, stats)
    instances = [InstanceState(i) for i in range(n_instances)]
    delivered: list[FeedbackReport | None] = [None] * n_instances
    pending_reports: deque[tuple[float, FeedbackReport]] = deque()
    metrics = RunMetrics(n_events=len(events))
    clock = SimClock()

    window_rows: dict[int, WindowRecord] = {}
    next_freeze = mtime_ms
    next_feedback = feedback_interval_ms
    last_batch_instance: int | None = None

    def drain_observations(now: float) -> None:
        for inst in instances:
            obs = inst.pending_obs
            while obs and obs[0][0] <= now:
                _, etype, lam = obs.popleft()
                stats.observe_latency(etype, lam)

    def deliver_reports(now: float) -> None:
        while pending_reports and pending_reports[0][0] <= now:
            _, rep = pending_reports.popleft()
            delivered[rep.instance] = rep

    def handle_boundaries(now: float) -> None:
        nonlocal next_freeze, next_feedback
        while min(next_freeze, next_feedback) <= now:
            if next_freeze <= next_feedback:
                t = next_freeze
                drain_observations(t)
                stats.end_monitoring_window(t)
                metrics.n_snapshots += 1
                next_freeze += mtime_ms
            else:
                t = next_feedback
                drain_observations(t)
                for inst in instances:
                    rep = inst.make_feedback(t)
                    pending_reports.append((t + feedback_delivery_delay_ms, rep))
                    metrics.feedback_reports.append(rep)
                next_feedback += feedback_interval_ms
            deliver_reports(t)

    def views() -> list[InstanceView]:
        out = []
        for inst in instances:
            rep = delivered[inst.idx]
            if rep is None:
                out.append(InstanceView(open_window_count=len(inst.open_windows)))
            else:
                out.append(
                    InstanceView(
                        open_window_count=len(inst.open_windows),
                        queued_counts=rep.queued_counts,
                        theta_bar_rep=rep.theta_bar_rep,
                        last_lambda_o=rep.last_lambda_o,
                    )
                )
        return out

    for e in events:
        handle_boundaries(e.ts)
        drain_observations(e.ts)
        deliver_reports(e.ts)
        clock.advance_to(e.ts)

        res = splitter.process(e)
        for w in res.closed:
            if w.assigned_instance is not None:
                instances[w.assigned_instance].open_windows.pop(w.wid, None)
            row = window_rows.get(w.wid)
            if row is not None:
                row.close_ts = w.close_ts

        for w in res.opened:
            decision = scheduler.schedule(w, stats.snapshot, views())
            w.assigned_instance = decision.instance
            instances[decision.instance].open_windows[w.wid] = w
            metrics.decisions.append(decision)
            metrics.decision_ts.append(e.ts)
            if decision.instance != last_batch_instance:
                metrics.batches.append(
                    BatchRecord(len(metrics.batches), decision.instance, e.ts)
                )
                last_batch_instance = decision.instance
            metrics.batches[-1].wids.append(w.wid)
            window_rows[w.wid] = WindowRecord(w.wid, w.open_ts, decision.instance)

        targets = route_event(e, res.memberships)
        for idx in targets:
            inst = instances[idx]
            wins = [w for w in res.memberships if w.assigned_instance == idx]
            arrival = e.ts + transfer_delay_ms
            lambda_q = max(0.0, inst.busy_until - arrival)
            start = arrival + lambda_q
            lambda_p = 0.0
            costs = []
            for w in wins:
                c = in_window_cost(cost_model, e, w.member_count_per_type)
                w.member_count_per_type[e.etype] = w.member_count_per_type.get(e.etype, 0) + 1
                costs.append(c)
                lambda_p += c
            completion = start + lambda_p
            inst.busy_until = completion
            for c in costs:
                inst.pending_obs.append((completion, e.etype, c))

            queue_len = len(inst.records) - inst.advance_q_cursor(arrival) + 1
            gamma = None
            if inst.last_arrival is not None:
                gamma = lambda_p - (arrival - inst.last_arrival)
            inst.last_arrival = arrival
            for w in wins:
                row = window_rows.get(w.wid)
                if row is None:
                    continue
                row.n_member_events += 1
                row.actual_lambda_q_peak = max(row.actual_lambda_q_peak, lambda_q)
                if gamma is not None:
                    if gamma > 0:
                        row.actual_gamma_minus += gamma
                    else:
                        row.actual_gamma_plus += gamma

            inst.records.append(
                _Record(e.seq, e.etype, arrival, start, completion, lambda_q, lambda_p, len(wins), queue_len)
            )
            metrics.latency_samples.append(LatencySample.make(e.seq, idx, lambda_q, lambda_p))
            metrics.sample_ts.append(e.ts)
            metrics.sample_queue_len.append(queue_len)
        metrics.transmissions += len(targets)
        metrics.transmission_rows.append((e.seq, e.ts, len(res.memberships), len(targets)))

    # drain: keep the monitoring and feedback machinery running until every
    # instance finished its queued work
    end_time = max([clock.now] + [inst.busy_until for inst in instances])
    handle_boundaries(end_time)
    drain_observations(end_time)
    deliver_reports(end_time)
    clock.advance_to(end_time)

    metrics.dropped_closes = splitter.dropped_closes
    metrics.windows = sorted(window_rows.values(), key=lambda r: r.wid)
    return metrics


def run(cfg: "ExperimentConfig") -> RunMetrics:
    """Generate the configured workload and simulate it."""
    events = generate_stream(cfg.workload)
    policy = make_policy(cfg.workload)
    scheduler = make_scheduler(cfg.scheduler)
    return simulate(
        events,
        policy,
        cfg.workload.cost,
        scheduler,
        cfg.model,
        mtime_ms=cfg.mtime_ms,
        feedback_interval_ms=cfg.feedback_interval_ms,
        transfer_delay_ms=cfg.transfer_delay_ms,
        feedback_delivery_delay_ms=cfg.feedback_delivery_delay_ms,
    )
