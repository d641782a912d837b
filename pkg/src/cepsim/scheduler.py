"""Window-scheduling controllers: Round-Robin, latency-reactive, model-based.

All three share one interface: given a newly opened window and the current
view of the operator instances, pick the instance the window is assigned to.
The reactive and model-based controllers batch onto the current instance
until their criterion fails, then move to the next instance Round-Robin
style and adopt it as the new batching target without re-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import ConfigurationError, WindowDescriptor
from .latency_model import LatencyPrediction, ModelParams, predict
from .splitter import StreamStatsSnapshot


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str  # round_robin | reactive | model_based
    n_instances: int = 1
    th_ms: float | None = None  # reactive threshold
    lb_ms: float | None = None  # model_based latency bound
    model: ModelParams = field(default_factory=ModelParams)

    def validate(self) -> None:
        if self.kind not in ("round_robin", "reactive", "model_based"):
            raise ConfigurationError(
                f"scheduler.kind must be round_robin|reactive|model_based, got {self.kind!r}"
            )
        if self.n_instances < 1:
            raise ConfigurationError(f"scheduler.n_instances must be >= 1, got {self.n_instances}")
        if self.kind == "reactive" and (self.th_ms is None or self.th_ms <= 0):
            raise ConfigurationError(f"scheduler.th_ms must be > 0 for reactive, got {self.th_ms}")
        if self.kind == "model_based":
            if self.lb_ms is None or self.lb_ms <= 0:
                raise ConfigurationError(f"scheduler.lb_ms must be > 0 for model_based, got {self.lb_ms}")
            self.model.validate()


@dataclass(frozen=True)
class InstanceView:
    """What a controller may see of one operator instance: its open-window
    count and the content of its last delivered feedback report."""

    open_window_count: int = 0
    queued_counts: Mapping[str, float] = field(default_factory=dict)
    theta_bar_rep: float = 1.0
    last_lambda_o: float | None = None


@dataclass(frozen=True)
class Decision:
    wid: int
    instance: int
    kind: str
    prediction: LatencyPrediction | None = None
    observed_lambda_o: float | None = None


class RoundRobinScheduler:
    """Cycles through instances, one window each."""

    kind = "round_robin"

    def __init__(self, cfg: SchedulerConfig):
        self.n = cfg.n_instances
        self.cursor = 0

    def schedule(
        self,
        window: WindowDescriptor,
        snapshot: StreamStatsSnapshot,
        instances: Sequence[InstanceView],
    ) -> Decision:
        idx = self.cursor
        self.cursor = (self.cursor + 1) % self.n
        return Decision(window.wid, idx, self.kind)


class ReactiveScheduler:
    """Batches onto the current instance until its last reported operational
    latency reaches the threshold, then advances."""

    kind = "reactive"

    def __init__(self, cfg: SchedulerConfig):
        self.n = cfg.n_instances
        self.th_ms = cfg.th_ms
        self.cursor = 0

    def schedule(
        self,
        window: WindowDescriptor,
        snapshot: StreamStatsSnapshot,
        instances: Sequence[InstanceView],
    ) -> Decision:
        observed = instances[self.cursor].last_lambda_o
        if observed is not None and observed >= self.th_ms:
            self.cursor = (self.cursor + 1) % self.n
        return Decision(window.wid, self.cursor, self.kind, observed_lambda_o=observed)


class ModelBasedScheduler:
    """Batches onto the current instance while the predicted operational
    latency peak stays within the latency bound; otherwise assigns to the
    next instance without re-checking it."""

    kind = "model_based"

    def __init__(self, cfg: SchedulerConfig):
        self.n = cfg.n_instances
        self.lb_ms = cfg.lb_ms
        self.params = cfg.model
        self.cursor = 0

    def schedule(
        self,
        window: WindowDescriptor,
        snapshot: StreamStatsSnapshot,
        instances: Sequence[InstanceView],
    ) -> Decision:
        cand = instances[self.cursor]
        pred = predict(
            snapshot,
            theta_hat=cand.open_window_count + 1,
            params=self.params,
            queued_counts=cand.queued_counts,
            theta_bar_rep=cand.theta_bar_rep,
        )
        if pred.lambda_o_max > self.lb_ms:
            self.cursor = (self.cursor + 1) % self.n
        return Decision(window.wid, self.cursor, self.kind, prediction=pred)


WindowScheduler = RoundRobinScheduler | ReactiveScheduler | ModelBasedScheduler


def make_scheduler(cfg: SchedulerConfig) -> WindowScheduler:
    cfg.validate()
    if cfg.kind == "round_robin":
        return RoundRobinScheduler(cfg)
    if cfg.kind == "reactive":
        return ReactiveScheduler(cfg)
    return ModelBasedScheduler(cfg)
