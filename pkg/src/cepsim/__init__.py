"""Deterministic simulator for window-based data-parallel complex event
processing, with Round-Robin, latency-reactive, and model-based batch
scheduling controllers."""

from .core import (
    CepSimError,
    ConfigurationError,
    CostModelError,
    Event,
    LatencySample,
    SimClock,
    WindowDescriptor,
    compare_events,
    event_sort_key,
)
from .latency_model import (
    LatencyPrediction,
    ModelParams,
    gains_from_event_values,
    lindley_peak,
    predict,
    predict_alpha_tcount,
    predict_event_counts,
    predict_gains,
    predict_lambda_q_init,
    predict_overlap,
    predict_peak,
)
from .runtime import (
    FeedbackReport,
    InstanceState,
    RunMetrics,
    measure_feedback_delay,
    merge,
    run,
    simulate,
)
from .scheduler import Decision, InstanceView, SchedulerConfig, make_scheduler
from .splitter import (
    Bin,
    KeyedAperiodicPolicy,
    Splitter,
    StreamStats,
    StreamStatsSnapshot,
    TimeWindowPolicy,
    make_policy,
    route_event,
)
from .workload import (
    BurstIat,
    ConstantIat,
    CostModel,
    ExponentialIat,
    ScopeProfile,
    SinusoidalExponentialIat,
    WorkloadConfig,
    generate_stream,
    in_window_cost,
)

__version__ = "0.1.0"
