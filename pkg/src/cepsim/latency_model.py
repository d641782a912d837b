"""Queuing/operational latency prediction for batch scheduling decisions.

The model predicts, for a candidate decision that batches a newly opened
window onto an instance already holding ``theta_hat - 1`` open windows:

* the number of events the window will contain, split by type,
* the average number of windows each of those events will belong to,
* the total negative and positive gains (queue growth/drain), combined from
  latency bins and inter-arrival bins in a worst-case pairing,
* a compensation factor for the interleaving of growth and drain,
* the initial queue already present on the instance,

and from those the peak queuing latency and peak operational latency.
Everything here is a pure function over an immutable statistics snapshot.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .splitter import StreamStatsSnapshot

_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Tuning knobs of the latency model.

    ``delta_iat`` biases monitored inter-arrival times downward and
    ``delta_lp`` biases monitored processing latencies upward, both in units
    of the respective population standard deviation, which makes the model
    pessimistic under changing workloads.
    """

    n_iat_bins: int = 8
    n_lat_bins: int = 4
    delta_iat: float = 0.0
    delta_lp: float = 0.0
    alpha_mode: str = "tcount"  # tcount | fixed
    alpha_fixed: float = 0.0
    iat_floor_ms: float = 0.01

    def validate(self) -> None:
        from .core import ConfigurationError

        if self.n_iat_bins < 1 or self.n_lat_bins < 1:
            raise ConfigurationError("model bin counts must be >= 1")
        if self.delta_iat < 0 or self.delta_lp < 0:
            raise ConfigurationError("model bias factors must be >= 0")
        if self.alpha_mode not in ("tcount", "fixed"):
            raise ConfigurationError(f"model.alpha_mode must be tcount|fixed, got {self.alpha_mode!r}")
        if not 0.0 <= self.alpha_fixed <= 1.0:
            raise ConfigurationError(f"model.alpha_fixed must be in [0,1], got {self.alpha_fixed}")
        if self.iat_floor_ms <= 0:
            raise ConfigurationError(f"model.iat_floor_ms must be > 0, got {self.iat_floor_ms}")


@dataclass(frozen=True)
class LatencyPrediction:
    """All intermediates of one candidate scheduling decision."""

    n: float
    per_type_counts: Mapping[str, float]
    theta_hat: int
    theta_bar: float
    gamma_minus: float
    gamma_plus: float
    alpha: float
    lambda_q_init: float
    lambda_q_max: float
    lambda_p_max: float
    lambda_o_max: float
    flags: tuple[str, ...] = ()


def predict_event_counts(
    snapshot: StreamStatsSnapshot, ws_est: float, params: ModelParams
) -> tuple[float, dict[str, float], list[str]]:
    """Predict the total and per-type event counts of a new window.

    n = ws / (mean iat - delta_iat * sigma(iat)), with the biased iat floored
    at ``iat_floor_ms`` to guard the division; per-type counts are fractional
    shares by the monitored type ratio.
    """
    flags = []
    if snapshot.stale:
        flags.append("stale_snapshot")
    pop = snapshot.iat_pop
    if pop.count == 0 or ws_est <= 0:
        return 0.0, {t: 0.0 for t in snapshot.type_ratio}, flags + ["no_iat_data"]
    iat = pop.mean - params.delta_iat * pop.sigma
    if iat < params.iat_floor_ms:
        iat = params.iat_floor_ms
        flags.append("iat_floored")
    n = ws_est / iat
    per_type = {t: r * n for t, r in snapshot.type_ratio.items()}
    return n, per_type, flags


def predict_overlap(theta_hat: int, ws_est: float, delta_est: float) -> tuple[float, list[str]]:
    """Average overlap of a new window batched onto ``theta_hat - 1`` open
    windows of scope ``ws_est`` shifted by ``delta_est``.

    The window sees full overlap theta_hat until the oldest batched window
    closes, then an average of theta_hat / 2 while the remaining windows
    close one shift apart. Clamped into [1, theta_hat].
    """
    flags = []
    if theta_hat < 1:
        raise ValueError(f"theta_hat must be >= 1, got {theta_hat}")
    if ws_est <= 0:
        return 1.0, ["no_scope_data"]
    full_phase = ws_est - (theta_hat - 1) * delta_est
    if full_phase < 0:
        # batch spans longer than one scope; the same-scope assumption broke
        full_phase = 0.0
        flags.append("overlap_inconsistent")
    closing_phase = (theta_hat - 1) * delta_est
    theta_bar = (full_phase * theta_hat + closing_phase * theta_hat / 2.0) / ws_est
    theta_bar = min(max(theta_bar, 1.0), float(theta_hat))
    return theta_bar, flags


def biased_latency_bins(
    snapshot: StreamStatsSnapshot,
    per_type_counts: Mapping[str, float],
    params: ModelParams,
) -> list[tuple[float, float]]:
    """(biased mean latency, predicted event count) per latency bin, all
    types pooled; each type's count is split over its bins by bin weight."""
    out = []
    for etype, count in per_type_counts.items():
        bins = snapshot.lat_bins.get(etype)
        if not bins or count <= 0:
            continue
        sigma = snapshot.lat_pop[etype].sigma
        for b in bins:
            if b.count == 0:
                continue
            out.append((b.mean + params.delta_lp * sigma, count * b.weight))
    return out


def biased_iat_bins(snapshot: StreamStatsSnapshot, n: float, params: ModelParams) -> list[tuple[float, float]]:
    """(biased mean iat, predicted event count) per inter-arrival bin."""
    sigma = snapshot.iat_pop.sigma
    return [
        (b.mean - params.delta_iat * sigma, n * b.weight)
        for b in snapshot.iat_bins
        if b.count > 0
    ]


def pair_bins(
    lat_bins: Iterable[tuple[float, float]],
    iat_bins: Iterable[tuple[float, float]],
    theta_bar: float,
) -> list[tuple[float, float]]:
    """Combine latency and iat bins: highest latency against lowest iat.

    Sorts latency bins by value descending and iat bins ascending, then
    repeatedly pairs min-available counts; each pairing contributes
    (count, theta_bar * latency - iat). Stops when either side is exhausted.
    """
    lat = sorted(((v, c) for v, c in lat_bins if c > _EPS), key=lambda x: -x[0])
    iat = sorted(((v, c) for v, c in iat_bins if c > _EPS), key=lambda x: x[0])
    pairs = []
    li, ii = 0, 0
    lat_left = lat[0][1] if lat else 0.0
    iat_left = iat[0][1] if iat else 0.0
    while li < len(lat) and ii < len(iat):
        take = min(lat_left, iat_left)
        pairs.append((take, theta_bar * lat[li][0] - iat[ii][0]))
        lat_left -= take
        iat_left -= take
        if lat_left <= _EPS:
            li += 1
            if li < len(lat):
                lat_left = lat[li][1]
        if iat_left <= _EPS:
            ii += 1
            if ii < len(iat):
                iat_left = iat[ii][1]
    return pairs


def predict_gains(
    snapshot: StreamStatsSnapshot,
    per_type_counts: Mapping[str, float],
    n: float,
    theta_bar: float,
    params: ModelParams,
) -> tuple[float, float]:
    """Total negative and positive gains (gamma_minus >= 0 >= gamma_plus)."""
    pairs = pair_bins(
        biased_latency_bins(snapshot, per_type_counts, params),
        biased_iat_bins(snapshot, n, params),
        theta_bar,
    )
    gamma_minus = 0.0
    gamma_plus = 0.0
    for count, gain in pairs:
        total = count * gain
        if total > 0:
            gamma_minus += total
        else:
            gamma_plus += total
    return gamma_minus, gamma_plus


def predict_alpha_tcount(c_minus: int, c_plus: int, c_trans: int) -> float:
    """Compensation factor from transition counts: (c_t - 1) / (2 min(c+, c-)),
    clamped into [0, 1]; 0 when either group is empty."""
    m = min(c_minus, c_plus)
    if m <= 0:
        return 0.0
    alpha = (c_trans - 1) / (2.0 * m)
    return min(max(alpha, 0.0), 1.0)


def type_mean_latency(snapshot: StreamStatsSnapshot, etype: str, params: ModelParams) -> float | None:
    """Bin-weight averaged biased in-window latency of a type.

    Since bin weights are entry ratios, the weighted average of bin means is
    the population mean, so this is mean + delta_lp * sigma.
    """
    pop = snapshot.lat_pop.get(etype)
    if pop is None or pop.count == 0:
        return None
    return pop.mean + params.delta_lp * pop.sigma


def predict_lambda_q_init(
    queued_counts: Mapping[str, float] | None,
    theta_bar_rep: float,
    snapshot: StreamStatsSnapshot,
    params: ModelParams,
) -> tuple[float, list[str]]:
    """Initial queuing latency of an instance from its feedback report: the
    summed processing latencies of every queued event at its reported average
    overlap."""
    if not queued_counts:
        return 0.0, []
    flags = []
    known = [
        (snapshot.lat_pop[t], t) for t in snapshot.lat_pop if snapshot.lat_pop[t].count > 0
    ]
    global_mean = None
    if known:
        total = sum(p.count for p, _ in known)
        global_mean = sum(p.count * (p.mean + params.delta_lp * p.sigma) for p, _ in known) / total
    lam = 0.0
    for etype, count in queued_counts.items():
        mean = type_mean_latency(snapshot, etype, params)
        if mean is None:
            if global_mean is None:
                flags.append(f"unknown_type:{etype}")
                continue
            mean = global_mean
            flags.append(f"unknown_type:{etype}")
        lam += count * theta_bar_rep * mean
    return lam, flags


def peak_processing_latency(
    snapshot: StreamStatsSnapshot, theta_bar: float, params: ModelParams
) -> tuple[float, list[str]]:
    """theta_bar times the biased latency of the most expensive latency bin
    of any type."""
    best = 0.0
    seen = False
    for etype, bins in snapshot.lat_bins.items():
        sigma = snapshot.lat_pop[etype].sigma
        for b in bins:
            if b.count == 0:
                continue
            seen = True
            best = max(best, b.mean + params.delta_lp * sigma)
    if not seen:
        return 0.0, ["no_latency_data"]
    return theta_bar * best, []


def predict_peak(
    gamma_minus: float,
    gamma_plus: float,
    alpha: float,
    lambda_q_init: float,
    lambda_p_max: float,
) -> tuple[float, float]:
    """Peak queuing and operational latency.

    lambda_q_max = lambda_q_init + gamma_minus + alpha * gamma_plus, clamped
    below at lambda_q_init (the batch cannot reduce pre-existing queue);
    lambda_o_max adds the peak processing latency on the pessimistic
    assumption that the most expensive event arrives at the queuing peak.
    """
    lambda_q_max = max(lambda_q_init, lambda_q_init + gamma_minus + alpha * gamma_plus)
    return lambda_q_max, lambda_q_max + lambda_p_max


def predict(
    snapshot: StreamStatsSnapshot,
    theta_hat: int,
    params: ModelParams,
    queued_counts: Mapping[str, float] | None = None,
    theta_bar_rep: float = 1.0,
    ws_est: float | None = None,
) -> LatencyPrediction:
    """Full prediction for batching a new window onto an instance whose open
    batch currently holds ``theta_hat - 1`` windows."""
    ws = snapshot.ws_est if ws_est is None else ws_est
    n, per_type, flags = predict_event_counts(snapshot, ws, params)
    theta_bar, f2 = predict_overlap(theta_hat, ws, snapshot.delta_est)
    flags += f2
    gamma_minus, gamma_plus = predict_gains(snapshot, per_type, n, theta_bar, params)
    if params.alpha_mode == "fixed":
        alpha = params.alpha_fixed
    else:
        alpha = predict_alpha_tcount(snapshot.c_minus, snapshot.c_plus, snapshot.c_trans)
    lambda_q_init, f3 = predict_lambda_q_init(queued_counts, theta_bar_rep, snapshot, params)
    flags += f3
    lambda_p_max, f4 = peak_processing_latency(snapshot, theta_bar, params)
    flags += f4
    lambda_q_max, lambda_o_max = predict_peak(gamma_minus, gamma_plus, alpha, lambda_q_init, lambda_p_max)
    return LatencyPrediction(
        n=n,
        per_type_counts=per_type,
        theta_hat=theta_hat,
        theta_bar=theta_bar,
        gamma_minus=gamma_minus,
        gamma_plus=gamma_plus,
        alpha=alpha,
        lambda_q_init=lambda_q_init,
        lambda_q_max=lambda_q_max,
        lambda_p_max=lambda_p_max,
        lambda_o_max=lambda_o_max,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# Oracles and worked-example helpers


def gains_from_event_values(
    lambda_ps: Sequence[float],
    iats: Sequence[float] | float,
    theta_bar: float = 1.0,
) -> tuple[float, float]:
    """Gains computed straight from per-event values, one unit bin per event.

    Useful for desk checks and for bracketing the simulated queue against
    the model: with exact per-event inputs the pairing reduces to matching
    sorted latencies against sorted gaps.
    """
    if isinstance(iats, (int, float)):
        iats = [float(iats)] * len(lambda_ps)
    if len(iats) != len(lambda_ps):
        raise ValueError("lambda_ps and iats must have equal length")
    lat = [(v, 1.0) for v in lambda_ps]
    iat = [(v, 1.0) for v in iats]
    gamma_minus = 0.0
    gamma_plus = 0.0
    for count, gain in pair_bins(lat, iat, theta_bar):
        total = count * gain
        if total > 0:
            gamma_minus += total
        else:
            gamma_plus += total
    return gamma_minus, gamma_plus


def lindley_peak(
    lambda_ps: Sequence[float],
    iats: Sequence[float] | float,
    lambda_q_init: float = 0.0,
) -> float:
    """Brute-force queuing peak of a concrete event sequence.

    Runs the busy-server recursion s_k = max(0, s_{k-1} + lambda_p_k - iat_k)
    where iat_k is the gap to the successor event, and returns the largest
    queue state reached. This is the independent oracle the gain model is
    checked against.
    """
    if isinstance(iats, (int, float)):
        iats = itertools.repeat(float(iats))
    s = lambda_q_init
    peak = 0.0
    for lam, iat in zip(lambda_ps, iats):
        s = max(0.0, s + lam - iat)
        peak = max(peak, s)
    return peak
