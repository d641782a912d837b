import pytest

from cepsim.core import ConfigurationError, WindowDescriptor
from cepsim.latency_model import ModelParams
from cepsim.scheduler import InstanceView, SchedulerConfig, make_scheduler
from conftest import snapshot_from


def win(wid):
    return WindowDescriptor(wid=wid, start_seq=wid, open_ts=wid * 10)


def views(n, open_counts=None, last_lo=None):
    open_counts = open_counts or [0] * n
    return [
        InstanceView(open_window_count=open_counts[i], last_lambda_o=last_lo)
        for i in range(n)
    ]


def flat_snapshot(lam=4.0, iat=1000.0):
    # one type, no gains (iat far above any latency), lambda_p_max == lam
    return snapshot_from(iats=[iat] * 4, lats={"A": [lam] * 3}, ws_samples=[100.0], open_gaps=[0.0, 100.0])


class TestRoundRobin:
    def test_modular_cycling(self):
        sched = make_scheduler(SchedulerConfig("round_robin", n_instances=8))
        snap = flat_snapshot()
        got = [sched.schedule(win(i), snap, views(8)).instance for i in range(10)]
        assert got == [0, 1, 2, 3, 4, 5, 6, 7, 0, 1]


class TestReactive:
    def test_batches_below_threshold(self):
        sched = make_scheduler(SchedulerConfig("reactive", n_instances=4, th_ms=100.0))
        snap = flat_snapshot()
        got = [sched.schedule(win(i), snap, views(4, last_lo=50.0)).instance for i in range(5)]
        assert got == [0, 0, 0, 0, 0]

    def test_advances_at_threshold(self):
        sched = make_scheduler(SchedulerConfig("reactive", n_instances=4, th_ms=100.0))
        snap = flat_snapshot()
        assert sched.schedule(win(0), snap, views(4, last_lo=99.9)).instance == 0
        d = sched.schedule(win(1), snap, views(4, last_lo=100.0))
        assert d.instance == 1
        assert d.observed_lambda_o == 100.0
        # the advanced instance is adopted as the new batching target
        assert sched.schedule(win(2), snap, views(4, last_lo=10.0)).instance == 1

    def test_no_feedback_keeps_batching(self):
        sched = make_scheduler(SchedulerConfig("reactive", n_instances=4, th_ms=100.0))
        assert sched.schedule(win(0), flat_snapshot(), views(4, last_lo=None)).instance == 0


class TestModelBased:
    def cfg(self, lb, n=8):
        return SchedulerConfig("model_based", n_instances=n, lb_ms=lb, model=ModelParams())

    def test_keeps_instance_when_bound_holds(self):
        sched = make_scheduler(self.cfg(lb=5.0))
        snap = flat_snapshot(lam=4.0)  # lambda_o_max == 4.0 at theta_hat 1
        d1 = sched.schedule(win(0), snap, views(8))
        d2 = sched.schedule(win(1), snap, views(8))
        assert d1.instance == d2.instance == 0
        assert d1.prediction.lambda_o_max == 4.0

    def test_advances_when_bound_exceeded(self):
        sched = make_scheduler(self.cfg(lb=5.0))
        snap = flat_snapshot(lam=6.0)
        d = sched.schedule(win(0), snap, views(8))
        assert d.instance == 1
        assert d.prediction.lambda_o_max == 6.0

    def test_wraparound_from_last_instance(self):
        sched = make_scheduler(self.cfg(lb=5.0))
        sched.cursor = 7
        snap = flat_snapshot(lam=6.0)
        assert sched.schedule(win(0), snap, views(8)).instance == 0

    def test_tiny_lb_degenerates_to_round_robin(self):
        sched = make_scheduler(self.cfg(lb=1e-300))
        snap = flat_snapshot(lam=4.0)
        got = [sched.schedule(win(i), snap, views(8)).instance for i in range(10)]
        assert got == [1, 2, 3, 4, 5, 6, 7, 0, 1, 2]  # advance on every window

    def test_infinite_lb_batches_everything(self):
        sched = make_scheduler(self.cfg(lb=float("inf")))
        snap = flat_snapshot(lam=1e6)
        got = [sched.schedule(win(i), snap, views(8)).instance for i in range(20)]
        assert set(got) == {0}

    def test_deterministic(self):
        snap = flat_snapshot(lam=4.0)
        runs = []
        for _ in range(2):
            sched = make_scheduler(self.cfg(lb=5.0))
            runs.append([sched.schedule(win(i), snap, views(8, open_counts=[i % 3] * 8)).instance for i in range(12)])
        assert runs[0] == runs[1]

    def test_theta_hat_counts_candidate_open_windows(self):
        sched = make_scheduler(self.cfg(lb=1e9))
        snap = flat_snapshot(lam=4.0)
        d = sched.schedule(win(0), snap, views(8, open_counts=[3] + [0] * 7))
        assert d.prediction.theta_hat == 4


class TestConfigValidation:
    def test_bad_kind(self):
        with pytest.raises(ConfigurationError, match="kind"):
            make_scheduler(SchedulerConfig("fifo"))

    def test_reactive_needs_th(self):
        with pytest.raises(ConfigurationError, match="th_ms"):
            make_scheduler(SchedulerConfig("reactive", n_instances=2))

    def test_model_based_needs_lb(self):
        with pytest.raises(ConfigurationError, match="lb_ms"):
            make_scheduler(SchedulerConfig("model_based", n_instances=2))

    def test_instances_positive(self):
        with pytest.raises(ConfigurationError, match="n_instances"):
            make_scheduler(SchedulerConfig("round_robin", n_instances=0))
