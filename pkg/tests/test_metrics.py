"""
Tests for performance metrics functionality
"""
import time

import numpy as np

from ldlab.services.entropy import asymptotic_entropy
from ldlab.services.extgrid import GridFunction, GridSpace
from ldlab.services.metrics import MetricsCollector, PerformanceTimer, metrics_collector, timed_operation
from ldlab.services.storage import ResultStore


class TestPerformanceTimer:
    """Test the PerformanceTimer class"""

    def test_timer_measures_duration(self):
        """Test that timer measures duration correctly"""
        with PerformanceTimer("test_operation") as timer:
            time.sleep(0.01)  # Sleep for 10ms

        duration = timer.get_duration_ms()
        assert duration >= 10.0
        assert duration < 1000.0

    def test_timer_context_manager(self):
        """Test timer works as context manager"""
        timer = PerformanceTimer("test_op")

        assert timer.start_time is None
        assert timer.duration_ms is None
        assert timer.get_duration_ms() == 0.0

        with timer:
            pass

        assert timer.end_time is not None
        assert timer.duration_ms >= 0


class TestMetricsCollector:
    """Test the MetricsCollector class"""

    def setup_method(self):
        self.collector = MetricsCollector()

    def test_record_metric(self):
        self.collector.record("entropy", "entropy_at", 10.5, {"n": 64})

        metrics = self.collector.get_recent_metrics(10)
        assert len(metrics) == 1
        assert metrics[0]["category"] == "entropy"
        assert metrics[0]["operation_name"] == "entropy_at"
        assert metrics[0]["duration_ms"] == 10.5
        assert metrics[0]["metadata"]["n"] == 64

    def test_get_statistics(self):
        """Averages are kept per category"""
        self.collector.record("entropy", "sweep", 5.0)
        self.collector.record("entropy", "sweep", 15.0)
        self.collector.record("io", "export_json", 100.0)
        self.collector.record("io", "export_rate", 200.0)

        stats = self.collector.get_statistics()

        assert stats["entropy_count"] == 2
        assert stats["io_count"] == 2
        assert stats["entropy_avg_ms"] == 10.0
        assert stats["io_avg_ms"] == 150.0
        assert stats["verify_count"] == 0
        assert stats["verify_avg_ms"] == 0
        assert stats["total_operations"] == 4

    def test_operation_statistics(self):
        for duration in (10.0, 20.0, 30.0):
            self.collector.record("conjugate", "conjugate_rate", duration)

        rate_stats = self.collector.get_statistics()["operations"]["conjugate_rate"]
        assert rate_stats["count"] == 3
        assert rate_stats["min_ms"] == 10.0
        assert rate_stats["max_ms"] == 30.0
        assert rate_stats["avg_ms"] == 20.0

    def test_unknown_category_is_still_recorded(self):
        self.collector.record("network", "op", 1.0)
        assert self.collector.get_statistics()["total_operations"] == 1

    def test_clear_metrics(self):
        self.collector.record("entropy", "op1", 10.0)
        self.collector.record("io", "op2", 20.0)
        self.collector.clear()

        assert self.collector.get_recent_metrics(10) == []
        assert self.collector.get_statistics()["total_operations"] == 0

    def test_metrics_limit(self):
        """Test that old metrics are trimmed"""
        collector = MetricsCollector(max_metrics=5)
        for i in range(10):
            collector.record("entropy", f"op{i}", float(i))

        metrics = collector.get_recent_metrics(100)
        assert len(metrics) == 5
        assert metrics[0]["operation_name"] == "op5"
        assert metrics[-1]["operation_name"] == "op9"


class TestInstrumentation:
    """Numeric entry points and file writers record their timings"""

    def test_timed_operation_decorator(self, clean_metrics):
        @timed_operation("verify", "double")
        def double(x):
            return 2 * x

        assert double(21) == 42
        metric = clean_metrics.get_recent_metrics(1)[0]
        assert metric["category"] == "verify"
        assert metric["operation_name"] == "double"
        assert metric["duration_ms"] >= 0

    def test_entropy_is_timed(self, clean_metrics, laplace):
        asymptotic_entropy(laplace, GridFunction.constant(laplace.space, 0.0))
        assert clean_metrics.get_statistics()["entropy_count"] >= 1

    def test_exports_are_timed(self, clean_metrics, tmp_path):
        space = GridSpace.line(0.0, 1.0, 5)
        store = ResultStore(tmp_path)
        store.export_grid_function("f.csv", GridFunction.from_array(space, np.linspace(0.0, 1.0, 5)))

        metric = next(m for m in metrics_collector.get_recent_metrics(10)
                      if m["operation_name"] == "export_grid_function")
        assert metric["category"] == "io"
        assert metric["metadata"]["file"] == "f.csv"
