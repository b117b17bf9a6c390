import json

from src.monitoring import RunMonitor


def test_monitor_starts_empty(tmp_path):
    monitor = RunMonitor(log_dir=tmp_path)
    summary = monitor.get_metrics_summary()
    assert summary["status"] == "STARTING"


def test_healthy_run(tmp_path):
    monitor = RunMonitor(log_dir=tmp_path)
    for index in range(3):
        monitor.log_path(index, runtime=0.1, mass_drift=1e-15, boundary_mass=1e-12)
    summary = monitor.get_metrics_summary()
    assert summary["total_paths"] == 3
    assert summary["total_alerts"] == 0
    assert summary["status"] == "HEALTHY"
    records = [json.loads(line) for line in (tmp_path / "paths.jsonl").read_text().splitlines()]
    assert [r["index"] for r in records] == [0, 1, 2]


def test_boundary_and_runtime_alerts_degrade_the_run(tmp_path):
    monitor = RunMonitor(log_dir=tmp_path, runtime_budget=1.0)
    monitor.log_path(0, runtime=5.0, mass_drift=0.0, boundary_mass=1e-3)
    monitor.log_path(1, runtime=0.1, mass_drift=0.0, boundary_mass=1e-3)
    assert monitor.metrics["alerts"] == ["boundary", "runtime", "boundary"]
    assert monitor.get_metrics_summary()["status"] == "DEGRADED"


def test_mass_drift_and_errors_are_critical(tmp_path):
    monitor = RunMonitor(log_dir=tmp_path)
    monitor.log_path(0, runtime=0.1, mass_drift=1e-6, boundary_mass=0.0)
    assert monitor.get_metrics_summary()["status"] == "CRITICAL"

    other = RunMonitor(log_dir=tmp_path / "other")
    other.log_error("NonFiniteFieldError", "path 3: non-finite field at step 7", {"index": 3})
    assert other.get_metrics_summary()["status"] == "CRITICAL"
    error = json.loads((tmp_path / "other" / "errors.jsonl").read_text())
    assert error["context"] == {"index": 3}
