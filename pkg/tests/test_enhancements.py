"""Tests for cache, monitoring, configuration and health utilities."""
import json
import logging
import time

import pytest

from fsskit.cache import MemoryCache, cache_key
from fsskit.config import (
    DEFAULT_CONFIG,
    apply_overrides,
    get_logger,
    init_config,
    load_config,
    merge_config,
    parse_override_pairs,
    save_config,
)
from fsskit.errors import SpecError
from fsskit.health import check_dependencies, check_health, format_system_info, get_system_info
from fsskit.monitoring import MetricsCollector, Timer, get_metrics_collector


class TestCache:
    """Test caching functionality."""

    def test_memory_cache_basic(self):
        """Test basic memory cache operations."""
        cache = MemoryCache()

        cache.set("key1", "value1")
        assert cache.get("key1") == "value1"
        assert len(cache) == 1

        assert cache.get("nonexistent") is None

        assert cache.delete("key1")
        assert not cache.delete("key1")
        assert cache.get("key1") is None

    def test_memory_cache_ttl(self):
        """Test memory cache TTL expiration."""
        cache = MemoryCache()

        cache.set("key1", "value1", ttl=1)
        assert cache.get("key1") == "value1"

        time.sleep(1.1)
        assert cache.get("key1") is None

    def test_eviction(self):
        """The oldest entry goes when the cache is full."""
        cache = MemoryCache(max_entries=2)
        cache.set("a", 1)
        time.sleep(0.01)
        cache.set("b", 2)
        time.sleep(0.01)
        cache.set("c", 3)
        assert len(cache) == 2
        assert cache.get("a") is None
        assert cache.get("c") == 3

    def test_get_or_compute(self):
        """The factory runs once per key."""
        cache = MemoryCache()
        calls = []

        def factory():
            calls.append(1)
            return "computed"

        assert cache.get_or_compute("k", factory) == "computed"
        assert cache.get_or_compute("k", factory) == "computed"
        assert len(calls) == 1

    def test_stats(self):
        cache = MemoryCache()
        cache.set("k", 1)
        cache.get("k")
        cache.get("missing")
        stats = cache.get_stats()
        assert stats["entries"] == 1
        assert stats["hits"] == 1
        assert stats["misses"] == 1
        assert stats["hit_rate"] == 0.5
        cache.clear()
        assert len(cache) == 0

    def test_cache_key(self):
        """Keys ignore dict ordering and differ on content."""
        assert cache_key({"a": 1, "b": [2, 3]}) == cache_key({"b": [2, 3], "a": 1})
        assert cache_key({"a": 1}) != cache_key({"a": 2})
        assert len(cache_key("x")) == 64


class TestMonitoring:
    """Test monitoring functionality."""

    def test_metrics_collector(self):
        """Test metrics collection."""
        collector = MetricsCollector()

        collector.increment_counter("test_counter")
        collector.increment_counter("test_counter", 2.0)
        collector.increment_counter("tasks", labels={"kind": "fss"})
        collector.set_gauge("test_gauge", 42.0)
        collector.record_timer("test_timer", 0.5)
        collector.record_timer("test_timer", 1.5)

        metrics = collector.get_metrics()
        assert metrics["counters"]["test_counter"] == 3.0
        assert metrics["counters"]["tasks{kind=fss}"] == 1.0
        assert metrics["gauges"]["test_gauge"] == 42.0
        timer = metrics["timers"]["test_timer"]
        assert timer["count"] == 2
        assert timer["total_time"] == 2.0
        assert timer["min"] == 0.5
        assert timer["max"] == 1.5
        assert timer["avg"] == 1.0

        collector.reset()
        assert collector.get_metrics()["counters"] == {}

    def test_timer(self):
        """Test timer context manager."""
        collector = MetricsCollector()

        with Timer(collector, "test_operation", {"stage": "picard"}) as timer:
            time.sleep(0.05)

        assert timer.duration >= 0.05
        metrics = collector.get_metrics()
        assert metrics["timers"]["test_operation{stage=picard}"]["count"] == 1

    def test_timer_records_on_error(self):
        collector = MetricsCollector()
        with pytest.raises(RuntimeError):
            with Timer(collector, "failing"):
                raise RuntimeError("boom")
        assert collector.get_metrics()["timers"]["failing"]["count"] == 1

    def test_global_collector(self):
        assert get_metrics_collector() is get_metrics_collector()


class TestConfig:
    """Test configuration loading and overrides."""

    def test_defaults(self):
        assert DEFAULT_CONFIG["tolerances"]["eps_tail"] == 1e-9
        assert DEFAULT_CONFIG["kernels"]["gl_order"] == 7
        assert DEFAULT_CONFIG["picard"]["contraction_limit"] == 0.5

    def test_missing_file_gives_defaults(self, tmp_path):
        config = load_config(tmp_path / "none.json")
        assert config == DEFAULT_CONFIG
        config["picard"]["max_iter"] = 1
        assert DEFAULT_CONFIG["picard"]["max_iter"] == 200

    def test_bad_file_gives_defaults(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert load_config(path) == DEFAULT_CONFIG

    def test_partial_file_merges(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"picard": {"max_iter": 50}}))
        config = load_config(path)
        assert config["picard"]["max_iter"] == 50
        assert config["picard"]["eps_fix"] == DEFAULT_CONFIG["picard"]["eps_fix"]

    def test_merge_config(self):
        merged = merge_config({"a": {"x": 1, "y": 2}}, {"a": {"y": 3}, "b": 4})
        assert merged == {"a": {"x": 1, "y": 3}, "b": 4}

    def test_save_and_init(self, tmp_path):
        path = tmp_path / ".fsskit.json"
        assert init_config(path) == path
        assert load_config(path) == DEFAULT_CONFIG
        with pytest.raises(FileExistsError):
            init_config(path)
        save_config({"picard": {"max_iter": 7}}, path)
        assert load_config(path)["picard"]["max_iter"] == 7

    def test_apply_overrides(self):
        config = apply_overrides(DEFAULT_CONFIG, {
            "picard.eps_fix": "1e-9",
            "kernels.grid_size": "32",
            "picard.search_ceiling": 50,
        })
        assert config["picard"]["eps_fix"] == 1e-9
        assert config["kernels"]["grid_size"] == 32
        assert isinstance(config["kernels"]["grid_size"], int)
        assert config["picard"]["search_ceiling"] == 50.0
        assert DEFAULT_CONFIG["picard"]["eps_fix"] == 1e-10

    @pytest.mark.parametrize("overrides", [
        {"picard.nope": 1},
        {"nosection.eps": 1},
        {"picard": 1},
        {"picard.max_iter": "lots"},
        {"tolerances.eps_tail": "small"},
    ])
    def test_bad_overrides(self, overrides):
        with pytest.raises(SpecError):
            apply_overrides(DEFAULT_CONFIG, overrides)

    def test_parse_override_pairs(self):
        assert parse_override_pairs(["picard.eps_fix=1e-9", " kernels.gl_order = 5 "]) == {
            "picard.eps_fix": "1e-9",
            "kernels.gl_order": "5",
        }
        with pytest.raises(SpecError):
            parse_override_pairs(["picard.eps_fix"])
        with pytest.raises(SpecError):
            parse_override_pairs(["=1"])

    def test_logger_namespace(self):
        logger = get_logger("Picard")
        assert logger.name == "FSSKIT.Picard"
        assert isinstance(logger, logging.Logger)


class TestHealth:
    """Test health checks."""

    def test_dependencies(self):
        checks = check_dependencies()
        assert checks == {"numpy": True, "scipy": True}

    def test_health(self):
        health = check_health()
        assert health["status"] == "healthy"
        assert "missing_dependencies" not in health
        assert health["system"]["cpu_count"] >= 1

    def test_system_info(self):
        info = get_system_info()
        for key in ("python_version", "platform", "numpy_version", "scipy_version"):
            assert key in info
        text = format_system_info(info)
        assert text.startswith("System Information:")
        assert "NumPy" in text
