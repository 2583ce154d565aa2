"""
fsskit in-memory cache.

Propagators depend only on (system, α, tolerances) and are reused by every λ
of a sweep; this module memoises them under a content hash.
"""
import hashlib
import json
import threading
import time
from typing import Any, Callable, Dict, Optional

from .config import get_logger

logger = get_logger("Cache")


def cache_key(payload: Any) -> str:
    """sha256 digest of the sorted-key JSON encoding of ``payload``."""
    encoded = json.dumps(payload, sort_keys=True, default=repr, separators=(",", ":"))
    return hashlib.sha256(encoded.encode()).hexdigest()


class MemoryCache:
    """Thread-safe in-memory cache with optional TTL."""

    def __init__(self, max_entries: int = 256):
        self._cache: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.RLock()
        self.max_entries = max_entries
        self._stats = {"hits": 0, "misses": 0}
        logger.debug("Initialized in-memory cache")

    def get(self, key: str) -> Optional[Any]:
        """Get value from cache, respecting TTL."""
        with self._lock:
            entry = self._cache.get(key)
            if entry is None:
                self._stats["misses"] += 1
                return None
            if entry["expires_at"] is not None and time.time() > entry["expires_at"]:
                del self._cache[key]
                self._stats["misses"] += 1
                logger.debug(f"Cache entry expired: {key[:12]}")
                return None
            self._stats["hits"] += 1
            return entry["value"]

    def set(self, key: str, value: Any, ttl: Optional[int] = None) -> None:
        """Set value in cache with optional TTL in seconds."""
        with self._lock:
            if len(self._cache) >= self.max_entries and key not in self._cache:
                oldest = min(self._cache, key=lambda k: self._cache[k]["created_at"])
                del self._cache[oldest]
            self._cache[key] = {
                "value": value,
                "created_at": time.time(),
                "expires_at": time.time() + ttl if ttl else None,
            }

    def get_or_compute(self, key: str, factory: Callable[[], Any]) -> Any:
        """
        Return the cached value or compute, store and return it.

        The lock is held during ``factory`` so concurrent callers with the same
        key compute once.
        """
        with self._lock:
            value = self.get(key)
            if value is None:
                value = factory()
                self.set(key, value)
            return value

    def delete(self, key: str) -> bool:
        with self._lock:
            return self._cache.pop(key, None) is not None

    def clear(self) -> None:
        with self._lock:
            count = len(self._cache)
            self._cache.clear()
        logger.debug(f"Cleared {count} cache entries")

    def __len__(self) -> int:
        return len(self._cache)

    def get_stats(self) -> Dict[str, Any]:
        """Get cache statistics."""
        with self._lock:
            total = self._stats["hits"] + self._stats["misses"]
            return {
                "entries": len(self._cache),
                "hits": self._stats["hits"],
                "misses": self._stats["misses"],
                "hit_rate": self._stats["hits"] / total if total else 0.0,
            }
