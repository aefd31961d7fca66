import logging
from typing import Any, Callable, Dict, Hashable

logger = logging.getLogger(__name__)

# In-process store for sparse operators and factorizations, keyed by grid/material keys
_cache: Dict[Hashable, Any] = {}


def cached(key: Hashable, build: Callable[[], Any]) -> Any:
    """
    Return the cached object for key, building it on first use

    Stored objects are treated as immutable by every caller
    """
    if key in _cache:
        return _cache[key]
    value = build()
    _cache[key] = value
    logger.debug(f"Cached operator {key[0] if isinstance(key, tuple) else key}")
    return value


def clear_cache() -> None:
    """
    Drop every cached operator
    """
    count = len(_cache)
    _cache.clear()
    if count:
        logger.info(f"Cleared {count} cached operators")


def cache_size() -> int:
    return len(_cache)
