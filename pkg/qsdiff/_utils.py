import math
import os
import threading
from collections.abc import Callable, Iterable
from typing import Any, TypeVar

import pyferris

try:
    import orjson
except ImportError as exc:
    raise ImportError(
        'orjson is required for qsdiff. Install it with: pip install orjson'
    ) from exc

T = TypeVar('T')
R = TypeVar('R')

THREADS_ENV = 'QSD_THREADS'

_pool_lock = threading.Lock()


def worker_count(requested: int | None = None) -> int:
    """Return the number of simulation workers.

    The default is ``min(32, cpu_count * 2)``; ``QSD_THREADS`` caps it and an
    explicit request caps it further.
    """
    cpu_count = os.cpu_count() or 1
    workers = min(32, cpu_count * 2)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            workers = min(workers, max(1, int(env)))
        except ValueError:
            pass
    if requested is not None:
        workers = min(workers, max(1, requested))
    return workers


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], max_workers: int | None = None
) -> list[R]:
    """Map ``func`` over ``items`` on a pyferris thread pool, keeping order.

    A single worker or a single item runs inline.
    """
    items = list(items)
    workers = min(worker_count(max_workers), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]

    with _pool_lock:
        executor = pyferris.Executor(max_workers=workers)
    try:
        return list(executor.map(func, items))
    finally:
        executor.shutdown()


def encode_float(value: float) -> float | str:
    """Encode a float for JSON, using the "inf" sentinel for infinities."""
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def decode_float(value: Any) -> Any:
    """Inverse of ``encode_float``; other values pass through unchanged."""
    if isinstance(value, str):
        token = value.strip().lower()
        if token in ('inf', '+inf', 'infinity'):
            return math.inf
        if token in ('-inf', '-infinity'):
            return -math.inf
    return value


class FastJSONEncoder:
    """JSON encoder using only orjson."""

    def __init__(self, indent: bool = True):
        option = orjson.OPT_SERIALIZE_NUMPY
        if indent:
            option |= orjson.OPT_INDENT_2
        self._option = option

    def encode(self, obj: Any) -> bytes:
        """Encode object to JSON bytes."""
        return orjson.dumps(obj, option=self._option)


_json_encoder = FastJSONEncoder()


def dumps_json(obj: Any) -> bytes:
    """Encode ``obj`` as indented JSON bytes."""
    return _json_encoder.encode(obj)
