from datetime import datetime, timezone
from pathlib import Path
import hashlib
import json

from platformdirs import user_cache_dir

__all__ = [
    'derive_seed',
    'request_hash',
    'utc_timestamp',
    'datetime_to_isot_ms',
    'default_cache_dir',
    'default_synthetic_store_path',
]

_APP_NAME = "niche_nas"


def derive_seed(seed : int, *keys) -> int:
    """
    Derive an independent 64-bit seed from a base seed and a sequence of keys.

    The derivation goes through SHA-256 of the textual keys, so it is stable
    across processes and Python versions (unlike the builtin ``hash``).

    Parameters
    ----------
    seed : int
        The base seed.
    *keys
        Additional keys, e.g. a niche id or a stream name.

    Returns
    -------
    int
        A non-negative integer below ``2**64``.
    """
    text = ":".join(str(k) for k in (seed, *keys))
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def request_hash(payload : dict) -> str:
    """
    Hash a JSON-serializable request payload independent of key order.
    """
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode()).hexdigest()


def datetime_to_isot_ms(dt : datetime) -> str:
    """
    Convert a datetime object to an ISO 8601 string with millisecond precision.

    Parameters
    ----------
    dt : datetime
        The input datetime object.

    Returns
    -------
    str
        The corresponding datetime string in ISO 8601 format with millisecond precision.
    """
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3]


def utc_timestamp() -> str:
    """
    Current UTC time as ``YYYY-MM-DDTHH:MM:SS.sss``.
    """
    return datetime_to_isot_ms(datetime.now(timezone.utc))


def default_cache_dir() -> Path:
    """
    Per-user cache directory for ``niche_nas`` (created on demand).
    """
    path = Path(user_cache_dir(_APP_NAME))
    path.mkdir(parents=True, exist_ok=True)
    return path


def default_synthetic_store_path(seed : int) -> Path:
    """
    Location of the cached synthetic store for ``seed``.
    """
    return default_cache_dir() / f"synthetic_seed{seed}.csv"
