import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

# Characters for UID generation (letters + digits)
_UID_CHARS = "0123456789abcdefghijklmnopqrstuvwxyz"

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(uid)s: %(message)s'
LOG_DATEFMT = '%H:%M:%S'


def _hash_to_uid(h: int, length: int = 10) -> str:
    """Convert a hash to a short UID string (letters + digits)."""
    h = abs(h)
    base = len(_UID_CHARS)
    result = []
    for _ in range(length):
        result.append(_UID_CHARS[h % base])
        h //= base
    return ''.join(result)


def _compute_msg_hash(record: logging.LogRecord) -> int:
    """Hash of the rendered message, so '%s'-style args take part in deduplication."""
    try:
        text = record.getMessage()
    except Exception:
        text = str(record.msg)
    return hash((record.levelno, record.name, text))


@dataclass
class _DedupEntry:
    uid: str
    count: int = 1
    first_time: float = field(default_factory=time.monotonic)
    last_summary_time: float = field(default_factory=time.monotonic)


class DedupFilter(logging.Filter):
    """
    Handler filter that deduplicates log messages.

    - First occurrence: adds UID, allows through
    - Repeated: suppresses, but emits a summary every dedup_window seconds
    """

    def __init__(self, dedup_window: float = 1.0):
        super().__init__()
        self.dedup_window = dedup_window
        self._cache: Dict[int, _DedupEntry] = {}

    def filter(self, record: logging.LogRecord) -> bool:
        msg_hash = _compute_msg_hash(record)
        now = time.monotonic()

        entry = self._cache.get(msg_hash)
        if entry is None:
            uid = _hash_to_uid(msg_hash)
            self._cache[msg_hash] = _DedupEntry(uid=uid, first_time=now, last_summary_time=now)
            record.uid = uid
            return True

        entry.count += 1
        if now - entry.last_summary_time < self.dedup_window:
            return False

        elapsed = int(now - entry.first_time)
        record.msg = f"message '{entry.uid}' repeated {entry.count} times the last {elapsed} seconds"
        record.args = ()
        record.uid = entry.uid
        entry.last_summary_time = now
        return True

    def repeats(self, uid: str) -> int:
        for entry in self._cache.values():
            if entry.uid == uid:
                return entry.count
        return 0


def parse_level(level: str | int) -> int:
    """Accept 'DEBUG'... names or numeric strings as used by the CLI."""
    if isinstance(level, int):
        return level
    return getattr(logging, level.upper()) if level.isalpha() else int(level)


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    dedup_window: float = 1.0
) -> DedupFilter:
    """
    Configure the root logger: one stderr (or file) handler with deduplication.

    The filter sits on the handler, so records from module loggers that
    propagate to the root are stamped too.
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    dedup = DedupFilter(dedup_window=dedup_window)

    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=LOG_DATEFMT)

    if log_file is None:
        handler = logging.StreamHandler()
    else:
        handler = logging.FileHandler(log_file)
    handler.setFormatter(formatter)
    handler.setLevel(level)
    handler.addFilter(dedup)
    root_logger.addHandler(handler)

    return dedup
