"""Logging utilities and configuration for qsdiff.

This module provides structured logging for the numerical modules and the
command line. Records are rendered as text or as JSON lines, extra fields
passed through ``extra=`` travel with the record, and file output rotates.
"""

import logging
import logging.handlers
import sys
from datetime import datetime, timezone

import orjson

# Attributes every LogRecord carries; anything else came in through ``extra``.
_RESERVED_ATTRS = frozenset(
    {
        'name',
        'msg',
        'args',
        'levelname',
        'levelno',
        'pathname',
        'filename',
        'module',
        'lineno',
        'funcName',
        'created',
        'msecs',
        'relativeCreated',
        'thread',
        'threadName',
        'processName',
        'process',
        'taskName',
        'getMessage',
        'exc_info',
        'exc_text',
        'stack_info',
        'message',
        'asctime',
    }
)

PACKAGE_LOGGER = 'qsdiff'


def extra_fields(record: logging.LogRecord) -> dict[str, object]:
    """Return the structured fields attached to a record via ``extra``."""
    return {k: v for k, v in record.__dict__.items() if k not in _RESERVED_ATTRS}


class StructuredFormatter(logging.Formatter):
    """Formatter rendering records as text lines or JSON lines.

    In text mode extra fields are appended as ``key=value`` pairs; in JSON mode
    they become top-level keys next to ``timestamp``, ``level``, ``logger`` and
    ``message``.
    """

    def __init__(self, log_format: str = 'text'):
        """Initialize the formatter.

        Args:
            log_format: Either ``'text'`` or ``'json'``.

        """
        super().__init__()
        if log_format not in ('text', 'json'):
            raise ValueError(f'Unsupported log format: {log_format!r}')
        self.log_format = log_format

    def format(self, record: logging.LogRecord) -> str:
        """Render a record."""
        timestamp = datetime.fromtimestamp(record.created, tz=timezone.utc)
        fields = extra_fields(record)
        message = record.getMessage()
        if self.log_format == 'json':
            payload = {
                'timestamp': timestamp.isoformat(),
                'level': record.levelname,
                'logger': record.name,
                'line': record.lineno,
                'message': message,
                **fields,
            }
            if record.exc_info:
                payload['exception'] = self.formatException(record.exc_info)
            return orjson.dumps(
                payload,
                option=orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS,
                default=str,
            ).decode()

        line = (
            f'{timestamp.strftime("%Y-%m-%d %H:%M:%S")} {record.levelname:<8} '
            f'{record.name}:{record.lineno} {message}'
        )
        if fields:
            line += ' ' + ' '.join(f'{k}={v}' for k, v in fields.items())
        if record.exc_info:
            line += '\n' + self.formatException(record.exc_info)
        return line


def configure_logger(
    log_file: str = 'qsdiff.log',
    level: str = 'INFO',
    log_format: str = 'text',
    log_to_file: bool = False,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 7,
) -> None:
    """Configure the package logger.

    Args:
        log_file: Path to the log file
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_format: Format for log messages ("text" or "json")
        log_to_file: Whether to log to file in addition to the console
        max_bytes: Maximum size of log file before rotation
        backup_count: Number of backup files to keep

    """
    formatter = StructuredFormatter(log_format)
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_to_file:
        handlers.append(
            logging.handlers.RotatingFileHandler(
                log_file, maxBytes=max_bytes, backupCount=backup_count
            )
        )

    package_logger = logging.getLogger(PACKAGE_LOGGER)
    package_logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    for handler in package_logger.handlers:
        handler.close()
    package_logger.handlers.clear()
    for handler in handlers:
        handler.setFormatter(formatter)
        package_logger.addHandler(handler)
    package_logger.propagate = False  # Don't propagate to root to avoid double logging


def get_logger(name: str = PACKAGE_LOGGER) -> logging.Logger:
    """Return a logger inside the package namespace."""
    if name != PACKAGE_LOGGER and not name.startswith(PACKAGE_LOGGER + '.'):
        name = f'{PACKAGE_LOGGER}.{name}'
    return logging.getLogger(name)


__all__ = [
    'StructuredFormatter',
    'configure_logger',
    'extra_fields',
    'get_logger',
]
