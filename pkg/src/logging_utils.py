"""Logging configuration helpers."""
import logging

from .config import get_settings

# Attributes every LogRecord carries; anything else came in through ``extra``.
_RESERVED = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class ExtraFormatter(logging.Formatter):
    """Render ``extra={...}`` context as trailing ``key=value`` pairs."""

    def format(self, record: logging.LogRecord) -> str:
        base = super().format(record)
        extras = {k: v for k, v in vars(record).items() if k not in _RESERVED}
        if not extras:
            return base
        context = " ".join(f"{k}={v}" for k, v in sorted(extras.items()))
        return f"{base} | {context}"


def configure_logging() -> None:
    """Configure root logging based on settings."""
    settings = get_settings()
    level = getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)

    if settings.DEBUG_MODE:
        fmt = "%(asctime)s | %(levelname)s | %(name)s:%(lineno)d | %(message)s"
    else:
        fmt = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

    handler = logging.StreamHandler()
    handler.setFormatter(ExtraFormatter(fmt))
    logging.basicConfig(level=level, handlers=[handler], force=True)
