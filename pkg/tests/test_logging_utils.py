import logging

from src.logging_utils import ExtraFormatter, configure_logging


def _record(**extra):
    record = logging.LogRecord("casesim.test", logging.INFO, __file__, 1, "Stage finished", None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_extras_render_sorted_after_message():
    formatter = ExtraFormatter("%(levelname)s | %(message)s")
    line = formatter.format(_record(stage="walk", outputs=2))
    assert line == "INFO | Stage finished | outputs=2 stage=walk"


def test_plain_record_has_no_context_suffix():
    assert ExtraFormatter("%(message)s").format(_record()) == "Stage finished"


def test_configure_logging_uses_settings(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "warning")
    monkeypatch.setenv("DEBUG_MODE", "1")
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    try:
        configure_logging()
        assert root.level == logging.WARNING
        assert isinstance(root.handlers[0].formatter, ExtraFormatter)
        assert "%(lineno)d" in root.handlers[0].formatter._fmt
    finally:
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)
