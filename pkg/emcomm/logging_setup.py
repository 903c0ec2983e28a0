"""Console logging for the emcomm batch front end.

Records carry the running CLI command (`-` outside a run) and the emitting
module, e.g. ``2026-01-01 12:00:00 INFO emcomm[modes] holo_modes: ...``.
"""

import logging
import sys

LOGGER_NAME = "emcomm"
HANDLER_NAME = "emcomm-console"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s[%(command)s] %(module)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class CommandContext(logging.Filter):
    """Stamps `record.command` unless the call site already set one via `extra`."""

    def __init__(self, command: str = "-") -> None:
        super().__init__()
        self.command = command

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "command"):
            record.command = self.command
        return True


def setup_logging(level: str = "INFO", command: str = "-") -> logging.Logger:
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level.upper())

    # one console handler per process; repeated main() calls retarget it
    handler = next((h for h in logger.handlers if h.get_name() == HANDLER_NAME), None)
    if handler is None:
        handler = logging.StreamHandler(sys.stdout)
        handler.set_name(HANDLER_NAME)
        handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
        logger.addHandler(handler)
    elif isinstance(handler, logging.StreamHandler):
        handler.setStream(sys.stdout)
    for old in [f for f in handler.filters if isinstance(f, CommandContext)]:
        handler.removeFilter(old)
    handler.addFilter(CommandContext(command))
    return logger
