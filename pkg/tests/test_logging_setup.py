import io
import logging

import pytest

from emcomm.logging_setup import HANDLER_NAME, LOGGER_NAME, setup_logging


@pytest.fixture()
def clean_logger():
    logger = logging.getLogger(LOGGER_NAME)
    saved_handlers, saved_level = list(logger.handlers), logger.level
    for h in saved_handlers:
        logger.removeHandler(h)
    yield logger
    for h in list(logger.handlers):
        logger.removeHandler(h)
    for h in saved_handlers:
        logger.addHandler(h)
    logger.setLevel(saved_level)


def _console(logger):
    return [h for h in logger.handlers if h.get_name() == HANDLER_NAME]


def test_repeated_setup_keeps_one_handler(clean_logger):
    setup_logging("INFO", command="channel")
    setup_logging("debug", command="modes")
    assert len(_console(clean_logger)) == 1
    assert clean_logger.level == logging.DEBUG


def test_records_carry_command_and_module(clean_logger):
    setup_logging("INFO", command="modes")
    stream = io.StringIO()
    _console(clean_logger)[0].setStream(stream)
    clean_logger.info("count=%d", 16)
    line = stream.getvalue().strip()
    assert "INFO emcomm[modes] test_logging_setup: count=16" in line

    setup_logging("INFO", command="optimize")
    _console(clean_logger)[0].setStream(stream)
    clean_logger.warning("restart")
    assert "emcomm[optimize]" in stream.getvalue().splitlines()[-1]


def test_level_filters_debug(clean_logger):
    setup_logging("WARNING")
    stream = io.StringIO()
    _console(clean_logger)[0].setStream(stream)
    clean_logger.info("hidden")
    clean_logger.warning("shown")
    assert stream.getvalue().count("\n") == 1
    assert "emcomm[-]" in stream.getvalue()
