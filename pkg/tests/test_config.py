"""
Settings environments and logging setup
"""

import logging

from pythonjsonlogger import jsonlogger

from app import LOGGER_NAME, configure_logging, create_lab
from app.config import DevelopmentConfig, ProductionConfig, TestingConfig, get_config
from app.errors import (
    EXIT_ACCEPTANCE,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    AcceptanceFailure,
    DomainError,
    PrecisionError,
    PresetError,
    ValidationFailure,
)


def test_environments_by_name():
    assert isinstance(get_config('development'), DevelopmentConfig)
    assert isinstance(get_config('testing'), TestingConfig)
    assert isinstance(get_config('production'), ProductionConfig)
    assert isinstance(get_config('no-such-env'), DevelopmentConfig)


def test_testing_settings_keep_logs_quiet(testing_config):
    assert testing_config.TESTING
    assert not testing_config.LOG_TO_FILE
    assert not testing_config.LOG_TO_CONSOLE
    assert testing_config.CSV_SIGNIFICANT_DIGITS == 17


def test_quiet_logging_falls_back_to_null_handler(testing_config):
    logger = configure_logging(testing_config)
    assert logger.name == LOGGER_NAME
    assert len(logger.handlers) == 1
    assert isinstance(logger.handlers[0], logging.NullHandler)


def test_json_logging_uses_json_formatter():
    class JsonConsole(TestingConfig):
        LOG_TO_CONSOLE = True
        LOG_JSON = True

    logger = configure_logging(JsonConsole())
    try:
        assert isinstance(logger.handlers[0].formatter, jsonlogger.JsonFormatter)
    finally:
        configure_logging(TestingConfig())


def test_create_lab_returns_settings():
    assert create_lab('testing').ENV_NAME == 'testing'


def test_error_exit_codes():
    assert ValidationFailure([{'field': 'kernel.alpha', 'message': 'bad'}]).exit_code == EXIT_VALIDATION
    assert DomainError('t <= 0').exit_code == EXIT_SOLVER
    assert AcceptanceFailure('failed').exit_code == EXIT_ACCEPTANCE


def test_error_payloads():
    failure = ValidationFailure([{'field': 'grid.n', 'message': 'too small'}])
    assert 'grid.n: too small' in failure.message
    assert failure.to_dict()['details']['errors'][0]['field'] == 'grid.n'

    precision = PrecisionError('not converged', achieved=1e-6, requested=1e-8)
    assert (precision.achieved, precision.requested) == (1e-6, 1e-8)

    missing = PresetError("unknown kernel 'box'")
    assert isinstance(missing, KeyError)
    assert str(missing) == "unknown kernel 'box'"
