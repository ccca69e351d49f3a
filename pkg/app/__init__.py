"""
Observable Transport Lab
Numerical laboratory for the spatially averaged (observable) transport equations
"""

import logging
import logging.handlers
import os

from pythonjsonlogger import jsonlogger

from app.config import Config, get_config


LOGGER_NAME = 'app'


def create_lab(config_name: str = None) -> Config:
    """
    Lab factory function

    Args:
        config_name: Configuration environment (development, testing, production)

    Returns:
        Active configuration with logging configured
    """
    config = get_config(config_name)
    configure_logging(config)

    logging.getLogger(LOGGER_NAME).debug(f'Lab initialized for {config.ENV_NAME} environment')
    return config


def configure_logging(config: Config) -> logging.Logger:
    """Configure package logging"""

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO))

    # Clear existing handlers
    logger.handlers = []

    if config.LOG_JSON:
        formatter = jsonlogger.JsonFormatter(config.LOG_FORMAT)
    else:
        formatter = logging.Formatter(config.LOG_FORMAT)

    # File handler
    if config.LOG_TO_FILE:
        log_dir = os.path.dirname(config.LOG_FILE)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

        file_handler = logging.handlers.RotatingFileHandler(
            config.LOG_FILE,
            maxBytes=config.LOG_MAX_BYTES,
            backupCount=config.LOG_BACKUP_COUNT
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # Console handler
    if config.LOG_TO_CONSOLE:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if not logger.handlers:
        logger.addHandler(logging.NullHandler())

    return logger
