import logging
import os

import config

LOGGER_NAME = 'offload'


def setup_logging(console_level: int = logging.INFO) -> logging.Logger:
    """
    Configures the shared 'offload' logger.

    Writes everything to <LOGS_DIR>/offload.log and INFO and above to the
    console. Module loggers named 'offload.<module>' propagate here.

    Args:
        console_level: Level for the console handler

    Returns:
        The configured root logger of the package
    """
    logger = logging.getLogger(LOGGER_NAME)

    # Return an existing logger if it's already configured
    if logger.handlers:
        return logger

    logger.setLevel(logging.DEBUG)

    os.makedirs(config.LOGS_DIR, exist_ok=True)
    file_handler = logging.FileHandler(os.path.join(config.LOGS_DIR, 'offload.log'))
    file_handler.setLevel(logging.DEBUG)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)

    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    ))
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger


def set_console_level(level: int) -> None:
    """Adjusts the console handler only; the log file keeps DEBUG."""
    logger = setup_logging()
    for handler in logger.handlers:
        if not isinstance(handler, logging.FileHandler):
            handler.setLevel(level)
