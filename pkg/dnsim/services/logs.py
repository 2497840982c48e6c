import os
import logging
from datetime import datetime
from django.conf import settings


def get_logger(component: str) -> logging.Logger:
    """Named logger with a dated file handler and a console handler.

    Handlers are attached once per logger, so repeated calls (one per
    simulation in a sweep) do not duplicate output.
    """
    logger = logging.getLogger(f'dnsim.{component}')
    logger.setLevel(logging.DEBUG)

    if not logger.handlers:
        log_dir = os.path.join(settings.DNSIM_LOG_DIR, component)
        os.makedirs(log_dir, exist_ok=True)

        log_file = os.path.join(log_dir, f"{datetime.now().strftime('%Y-%m-%d')}.log")
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(logging.INFO)
        file_handler.setFormatter(
            logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        )

        console_handler = logging.StreamHandler()
        console_handler.setLevel(settings.DNSIM_LOG_LEVEL)
        console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

        logger.addHandler(file_handler)
        logger.addHandler(console_handler)
        logger.propagate = False

    return logger
