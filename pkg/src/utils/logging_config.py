# src/utils/logging_config.py

import logging
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

try:
    from config import config
except ImportError:
    print("CRITICAL: failed to import configuration from config.", file=sys.stderr)
    config = None


def setup_logging(level: Optional[str] = None):
    """Configures root logging from the configuration system."""

    if config:
        log_level_str = level or config.get("logging.level", "INFO")
        log_file_path = config.path("logs") if config.get("logging.file") else None
    else:
        print("Warning: configuration unavailable. Using default logging (INFO, console).", file=sys.stderr)
        log_level_str = level or 'INFO'
        log_file_path = None

    log_level = getattr(logging, str(log_level_str).upper(), None)
    if not isinstance(log_level, int):
        print(f"Warning: invalid log level '{log_level_str}'. Falling back to INFO.", file=sys.stderr)
        log_level = logging.INFO

    log_formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    root_logger = logging.getLogger()

    if root_logger.hasHandlers():
        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)
            handler.close()

    root_logger.setLevel(log_level)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(log_formatter)
    console_handler.setLevel(log_level)
    root_logger.addHandler(console_handler)

    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(max(log_level, logging.WARNING))

    if log_file_path:
        try:
            log_file_path.parent.mkdir(parents=True, exist_ok=True)

            max_bytes = 5 * 1024 * 1024  # 5 MB
            backup_count = 3
            file_handler = RotatingFileHandler(
                filename=log_file_path,
                maxBytes=max_bytes,
                backupCount=backup_count,
                encoding='utf-8'
            )
            file_handler.setFormatter(log_formatter)
            file_handler.setLevel(log_level)
            root_logger.addHandler(file_handler)

            logging.info(f"File logging configured: level={log_level_str}, file={log_file_path}")
        except Exception as e:
            print(f"Warning: could not configure file handler for {log_file_path}: {e}", file=sys.stderr)
            logging.error(f"Failed to configure file handler: {e}")
    else:
        logging.debug(f"Console logging configured: level={log_level_str}. File logging disabled.")
