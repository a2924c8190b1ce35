# src/config/__init__.py
import os
import logging
import argparse
from typing import Optional

from .manager import ConfigManager

logger = logging.getLogger(__name__)

_config_instance: Optional[ConfigManager] = None


def get_active_profile() -> Optional[str]:
    """
    Determines the active profile from CLI arguments or environment variables.
    """
    parser = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    parser.add_argument('--profile', type=str, help='Configuration profile (desk, full)')
    args, _ = parser.parse_known_args()

    # Priority: CLI > ENV > active_profile in yaml
    return args.profile or os.environ.get("TOKTIDE_PROFILE")


def get_config() -> ConfigManager:
    """
    Returns the ConfigManager instance, creating it if necessary.
    """
    global _config_instance

    if _config_instance is None:
        profile = get_active_profile()
        try:
            _config_instance = ConfigManager(profile_name=profile)
            logger.debug(f"Configuration loaded for profile: {_config_instance.profile}")
        except Exception as e:
            logger.critical(f"Error initialising configuration: {e}", exc_info=True)
            raise

    return _config_instance


def reload_config(profile: Optional[str] = None, experiment_path=None) -> ConfigManager:
    """Rebuilds the global config in place so existing references stay valid."""
    fresh = ConfigManager(profile_name=profile or get_active_profile(), experiment_path=experiment_path)
    config.config_data = fresh.config_data
    config.profile_name = fresh.profile_name
    config.experiment_path = fresh.experiment_path
    return config


config = get_config()
