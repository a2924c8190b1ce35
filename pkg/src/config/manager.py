# src/config/manager.py

import os
import re
import json
import yaml
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Optional, List, Union

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

TOKENIZER_KINDS = ("kmeans", "repcodec", "suptok", "acoustic-proxy", "none")
CAPTIONER_KINDS = ("encdec", "prefix")
INPUT_SOURCES = ("fbank", "continuous", "tokens", "codes")


class ConfigManager:
    """
    Central configuration for toktide.
    Layers configs/default.yaml, configs/local.yaml, the active profile and an
    optional experiment file, and exposes dot-path access to the result.
    """

    def __init__(self, profile_name: Optional[str] = None, experiment_path: Optional[Union[str, Path]] = None):
        self.config_data: Dict[str, Any] = {}
        self.profile_name = profile_name
        self.experiment_path: Optional[Path] = None
        self.root_dir = Path(__file__).parent.parent.parent.resolve()

        self._load_config()
        if experiment_path:
            self.apply_file(experiment_path)
        self._interpolate_paths()

    def _load_config(self) -> None:
        """Loads the base and local configuration, then the active profile."""
        default_config_path = self.root_dir / "configs" / "default.yaml"

        if default_config_path.exists():
            with open(default_config_path, 'r') as f:
                self.config_data = yaml.safe_load(f) or {}
            logger.debug(f"Base configuration loaded: {default_config_path}")
        else:
            logger.warning(f"Base configuration file not found: {default_config_path}")
            self.config_data = {}

        local_config_path = self.root_dir / "configs" / "local.yaml"
        if local_config_path.exists():
            try:
                with open(local_config_path, 'r') as f:
                    local_config = yaml.safe_load(f)
                    if local_config:
                        self._merge_configs(self.config_data, local_config)
                        logger.info(f"Local configuration applied from: {local_config_path}")
            except Exception as e:
                logger.warning(f"Error loading local configuration: {e}")

        cli_profile = self.profile_name or os.environ.get("TOKTIDE_PROFILE")
        if cli_profile:
            self.config_data["active_profile"] = cli_profile
        self._apply_active_profile()

    def _merge_configs(self, base: Dict, override: Dict) -> None:
        """Recursively merges override into base."""
        for key, value in override.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._merge_configs(base[key], value)
            else:
                base[key] = value

    def _apply_active_profile(self) -> None:
        """Merges the active profile's overrides into the main config."""
        active_profile = self.config_data.get("active_profile")
        profiles = self.config_data.get("profiles", {})

        if not active_profile:
            return

        if active_profile not in profiles:
            raise ConfigError(f"Active profile '{active_profile}' not found in profiles {sorted(profiles)}")

        profile_config = profiles[active_profile] or {}
        logger.debug(f"Using active profile: {active_profile}")
        self.profile_name = active_profile
        self._merge_configs(self.config_data, {k: v for k, v in profile_config.items() if k != "description"})

    def apply_file(self, path: Union[str, Path]) -> None:
        """Merges an experiment config (JSON or YAML) over the current data."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Experiment config not found: {path}")
        try:
            with open(path, 'r') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Experiment config {path} is not valid JSON/YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Experiment config {path} must contain a mapping at top level")
        self._merge_configs(self.config_data, data)
        self.experiment_path = path
        logger.info(f"Experiment configuration applied from: {path}")

    def override(self, dotted: str, value: Any) -> None:
        """Sets a single value by dot path, creating sections as needed."""
        parts = dotted.split('.')
        node = self.config_data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def _interpolate_paths(self) -> None:
        """Resolves {section.key} references inside the paths section."""
        if "paths" not in self.config_data:
            return

        paths = self.config_data["paths"]
        var_pattern = re.compile(r'\{([a-zA-Z0-9_.]+)\}')
        max_iterations = 10

        for _ in range(max_iterations):
            changed = False
            for key, value in paths.items():
                if not isinstance(value, str):
                    continue
                new_value = value
                for match in var_pattern.findall(value):
                    resolved = self.get(match)
                    if isinstance(resolved, (str, int)):
                        new_value = new_value.replace(f"{{{match}}}", str(resolved))
                if new_value != value:
                    paths[key] = new_value
                    changed = True
            if not changed:
                break
        else:
            logger.warning(f"Path interpolation reached maximum iterations ({max_iterations}).")

    def validate(self) -> None:
        """Checks the merged config against the experiment schema. Raises ConfigError."""
        problems: List[str] = []

        if self.get("seed") is None:
            problems.append("'seed' is mandatory")
        elif not isinstance(self.get("seed"), int):
            problems.append(f"'seed' must be an integer, got {self.get('seed')!r}")

        kind = self.get("tokenizer.kind")
        if kind not in TOKENIZER_KINDS:
            problems.append(f"tokenizer.kind must be one of {TOKENIZER_KINDS}, got {kind!r}")
        cap_kind = self.get("captioner.kind")
        if cap_kind not in CAPTIONER_KINDS:
            problems.append(f"captioner.kind must be one of {CAPTIONER_KINDS}, got {cap_kind!r}")

        if self.get_int("corpus.S", 0) < 2:
            problems.append("corpus.S must be >= 2")
        if self.get_int("corpus.max_events_per_clip", 1) > self.get_int("corpus.S", 0):
            problems.append("corpus.max_events_per_clip must not exceed corpus.S")
        for key in ("corpus.n_train", "corpus.frame_rate", "corpus.F", "encoder.layers", "encoder.width",
                    "tokenizer.K", "tokenizer.n_layers", "captioner.beam"):
            value = self.get(key)
            if not isinstance(value, int) or value < 1:
                problems.append(f"{key} must be a positive integer, got {value!r}")
        if self.get("tokenizer.n_layers") not in (1, 2):
            problems.append("tokenizer.n_layers must be 1 or 2")
        layers = self.get_int("encoder.layers", 0)
        for key in ("tokenizer.layer", "tokenizer.split"):
            value = self.get(key)
            if not isinstance(value, int) or not 1 <= value <= layers:
                problems.append(f"{key} must lie in [1, {layers}], got {value!r}")
        if isinstance(self.get("tokenizer.split"), int) and self.get("tokenizer.split") >= layers:
            problems.append("tokenizer.split must leave at least one layer for the upper encoder")

        if problems:
            raise ConfigError("Invalid configuration: " + "; ".join(problems))

    def get(self, path: str, default: Any = None) -> Any:
        """
        Accesses a configuration value using dot notation.
        Example: config.get('tokenizer.K')
        """
        parts = path.split('.')
        value = self.config_data

        try:
            for part in parts:
                value = value[part]
            return value
        except (KeyError, TypeError):
            return default

    def path(self, config_path: str) -> Path:
        """
        Returns a Path for a paths.* entry, relative paths anchored at the repo root.
        Ensures the parent directory exists.
        """
        path_str = self.get(f"paths.{config_path}")
        if not path_str:
            raise ConfigError(f"Path '{config_path}' not found in configuration")

        path = Path(path_str)
        if not path.is_absolute():
            path = self.root_dir / path

        if '.' in path.name:
            path.parent.mkdir(parents=True, exist_ok=True)
        else:
            path.mkdir(parents=True, exist_ok=True)

        return path

    def __getitem__(self, key: str) -> Any:
        return self.get(key)

    @property
    def profile(self) -> Optional[str]:
        return self.profile_name

    def get_str(self, path: str, default: str = "") -> str:
        return str(self.get(path, default))

    def get_int(self, path: str, default: int = 0) -> int:
        value = self.get(path, default)
        return int(value)

    def get_float(self, path: str, default: float = 0.0) -> float:
        value = self.get(path, default)
        return float(value)

    def get_bool(self, path: str, default: bool = False) -> bool:
        return bool(self.get(path, default))

    def get_list(self, path: str, default: Optional[List] = None) -> List:
        value = self.get(path, default or [])
        return list(value) if hasattr(value, '__iter__') and not isinstance(value, (str, dict)) else [value]

    def get_dict(self, path: str, default: Optional[Dict] = None) -> Dict:
        value = self.get(path, default or {})
        if isinstance(value, dict):
            return value
        logger.warning(f"Value at '{path}' is not a mapping. Returning default: {default}")
        return default or {}

    def experiment_dict(self) -> Dict[str, Any]:
        """The experiment-relevant sections (no logging/paths/profiles)."""
        keys = ("corpus", "encoder", "tokenizer", "captioner", "training", "sweep", "run", "out_of_domain", "seed")
        return {k: self.config_data.get(k) for k in keys if k in self.config_data}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the experiment sections."""
        canonical = json.dumps(self.experiment_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
