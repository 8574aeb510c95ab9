import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from utils.errors import InvalidConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = "CIC_"
DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "configs" / "defaults.yaml"

# Last-resort values when configs/defaults.yaml is not shipped alongside the code
BUILTIN_DEFAULTS: Dict[str, Any] = {
    "outcome": "y",
    "treatment": "d",
    "mediator": "m",
    "time": "t",
    "cluster": "id",
    "covariates": [],
    "effects": "all",
    "quantiles": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "bootstrap": 1999,
    "seed": 1,
    "link": "identity",
    "assignment": "random",
    "n": 4000,
    "reps": 1000,
    "format": "tsv",
    "output": None,
    "input": None,
    "design": "auto",
    "did": False,
    "jobs": 1,
    "oracle_draws": 10_000_000,
    "min_share": 0.01,
    "rearrangement": "running_max",
    "log_level": "INFO",
}


class ConfigLoader:
    """Merges run settings from built-ins, YAML files, the environment and flags.

    Later layers win: built-ins < defaults file < user config file <
    ``CIC_*`` environment variables < command-line flags.
    """

    def __init__(self, defaults_path: Path = DEFAULTS_PATH, environ: Optional[Mapping[str, str]] = None):
        self.defaults_path = Path(defaults_path)
        self.environ = os.environ if environ is None else environ

    def _load_yaml(self, path: Path, required: bool) -> Dict[str, Any]:
        if not path.exists():
            if required:
                raise InvalidConfig(f"Config file not found: {path}", path=str(path))
            logger.warning(f"Defaults file not found: {path}; using built-in defaults")
            return {}
        try:
            content = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise InvalidConfig(f"Could not parse config file {path}: {e}", path=str(path))
        if not isinstance(content, dict):
            raise InvalidConfig(f"Config file {path} must hold a mapping", path=str(path))
        unknown = sorted(set(content) - set(BUILTIN_DEFAULTS))
        if unknown:
            raise InvalidConfig(f"Unknown settings in {path}: {unknown}", path=str(path), keys=unknown)
        return content

    def env_overrides(self) -> Dict[str, str]:
        """Raw string values of ``CIC_<SETTING>`` variables for known settings."""
        overrides = {}
        for key in BUILTIN_DEFAULTS:
            value = self.environ.get(f"{ENV_PREFIX}{key.upper()}")
            if value is not None and value != "":
                overrides[key] = value
        if overrides:
            logger.debug(f"Environment overrides: {sorted(overrides)}")
        return overrides

    def resolve(self, cli_values: Mapping[str, Any], config_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Build the effective settings for one run.

        Args:
            cli_values: Parsed flags; ``None`` means the flag was not given.
            config_path: Optional user YAML file (``--config``).

        Returns:
            Settings dict keyed like BUILTIN_DEFAULTS. Values coming from the
            environment are still strings; RunConfig coerces them.
        """
        settings = dict(BUILTIN_DEFAULTS)
        settings.update(self._load_yaml(self.defaults_path, required=False))
        if config_path:
            settings.update(self._load_yaml(Path(config_path), required=True))
        settings.update(self.env_overrides())
        settings.update({k: v for k, v in cli_values.items() if k in BUILTIN_DEFAULTS and v is not None})
        return settings
