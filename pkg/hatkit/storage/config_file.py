"""YAML run configs: load, apply flag overrides, echo the resolved config."""

from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError

from hatkit.core.errors import UsageError
from hatkit.schemas.config import RunConfig

RESOLVED_CONFIG_FILE = "resolved_config.yaml"


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """RunConfig from an optional YAML file; ``overrides`` (nested, None = unset) win."""
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            document = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise UsageError(f"cannot parse config file {path}: {e}")
        if not isinstance(document, dict):
            raise UsageError(f"config file {path} must hold a mapping")
    try:
        return RunConfig.model_validate(_merge(document, overrides or {}))
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}")


def write_resolved_config(directory: Union[str, Path], config: RunConfig) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_CONFIG_FILE
    path.write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True), encoding="utf-8")
    return path
