"""YAML run-configuration loader with defaults, strict validation and overrides."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional

import yaml

from ..models.errors import ConfigError


DEFAULT_CONFIG: Dict[str, Any] = {
    "Seed": 0,
    "Clusters": 3,
    "NodesPerCluster": 30,
    "TimeSteps": 4,
    "Terms": "edges,triangles,stability",
    "Theta": None,
    "StayProbability": 0.95,
    "TransitionMatrix": None,
    "PBetween": 0.01,
    "PWithinInit": 0.1,
    "AttachEdges": 2,
    "GibbsSweeps": 5,
    "Preset": None,
    "Workers": None,
    "Dimension": 2,
    "BurnIn": 500,
    "Samples": 500,
    "Thin": 1,
    "ProposalStep": 0.3,
    "Rho": 0.8,
    "SpectralSmoothing": 0.0,
    "SpectralTau": None,
    "McmcSamples": 200,
    "McmcBurnIn": 20,
    "McmcMaxIter": 20,
    "McmcFinalSamples": 1000,
    "McmcMaxSamples": 5000,
    "McmcTargetMcse": 0.05,
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int_or_list(value: Any) -> bool:
    return _is_int(value) or (isinstance(value, list) and all(_is_int(v) for v in value))


def _is_terms(value: Any) -> bool:
    return isinstance(value, str) or (isinstance(value, list) and all(isinstance(v, str) for v in value))


def _is_matrix(value: Any) -> bool:
    if value is None:
        return True
    if not isinstance(value, list):
        return False
    return all(_is_number(v) for v in value) or all(
        isinstance(row, list) and all(_is_number(v) for v in row) for row in value)


def _optional(check: Callable[[Any], bool]) -> Callable[[Any], bool]:
    return lambda value: value is None or check(value)


KEY_CHECKS: Dict[str, tuple] = {
    "Seed": (_is_int, "an integer"),
    "Clusters": (_is_int, "an integer"),
    "NodesPerCluster": (_is_int_or_list, "an integer or a list of integers"),
    "TimeSteps": (_is_int, "an integer"),
    "Terms": (_is_terms, "a comma-separated string or a list of term names"),
    "Theta": (_is_matrix, "a list of numbers or a list of rows"),
    "StayProbability": (_is_number, "a number"),
    "TransitionMatrix": (_is_matrix, "a list of rows"),
    "PBetween": (_is_number, "a number"),
    "PWithinInit": (_is_number, "a number"),
    "AttachEdges": (_is_int, "an integer"),
    "GibbsSweeps": (_is_int, "an integer"),
    "Preset": (_optional(lambda v: isinstance(v, str)), "a preset name"),
    "Workers": (_optional(_is_int), "an integer"),
    "Dimension": (_is_int, "an integer"),
    "BurnIn": (_is_int, "an integer"),
    "Samples": (_is_int, "an integer"),
    "Thin": (_is_int, "an integer"),
    "ProposalStep": (_is_number, "a number"),
    "Rho": (_is_number, "a number"),
    "SpectralSmoothing": (_is_number, "a number"),
    "SpectralTau": (_optional(_is_number), "a number"),
    "McmcSamples": (_is_int, "an integer"),
    "McmcBurnIn": (_is_int, "an integer"),
    "McmcMaxIter": (_is_int, "an integer"),
    "McmcFinalSamples": (_is_int, "an integer"),
    "McmcMaxSamples": (_is_int, "an integer"),
    "McmcTargetMcse": (_is_number, "a number"),
}


def check_value(key: str, value: Any, where: str = "") -> None:
    """Raise ConfigError unless ``value`` has the type expected for ``key``."""
    if key not in KEY_CHECKS:
        raise ConfigError(f"unknown configuration key '{key}'{where}; known keys: {', '.join(DEFAULT_CONFIG)}")
    check, expected = KEY_CHECKS[key]
    if not check(value):
        raise ConfigError(f"configuration key '{key}'{where} must be {expected}, got {value!r}")


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Any]:
    """Turn ``Key=Value`` strings into a dict, parsing values as YAML scalars or lists."""
    overrides: Dict[str, Any] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' must look like Key=Value")
        key, raw = pair.split("=", 1)
        key = key.strip()
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{pair}' has an unreadable value: {exc}") from None
        check_value(key, value, " (command-line override)")
        overrides[key] = value
    return overrides


class ConfigLoader:
    """Loads a YAML config file and provides access to values."""

    def __init__(self, logger: Optional[logging.Logger] = None):
        self.logger = logger or logging.getLogger(__name__)

    def _key_lines(self, text: str) -> Dict[str, int]:
        """1-based line of every top-level key."""
        node = yaml.compose(text)
        if node is None or not isinstance(node, yaml.MappingNode):
            return {}
        return {key.value: key.start_mark.line + 1 for key, _ in node.value}

    def load(self, path: Optional[Path], strict: bool = False,
             overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Load a YAML config, merging known keys over the defaults.

        Lenient mode warns about problems and keeps the defaults. Strict
        mode raises ConfigError naming the offending key and its line.
        """
        config: Dict[str, Any] = DEFAULT_CONFIG.copy()
        if path is not None:
            config.update(self._read(Path(path), strict))
        for key, value in (overrides or {}).items():
            check_value(key, value, " (override)")
            config[key] = value
        return config

    def _read(self, path: Path, strict: bool) -> Dict[str, Any]:
        if not path.exists():
            if strict:
                raise ConfigError(f"config file not found: {path}")
            self.logger.warning(f"Config file not found at {path}. Using defaults.")
            return {}
        text = path.read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
            lines = self._key_lines(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f" at line {mark.line + 1}" if mark is not None else ""
            if strict:
                raise ConfigError(f"{path}{line}: invalid YAML ({exc})") from None
            self.logger.warning(f"Config file {path}{line} is not valid YAML. Using defaults.")
            return {}

        if not isinstance(data, dict):
            if strict:
                raise ConfigError(f"{path}: config file must contain a key-value mapping")
            self.logger.warning("Config file did not contain a mapping. Using defaults.")
            return {}

        loaded: Dict[str, Any] = {}
        for key, value in data.items():
            where = f" ({path}, line {lines.get(key, '?')})"
            try:
                check_value(str(key), value, where)
            except ConfigError as exc:
                if strict:
                    raise
                self.logger.warning(f"{exc}. Ignoring.")
                continue
            loaded[key] = value
        self.logger.debug(f"Loaded {len(loaded)} configuration keys from {path}")
        return loaded

    def save(self, path: Path, config: Dict[str, Any]) -> None:
        """Write the known keys of ``config`` in default order."""
        ordered = {k: config.get(k, DEFAULT_CONFIG[k]) for k in DEFAULT_CONFIG}
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            yaml.safe_dump(ordered, f, sort_keys=False)
        self.logger.debug(f"Saved configuration to {path}")


__all__ = ["ConfigLoader", "DEFAULT_CONFIG", "KEY_CHECKS", "check_value", "parse_overrides"]
