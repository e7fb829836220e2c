"""Flat `key = value` experiment configs.

One assignment per line, `#` starts a full-line comment, blank lines are
ignored, duplicate keys are rejected.  Values stay strings until a typed
getter interprets them, so configs round-trip losslessly into manifests.
"""

from __future__ import annotations

from .errors import ConfigError

_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


class Config:
    def __init__(self, data: dict, source: str = "<memory>"):
        self.data = dict(data)
        self.source = source

    @classmethod
    def from_text(cls, text: str, source: str = "<memory>") -> "Config":
        data = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected `key = value`, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ConfigError(f"{source}:{lineno}: empty key")
            if key in data:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            data[key] = value.strip()
        return cls(data, source)

    @classmethod
    def from_path(cls, path) -> "Config":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_text(fh.read(), source=str(path))
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None

    def overlay(self, overrides: dict) -> "Config":
        data = dict(self.data)
        data.update(overrides)
        return Config(data, self.source)

    def has(self, key: str) -> bool:
        return key in self.data

    def get(self, key: str, default=None):
        return self.data.get(key, default)

    def require(self, key: str) -> str:
        if key not in self.data:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return self.data[key]

    def get_float(self, key: str, default=None) -> float:
        return self._typed(key, default, float, "a number")

    def get_int(self, key: str, default=None) -> int:
        return self._typed(key, default, lambda v: int(v, 0), "an integer")

    def get_bool(self, key: str, default=None) -> bool:
        def parse(v):
            if v.lower() not in _BOOL:
                raise ValueError(v)
            return _BOOL[v.lower()]

        return self._typed(key, default, parse, "a boolean")

    def get_list(self, key: str, default=None) -> list:
        if key not in self.data:
            if default is None:
                return []
            return list(default)
        value = self.data[key]
        return [item.strip() for item in value.split(",") if item.strip()]

    def _typed(self, key, default, parse, what):
        if key not in self.data:
            if default is None:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return default
        try:
            return parse(self.data[key])
        except (ValueError, TypeError):
            raise ConfigError(
                f"{self.source}: key {key!r} should be {what}, got {self.data[key]!r}"
            ) from None
