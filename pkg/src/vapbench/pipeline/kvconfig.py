"""Key-value text files shared by pipeline, scenario, policy, campaign and model configs.

The format is INI-style: ``[section]`` headers, ``key = value`` lines and
``#`` comments. Sections may carry a name (``[node ray_filter]``). Bare lines
without ``=`` are allowed and are used for edge and sink lists.
"""

from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    """Raised with a ``file:line`` or ``[section] key`` diagnostic."""


class KVFile:
    def __init__(self, text: str, source: str = "<string>"):
        self.source = source
        parser = configparser.ConfigParser(
            delimiters=("=",),
            comment_prefixes=("#",),
            inline_comment_prefixes=("#",),
            allow_no_value=True,
            interpolation=None,
            strict=True,
        )
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        self._p = parser

    @classmethod
    def load(cls, path: str | Path) -> "KVFile":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        return cls(text, str(path))

    def sections(self, kind: str | None = None) -> list[tuple[str, str]]:
        """``(kind, name)`` for every section, optionally filtered by kind."""
        out = []
        for raw in self._p.sections():
            parts = raw.split(None, 1)
            k, name = parts[0], parts[1].strip() if len(parts) > 1 else ""
            if kind is None or k == kind:
                out.append((k, name))
        return out

    def _raw(self, kind: str, name: str = "") -> str:
        return f"{kind} {name}" if name else kind

    def has(self, kind: str, name: str = "") -> bool:
        return self._p.has_section(self._raw(kind, name))

    def items(self, kind: str, name: str = "") -> dict[str, str | None]:
        sec = self._raw(kind, name)
        if not self._p.has_section(sec):
            return {}
        return dict(self._p.items(sec))

    def lines(self, kind: str, name: str = "") -> list[str]:
        """Bare (value-less) lines of a section, in file order."""
        return [k for k, v in self.items(kind, name).items() if v is None]

    def get(self, kind: str, key: str, default=None, name: str = "", cast=str):
        items = self.items(kind, name)
        if key not in items or items[key] is None:
            if default is _REQUIRED:
                raise ConfigError(f"{self.source}: [{self._raw(kind, name)}] missing key {key!r}")
            return default
        try:
            return cast(items[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{self.source}: [{self._raw(kind, name)}] {key} = {items[key]!r}: {exc}"
            ) from None

    def require(self, kind: str, key: str, name: str = "", cast=str):
        return self.get(kind, key, _REQUIRED, name=name, cast=cast)


_REQUIRED = object()


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_list(text: str, cast=str) -> list:
    return [cast(x.strip()) for x in text.split(",") if x.strip()]
