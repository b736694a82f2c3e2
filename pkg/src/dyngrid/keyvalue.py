"""Line-oriented ``[section]`` / ``key = value`` text format with line-numbered errors.

Grammar::

    file     := line*
    line     := blank | comment | header | pair
    comment  := ws* "#" any*
    header   := ws* "[" name "]" ws*
    pair     := ws* key ws* "=" ws* value ws*      (inline "#" starts a comment)

Keys are unique within a section; a section name may appear only once.
Pairs before the first header belong to the section named "".
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

_HEADER = re.compile(r"^\[([A-Za-z0-9_.\-]+)\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    def __init__(self, path, line, message):
        self.path, self.line = path, line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


@dataclass
class Section:
    name: str
    line: int
    values: dict = field(default_factory=dict)  # key -> (raw string, line)
    path: str = "<string>"

    def take(self, key, conv=float, default=None, required=False):
        if key not in self.values:
            if required:
                raise ConfigError(self.path, self.line, f"[{self.name}] missing key '{key}'")
            return default
        raw, line = self.values.pop(key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(self.path, line, f"bad value for '{key}': {raw!r} ({exc})") from None

    def finish(self):
        """Reject keys nobody consumed."""
        for key, (_, line) in self.values.items():
            raise ConfigError(self.path, line, f"unknown key '{key}' in [{self.name}]")


def parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def parse(text: str, path="<string>") -> list[Section]:
    sections = [Section("", 0, path=path)]
    seen = {""}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _HEADER.match(line)
            if not m:
                raise ConfigError(path, no, f"malformed section header {raw.strip()!r}")
            name = m.group(1)
            if name in seen:
                raise ConfigError(path, no, f"duplicate section [{name}]")
            seen.add(name)
            sections.append(Section(name, no, path=path))
            continue
        if "=" not in line:
            raise ConfigError(path, no, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(path, no, f"invalid key {key!r}")
        sec = sections[-1]
        if key in sec.values:
            raise ConfigError(path, no, f"duplicate key '{key}'")
        sec.values[key] = (value, no)
    if not sections[0].values:
        sections.pop(0)
    return sections


def dump(sections: list[tuple[str, list[tuple[str, object]]]]) -> str:
    out = []
    for name, pairs in sections:
        if out:
            out.append("")
        out.append(f"[{name}]")
        for k, v in pairs:
            out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"
